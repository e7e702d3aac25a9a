"""Adam training with validation-AUC model selection, ensembles, checkpoints.

Two variants share everything except the loss:

* ``bayesian`` : ``w_bayes * bayes_ce + w_ce * ce`` with ``mc_samples`` draws
* ``benchmark``: plain cross-entropy; the noise head is never updated

All randomness of a run hangs off ``RngStream(config.seed)`` through named
children (``init``, ``shuffle``, ``dropout``, ``mc``) indexed by epoch and
batch, so a run is reproducible from its seed alone.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bayes import combined_loss_batch
from .container import read_container, write_container
from .errors import ConfigError, DimensionError, DomainError, StateError, TrainingError
from .eval import auc
from .model import BUFFER_NAMES, PARAM_NAMES, SIGMA_PARAMS, CNN, ModelConfig
from .tensor import RngStream

log = logging.getLogger(__name__)

VARIANTS = ("bayesian", "benchmark")


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    mc_samples: int = 100
    loss_weights: tuple = (0.2, 1.0)  # (bayesian CE, standard CE)
    class_weighting: bool = False
    eval_seed: int = 0
    seed: int = 0

    def __post_init__(self):
        self.loss_weights = tuple(float(w) for w in self.loss_weights)
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.mc_samples < 1:
            raise ConfigError("mc_samples must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be positive")
        if len(self.loss_weights) != 2 or min(self.loss_weights) < 0:
            raise ConfigError("loss_weights must be two non-negative numbers")

    def to_dict(self):
        d = asdict(self)
        d["loss_weights"] = list(self.loss_weights)
        return d


def adam_step(params, grads, moments, t, config, frozen=()):
    """One bias-corrected Adam update.

    ``moments`` is ``{"m": {...}, "v": {...}}`` keyed like ``params``.
    Returns new ``(params, moments)`` dicts; the inputs are not modified.
    Names in ``frozen`` are passed through untouched.
    """
    if t < 1:
        raise DomainError("Adam step index starts at 1")
    b1, b2 = config.beta1, config.beta2
    bc1, bc2 = 1.0 - b1**t, 1.0 - b2**t
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        m, v = moments["m"][name], moments["v"][name]
        if name in frozen:
            new_p[name], new_m[name], new_v[name] = p, m, v
            continue
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_p[name] = p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        new_m[name], new_v[name] = m, v
    return new_p, {"m": new_m, "v": new_v}


def zero_moments(params):
    return {"m": {k: np.zeros_like(v) for k, v in params.items()},
            "v": {k: np.zeros_like(v) for k, v in params.items()}}


@dataclass
class Checkpoint:
    model: CNN
    train_config: TrainConfig
    variant: str
    epoch: int = 0
    val_auc: float = float("nan")
    step: int = 0
    moments: dict = None
    history: list = field(default_factory=list)  # per epoch: {"epoch", "train_loss", "val_auc"}
    step_losses: list = field(default_factory=list)

    @property
    def bayesian(self):
        return self.variant == "bayesian"

    def predict(self, x, ids, T=None, seed=None):
        T = self.train_config.mc_samples if T is None else T
        seed = self.train_config.eval_seed if seed is None else seed
        return self.model.predict(x, ids, T=T, seed=seed, bayesian=self.bayesian)


def save_checkpoint(ckpt, path):
    tensors = {f"param/{k}": v for k, v in ckpt.model.params.items()}
    tensors.update({f"buffer/{k}": v for k, v in ckpt.model.buffers.items()})
    if ckpt.moments is not None:
        for which in ("m", "v"):
            tensors.update({f"adam_{which}/{k}": v for k, v in ckpt.moments[which].items()})
    meta = {
        "kind": "checkpoint",
        "variant": ckpt.variant,
        "epoch": ckpt.epoch,
        "val_auc": ckpt.val_auc,
        "step": ckpt.step,
        "model_config": ckpt.model.config.to_dict(),
        "train_config": ckpt.train_config.to_dict(),
        "rng": {"seed": ckpt.train_config.seed, "streams": ["init", "shuffle", "dropout", "mc"]},
        "history": ckpt.history,
    }
    write_container(path, tensors, meta)


def load_checkpoint(path):
    tensors, meta = read_container(path)
    if meta.get("kind") != "checkpoint":
        raise StateError(f"{path} is not a checkpoint")
    params = {k: tensors[f"param/{k}"] for k in PARAM_NAMES}
    buffers = {k: tensors[f"buffer/{k}"] for k in BUFFER_NAMES}
    moments = None
    if f"adam_m/{PARAM_NAMES[0]}" in tensors:
        moments = {w: {k: tensors[f"adam_{w}/{k}"] for k in PARAM_NAMES} for w in ("m", "v")}
    tc = meta["train_config"]
    tc["loss_weights"] = tuple(tc["loss_weights"])
    model = CNN(ModelConfig(**meta["model_config"]), params, buffers)
    return Checkpoint(
        model=model,
        train_config=TrainConfig(**tc),
        variant=meta["variant"],
        epoch=meta["epoch"],
        val_auc=meta["val_auc"],
        step=meta["step"],
        moments=moments,
        history=meta["history"],
    )


def _sample_weights(y, enabled):
    if not enabled:
        return None
    counts = np.bincount(y, minlength=2).astype(np.float64)
    return (len(y) / (len(counts) * np.maximum(counts, 1)))[y]


def validation_auc(model, dataset, config, bayesian):
    probs, _ = model.predict(dataset.X, dataset.ids, T=config.mc_samples, seed=config.eval_seed, bayesian=bayesian)
    return auc(dataset.y, probs[:, 1])


def train(train_set, val_set, config=None, variant="bayesian", model_config=None, record_steps=False, on_epoch=None):
    """Train one model and return the checkpoint with the best validation AUC.

    ``on_epoch(model, row)`` is called after each epoch with the history row.

    Raises :class:`TrainingError` naming the epoch and batch if the loss or a
    gradient stops being finite.
    """
    config = config or TrainConfig()
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    if len(train_set) == 0:
        raise DomainError("empty training set")
    if model_config is None:
        model_config = ModelConfig(in_channels=train_set.X.shape[1])
    bayesian = variant == "bayesian"
    w_bayes, w_ce = config.loss_weights if bayesian else (0.0, 1.0)
    frozen = () if bayesian else SIGMA_PARAMS

    root = RngStream(config.seed)
    model = CNN.initialize(model_config, root.child("init"))
    moments = zero_moments(model.params)
    n = len(train_set)
    n_classes = model_config.n_classes
    step = 0
    best = None
    stale = 0
    history, step_losses = [], []
    for epoch in range(1, config.max_epochs + 1):
        perm = root.child("shuffle", epoch).generator.permutation(n)
        total, seen = 0.0, 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            x, y = train_set.X[idx], train_set.y[idx]
            cache = {}
            # non-finite values are caught below and reported with their position
            with np.errstate(over="ignore", invalid="ignore"):
                logits, log_var = model.forward(x, training=True, rng=root.child("dropout", epoch, b), cache=cache)
                eps = None
                if w_bayes > 0:
                    eps = root.child("mc", epoch, b).standard_normal((len(idx), config.mc_samples, n_classes))
                loss, d_logits, d_log_var = combined_loss_batch(
                    logits, log_var, y, eps, w_bayes, w_ce, _sample_weights(y, config.class_weighting)
                )
                if not np.isfinite(loss):
                    raise TrainingError("non-finite training loss", epoch=epoch, batch=b)
                grads = model.backward(d_logits, d_log_var, cache)
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError("non-finite gradient", epoch=epoch, batch=b)
            step += 1
            model.params, moments = adam_step(model.params, grads, moments, step, config, frozen)
            total += loss * len(idx)
            seen += len(idx)
            if record_steps:
                step_losses.append(loss)
        train_loss = total / seen
        val = validation_auc(model, val_set, config, bayesian) if val_set is not None else float("nan")
        history.append({"epoch": epoch, "train_loss": train_loss, "val_auc": val})
        log.info("epoch=%d train_loss=%.6f val_auc=%.6f", epoch, train_loss, val)
        if on_epoch is not None:
            on_epoch(model, history[-1])
        if best is None or val > best.val_auc or (np.isnan(best.val_auc) and not np.isnan(val)):
            best = Checkpoint(model.copy(), config, variant, epoch, val, step,
                              {w: {k: v.copy() for k, v in moments[w].items()} for w in ("m", "v")})
            stale = 0
        else:
            stale += 1
            if val_set is not None and stale >= config.patience:
                break
    if val_set is None:
        # without validation data the last epoch is returned
        best = Checkpoint(model, config, variant, epoch, float("nan"), step, moments)
    best.history = history
    best.step_losses = step_losses
    return best


def member_seed(base_seed, index):
    return RngStream(base_seed).derive_seed("member", index)


def _train_member(args):
    train_set, val_set, config, variant, model_config = args
    return train(train_set, val_set, config, variant, model_config)


def train_ensemble(train_set, val_set, config=None, n_models=10, variant="bayesian", model_config=None, threads=1):
    """``n_models`` independent runs with seeds derived from ``config.seed``.

    Member ``i`` uses ``member_seed(config.seed, i)`` (member 0 keeps the base
    seed, so ``n_models=1`` matches :func:`train`). Members may run in
    separate processes; results come back in member order.
    """
    config = config or TrainConfig()
    if n_models < 1:
        raise DomainError("ensemble needs at least one model")
    configs = []
    for i in range(n_models):
        d = config.to_dict()
        d["seed"] = config.seed if i == 0 else member_seed(config.seed, i)
        configs.append(TrainConfig(**d))
    jobs = [(train_set, val_set, c, variant, model_config) for c in configs]
    threads = threads or os.cpu_count() or 1
    if threads > 1 and n_models > 1:
        with ProcessPoolExecutor(max_workers=min(threads, n_models)) as pool:
            return list(pool.map(_train_member, jobs))
    return [_train_member(j) for j in jobs]
