"""Command-line entry point: gen | train | eval | noise-sweep | grid-report.

Every command reads one flat run config. Values come from the defaults
below, then an optional JSON file (``--config``), then command-line flags,
which win. Unknown keys are rejected. Every file a command writes carries
the hash of the resolved config.

Exit codes: 0 success, 1 usage or config, 2 data, 3 training, 4 evaluation.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from . import eval as E
from .data import (
    GeneratorConfig,
    build_dataset,
    fit_normalization,
    generate_synthetic,
    load_schema,
    read_corpus,
    read_provenance,
    reference_schema,
    save_schema,
    split,
    write_events,
    write_labels,
)
from .data.synthetic import GENERATOR_VERSION
from .errors import AleatoricError, ConfigError, DataError, EvaluationError, SchemaError, StateError, TrainingError
from .model import ModelConfig
from .training import TrainConfig, load_checkpoint, save_checkpoint, train_ensemble

log = logging.getLogger("aleatoric_ehr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING, EXIT_EVAL = 0, 1, 2, 3, 4

_GEN_KEYS = ("risk_slope", "positive_rate", "ar_coef", "measurement_noise", "rate_scale", "rate_spread", "saturation")
_MODEL_KEYS = ("n_filters", "kernel_width", "keep_prob", "pool", "per_class_sigma", "sigma_bias_init", "sigma_weight_scale")
_TRAIN_KEYS = ("learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs", "patience", "mc_samples",
               "class_weighting", "eval_seed")


def _defaults():
    gen, model, tc = GeneratorConfig(), ModelConfig(), TrainConfig()
    d = {
        "out_dir": "run",
        "events": "",  # default: <out_dir>/events.csv
        "labels": "",  # default: <out_dir>/labels.csv
        "schema": "",  # default: built-in 17-feature reference schema
        "patients": 8000,
        "data_seed": 0,
        "split_seed": 0,
    }
    d.update({k: getattr(gen, k) for k in _GEN_KEYS})
    d.update({k: getattr(model, k) for k in _MODEL_KEYS})
    d.update({k: getattr(tc, k) for k in _TRAIN_KEYS})
    d.update({
        "w_bayes": tc.loss_weights[0],
        "w_ce": tc.loss_weights[1],
        "seed": tc.seed,
        "variant": "both",
        "ensemble": 5,
        "threads": 0,  # 0: all available cores
        "inject_seed": 0,
        "retentions": [0.9, 0.7, 0.5, 0.3, 0.1],
        "baseline_retention": 0.5,
    })
    return d


DEFAULTS = _defaults()


def _bool(text):
    t = str(text).lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _floats(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _flag_type(default):
    if isinstance(default, bool):
        return _bool
    if isinstance(default, list):
        return _floats
    return type(default)


def _coerce(key, value):
    """Check a config-file value against the default's type."""
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, list):
            return [float(v) for v in value]
        if isinstance(default, int):
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if not isinstance(value, str):
            raise TypeError
        return value
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r}: expected {type(default).__name__}, got {value!r}") from None


# keys that say where files live or how fast to run, not what is computed
_UNHASHED = ("out_dir", "events", "labels", "threads")


def config_hash(cfg):
    """Short sha256 of the canonical JSON of every result-affecting key."""
    text = json.dumps({k: v for k, v in cfg.items() if k not in _UNHASHED}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="aleatoric-ehr", description=__doc__.split("\n\n")[0],
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    helps = {
        "gen": "write a synthetic events file and labels file",
        "train": "train the Bayesian and/or benchmark ensembles",
        "eval": "test AUC of both variants and the median-uncertainty split",
        "noise-sweep": "median uncertainty and AUC as raw events are removed",
        "grid-report": "AUC change per uncertainty x probability cell when the cell gets full data",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", metavar="FILE", help="JSON run config; flags override its values")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        group = p.add_argument_group("run config keys (flag, default)")
        for key, default in DEFAULTS.items():
            shown = ",".join(str(v) for v in default) if isinstance(default, list) else default
            group.add_argument(
                "--" + key.replace("_", "-"),
                dest=key,
                type=_flag_type(default),
                default=None,
                metavar=type(default).__name__.upper(),
                help=f"default: {shown!r}" if isinstance(shown, str) else f"default: {shown}",
            )
    return parser


def resolve_config(args):
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold one JSON object")
        unknown = sorted(set(doc) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for k, v in doc.items():
            cfg[k] = _coerce(k, v)
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg["variant"] not in ("both", "bayesian", "benchmark"):
        raise ConfigError("variant must be both, bayesian or benchmark")
    if cfg["ensemble"] < 1:
        raise ConfigError("ensemble must be at least 1")
    if any(not 0.0 <= r <= 1.0 for r in cfg["retentions"] + [cfg["baseline_retention"]]):
        raise ConfigError("retentions must lie in [0, 1]")
    if cfg["patients"] < 1:
        raise ConfigError("patients must be at least 1")
    try:
        _generator_config(cfg)
        _model_config(cfg, ModelConfig().in_channels)
        _train_config(cfg)
    except AleatoricError as e:
        raise ConfigError(str(e)) from None
    return cfg


# -- config pieces -----------------------------------------------------------------


def _paths(cfg):
    out = cfg["out_dir"]
    return {
        "events": cfg["events"] or os.path.join(out, "events.csv"),
        "labels": cfg["labels"] or os.path.join(out, "labels.csv"),
        "fitted_schema": os.path.join(out, "schema_fitted.json"),
        "checkpoints": os.path.join(out, "checkpoints"),
        "logs": os.path.join(out, "logs"),
    }


def _generator_config(cfg):
    return GeneratorConfig(**{k: cfg[k] for k in _GEN_KEYS})


def _model_config(cfg, in_channels):
    return ModelConfig(in_channels=in_channels, **{k: cfg[k] for k in _MODEL_KEYS})


def _train_config(cfg):
    return TrainConfig(loss_weights=(cfg["w_bayes"], cfg["w_ce"]), seed=cfg["seed"], **{k: cfg[k] for k in _TRAIN_KEYS})


def _variants(cfg):
    return ("bayesian", "benchmark") if cfg["variant"] == "both" else (cfg["variant"],)


def _schema(cfg):
    return load_schema(cfg["schema"]) if cfg["schema"] else reference_schema()


def _threads(cfg):
    return cfg["threads"] or os.cpu_count() or 1


def _load_splits(cfg):
    paths = _paths(cfg)
    schema = _schema(cfg)
    try:
        records = read_corpus(paths["events"], paths["labels"], schema)
    except FileNotFoundError as e:
        raise DataError(f"missing corpus file: {e.filename} (run `gen` first or set events/labels)") from None
    if not records:
        raise DataError("corpus holds no patients")
    return schema, split(records, seed=cfg["split_seed"])


def _ckpt_path(cfg, variant, i):
    return os.path.join(_paths(cfg)["checkpoints"], f"{variant}_{i}.ckpt")


def _load_models(cfg, variant):
    out = []
    for i in range(cfg["ensemble"]):
        path = _ckpt_path(cfg, variant, i)
        if not os.path.exists(path):
            raise EvaluationError(f"missing checkpoint {path}; run `train` with the same out_dir and ensemble size")
        try:
            out.append(load_checkpoint(path))
        except (DataError, StateError) as e:
            raise EvaluationError(f"unreadable checkpoint {path}: {e}") from None
    return out


def _fitted_schema(cfg):
    path = _paths(cfg)["fitted_schema"]
    if not os.path.exists(path):
        raise EvaluationError(f"missing {path}; run `train` first")
    return load_schema(path)


# -- output helpers -------------------------------------------------------------------


def _write_json(path, doc, h):
    doc = {"config_hash": h, **doc}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _write_text(path, lines, h):
    with open(path, "w") as fh:
        fh.write(f"# config_hash: {h}\n")
        for line in lines:
            fh.write(line + "\n")


def _fmt(x):
    return "nan" if x is None or (isinstance(x, float) and np.isnan(x)) else f"{x:.4f}"


def _pm(values):
    m, s = E.mean_std(values)
    return {"mean": m, "std": s, "per_model": [float(v) for v in values]}


# -- commands ------------------------------------------------------------------------------


def cmd_gen(cfg, h):
    paths = _paths(cfg)
    schema = _schema(cfg)
    gen = _generator_config(cfg)
    records = generate_synthetic(cfg["patients"], schema, gen, seed=cfg["data_seed"])
    positives = sum(r.label for r in records)
    prov = {
        "seed": cfg["data_seed"],
        "generator_version": GENERATOR_VERSION,
        "patients": len(records),
        "positives": positives,
        "positive_rate": f"{positives / len(records):.6f}",
        "generator_config": json.dumps(gen.to_dict(), sort_keys=True),
        "config_hash": h,
    }
    for key in ("events", "labels"):
        parent = os.path.dirname(paths[key])
        if parent:
            os.makedirs(parent, exist_ok=True)
    write_events(records, schema, paths["events"], prov)
    write_labels(records, paths["labels"], prov)
    print(f"wrote {len(records)} patients ({positives} positive, rate {positives / len(records):.4f}) "
          f"to {paths['events']} and {paths['labels']}")
    return {"patients": len(records), "positives": positives}


def cmd_train(cfg, h):
    paths = _paths(cfg)
    schema, (tr, va, _) = _load_splits(cfg)
    fitted = fit_normalization(tr, schema)
    prov = json.dumps(read_provenance(paths["events"]), sort_keys=True)
    train_set = build_dataset(tr, fitted, "train", prov)
    val_set = build_dataset(va, fitted, "val", prov)
    tc = _train_config(cfg)
    mc = _model_config(cfg, fitted.n_channels)
    results = {}
    for variant in _variants(cfg):
        results[variant] = train_ensemble(train_set, val_set, tc, cfg["ensemble"], variant, mc, threads=_threads(cfg))
    # nothing is written until every member trained
    os.makedirs(paths["checkpoints"], exist_ok=True)
    os.makedirs(paths["logs"], exist_ok=True)
    save_schema(fitted, paths["fitted_schema"])
    summary = {}
    for variant, ckpts in results.items():
        rows = []
        for i, ck in enumerate(ckpts):
            save_checkpoint(ck, _ckpt_path(cfg, variant, i))
            _write_text(
                os.path.join(paths["logs"], f"{variant}_{i}.log"),
                [f"epoch={r['epoch']} train_loss={r['train_loss']!r} val_auc={r['val_auc']!r}" for r in ck.history],
                h,
            )
            rows.append({"member": i, "seed": ck.train_config.seed, "best_epoch": ck.epoch,
                         "epochs_run": len(ck.history), "val_auc": ck.val_auc})
        summary[variant] = {"members": rows, "val_auc": _pm([r["val_auc"] for r in rows])}
        print(f"{variant}: {len(ckpts)} model(s), validation AUC "
              f"{summary[variant]['val_auc']['mean']:.4f} +- {summary[variant]['val_auc']['std']:.4f}")
    _write_json(os.path.join(cfg["out_dir"], "train_report.json"),
                {"splits": {"train": len(tr), "val": len(va)}, "variants": summary}, h)
    return summary


def cmd_eval(cfg, h):
    _, (_, _, te) = _load_splits(cfg)
    fitted = _fitted_schema(cfg)
    test_set = build_dataset(te, fitted, "test")
    demographics = {r.patient_id: r.demographics for r in te}
    out = {"test_patients": len(te), "test_positives": int(test_set.y.sum()), "variants": {}}
    text = ["Test AUC (mean +- std over ensemble members)", ""]
    roc_rows = []
    for variant in _variants(cfg):
        ckpts = _load_models(cfg, variant)
        aucs, splits = [], []
        for i, ck in enumerate(ckpts):
            sc = E.score_dataset(ck.model, test_set, T=cfg["mc_samples"], seed=ck.train_config.eval_seed,
                                 bayesian=ck.bayesian)
            aucs.append(E.auc(sc.labels, sc.probs))
            fpr, tpr = E.roc_points(sc.labels, sc.probs)
            roc_rows += [(variant, i, f, t) for f, t in zip(fpr, tpr)]
            if ck.bayesian:
                splits.append(E.median_split_analysis(sc, demographics))
        entry = {"auc": _pm(aucs)}
        text.append(f"{variant:<10} {entry['auc']['mean']:.4f} +- {entry['auc']['std']:.4f}   "
                    f"per model: {' '.join(_fmt(a) for a in aucs)}")
        if splits:
            ms = {}
            for half in ("low", "high"):
                ms[half] = {k: _pm([s[half][k] for s in splits]) for k in splits[0][half] if k != "n"}
                ms[half]["n"] = [s[half]["n"] for s in splits]
            entry["median_split"] = ms
        out["variants"][variant] = entry
    for variant, entry in out["variants"].items():
        if "median_split" not in entry:
            continue
        text += ["", f"Median-uncertainty split ({variant})", f"{'half':<6} {'auc':>16} {'positives':>18} {'median var':>12}"]
        for half in ("low", "high"):
            m = entry["median_split"][half]
            text.append(f"{half:<6} {m['auc']['mean']:>8.4f} +- {m['auc']['std']:.4f} "
                        f"{m['positives']['mean']:>10.1f} +- {m['positives']['std']:.1f} {m['median_variance']['mean']:>12.4f}")
    d = cfg["out_dir"]
    _write_json(os.path.join(d, "eval_report.json"), out, h)
    _write_text(os.path.join(d, "eval_report.txt"), text, h)
    _write_text(os.path.join(d, "roc.csv"), ["variant,member,fpr,tpr"] + [f"{v},{i},{f!r},{t!r}" for v, i, f, t in roc_rows], h)
    print("\n".join(text))
    return out


def cmd_noise_sweep(cfg, h):
    _, (_, _, te) = _load_splits(cfg)
    fitted = _fitted_schema(cfg)
    ckpts = _load_models(cfg, "bayesian")
    eval_seed = ckpts[0].train_config.eval_seed
    rep = E.retention_sweep([c.model for c in ckpts], te, fitted, cfg["retentions"], seed=cfg["inject_seed"],
                            T=cfg["mc_samples"], eval_seed=eval_seed)
    doc = {
        "injection": "one stream per (inject_seed, model); each raw event kept with probability = retention",
        "retentions": rep.retentions,
        "per_model": [{repr(r): v for r, v in pm.items()} for pm in rep.per_model],
        "aggregate": {repr(r): v for r, v in rep.aggregate.items()},
    }
    text = [f"{'retention':>9} {'median var':>22} {'auc':>18}"]
    csv = ["retention,median_variance_mean,median_variance_std,auc_mean,auc_std"]
    for r in rep.retentions:
        a = rep.aggregate[r]
        text.append(f"{r:>9.2f} {a['median_variance_mean']:>12.4f} +- {a['median_variance_std']:.4f} "
                    f"{a['auc_mean']:>8.4f} +- {a['auc_std']:.4f}")
        csv.append(f"{r!r},{a['median_variance_mean']!r},{a['median_variance_std']!r},{a['auc_mean']!r},{a['auc_std']!r}")
    d = cfg["out_dir"]
    _write_json(os.path.join(d, "sweep.json"), doc, h)
    _write_text(os.path.join(d, "sweep.txt"), text, h)
    _write_text(os.path.join(d, "sweep.csv"), csv, h)
    print("\n".join(text))
    return doc


def cmd_grid_report(cfg, h):
    _, (_, _, te) = _load_splits(cfg)
    fitted = _fitted_schema(cfg)
    ckpts = _load_models(cfg, "bayesian")
    rep = E.quartile_grid_analysis([c.model for c in ckpts], te, fitted, cfg["baseline_retention"],
                                   seed=cfg["inject_seed"], T=cfg["mc_samples"],
                                   eval_seed=ckpts[0].train_config.eval_seed)
    mean, std = rep.mean, rep.std
    rows = []
    for c in range(16):
        rows.append({"uncertainty_quartile": c // 4 + 1, "probability_quartile": c % 4 + 1,
                     "delta_mean": float(mean[c]), "delta_std": float(std[c]),
                     "per_model": [float(x) for x in rep.deltas[:, c]], "size": [int(x) for x in rep.cell_sizes[:, c]]})
    doc = {"baseline_retention": rep.baseline_retention, "baseline_auc": _pm(rep.baseline_auc),
           "peak_cell": list(rep.peak_cell()), "cells": rows}
    text = [f"baseline retention {rep.baseline_retention}, baseline AUC {doc['baseline_auc']['mean']:.4f} "
            f"+- {doc['baseline_auc']['std']:.4f}", f"{'unc q':>5} {'prob q':>6} {'delta':>20}"]
    csv = ["uncertainty_quartile,probability_quartile,delta_mean,delta_std"]
    for r in rows:
        mark = " *" if (r["uncertainty_quartile"], r["probability_quartile"]) == rep.peak_cell() else ""
        text.append(f"{r['uncertainty_quartile']:>5} {r['probability_quartile']:>6} "
                    f"{r['delta_mean']:>10.4f} +- {r['delta_std']:.4f}{mark}")
        csv.append(f"{r['uncertainty_quartile']},{r['probability_quartile']},{r['delta_mean']!r},{r['delta_std']!r}")
    d = cfg["out_dir"]
    _write_json(os.path.join(d, "grid.json"), doc, h)
    _write_text(os.path.join(d, "grid.txt"), text, h)
    _write_text(os.path.join(d, "grid.csv"), csv, h)
    print("\n".join(text))
    return doc


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "noise-sweep": cmd_noise_sweep,
    "grid-report": cmd_grid_report,
}


def _exit_code(err):
    if isinstance(err, ConfigError):
        return EXIT_USAGE
    if isinstance(err, (DataError, SchemaError, OSError)):
        return EXIT_DATA
    if isinstance(err, TrainingError):
        return EXIT_TRAINING
    return EXIT_EVAL


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        h = config_hash(cfg)
        os.makedirs(cfg["out_dir"], exist_ok=True)
        COMMANDS[args.command](cfg, h)
    except (AleatoricError, OSError) as e:
        print(f"aleatoric-ehr {args.command}: error: {e}", file=sys.stderr)
        return _exit_code(e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
