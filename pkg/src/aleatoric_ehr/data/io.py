"""Raw corpus files and the cached-matrix container.

Events file (comma separated, ``#`` lines are provenance)::

    # seed: 0
    # generator_version: 1
    patient_id,hour,feature_name,value
    0,0.8125,Heart Rate,92.4
    0,1.5,Glascow coma scale total,15

Categorical values are written as their level strings. Labels file::

    patient_id,label,age,male

``age`` and ``male`` columns are optional. Floats are written with
``repr`` so a write/read round trip is exact.
"""

import csv
import math
import os

import numpy as np

from ..container import read_container, write_container
from ..errors import DataError
from .records import Dataset, PatientRecord

EVENT_COLUMNS = ("patient_id", "hour", "feature_name", "value")
LABEL_COLUMNS = ("patient_id", "label")


def _fmt(x):
    return repr(float(x))


def _write_header(fh, provenance):
    for key, val in (provenance or {}).items():
        fh.write(f"# {key}: {val}\n")


def read_provenance(path):
    """``# key: value`` lines at the top of a corpus file, as strings."""
    out = {}
    with open(path, newline="") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].partition(":")
            out[key.strip()] = val.strip()
    return out


def _rows(fh):
    return csv.reader(line for line in fh if not line.startswith("#"))


def write_events(records, schema, path, provenance=None):
    with open(path, "w", newline="") as fh:
        _write_header(fh, provenance)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for rec in records:
            for hour, f, v in zip(rec.hours, rec.features, rec.values):
                spec = schema.features[f]
                val = spec.levels[int(v)] if spec.kind == "categorical" else _fmt(v)
                w.writerow((rec.patient_id, _fmt(hour), spec.name, val))


def write_labels(records, path, provenance=None):
    extra = ("age", "male") if records and all("age" in r.demographics for r in records) else ()
    with open(path, "w", newline="") as fh:
        _write_header(fh, provenance)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_COLUMNS + extra)
        for rec in records:
            demo = [rec.demographics[k] for k in extra]
            w.writerow([rec.patient_id, rec.label] + [_fmt(d) if k == "age" else int(d) for k, d in zip(extra, demo)])


def read_labels(path):
    """``{patient_id: (label, demographics)}`` in file order."""
    out = {}
    with open(path, newline="") as fh:
        rows = _rows(fh)
        header = next(rows, None)
        if header is None or tuple(header[:2]) != LABEL_COLUMNS:
            raise DataError(f"{path}: expected header starting with {','.join(LABEL_COLUMNS)}")
        for n, row in enumerate(rows, start=1):
            if len(row) != len(header):
                raise DataError(f"{path} row {n}: expected {len(header)} fields")
            try:
                pid, label = int(row[0]), int(row[1])
                demo = {k: (float(v) if k == "age" else int(v)) for k, v in zip(header[2:], row[2:])}
            except ValueError as e:
                raise DataError(f"{path} row {n}: {e}") from None
            if label not in (0, 1):
                raise DataError(f"{path} row {n}: label must be 0 or 1")
            if pid in out:
                raise DataError(f"{path} row {n}: duplicate patient {pid}")
            out[pid] = (label, demo)
    return out


def read_corpus(events_path, labels_path, schema):
    """Rebuild :class:`PatientRecord` objects from an events and a labels file.

    Patients come back in labels-file order; a patient with events but no
    label is a data error.
    """
    labels = read_labels(labels_path)
    cols = {pid: ([], [], []) for pid in labels}
    with open(events_path, newline="") as fh:
        rows = _rows(fh)
        header = next(rows, None)
        if header is None or tuple(header) != EVENT_COLUMNS:
            raise DataError(f"{events_path}: expected header {','.join(EVENT_COLUMNS)}")
        for n, row in enumerate(rows, start=1):
            if len(row) != 4:
                raise DataError(f"{events_path} row {n}: expected 4 fields")
            try:
                pid, hour = int(row[0]), float(row[1])
            except ValueError as e:
                raise DataError(f"{events_path} row {n}: {e}") from None
            if pid not in cols:
                raise DataError(f"{events_path} row {n}: patient {pid} has no label")
            f = schema.index(row[2])
            spec = schema.features[f]
            if spec.kind == "categorical":
                v = float(spec.level_index(row[3]))
            else:
                try:
                    v = float(row[3])
                except ValueError:
                    raise DataError(f"{events_path} row {n}: value {row[3]!r} is not a number") from None
            if not math.isfinite(v):
                raise DataError(f"{events_path} row {n}: non-finite value for {spec.name}")
            h, fs, vs = cols[pid]
            h.append(hour)
            fs.append(f)
            vs.append(v)
    return [PatientRecord(pid, *cols[pid], label=lab, demographics=demo) for pid, (lab, demo) in labels.items()]


def save_dataset(dataset, path, meta=None):
    """Cache encoded matrices in the tensor container."""
    info = {"kind": "dataset", "tag": dataset.tag, "provenance": dataset.provenance}
    info.update(meta or {})
    write_container(path, {"X": dataset.X, "y": dataset.y, "ids": dataset.ids}, info)


def load_dataset(path):
    tensors, meta = read_container(path)
    if meta.get("kind") != "dataset":
        raise DataError(f"{path} is not a cached dataset")
    return Dataset(tensors["X"], tensors["y"].astype(np.int64), tensors["ids"].astype(np.int64),
                   meta.get("tag", ""), meta.get("provenance", ""))


def ensure_parent(path):
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)

