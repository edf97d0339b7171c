"""CSV rows of sampled functions, checkpoints, training logs and config files."""
import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import CsvFormatError, DimensionError
from .network import ModelParams

CHECKPOINT_FORMAT = "srvfnet-checkpoint/1"


def read_rows(path, header=False, expected_length=None):
    """Read one function per row. Raises ``CsvFormatError`` naming the 1-based row."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise CsvFormatError(str(exc), row=lineno) from None
            if not np.all(np.isfinite(values)):
                raise CsvFormatError("non-finite value", row=lineno)
            if expected_length is not None and len(values) != expected_length:
                raise DimensionError(f"row {lineno}: expected {expected_length} values, got {len(values)}")
            if rows and len(values) != len(rows[0]):
                raise DimensionError(f"row {lineno}: expected {len(rows[0])} values, got {len(values)}")
            rows.append(values)
    if not rows:
        return np.empty((0, expected_length or 0))
    return np.array(rows, dtype=float)


def write_rows(path, rows, header=None):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) for x in row])


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _pack(arrays):
    return {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in arrays.items()}


def _unpack(packed):
    return {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in packed.items()}


def save_checkpoint(path, params, config, template=None, pi_cfg=None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "dims": {"T": params.T, "latent_dim": params.latent_dim, "hidden": list(params.hidden),
                 "tsmooth": None if pi_cfg is None else pi_cfg.tsmooth,
                 "smooth": True if pi_cfg is None else pi_cfg.smooth},
        "weights": _pack(params.weights),
        "stats": _pack(params.stats),
        "config": None if config is None else config.to_dict(),
        "template": None if template is None else np.asarray(template, dtype=float).tolist(),
    }
    _atomic_write(path, json.dumps(doc))


def load_checkpoint(path):
    """Returns ``(params, doc)``; ``doc`` keeps dims, config and template as stored."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} document")
    dims = doc["dims"]
    params = ModelParams(dims["T"], dims["latent_dim"], tuple(dims["hidden"]),
                         _unpack(doc["weights"]), _unpack(doc["stats"]))
    if doc.get("template") is not None:
        doc["template"] = np.array(doc["template"], dtype=float)
    return params, doc


LOG_HEADER = ["epoch", "total", "fr", "kl", "grad", "grad2", "wallclock_seconds"]


def write_train_log(path, report):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_HEADER)
        t = report.traces
        for e in range(report.epochs):
            writer.writerow([e + 1, t["total"][e], t["fr"][e], t["kl"][e], t["grad"][e], t["grad2"][e],
                             report.wallclock[e]])


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use the CLI flag spelling."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("_", "-")] = value
    return out


def write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")
