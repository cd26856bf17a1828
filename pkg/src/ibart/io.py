"""Reading primary-feature tables and writing run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ValidationError
from .units import parse_unit

__all__ = ["Dataset", "read_dataset", "write_space_csv", "RunManifest", "file_digest",
           "config_digest", "dump_json"]

UNITS_TAG = "#units:"


@dataclass
class Dataset:
    X: np.ndarray
    names: list
    y: np.ndarray | None = None
    response: str | None = None
    units: list | None = None


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValidationError(f"{path} is empty")
    return rows


def _to_float(rows, path, first_line):
    try:
        return np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric entry after line {first_line} ({exc})") from None


def read_dataset(path, response=None, response_path=None):
    """Load a CSV of primary features.

    The first row holds column names.  An optional second row whose first
    cell starts with ``#units:`` gives a unit string per column (the tag may
    be followed by the first unit in the same cell).  The response is either
    a named column (removed from the features) or the single column of a
    separate file.
    """
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    units = None
    if body and body[0][0].strip().startswith(UNITS_TAG):
        raw = list(body[0])
        raw[0] = raw[0].strip()[len(UNITS_TAG):]
        if len(raw) != len(header):
            raise ValidationError(f"{path}: units row has {len(raw)} entries for {len(header)} columns")
        units = [parse_unit(u) for u in raw]
        body = body[1:]
    if any(len(r) != len(header) for r in body):
        raise ValidationError(f"{path}: ragged rows")
    data = _to_float(body, path, 2 if units is None else 3)
    if data.shape[0] == 0:
        raise ValidationError(f"{path}: no data rows")
    y = None
    if response is not None:
        if response not in header:
            raise ValidationError(f"response column {response!r} not found in {path}")
        j = header.index(response)
        y = data[:, j]
        data = np.delete(data, j, axis=1)
        header = header[:j] + header[j + 1:]
        if units is not None:
            units = units[:j] + units[j + 1:]
    elif response_path is not None:
        yrows = _read_rows(response_path)
        try:
            float(yrows[0][0])
            start = 0
        except ValueError:
            start = 1
        ydata = _to_float(yrows[start:], response_path, start + 1)
        if ydata.shape[1] != 1:
            raise ValidationError(f"{response_path} must have a single column")
        y = ydata[:, 0]
        if y.shape[0] != data.shape[0]:
            raise ValidationError(f"{response_path} has {y.shape[0]} rows, features have {data.shape[0]}")
        response = yrows[0][0] if start else "y"
    if not np.isfinite(data).all() or (y is not None and not np.isfinite(y).all()):
        raise ValidationError(f"{path}: non-finite values")
    return Dataset(X=data, names=header, y=y, response=response, units=units)


def write_space_csv(path, space, names=True):
    """Write evaluated descriptors with canonical strings (or display names) as header."""
    header = [space.display(d) if names else d.text for d in space.descriptors]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in space.columns:
            w.writerow([repr(float(v)) for v in row])


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


@dataclass
class RunManifest:
    """Everything needed to replay a command: arguments, digests, versions, outputs."""

    command: str
    argv: list
    seed: int
    config: dict
    config_digest: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    version: str = ""
    python: str = field(default_factory=platform.python_version)
    numpy: str = field(default_factory=lambda: np.__version__)
    started: float = field(default_factory=time.time)
    seconds: float = 0.0

    def __post_init__(self):
        if not self.config_digest:
            self.config_digest = config_digest(self.config)
        if not self.version:
            from . import __version__
            self.version = __version__

    def add_input(self, path):
        if path is not None:
            self.inputs[str(path)] = file_digest(path)

    def write(self, path):
        self.seconds = time.time() - self.started
        self.outputs = [str(p) for p in self.outputs]
        dump_json(path, asdict(self))
        return os.fspath(path)
