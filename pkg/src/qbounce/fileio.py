"""CSV/JSON emission and ingestion for the command-line tool.

CSV dialect: comma separated, ``.`` decimal point, mandatory header, LF
line endings, reals written with 12 significant digits. Every file is
written to a temporary sibling and renamed into place, so readers never
see a half-written output.
"""

import csv
import hashlib
import io
import json
import math
import os
import tempfile

import numpy as np

from .exceptions import ConfigError, DomainError
from .slitmodels import TransmissionCurve

__all__ = [
    "format_real",
    "atomic_write",
    "write_csv",
    "read_curve_csv",
    "write_json",
    "sha256_file",
    "write_manifest",
    "load_config",
]

UM = 1e-6


def format_real(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    out = f"{x:.12g}"
    return "0" if out == "-0" else out


def atomic_write(path, text):
    """Write ``text`` (UTF-8, LF) to ``path`` via temp file + rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, columns):
    """Write equal-length numeric ``columns`` under ``header``."""
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    if len(cols) != len(header):
        raise ValueError("header and columns differ in length")
    if len({c.size for c in cols}) > 1:
        raise ValueError("columns differ in length")
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(format_real(v) for v in row))
    return atomic_write(path, "\n".join(lines) + "\n")


def read_curve_csv(path):
    """Read ``z_a,counts[,err]`` (heights in micrometres) into a TransmissionCurve.

    Raises :class:`DomainError` naming the row and column of the first bad
    cell; I/O problems surface as ``OSError``.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DomainError(f"{path}: empty file, expected header 'z_a,counts[,err]'")
    header = [h.strip() for h in rows[0]]
    if header not in (["z_a", "counts"], ["z_a", "counts", "err"]):
        raise DomainError(f"{path}: row 1: header must be 'z_a,counts' or 'z_a,counts,err', "
                          f"got {','.join(header)!r}")
    data = []
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DomainError(f"{path}: row {i}: expected {len(header)} columns, got {len(row)}")
        values = []
        for name, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise DomainError(f"{path}: row {i}, column {name!r}: "
                                  f"cannot parse {cell.strip()!r} as a number") from None
            if not math.isfinite(v):
                raise DomainError(f"{path}: row {i}, column {name!r}: value is not finite")
            values.append(v)
        data.append(values)
    if not data:
        raise DomainError(f"{path}: no data rows")
    arr = np.array(data)
    err = arr[:, 2] if arr.shape[1] == 3 else None
    return TransmissionCurve(arr[:, 0] * UM, arr[:, 1], "data", stat_err=err)


def write_json(path, obj):
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, command, config, seed, version, wall_time, outputs):
    """Manifest listing every output with its checksum; written after the outputs."""
    files = [{"path": os.path.basename(p), "sha256": sha256_file(p)} for p in outputs]
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": version,
        "wall_time_s": wall_time,
        "outputs": files,
    }
    return write_json(os.path.join(out_dir, "manifest.json"), manifest)


def load_config(path, schema):
    """Parse a JSON config and check it against ``schema``.

    ``schema`` maps top-level keys either to a type (scalar entry) or to a
    dict of allowed sub-keys. Unknown keys raise :class:`ConfigError`
    naming the key.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for key, value in cfg.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r}")
        allowed = schema[key]
        if isinstance(allowed, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            for sub in value:
                if sub not in allowed:
                    raise ConfigError(f"unknown config key {key}.{sub!r}")
    return cfg
