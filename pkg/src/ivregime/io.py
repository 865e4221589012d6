"""CSV panels, key-value configuration files and JSON output.

Panel CSV columns follow the observation order of each path::

    x0_1..x0_d0, z0, w0, y1, x1_1..x1_d1, z1, w1, y2, ..., y{T+1}[, x{T+1}_*]

Real values are written with Python's shortest round-trip representation
and binary columns as integers, which makes ``write(read(f))`` reproduce a
canonical file byte for byte.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import re
from pathlib import Path

import numpy as np

from .model import PanelDataset
from .simgen import LatentRecord


class CsvSchemaError(ValueError):
    pass


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def header(horizon: int, dims) -> list[str]:
    cols = []
    for j in range(horizon + 1):
        cols += [f"x{j}_{k + 1}" for k in range(dims[j])]
        cols += [f"z{j}", f"w{j}", f"y{j + 1}"]
    cols += [f"x{horizon + 1}_{k + 1}" for k in range(dims[horizon + 1])]
    return cols


_COL = re.compile(r"^([xzwy])(\d+)(?:_(\d+))?$")


def _layout_from_header(names: list[str]) -> tuple[int, tuple[int, ...]]:
    parsed = []
    for name in names:
        m = _COL.match(name.strip())
        if not m:
            raise CsvSchemaError(f"row 0 (header): unrecognised column {name!r}")
        parsed.append((m.group(1), int(m.group(2))))
    horizon = sum(1 for kind, _ in parsed if kind == "z") - 1
    if horizon < 0:
        raise CsvSchemaError("row 0 (header): no instrument columns (z0, z1, ...)")
    dims = [0] * (horizon + 2)
    for kind, j in parsed:
        if kind == "x":
            if j > horizon + 1:
                raise CsvSchemaError(f"row 0 (header): covariate period {j} beyond horizon {horizon}")
            dims[j] += 1
    expected = header(horizon, dims)
    if [n.strip() for n in names] != expected:
        raise CsvSchemaError(
            "row 0 (header): columns out of canonical order; expected "
            + ",".join(expected)
        )
    return horizon, tuple(dims)


def _fmt_real(v: float) -> str:
    return repr(float(v))


def _fmt_binary(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_csv(data: PanelDataset, path) -> None:
    cols = header(data.horizon, data.dims)
    blocks, fmts = [], []
    for j in range(data.horizon + 1):
        blocks += [data.x[j], data.z[:, j:j + 1], data.w[:, j:j + 1], data.y[:, j:j + 1]]
        fmts += [_fmt_real] * data.dims[j] + [_fmt_binary, _fmt_binary, _fmt_real]
    blocks.append(data.x[data.horizon + 1])
    fmts += [_fmt_real] * data.dims[data.horizon + 1]
    table = np.hstack(blocks).tolist()
    with _open_out(path) as fh:
        fh.write(",".join(cols) + "\n")
        for row in table:
            fh.write(",".join(f(v) for f, v in zip(fmts, row)) + "\n")


def read_csv(path) -> PanelDataset:
    """Parse a panel CSV; schema problems raise :class:`CsvSchemaError` naming the row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise CsvSchemaError("row 0 (header): file is empty") from None
        horizon, dims = _layout_from_header(names)
        width = len(names)
        rows = []
        for k, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != width:
                raise CsvSchemaError(f"row {k}: expected {width} fields, found {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                bad = next(i for i, v in enumerate(row) if not _parses(v))
                raise CsvSchemaError(
                    f"row {k}: column {names[bad]} value {row[bad]!r} is not a number"
                ) from None
    if not rows:
        raise CsvSchemaError("row 1: no data rows")
    table = np.array(rows, dtype=float)
    x, z, w, y = [], [], [], []
    c = 0
    for j in range(horizon + 1):
        x.append(table[:, c:c + dims[j]])
        c += dims[j]
        z.append(table[:, c])
        w.append(table[:, c + 1])
        y.append(table[:, c + 2])
        c += 3
    x.append(table[:, c:c + dims[horizon + 1]])
    return PanelDataset(x, np.column_stack(z), np.column_stack(w), np.column_stack(y))


def _parses(v: str) -> bool:
    try:
        float(v)
        return True
    except ValueError:
        return False


LATENT_COLUMNS = ("eps0", "eps1", "w0_0", "w0_1", "w1_0", "w1_1")


def write_latents_csv(latents: LatentRecord, path) -> None:
    cols = [getattr(latents, k) for k in LATENT_COLUMNS]
    fmts = [_fmt_real, _fmt_real] + [_fmt_binary] * 4
    with _open_out(path) as fh:
        fh.write(",".join(LATENT_COLUMNS) + "\n")
        for row in np.column_stack(cols).tolist():
            fh.write(",".join(f(v) for f, v in zip(fmts, row)) + "\n")


def read_latents_csv(path) -> LatentRecord:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return LatentRecord(*(table[:, k] for k in range(len(LATENT_COLUMNS))))


def _open_out(path):
    if isinstance(path, io.TextIOBase):
        return _NoClose(path)
    return open(path, "w", newline="")


class _NoClose:
    def __init__(self, fh):
        self.fh = fh

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        return False


# configuration ---------------------------------------------------------------

def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``[section]`` headers are optional and ignored."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if not re.search(r"^\s*\[", text, flags=re.M):
        text = "[ivregime]\n" + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            out[key.strip()] = value.strip()
    return out


def parse_vector(key: str, value: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in value.strip("[]() ").split(",") if v.strip())
    except ValueError:
        raise ConfigError(key, f"expected comma-separated numbers, got {value!r}") from None
    if not vals:
        raise ConfigError(key, "empty vector")
    return vals


def parse_bool(key: str, value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {value!r}")


# JSON --------------------------------------------------------------------------

def _json_float(v: float) -> str:
    if math.isnan(v) or math.isinf(v):
        return "null"
    text = format(v, ".17g")
    return text if any(c in text for c in ".en") else text + ".0"


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _json_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")
