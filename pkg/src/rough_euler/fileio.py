"""Configuration parsing and file formats (JSON config, RGE2 snapshots, CSV)."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rough_path import canonical_lift, chen_defect, geometricity_defect, read_path_csv
from .spectral import ScalarField, VectorField, spectral_grid
from .solver import DiagnosticsSeries, SolverConfig

MAGIC = b"RGE2"
VERSION = 1
_HEADER = struct.Struct("<4sII")


class ConfigError(ValueError):
    """Semantic or syntactic problem in a configuration document."""


class SnapshotFormatError(ValueError):
    pass


def fmt(x: float) -> str:
    """17 significant digits, enough for an exact float64 round trip."""
    return format(float(x), ".17g")


# --- config ------------------------------------------------------------------

EXPERIMENT_KEYS = {
    "n_min", "n_max", "seeds", "grid_extra", "min_pass",
    "h0", "refinements", "substeps",
    "eps", "bump_seed", "bump_kmax",
    "pushforward", "lattice",
}

_DRIVER_KEYS = {
    "none": set(),
    "brownian": {"seed", "level"},
    "smooth": {"name", "amp", "freq"},
    "csv": {"path"},
}
_INIT_KEYS = {
    "taylor_green": {"amp"},
    "random": {"seed", "kmax", "amp", "slope"},
    "snapshot": {"path"},
    "zero": set(),
}
_SMOOTH_NAMES = {"circle", "sine", "linear"}
_REQUIRED = {"brownian": {"seed", "level"}, "csv": {"path"}, "random": {"seed"}, "snapshot": {"path"}}


@dataclass
class ExperimentConfig:
    solver: SolverConfig
    params: dict = field(default_factory=dict)


def _check_typed(section: str, spec, table: dict) -> None:
    if not isinstance(spec, dict):
        raise ConfigError(f"{section} must be an object")
    kind = spec.get("type")
    if kind not in table:
        raise ConfigError(f"{section}.type must be one of {sorted(table)}, got {kind!r}")
    extra = set(spec) - table[kind] - {"type"}
    if extra:
        raise ConfigError(f"unknown key {section}.{sorted(extra)[0]}")
    missing = _REQUIRED.get(kind, set()) - set(spec)
    if missing:
        raise ConfigError(f"missing key {section}.{sorted(missing)[0]}")


def _check_xi(xi) -> None:
    if not isinstance(xi, list):
        raise ConfigError("xi must be a list of mode lists")
    for k, modes in enumerate(xi):
        if not isinstance(modes, list) or not modes:
            raise ConfigError(f"xi[{k}] must be a non-empty list of modes")
        for j, m in enumerate(modes):
            if not isinstance(m, dict) or "k" not in m:
                raise ConfigError(f"xi[{k}][{j}] needs a 'k' entry")
            extra = set(m) - {"k", "cos", "sin"}
            if extra:
                raise ConfigError(f"unknown key xi[{k}][{j}].{sorted(extra)[0]}")
            for key in ("k", "cos", "sin"):
                if key in m and (not isinstance(m[key], list) or len(m[key]) != 2):
                    raise ConfigError(f"xi[{k}][{j}].{key} must be a pair")


def _check_loops(loops) -> None:
    if not isinstance(loops, list):
        raise ConfigError("loops must be a list")
    for i, lp in enumerate(loops):
        if not isinstance(lp, dict):
            raise ConfigError(f"loops[{i}] must be an object")
        extra = set(lp) - {"name", "center", "radius", "points", "csv"}
        if extra:
            raise ConfigError(f"unknown key loops[{i}].{sorted(extra)[0]}")
        if "csv" not in lp and not {"center", "radius"} <= set(lp):
            raise ConfigError(f"loops[{i}] needs center and radius, or csv")


def config_from_dict(doc: dict, base_dir: Path | None = None):
    """Validated SolverConfig (or ExperimentConfig when an 'experiment' key is present)."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    doc = dict(doc)
    exp = doc.pop("experiment", None)
    names = {f.name for f in dataclasses.fields(SolverConfig)}
    extra = set(doc) - names
    if extra:
        raise ConfigError(f"unknown key {sorted(extra)[0]}")
    if "driver" in doc:
        _check_typed("driver", doc["driver"], _DRIVER_KEYS)
        name = doc["driver"].get("name", "circle")
        if doc["driver"]["type"] == "smooth" and name not in _SMOOTH_NAMES:
            raise ConfigError(f"driver.name must be one of {sorted(_SMOOTH_NAMES)}, got {name!r}")
    if "init" in doc:
        _check_typed("init", doc["init"], _INIT_KEYS)
    if "xi" in doc:
        _check_xi(doc["xi"])
    if "loops" in doc:
        _check_loops(doc["loops"])
    for key in ("grid_n", "diagnostics_every", "snapshot_every"):
        if key in doc and (isinstance(doc[key], bool) or not isinstance(doc[key], int)):
            raise ConfigError(f"{key} must be an integer")
    for key in ("T", "dt_max", "cfl", "l_step", "p", "blowup_factor"):
        if key in doc and doc[key] is not None and not isinstance(doc[key], (int, float)):
            raise ConfigError(f"{key} must be a number")
    if base_dir is not None:
        for section in ("driver", "init"):
            spec = doc.get(section)
            if spec and "path" in spec and not Path(spec["path"]).is_absolute():
                doc[section] = dict(spec, path=str(base_dir / spec["path"]))
    cfg = SolverConfig(**doc)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if exp is None:
        return cfg
    if not isinstance(exp, dict):
        raise ConfigError("experiment must be an object")
    extra = set(exp) - EXPERIMENT_KEYS
    if extra:
        raise ConfigError(f"unknown key experiment.{sorted(extra)[0]}")
    return ExperimentConfig(cfg, dict(exp))


def parse_config(data: bytes | str, base_dir: Path | None = None):
    """Parse UTF-8 JSON bytes into a validated config."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"config is not UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(doc, base_dir)


def load_config(path):
    p = Path(path)
    return parse_config(p.read_bytes(), p.parent)


def config_to_dict(cfg) -> dict:
    if isinstance(cfg, ExperimentConfig):
        d = config_to_dict(cfg.solver)
        d["experiment"] = dict(cfg.params)
        return d
    return dataclasses.asdict(cfg)


# --- snapshots -----------------------------------------------------------------

def _encode(values: np.ndarray) -> bytes:
    # x1 varies fastest
    return np.ascontiguousarray(values.T, dtype="<f8").tobytes()


def emit_snapshot(f, path) -> None:
    """Write a ScalarField or VectorField in the RGE2 binary format.

    Header: magic, u32 version, u32 N. A vector field is two consecutive
    payloads, so the component count follows from the file length.
    """
    comps = [f] if isinstance(f, ScalarField) else list(f)
    N = comps[0].N
    parts = [_HEADER.pack(MAGIC, VERSION, N)]
    parts += [_encode(c.values) for c in comps]
    Path(path).write_bytes(b"".join(parts))


def load_snapshot(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotFormatError(f"{path}: expected at least {_HEADER.size} header bytes, got {len(data)}")
    magic, version, N = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    if N < 8 or N % 2:
        raise SnapshotFormatError(f"{path}: bad grid size N={N}")
    payload = 8 * N * N
    sizes = {_HEADER.size + payload: 1, _HEADER.size + 2 * payload: 2}
    ncomp = sizes.get(len(data))
    if ncomp is None:
        raise SnapshotFormatError(
            f"{path}: expected {_HEADER.size + payload} (scalar) or {_HEADER.size + 2 * payload} "
            f"(vector) bytes for N={N}, got {len(data)}")
    grid = spectral_grid(N)
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    comps = [ScalarField(grid, flat[c * N * N:(c + 1) * N * N].reshape(N, N).T.copy())
             for c in range(ncomp)]
    return comps[0] if ncomp == 1 else VectorField(*comps)


# --- CSV -----------------------------------------------------------------------

def diagnostics_csv(series: DiagnosticsSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(series.columns)
    for row in series.rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def write_diagnostics_csv(series: DiagnosticsSeries, dest) -> None:
    Path(dest).write_text(diagnostics_csv(series))


def read_diagnostics_csv(src) -> DiagnosticsSeries:
    rows = [r for r in csv.reader(io.StringIO(Path(src).read_text())) if r]
    if not rows:
        raise ValueError(f"{src}: empty diagnostics CSV")
    series = DiagnosticsSeries(rows[0])
    series.rows = [[float(x) for x in r] for r in rows[1:]]
    return series


def write_table_csv(columns, rows, dest) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])
    Path(dest).write_text(buf.getvalue())


def lift_path(csv_in, csv_out, *, verify: bool = False, tol: float = 1e-12) -> int:
    """Canonical lift of a path CSV, one row per interval.

    With ``verify`` two extra columns hold the Chen defect of [t_0, t_i, t_{i+1}]
    and the geometricity defect of the interval; the exit code is 1 if either
    exceeds ``tol``.
    """
    R = canonical_lift(read_path_csv(csv_in))
    K = R.dim
    cols = (["s", "t"] + [f"Z_{k + 1}" for k in range(K)]
            + [f"ZZ_{l + 1}{k + 1}" for l in range(K) for k in range(K)])
    if verify:
        cols += ["chen_defect", "geo_defect"]
    rows = []
    worst = 0.0
    for i in range(R.n_intervals):
        Z, ZZ = R.increment(i, i + 1)
        row = [R.times[i], R.times[i + 1], *Z, *ZZ.ravel()]
        if verify:
            c = float(np.abs(chen_defect(R, 0, i, i + 1)).max())
            g = float(np.abs(geometricity_defect(R, i, i + 1)).max())
            worst = max(worst, c, g)
            row += [c, g]
        rows.append([float(x) for x in row])
    write_table_csv(cols, rows, csv_out)
    return 1 if verify and not worst <= tol else 0


def json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
