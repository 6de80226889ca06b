"""Experiment orchestration: metrics, post-processing, tables and image export.

An experiment file is JSON::

    {
      "schema_version": 1,
      "groups": [
        {
          "name": "spcp-80dB",
          "generator": "spcp",
          "params": {"n": 500, "c_r": 0.05, "c_p": 0.05, "snr_db": 80},
          "seeds": [0, 1, 2, 3, 4],
          "solvers": [{"name": "pspg", "config": {}}],
          "postprocess": false,
          "bounds": {"pspg": {"relL_avg": 4e-4, "relS_avg": 1.3e-3, "svd_max": 60}}
        }
      ]
    }

Each (group, seed, solver) triple is one cell.  Cells run in a process
pool and records are merged back in cell order, so the tables depend only
on the experiment file.  Supported bounds are ``<metric>_avg`` and
``<metric>_max`` upper limits and ``<metric>_range`` ``[lo, hi]`` windows
on the per-cell values.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from lrsd import kernels
from lrsd.admm import AdmmConfig, solve_eadm, solve_iadm
from lrsd.alm import AlmConfig, solve_alm
from lrsd.errors import InvalidConfig
from lrsd.problems import generate
from lrsd.pspg import PspgConfig, solve_pspg

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

SOLVERS = {
    "eadm": (solve_eadm, AdmmConfig),
    "iadm": (solve_iadm, AdmmConfig),
    "alm": (solve_alm, AlmConfig),
    "pspg": (solve_pspg, PspgConfig),
}


def make_config(solver: str, overrides: Optional[dict] = None):
    """Build the config dataclass of `solver`, rejecting unknown keys."""
    if solver not in SOLVERS:
        raise InvalidConfig(f"unknown solver {solver!r}; choose from {sorted(SOLVERS)}")
    cls = SOLVERS[solver][1]
    overrides = dict(overrides or {})
    known = {f.name for f in fields(cls)}
    bad = sorted(set(overrides) - known)
    if bad:
        raise InvalidConfig(f"unknown {solver} config keys: {bad}")
    cfg = cls(**overrides)
    cfg.validate()
    return cfg


def run_solver(name: str, instance, config=None):
    fn, _ = SOLVERS[name]
    if config is None or isinstance(config, dict):
        config = make_config(name, config)
    return fn(instance, config)


# -- metrics ------------------------------------------------------------------

@dataclass
class Metrics:
    relL: float
    relS: float
    absolute_L: bool = False
    absolute_S: bool = False


def _rel(X, X0):
    ref = float(np.linalg.norm(X0))
    err = float(np.linalg.norm(X - X0))
    return (err, True) if ref == 0 else (err / ref, False)


def metrics(L, S, truth, mask=None) -> Metrics:
    """Relative Frobenius errors of ``L`` and ``S`` against the ground truth.

    With missing entries the sparse part is compared on the observed set
    only: off the mask ``S`` carries ``-L`` by construction and the true
    sparse entries there are unidentifiable.  A zero reference falls back
    to the absolute error and sets the matching flag.
    """
    L = np.asarray(L, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    if L.shape != truth.L0.shape or S.shape != truth.S0.shape:
        raise InvalidConfig("solution and ground truth shapes differ")
    relL, absL = _rel(L, truth.L0)
    if mask is not None and not mask.is_full:
        relS, absS = _rel(S[mask.array], truth.S0[mask.array])
    else:
        relS, absS = _rel(S, truth.S0)
    return Metrics(relL, relS, absL, absS)


# -- post-processing ------------------------------------------------------------

def postprocess_S(L_sol, D, delta: float) -> np.ndarray:
    """Sparsest correction ``argmin ||S||_1 s.t. ||S + L_sol - D||_F <= delta``.

    With ``R = D - L_sol`` the minimizer is ``shrink(R, t)`` where the level
    ``t`` makes the clipped residual ``min(|R|, t)`` have norm `delta`.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    R = np.asarray(D, dtype=np.float64) - np.asarray(L_sol, dtype=np.float64)
    if float(np.linalg.norm(R)) <= delta:
        return np.zeros_like(R)
    a = np.sort(np.abs(R).reshape(-1))
    t = kernels.level_search(a, delta)
    return kernels.soft_threshold(R, t)


# -- records and tables ---------------------------------------------------------

@dataclass
class RunRecord:
    group: str
    seed: int
    instance_id: str
    solver: str
    iterations: int = 0
    svd_count: int = 0
    lsv_count: int = 0
    wall_seconds: float = 0.0
    objective: float = math.nan
    infeasibility: float = math.nan
    relL: float = math.nan
    relS: float = math.nan
    rank: int = 0
    converged: bool = False
    error: str = ""
    config: dict = field(default_factory=dict)


TABLE_COLUMNS = ("iterations", "svd_count", "lsv_count", "relL", "relS", "rank", "wall_seconds")


def run_cell(cell: dict) -> RunRecord:
    """Generate the instance, solve it and score it.  Never raises."""
    rec = RunRecord(cell["group"], cell["seed"], "", cell["solver"], config=cell.get("config", {}))
    try:
        params = dict(cell["params"], seed=cell["seed"])
        inst = generate(cell["generator"], **params)
        rec.instance_id = inst.instance_id
        cfg = make_config(cell["solver"], cell.get("config"))
        rec.config = asdict(cfg)
        t0 = time.perf_counter()
        res = run_solver(cell["solver"], inst, cfg)
        rec.wall_seconds = time.perf_counter() - t0
        S = res.S
        if cell.get("postprocess") and inst.delta > 0:
            S = postprocess_S(res.L, inst.D_obs, inst.delta)
        rec.iterations, rec.svd_count, rec.lsv_count = res.iterations, res.svd_count, res.lsv_count
        rec.objective, rec.infeasibility = res.objective, res.infeasibility
        rec.converged = res.converged
        rec.rank = res.rank
        if inst.ground_truth is not None:
            m = metrics(res.L, S, inst.ground_truth, inst.mask)
            rec.relL, rec.relS = m.relL, m.relS
    except Exception as exc:  # recorded, the run goes on
        rec.error = f"{type(exc).__name__}: {exc}"
        log.debug("cell failed\n%s", traceback.format_exc())
    return rec


def load_experiment(spec) -> dict:
    """Accept a path, a JSON string or an already parsed dict."""
    if isinstance(spec, dict):
        data = spec
    else:
        text = str(spec)
        if not text.lstrip().startswith("{") and Path(text).exists():
            text = Path(text).read_text()
        try:
            data = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"experiment file is not valid JSON: {exc}") from exc
    if not data:
        return {"schema_version": SCHEMA_VERSION, "groups": []}
    if data.get("schema_version") != SCHEMA_VERSION:
        raise InvalidConfig(f"unsupported experiment schema_version {data.get('schema_version')!r}")
    return data


def expand_cells(exp: dict) -> list:
    cells = []
    for gi, group in enumerate(exp.get("groups", [])):
        name = group.get("name", f"group{gi}")
        for seed in group.get("seeds", [0]):
            for s in group.get("solvers", []):
                s = {"name": s} if isinstance(s, str) else s
                cells.append({"group": name, "generator": group["generator"],
                              "params": group.get("params", {}), "seed": int(seed),
                              "solver": s["name"], "config": s.get("config", {}),
                              "postprocess": bool(group.get("postprocess", False))})
    return cells


def summarize(records) -> list:
    """Per (group, solver) rows with avg and max of each table column."""
    order, buckets = [], {}
    for r in records:
        key = (r.group, r.solver)
        if key not in buckets:
            order.append(key)
            buckets[key] = []
        buckets[key].append(r)
    rows = []
    for key in order:
        ok = [r for r in buckets[key] if not r.error]
        row = {"group": key[0], "solver": key[1], "runs": len(buckets[key]),
               "failed": len(buckets[key]) - len(ok)}
        for col in TABLE_COLUMNS:
            vals = np.array([float(getattr(r, col)) for r in ok])
            row[f"{col}_avg"] = float(vals.mean()) if vals.size else math.nan
            row[f"{col}_max"] = float(vals.max()) if vals.size else math.nan
            row[f"{col}_min"] = float(vals.min()) if vals.size else math.nan
        rows.append(row)
    return rows


def check_bounds(exp: dict, rows: list) -> list:
    """Messages for every violated bound (and for failed cells under a bound)."""
    index = {(r["group"], r["solver"]): r for r in rows}
    out = []
    for gi, group in enumerate(exp.get("groups", [])):
        name = group.get("name", f"group{gi}")
        for solver, bounds in group.get("bounds", {}).items():
            row = index.get((name, solver))
            if row is None:
                out.append(f"{name}/{solver}: no runs")
                continue
            if row["failed"]:
                out.append(f"{name}/{solver}: {row['failed']} failed cell(s)")
            for key, limit in bounds.items():
                metric, _, kind = key.rpartition("_")
                col = {"svd": "svd_count", "lsv": "lsv_count", "iter": "iterations"}.get(metric, metric)
                if kind in ("avg", "max"):
                    v = row.get(f"{col}_{kind}")
                    if v is None or not v <= limit:
                        out.append(f"{name}/{solver}: {key} = {v} exceeds {limit}")
                elif kind == "range":
                    lo, hi = row.get(f"{col}_min"), row.get(f"{col}_max")
                    if lo is None or not (limit[0] <= lo and hi <= limit[1]):
                        out.append(f"{name}/{solver}: {col} in [{lo}, {hi}] outside {limit}")
                else:
                    raise InvalidConfig(f"unknown bound {key!r}")
    return out


def records_csv(records) -> str:
    buf = io.StringIO()
    names = [f.name for f in fields(RunRecord)]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in records:
        row = []
        for n in names:
            v = getattr(r, n)
            row.append(json.dumps(v, sort_keys=True) if isinstance(v, dict) else
                       (repr(v) if isinstance(v, float) else v))
        w.writerow(row)
    return buf.getvalue()


def _fmt(v, col):
    if isinstance(v, str):
        return v
    if col.startswith(("relL", "relS")):
        return f"{v:.1E}"
    if col.startswith("wall"):
        return f"{v:.2f}"
    return f"{v:.1f}"


def summary_text(rows) -> str:
    """Aligned text table: one line per (group, solver), avg / max columns."""
    header = ["group", "solver", "runs"] + [c for c in TABLE_COLUMNS]
    lines = [header]
    for r in rows:
        line = [r["group"], r["solver"], str(r["runs"])]
        for col in TABLE_COLUMNS:
            line.append(f"{_fmt(r[col + '_avg'], col)} / {_fmt(r[col + '_max'], col)}")
        lines.append(line)
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip()
                     for line in lines) + "\n"


def summary_csv(rows) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


@dataclass
class ExperimentReport:
    records: list
    rows: list
    violations: list

    @property
    def exit_code(self) -> int:
        return 1 if self.violations else 0


def run_experiment(spec, workers: Optional[int] = None, out_dir=None) -> ExperimentReport:
    """Run every cell of `spec`; optionally write records.csv, summary.csv, summary.txt."""
    exp = load_experiment(spec)
    cells = expand_cells(exp)
    if workers is None or workers <= 1 or len(cells) <= 1:
        records = [run_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_cell, cells))  # map keeps cell order
    rows = summarize(records)
    report = ExperimentReport(records, rows, check_bounds(exp, rows))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "records.csv").write_text(records_csv(records))
        (out / "summary.csv").write_text(summary_csv(rows))
        (out / "summary.txt").write_text(summary_text(rows))
    return report


# -- image export -----------------------------------------------------------------

def export_pgm(X, path, frame_shape, frame_index: int) -> Path:
    """Write column `frame_index` of `X` as an 8-bit binary PGM of `frame_shape`.

    Columns are frames stacked column-major (h x w image -> h*w vector).
    Values are mapped affinely from the column's [min, max] to [0, 255];
    a constant column gives an all-zero image.
    """
    X = np.asarray(X, dtype=np.float64)
    h, w = (int(v) for v in frame_shape)
    if X.ndim != 2 or h * w != X.shape[0]:
        raise InvalidConfig(f"frame shape {h}x{w} does not match {X.shape[0]} rows")
    if not 0 <= frame_index < X.shape[1]:
        raise InvalidConfig(f"frame index {frame_index} outside [0, {X.shape[1]})")
    col = X[:, frame_index]
    lo, hi = float(col.min()), float(col.max())
    if hi > lo:
        pix = np.rint((col - lo) * (255.0 / (hi - lo)))
    else:
        pix = np.zeros_like(col)
    img = pix.astype(np.uint8).reshape((h, w), order="F")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return path


def read_pgm(path):
    """Minimal P5 reader returning a (h, w) uint8 array."""
    data = Path(path).read_bytes()
    parts, pos = [], 0
    while len(parts) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        parts.append(data[pos:end])
        pos = end
    if parts[0] != b"P5":
        raise InvalidConfig(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise InvalidConfig(f"{path}: only 8-bit PGM supported")
    return np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8).reshape(h, w)
