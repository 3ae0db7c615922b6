"""Monte Carlo driver: trials, target matching, aggregation and file output."""
import csv
import json
import math
import subprocess
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .array_model import simulate
from .crb import crb_summary
from .estimation import (TargetEstimate, make_grid, peak_pick, relax_refine, slim,
                         slim_relax_mbic)
from .io import ConfigError, fmt_float, load_scenario, placement_from_spec

__all__ = ["ExperimentSpec", "ResultRow", "EmptyCell", "trial_seed", "run_trial", "run_monte_carlo",
           "match_targets", "aggregate", "emit_rows", "emit_aggregates", "read_rows_csv",
           "git_describe", "FULL_SNR_SWEEP"]

FULL_SNR_SWEEP = [-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]


class EmptyCell(ValueError):
    pass


@dataclass
class ExperimentSpec:
    """One sweep over SNR values and placements.

    ``method`` is ``slim`` or ``slim-relax``. With ``kmax`` set the number of
    targets is chosen by mBIC, otherwise the true K is used.
    """

    scenario: dict
    snr_sweep: list
    placements: list
    trials: int = 1
    master_seed: int = 0
    method: str = "slim-relax"
    kmax: int = None
    redraw_thresholds: bool = True
    censor: bool = False
    grid_mult: int = 10
    q: float = 0.0
    eps_outer: float = 1e-6
    eps_inner: float = 1e-4
    max_outer: int = 50
    max_inner: int = 50
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_sweep:
            raise ConfigError("snr_sweep is empty")
        if not self.placements:
            raise ConfigError("no placements given")
        if self.method not in ("slim", "slim-relax"):
            raise ConfigError(f"unknown method {self.method!r}")
        labels = [self.label(p) for p in self.placements]
        if len(set(labels)) != len(labels):
            raise ConfigError("placement labels must be unique")
        sc = load_scenario(self.scenario)
        for p in self.placements:
            placement_from_spec(p, sc.config.M)

    @staticmethod
    def label(p):
        if "label" in p:
            return str(p["label"])
        return f"{p.get('mode', 'edges')}-{p.get('M0', '')}".rstrip("-")

    @classmethod
    def from_dict(cls, d, base_dir=None):
        d = dict(d)
        sc = d.get("scenario")
        if isinstance(sc, str):
            path = Path(base_dir or ".") / sc
            try:
                d["scenario"] = json.loads(path.read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot load scenario {path}: {e}") from None
        if "snr_db" in d and "snr_sweep" not in d:
            d["snr_sweep"] = d.pop("snr_db")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown experiment fields {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def to_dict(self):
        return asdict(self)


@dataclass
class ResultRow:
    snr_db: float
    placement_label: str
    trial: int
    target_index: int
    omega_true: float
    omega_hat: float
    squared_error: float
    crb_exact: float
    crb_lower: float
    crb_asymptotic: float
    runtime_ms: float
    k_hat: int
    error: str = ""


ROW_COLUMNS = [f.name for f in fields(ResultRow) if f.name != "runtime_ms"]
AGG_COLUMNS = ["placement_label", "snr_db", "target_index", "mse", "mse_db", "mean_crb",
               "mean_crb_db", "trials_used"]


def _mdb(snr):
    return int(round(float(snr) * 1000))


def trial_seed(master_seed, trial, snr, label):
    """Seed for one (trial, snr, placement) cell, independent of sweep order."""
    return np.random.SeedSequence(int(master_seed),
                                  spawn_key=(int(trial), _mdb(snr) & 0xFFFFFFFF,
                                             zlib.crc32(str(label).encode())))


def match_targets(true_omegas, est_omegas):
    """Greedy nearest-omega assignment; returns est index (or -1) per true target."""
    true_omegas = np.asarray(true_omegas, dtype=float)
    est_omegas = np.asarray(est_omegas, dtype=float)
    out = [-1] * true_omegas.size
    if est_omegas.size == 0:
        return out
    d = np.abs(true_omegas[:, None] - est_omegas[None, :])
    for _ in range(min(true_omegas.size, est_omegas.size)):
        i, j = np.unravel_index(np.argmin(d), d.shape)
        out[int(i)] = int(j)
        d[i, :] = np.inf
        d[:, j] = np.inf
    return out


def _estimate(spec, obs, K_true, grid):
    res = slim(obs, grid, spec.q, spec.eps_outer, spec.eps_inner, spec.max_outer, spec.max_inner)
    if spec.kmax:
        sel = slim_relax_mbic(obs, spec.kmax, slim_result=res)
        if spec.method == "slim":
            peaks = peak_pick(res.spectrum, max(sel.chosen_K, 0))
            return [float(grid.omegas[r]) for r in peaks], sel.chosen_K
        return [t.omega for t in sel.chosen["targets"]], sel.chosen_K
    peaks = peak_pick(res.spectrum, K_true)
    if spec.method == "slim":
        return [float(grid.omegas[r]) for r in peaks], K_true
    init = [TargetEstimate(float(grid.omegas[r]), res.S_hat[r]) for r in peaks]
    targets, _, _ = relax_refine(init, obs, res.sigma_hat, grid.spacing)
    return [t.omega for t in targets], K_true


def run_trial(spec, label, snr, trial):
    """All rows of one trial; failures become rows tagged with the error."""
    sc = load_scenario(spec.scenario)
    pspec = next(p for p in spec.placements if ExperimentSpec.label(p) == label)
    sc = sc.with_placement(pspec)
    sigma = math.sqrt(sc.sources.powers[0] / 10.0 ** (snr / 10.0))
    sc = sc.with_sigma(sigma)
    seed = trial_seed(spec.master_seed, trial, snr, label)
    if spec.redraw_thresholds:
        th_seed = seed
    elif sc.threshold_seed is not None:
        th_seed = sc.threshold_seed
    else:
        th_seed = np.random.SeedSequence(int(spec.master_seed), spawn_key=(0xFFFFFFFF,))
    omegas = sc.sources.omegas
    K = omegas.size
    t0 = time.perf_counter()
    rows = []
    try:
        obs, S = simulate(sc.config, sc.sources, sc.placement, sigma, seed, sc.p_o, th_seed)
        crb_e, crb_l, crb_a = crb_summary(sc.config, omegas, S, obs.thresholds.entries, sigma,
                                          sc.placement)
        grid = make_grid(sc.config, spec.grid_mult)
        est, k_hat = _estimate(spec, obs, K, grid)
        match = match_targets(omegas, est)
        ms = 1000.0 * (time.perf_counter() - t0)
        for k in range(K):
            j = match[k]
            w_hat = est[j] if j >= 0 else math.nan
            err = "" if j >= 0 else "unmatched"
            se = (w_hat - omegas[k]) ** 2 if j >= 0 else math.nan
            if spec.censor and j >= 0 and abs(w_hat - omegas[k]) > 3 * grid.spacing:
                err = "censored"
            rows.append(ResultRow(float(snr), label, trial, k, float(omegas[k]), float(w_hat),
                                  float(se), float(crb_e[k]), float(crb_l[k]), float(crb_a[k]),
                                  ms, int(k_hat), err))
    except Exception as e:  # noqa: BLE001 - a failed trial must not abort the sweep
        ms = 1000.0 * (time.perf_counter() - t0)
        tag = f"{type(e).__name__}: {e}".replace("\n", " ")
        rows = [ResultRow(float(snr), label, trial, k, float(omegas[k]), math.nan, math.nan,
                          math.nan, math.nan, math.nan, ms, -1, tag) for k in range(K)]
    return rows


def _run_cell(args):
    return run_trial(*args)


def run_monte_carlo(spec, threads=1, progress=None):
    """Rows in (placement, snr, trial, target) order regardless of scheduling."""
    jobs = [(spec, ExperimentSpec.label(p), float(snr), t)
            for p in spec.placements for snr in spec.snr_sweep for t in range(int(spec.trials))]
    rows = []
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=int(threads)) as ex:
            for r in ex.map(_run_cell, jobs, chunksize=1):
                rows.extend(r)
                if progress:
                    progress(len(rows))
    else:
        for j in jobs:
            rows.extend(_run_cell(j))
            if progress:
                progress(len(rows))
    return rows


def aggregate(rows, target_index=None):
    """Per (placement, snr, target) MSE and mean exact CRB over successful trials."""
    rows = list(rows)
    if not rows:
        raise EmptyCell("no rows to aggregate")
    cells = {}
    for r in rows:
        if target_index is not None and r.target_index != target_index:
            continue
        cells.setdefault((r.placement_label, r.snr_db, r.target_index), []).append(r)
    out = []
    for key in sorted(cells, key=lambda k: (k[0], k[1], k[2])):
        good = [r for r in cells[key] if not r.error]
        if not good:
            raise EmptyCell(f"no successful trials for placement={key[0]} snr={key[1]} target={key[2]}")
        mse = float(np.mean([r.squared_error for r in good]))
        crbs = [r.crb_exact for r in good if np.isfinite(r.crb_exact)]
        crb = float(np.mean(crbs)) if crbs else math.nan
        out.append({"placement_label": key[0], "snr_db": key[1], "target_index": key[2], "mse": mse,
                    "mse_db": 10 * math.log10(mse) if mse > 0 else -math.inf, "mean_crb": crb,
                    "mean_crb_db": 10 * math.log10(crb) if crb > 0 else math.nan,
                    "trials_used": len(good)})
    return out


def _cell(v):
    if isinstance(v, float):
        return fmt_float(v)
    return str(v)


def _write_csv(path, columns, records):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for rec in records:
                w.writerow([_cell(rec[c]) for c in columns])
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path


def _write_json(path, obj):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _round(v):
    return float(fmt_float(v)) if isinstance(v, float) else v


def git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True,
                             timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _metadata(spec, extra=None):
    meta = {"git_describe": git_describe()}
    if spec is not None:
        meta["spec"] = spec.to_dict()
        meta["master_seed"] = spec.master_seed
        meta["redraw_thresholds"] = spec.redraw_thresholds
        meta["seed_scheme"] = "SeedSequence(master_seed, spawn_key=(trial, round(1000*snr_db), crc32(label)))"
        meta["snr_definition"] = "relative to the first target's power"
    if extra:
        meta.update(extra)
    return meta


def emit_rows(rows, path, fmt="csv", spec=None, extra_meta=None):
    """Write result rows plus a ``.meta.json`` sidecar and a ``.timing.csv`` with runtimes.

    Runtimes are kept out of the main file so reruns are byte-identical.
    """
    path = Path(path)
    recs = [asdict(r) for r in rows]
    if fmt == "csv":
        _write_csv(path, ROW_COLUMNS, recs)
    elif fmt == "json":
        _write_json(path, [{c: _round(r[c]) for c in ROW_COLUMNS} for r in recs])
    else:
        raise ValueError(f"unknown format {fmt!r}")
    _write_csv(path.with_suffix(".timing.csv"), ["placement_label", "snr_db", "trial", "runtime_ms"],
               [r for r in recs if r["target_index"] == 0])
    _write_json(path.with_suffix(".meta.json"), _metadata(spec, extra_meta))
    return path


def emit_aggregates(aggs, path, fmt="csv", spec=None, extra_meta=None):
    path = Path(path)
    if fmt == "csv":
        _write_csv(path, AGG_COLUMNS, aggs)
    elif fmt == "json":
        _write_json(path, [{c: _round(a[c]) for c in AGG_COLUMNS} for a in aggs])
    else:
        raise ValueError(f"unknown format {fmt!r}")
    _write_json(path.with_suffix(".meta.json"), _metadata(spec, extra_meta))
    return path


def _parse(col, v):
    if col in ("placement_label", "error"):
        return v
    if col in ("trial", "target_index", "k_hat"):
        return int(v)
    return float(v)


def read_rows_csv(path):
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [ResultRow(runtime_ms=math.nan, **{c: _parse(c, rec[c]) for c in ROW_COLUMNS})
                for rec in rd]
