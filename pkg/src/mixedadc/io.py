"""Scenario JSON and observation CSV round-tripping."""
import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .array_model import (ArrayConfig, MixedObservation, Placement, SourceScenario,
                          ThresholdMatrix, default_p_o, generate_thresholds, simulate)

__all__ = ["ConfigError", "Scenario", "load_scenario", "scenario_to_dict", "write_observation_csv",
           "read_observation_csv", "SIG_DIGITS", "fmt_float"]

SIG_DIGITS = 12


class ConfigError(ValueError):
    pass


def fmt_float(x):
    return format(float(x), f".{SIG_DIGITS}g")


@dataclass(frozen=True)
class Scenario:
    config: ArrayConfig
    sources: SourceScenario
    sigma: float
    placement: Placement
    placement_spec: dict
    p_o: float = None
    threshold_seed: int = None

    @property
    def p_o_value(self):
        return default_p_o(self.sources.powers, self.sigma) if self.p_o is None else self.p_o

    def with_sigma(self, sigma):
        return Scenario(self.config, self.sources, float(sigma), self.placement, self.placement_spec,
                        self.p_o, self.threshold_seed)

    def with_placement(self, spec):
        return Scenario(self.config, self.sources, self.sigma, placement_from_spec(spec, self.config.M),
                        dict(spec), self.p_o, self.threshold_seed)

    def simulate(self, seed):
        return simulate(self.config, self.sources, self.placement, self.sigma, seed, self.p_o,
                        self.threshold_seed)


def placement_from_spec(spec, M):
    try:
        return Placement.from_mode(spec.get("mode", "edges"), M, spec.get("M0"), spec.get("delta"))
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad placement {spec!r}: {e}") from None


def load_scenario(source):
    """Build a Scenario from a JSON path or an already-parsed dict."""
    if isinstance(source, (str, Path)):
        try:
            with open(source) as fh:
                d = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read scenario {source}: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{source}: invalid JSON ({e})") from None
    else:
        d = dict(source)
    try:
        config = ArrayConfig(int(d["M"]), float(d.get("d_over_lambda", 0.5)))
        sources = SourceScenario(tuple(d["angles_deg"]), tuple(d["powers"]), int(d["N"]))
        sigma = float(d["sigma"])
        pspec = dict(d.get("placement", {"mode": "edges", "M0": config.M}))
        thr = d.get("threshold") or {}
    except KeyError as e:
        raise ConfigError(f"scenario is missing field {e}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid scenario: {e}") from None
    if not np.isfinite(sigma) or sigma <= 0:
        raise ConfigError("sigma must be positive")
    placement = placement_from_spec(pspec, config.M)
    p_o = thr.get("p_o")
    if p_o is not None and not float(p_o) > 0:
        raise ConfigError("threshold.p_o must be positive")
    seed = thr.get("seed")
    return Scenario(config, sources, sigma, placement, pspec,
                    None if p_o is None else float(p_o), None if seed is None else int(seed))


def scenario_to_dict(sc):
    d = {
        "M": sc.config.M,
        "d_over_lambda": sc.config.d_over_lambda,
        "angles_deg": list(sc.sources.angles_deg),
        "powers": list(sc.sources.powers),
        "N": sc.sources.N,
        "sigma": sc.sigma,
        "placement": dict(sc.placement_spec),
        "threshold": {"p_o": sc.p_o, "seed": sc.threshold_seed},
    }
    if "delta" in d["placement"]:
        d["placement"]["delta"] = [int(x) for x in d["placement"]["delta"]]
    return d


_FIELDS = ["row", "snapshot", "re", "im", "kind"]


def write_observation_csv(obs, path):
    """Long-format CSV, one line per sample.

    One-bit rows are followed by ``threshold`` lines carrying H so the file is
    self-contained for estimation.
    """
    path = Path(path)
    hi, lo = obs.placement.high_rows, obs.placement.onebit_rows
    H = obs.thresholds.entries
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(_FIELDS)
            for rows, data, kind in ((hi, obs.y_high, "high"), (lo, obs.y_onebit, "onebit"),
                                     (lo, H[lo] if lo.size else np.zeros((0, obs.N)), "threshold")):
                for i, m in enumerate(rows):
                    for n in range(obs.N):
                        v = data[i, n]
                        w.writerow([int(m), n, fmt_float(v.real), fmt_float(v.imag), kind])
    except OSError as e:
        raise OSError(f"{path}: {e}") from e


def read_observation_csv(path, M, p_o=1.0, thresholds=None):
    """Inverse of ``write_observation_csv``.

    ``thresholds`` (an M x N array or ThresholdMatrix) is used when the file
    carries no threshold lines.
    """
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            recs = list(csv.DictReader(fh))
    except OSError as e:
        raise ConfigError(f"cannot read observation {path}: {e}") from None
    if not recs:
        raise ConfigError(f"{path}: no samples")
    try:
        N = 1 + max(int(r["snapshot"]) for r in recs)
        Y = np.zeros((M, N), dtype=complex)
        H = np.zeros((M, N), dtype=complex)
        kind = np.full(M, "", dtype=object)
        seen_h = False
        for r in recs:
            m, n = int(r["row"]), int(r["snapshot"])
            v = float(r["re"]) + 1j * float(r["im"])
            if r["kind"] == "threshold":
                H[m, n] = v
                seen_h = True
                continue
            if r["kind"] not in ("high", "onebit"):
                raise ConfigError(f"{path}: unknown kind {r['kind']!r}")
            Y[m, n] = v
            kind[m] = r["kind"]
    except (KeyError, ValueError, IndexError) as e:
        raise ConfigError(f"{path}: malformed observation ({e})") from None
    if np.any(kind == ""):
        raise ConfigError(f"{path}: rows {np.flatnonzero(kind == '').tolist()} missing")
    delta = kind == "high"
    pl = Placement(delta)
    if not seen_h and (~delta).any():
        if thresholds is None:
            raise ConfigError(f"{path}: one-bit rows need thresholds")
        H = np.asarray(getattr(thresholds, "entries", thresholds))
    if isinstance(thresholds, ThresholdMatrix):
        p_o = thresholds.p_o
    return MixedObservation(Y[delta], Y[~delta], pl, ThresholdMatrix(H, p_o))


def regenerate_thresholds(scenario, seed):
    seed = scenario.threshold_seed if scenario.threshold_seed is not None else seed
    return generate_thresholds(scenario.config, scenario.sources.N, scenario.p_o_value, seed)
