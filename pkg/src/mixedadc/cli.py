"""Command-line entry point: ``mixedadc <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path


from . import harness
from .array_model import Placement, source_waveforms
from .crb import crb_summary
from .estimation import make_grid, slim_relax_mbic
from .io import (ConfigError, fmt_float, load_scenario, read_observation_csv,
                 regenerate_thresholds, write_observation_csv)
from .placement import (TooLarge, exhaustive_oracle, front_gain_db, optimal_edge_placement,
                        performance_efficiency)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("mixedadc")


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _global_flags(p, defaults):
    kw = {} if defaults else {"default": argparse.SUPPRESS}
    p.add_argument("--config", type=Path, help="scenario or experiment JSON", **kw)
    p.add_argument("--seed", type=_u64, help="master seed", **({"default": 0} if defaults else kw))
    p.add_argument("--out", type=Path, help="output directory", **({"default": Path(".")} if defaults else kw))
    p.add_argument("--threads", type=int, help="worker processes", **({"default": 1} if defaults else kw))
    p.add_argument("--format", choices=("csv", "json"), **({"default": "csv"} if defaults else kw))


def build_parser():
    parser = argparse.ArgumentParser(prog="mixedadc", description=__doc__.splitlines()[0])
    _global_flags(parser, True)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, False)
        return p

    add("simulate", "generate one mixed-ADC observation from a scenario")

    p = add("crb", "exact, lower and asymptotic bounds for a scenario")
    p.add_argument("--snr-db", type=float, nargs="+", help="SNR values (first target); default from sigma")
    p.add_argument("--placements", nargs="+", default=None,
                   help="modes among edges/front/middle/high/onebit; default: scenario placement")
    p.add_argument("--noise-known", action="store_true")

    p = add("placement", "optimal ADC placement and its gain over the front block")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--M0", type=int, required=True)
    p.add_argument("--rho-low", type=float, default=2.0 / math.pi)
    p.add_argument("--rho-high", type=float, default=1.0)
    p.add_argument("--exhaustive", action="store_true", help="brute-force check (small M only)")

    p = add("estimate", "SLIM-RELAX with mBIC on an observation")
    p.add_argument("--observation", type=Path, help="observation CSV; simulated from --seed if absent")
    p.add_argument("--grid-mult", type=int, default=10)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--eps-outer", type=float, default=1e-6)
    p.add_argument("--eps-inner", type=float, default=1e-4)
    p.add_argument("--max-outer", type=int, default=50)
    p.add_argument("--max-inner", type=int, default=50)
    p.add_argument("--kmax", type=int, default=None, help="default: number of scenario targets + 1")

    p = add("montecarlo", "Monte Carlo MSE sweep from an experiment JSON")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--censor", action="store_true", default=None)
    p.add_argument("--fixed-thresholds", action="store_true",
                   help="draw H once per experiment instead of per trial")
    p.add_argument("--full", action="store_true", help="100 trials over the full -20..20 dB sweep")

    p = add("efficiency", "performance efficiency versus proportion of high-precision ADCs")
    p.add_argument("--M", type=int, default=64)
    p.add_argument("--N", type=int, default=5)
    p.add_argument("--snr-db", type=float, nargs="+", default=[-20.0, -10.0, 0.0, 10.0, 20.0])
    p.add_argument("--mode", choices=("asymptotic", "exact"), default="asymptotic")
    p.add_argument("--angles-deg", type=float, nargs="+", default=[10.0, 20.0, 25.0])
    p.add_argument("--powers", type=float, nargs="+", default=[1.0, 0.8, 0.8])
    return parser


def _require_config(args):
    if getattr(args, "config", None) is None:
        raise ConfigError(f"{args.command} needs --config")
    return args.config


def _write(args, stem, columns, records):
    out = Path(args.out)
    if args.format == "csv":
        return harness._write_csv(out / f"{stem}.csv", columns, records)
    return harness._write_json(out / f"{stem}.json",
                               [{c: harness._round(r[c]) for c in columns} for r in records])


def cmd_simulate(args):
    sc = load_scenario(_require_config(args))
    obs, _ = sc.simulate(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        path = out / "observation.csv"
        write_observation_csv(obs, path)
    else:
        path = out / "observation.json"
        harness._write_json(path, {"delta": obs.placement.delta.astype(int),
                                   "y": [[v.real, v.imag] for v in obs.full().ravel()],
                                   "thresholds": [[v.real, v.imag] for v in obs.thresholds.entries.ravel()],
                                   "shape": [obs.M, obs.N]})
    harness._write_json(path.with_suffix(".meta.json"),
                        {"seed": args.seed, "git_describe": harness.git_describe(),
                         "scenario": json.loads(Path(args.config).read_text())})
    print(path)


_LABELS = {"edges": "edges", "front": "front", "middle": "middle", "high": "all-high", "onebit": "all-onebit"}


def cmd_crb(args):
    sc = load_scenario(_require_config(args))
    modes = args.placements or [None]
    p1 = sc.sources.powers[0]
    snrs = args.snr_db or [10 * math.log10(p1 / sc.sigma ** 2)]
    M0 = sc.placement.M0
    recs = []
    for mode in modes:
        if mode is None:
            pl, label = sc.placement, sc.placement_spec.get("label", sc.placement_spec.get("mode", "scenario"))
        else:
            if mode not in _LABELS:
                raise ConfigError(f"unknown placement mode {mode!r}")
            pl, label = Placement.from_mode(mode, sc.config.M, M0), _LABELS[mode]
        for snr in snrs:
            sigma = math.sqrt(p1 / 10 ** (snr / 10))
            s2 = sc.with_sigma(sigma)
            S = source_waveforms(s2.sources)
            H = regenerate_thresholds(s2, args.seed).entries
            ex, lo, asym = crb_summary(sc.config, sc.sources.omegas, S, H, sigma, pl, args.noise_known)
            for k in range(sc.sources.K):
                recs.append({"snr_db": float(snr), "placement_label": label, "target_index": k,
                             "crb_exact": float(ex[k]), "crb_lower": float(lo[k]),
                             "crb_asymptotic": float(asym[k])})
    print(_write(args, "crb", ["snr_db", "placement_label", "target_index", "crb_exact", "crb_lower",
                               "crb_asymptotic"], recs))


def cmd_placement(args):
    if not 0 <= args.M0 <= args.M or args.M < 1:
        raise ConfigError("need 0 <= M0 <= M and M >= 1")
    if args.rho_low > args.rho_high:
        raise ConfigError("--rho-low must not exceed --rho-high")
    if args.exhaustive:
        try:
            sol = exhaustive_oracle(args.M, args.M0, args.rho_low, args.rho_high)
        except TooLarge as e:
            raise ConfigError(str(e)) from None
    else:
        sol = optimal_edge_placement(args.M, args.M0, args.rho_low, args.rho_high)
    d = sol.delta.delta
    gain = front_gain_db(args.M, args.M0, d, args.rho_low, args.rho_high) if 0 < args.M0 < args.M else 0.0
    res = {"M": args.M, "M0": args.M0, "delta": d.astype(int).tolist(), "S": sol.score,
           "gain_db_vs_front": float(gain), "method": sol.method}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        path = harness._write_json(out / "placement.json", res)
    else:
        path = harness._write_csv(out / "placement.csv", ["M", "M0", "delta", "S", "gain_db_vs_front"],
                                  [{**res, "delta": "".join(map(str, res["delta"]))}])
    print(json.dumps(res))
    return path


def cmd_estimate(args):
    sc = load_scenario(_require_config(args))
    if args.observation is not None:
        H = regenerate_thresholds(sc, args.seed)
        obs = read_observation_csv(args.observation, sc.config.M, H.p_o, H)
    else:
        obs, _ = sc.simulate(args.seed)
    kmax = args.kmax if args.kmax is not None else sc.sources.K + 1
    if kmax < 1:
        raise ConfigError("--kmax must be >= 1")
    grid = make_grid(sc.config, args.grid_mult)
    sel = slim_relax_mbic(obs, kmax, grid, args.q, args.eps_outer, args.eps_inner, args.max_outer,
                          args.max_inner, sc.config.d_over_lambda)
    chosen = sel.chosen
    res = {
        "spectrum": [float(fmt_float(v)) for v in sel.slim.spectrum],
        "grid_omega": [float(fmt_float(v)) for v in grid.omegas],
        "targets": [{"theta_deg": t.theta_deg, "omega": t.omega, "power": t.power}
                    for t in chosen["targets"]],
        "sigma_hat": chosen["sigma"],
        "slim_sigma_hat": sel.slim.sigma_hat,
        "K_hat": sel.chosen_K,
        "mbic_table": sel.table(),
        "noise_only_candidate": sel.noise_only_extension,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = harness._write_json(out / "estimate.json", res)
    print(path)


def cmd_montecarlo(args):
    cfg = _require_config(args)
    try:
        d = json.loads(Path(cfg).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read experiment {cfg}: {e}") from None
    if "seed" in args and "master_seed" not in d:
        d["master_seed"] = args.seed
    if args.trials is not None:
        d["trials"] = args.trials
    if args.censor:
        d["censor"] = True
    if args.fixed_thresholds:
        d["redraw_thresholds"] = False
    if args.full:
        d["trials"] = max(100, int(d.get("trials", 1)))
        d["snr_sweep"] = harness.FULL_SNR_SWEEP
        d.pop("snr_db", None)
    spec = harness.ExperimentSpec.from_dict(d, base_dir=Path(cfg).parent)
    rows = harness.run_monte_carlo(spec, threads=args.threads)
    out = Path(args.out)
    ext = args.format
    harness.emit_rows(rows, out / f"rows.{ext}", ext, spec)
    good = [r for r in rows if not r.error]
    aggs = harness.aggregate(good) if good else []
    harness.emit_aggregates(aggs, out / f"aggregate.{ext}", ext, spec)
    failed = sum(1 for r in rows if r.error and r.target_index == 0)
    if failed:
        log.warning("%d trial(s) ended with an error tag", failed)
    print(out / f"aggregate.{ext}")


def cmd_efficiency(args):
    if args.M < 1 or args.N < 1:
        raise ConfigError("M and N must be positive")
    recs = []
    for snr in args.snr_db:
        rows = performance_efficiency(args.M, range(args.M + 1), 10 ** (snr / 10), args.N, args.mode,
                                      tuple(args.angles_deg), tuple(args.powers), seed=args.seed)
        recs += [{"snr_db": float(snr), "kappa": float(k), "eta": float(e)} for k, e in rows]
    print(_write(args, "efficiency", ["snr_db", "kappa", "eta"], recs))


COMMANDS = {
    "simulate": cmd_simulate,
    "crb": cmd_crb,
    "placement": cmd_placement,
    "estimate": cmd_estimate,
    "montecarlo": cmd_montecarlo,
    "efficiency": cmd_efficiency,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (KeyboardInterrupt, SystemExit):
        raise
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        if os.environ.get("MIXEDADC_TRACEBACK"):
            raise
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
