"""Command-line front end: ``volterra-mc <command> --config run.json``.

Exit codes: 0 success, 1 statistical violation (or failed hypothesis),
2 configuration or domain error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Optional, Sequence

from . import engine
from .config import COMMANDS, CONFIG_TYPES, config_to_dict, parse_config
from .errors import NUMERICAL_ERRORS, VolterraError
from .models import qrh_process, vix_premium, vix_values
from .ordering import FAILS, TupleSampler, convergence_rate, mc_order_test, theorem_hypotheses

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

TOLERANCES = {"psd_tol": 1e-10, "quad_rtol": 1e-9, "blowup_cap": 1e12}


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")


class Run:
    """Resolved configuration plus the output directory and manifest of one command."""

    def __init__(self, command, cfg, threads, out):
        self.command = command
        self.cfg = cfg
        self.threads = engine.resolve_threads(threads)
        self.out = out if out is not None else cfg.out
        # the output location is not part of the run's identity
        self.config_dict = {k: v for k, v in config_to_dict(cfg).items() if k != "out"}
        self.manifest = engine.RunManifest.create(self.config_dict, getattr(cfg, "master_seed", 0), command,
                                                  TOLERANCES, self.threads)

    def start(self) -> None:
        os.makedirs(self.out, exist_ok=True)
        self.manifest.write(os.path.join(self.out, "manifest.json"))

    def path(self, name) -> str:
        return os.path.join(self.out, name)

    def stamp(self) -> dict:
        """Deterministic manifest fields embedded in result files."""
        return {"config_hash": self.manifest.config_hash, "master_seed": self.manifest.master_seed,
                "library_version": self.manifest.library_version}


def cmd_simulate(run: Run) -> int:
    cfg = run.cfg
    proc = cfg.process.build()
    batch = proc.simulate(cfg.scheme, cfg.grid.build(), cfg.num_paths, cfg.master_seed,
                          threads=run.threads, chunk_size=cfg.chunk_size)
    run.start()
    batch.meta["config_hash"] = run.manifest.config_hash
    batch.write(run.out, "paths")
    print(f"wrote {batch.num_paths} paths x {batch.grid.n + 1} points to {run.path('paths.csv')}")
    return EXIT_OK


def cmd_price_vix(run: Run) -> int:
    cfg = run.cfg
    grid = cfg.grid.build()
    sigmas = list(cfg.sigma_vol_sweep) or [cfg.model.sigma_vol]
    results = []
    for s in sigmas:
        model = dataclasses.replace(cfg.model, sigma_vol=s).build()
        batch = qrh_process(model).simulate(cfg.scheme, grid, cfg.num_paths, cfg.master_seed,
                                            threads=run.threads, chunk_size=cfg.chunk_size)
        est, se = vix_premium(batch, model)
        results.append((s, est, se, vix_values(batch.paths, grid, model)))
    run.start()
    rows = []
    for i, (s, est, se, vals) in enumerate(results):
        diff = diff_se = float("nan")
        if i > 0:
            diff, diff_se, _ = engine.paired_stats(vals - results[i - 1][3])
        rows.append((float(s), float(est), float(se), float(diff), float(diff_se)))
        print(f"sigma_vol={s:g}  VIX premium={est:.8f}  se={se:.2e}")
    _write_csv(run.path("vix.csv"), ["sigma_vol", "estimate", "se", "paired_diff", "paired_diff_se"], rows)
    report = {
        "estimate": rows[0][1] if len(rows) == 1 else None,
        "se": rows[0][2] if len(rows) == 1 else None,
        "sweep": [{"sigma_vol": r[0], "estimate": r[1], "se": r[2], "paired_diff": r[3], "paired_diff_se": r[4]}
                  for r in rows],
        "model": config_to_dict(cfg.model),
        "manifest": run.stamp(),
    }
    _write_json(run.path("vix.json"), report)
    return EXIT_OK


def _hypotheses(cfg, T):
    sampler = TupleSampler(T=T, dim_d=1, num_samples=cfg.sampler.num_samples, j_max=cfg.sampler.j_max,
                           radius=cfg.sampler.radius, seed=cfg.sampler.seed)
    x, y = cfg.x.build(), cfg.y.build()
    sampler = dataclasses.replace(sampler, dim_d=x.coeffs.dim_d)
    return x, y, theorem_hypotheses(cfg.order, cfg.scheme, x, y, sampler)


def _print_hypotheses(reports) -> None:
    for r in reports:
        extra = f"  witness index {r.witness.get('index')}" if r.witness else ""
        print(f"  {r.condition:<22} {r.verdict:<16} checked={r.num_checked}{extra}")


def cmd_check_hypotheses(run: Run) -> int:
    _, _, reports = _hypotheses(run.cfg, run.cfg.T)
    run.start()
    _write_json(run.path("hypotheses.json"), {"reports": [r.to_dict() for r in reports], "manifest": run.stamp()})
    print(f"hypotheses for {run.cfg.order} order ({run.cfg.scheme}):")
    _print_hypotheses(reports)
    return EXIT_VIOLATION if any(r.verdict == FAILS for r in reports) else EXIT_OK


def cmd_check_order(run: Run) -> int:
    cfg = run.cfg
    grid = cfg.grid.build()
    x, y, hyp = _hypotheses(cfg, grid.T)
    kw = dict(threads=run.threads, chunk_size=cfg.chunk_size)
    bx = x.simulate(cfg.scheme, grid, cfg.num_paths, cfg.master_seed, **kw)
    by = y.simulate(cfg.scheme, grid, cfg.num_paths, cfg.master_seed, **kw)
    reports = mc_order_test(bx, by, cfg.build_family(), cfg.order, cfg.z)
    run.start()
    _write_json(run.path("order_report.json"), {
        "hypotheses": [r.to_dict() for r in hyp],
        "order_tests": [r.to_dict() for r in reports],
        "manifest": run.stamp(),
    })
    print("hypotheses:")
    _print_hypotheses(hyp)
    print(f"{'functional':<16} {'delta_hat':>14} {'se':>12} {'verdict':>12}")
    for r in reports:
        print(f"{r.functional:<16} {r.delta_hat:>14.6g} {r.se:>12.3g} {r.verdict:>12}")
    return EXIT_VIOLATION if any(r.verdict == "violated" for r in reports) else EXIT_OK


def cmd_rate(run: Run) -> int:
    cfg = run.cfg
    res = convergence_rate(cfg.process.build(), cfg.scheme, cfg.T, cfg.n_list, p=cfg.p,
                           num_paths=cfg.num_paths, master_seed=cfg.master_seed, refine=cfg.refine,
                           threads=run.threads, chunk_size=cfg.chunk_size, bootstrap=cfg.bootstrap)
    run.start()
    _write_csv(run.path("rate.csv"), ["n", "h", "error", "se"],
               [(n, float(cfg.T / n), float(e), float(s)) for n, e, s in zip(res.n_list, res.errors, res.errors_se)])
    _write_json(run.path("rate.json"), {**res.to_dict(), "manifest": run.stamp()})
    print(f"slope {res.slope:.4f}  95% CI [{res.ci[0]:.4f}, {res.ci[1]:.4f}]  (reference n={res.n_ref})")
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "price-vix": cmd_price_vix,
    "check-order": cmd_check_order,
    "check-hypotheses": cmd_check_hypotheses,
    "rate": cmd_rate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="volterra-mc", description="Monte Carlo for stochastic Volterra equations")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--threads", type=int, help="worker threads (default: $VOLTERRA_THREADS or 1)")
        p.add_argument("--out", help="output directory (overrides config)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            if not args.print_config:
                raise VolterraError("--config is required")
            raw = _template(args.command)
        else:
            with open(args.config) as fh:
                raw = json.load(fh)
        if args.seed is not None:
            if "master_seed" not in {f.name for f in dataclasses.fields(CONFIG_TYPES[args.command])}:
                raise VolterraError(f"{args.command} has no master_seed")
            raw = {**raw, "master_seed": args.seed}
        cfg = parse_config(args.command, raw)
        if args.out is not None:
            cfg.out = args.out
        if args.print_config:
            print(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True))
            return EXIT_OK
        run = Run(args.command, cfg, args.threads, args.out)
        return HANDLERS[args.command](run)
    except NUMERICAL_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (VolterraError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _template(command: str) -> dict:
    """Minimal configuration used by ``--print-config`` without ``--config``."""
    base = {"simulate": {"grid": {"n": 16}},
            "price-vix": {},
            "check-order": {"grid": {"n": 32}, "x": {}, "y": {}},
            "check-hypotheses": {"x": {}, "y": {}},
            "rate": {"process": {"coefficients": {"drift": {"type": "affine", "mu": [0.0], "nu": [[-1.0]]}}},
                     "n_list": [8, 16, 32, 64]}}
    return base[command]


if __name__ == "__main__":
    sys.exit(main())
