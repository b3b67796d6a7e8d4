"""Experiment command line: ``dott run <config>`` and ``dott verify <config>``.

Exit codes: 0 success, 1 verification gate failure, 2 invalid configuration,
3 numeric failure during the run.
"""

from __future__ import annotations

import argparse
import os
import sys


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dott", description="hierarchical DO tensor experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run an experiment"), ("verify", "run and gate an experiment")):
        q = sub.add_parser(name, help=help_)
        q.add_argument("config", help="YAML experiment configuration")
        q.add_argument("--out", default=None, help="output directory (default: ./runs/<name>)")
        q.add_argument("--threads", type=int, default=None, help="BLAS thread count")
        q.add_argument("--seed", type=int, default=None, help="recorded; deterministic paths ignore it")
        q.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from .config import ConfigError, load_config
    from .errors import EigenvalueCrossingError, RankExplosionError, SingularGramError
    from .experiments import run_experiment, verify_experiment

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None:
            cfg["threads"] = args.threads
        if args.no_figures:
            cfg["figures"] = False
        outdir = args.out or os.path.join("runs", str(cfg.get("name", "experiment")))
        if args.command == "run":
            summary = run_experiment(cfg, outdir)
            print(f"wrote {outdir} (wall {summary['wall_time_seconds']:.1f}s)")
            return 0
        ok, rows = verify_experiment(cfg, outdir)
        _print_table(rows)
        return 0 if ok else 1
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (SingularGramError, EigenvalueCrossingError, RankExplosionError) as e:
        print(f"numeric failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


def _print_table(rows: list[dict]) -> None:
    def fmt(v):
        return f"{v:.12e}" if isinstance(v, float) else str(v)

    wm = max(max(len(str(r["metric"])) for r in rows), 6) + 2
    wv = max(max(len(fmt(r["value"])) for r in rows), 5) + 2
    wg = max(max(len(r["gate"]) for r in rows), 4) + 2
    print(f"{'metric':<{wm}}{'value':<{wv}}{'gate':<{wg}}result")
    for r in rows:
        print(
            f"{r['metric']:<{wm}}{fmt(r['value']):<{wv}}{r['gate']:<{wg}}"
            f"{'PASS' if r['pass'] else 'FAIL'}"
        )


if __name__ == "__main__":
    sys.exit(main())
