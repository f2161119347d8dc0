"""Command-line surface: simulations, dataset runs, the exact oracle,
the session service, and session-log replay.

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 bad input
data or configuration, 4 admissibility violation, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .datasets import DatasetError, apply_profile, load_pvalues, parse_alpha_grid
from .engine import AdmissibilityError
from .oracle import exact_fwer_global_null
from .policies import (
    PROCEDURES,
    ConfigError,
    GammaSequence,
    PolicyConfig,
    RemarkPolicy,
    RunAbort,
)
from .simulation import ExperimentGrid, emit_curves, figure_grid, run_grid

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_ADMISSIBILITY = 4
EXIT_IO = 5

DESK_TRIALS = 500
FULL_TRIALS = 2000


def _default_out() -> str:
    return os.environ.get("ONLINEFWER_OUT", "results")


def _template_config(args) -> PolicyConfig:
    """Policy template from --config, or the published defaults."""
    if getattr(args, "config", None):
        return PolicyConfig.from_file(args.config)
    return PolicyConfig(procedure="addis_graph", alpha=0.2, tau=0.8, lam=0.16)


def _cmd_simulate(args) -> int:
    trials = args.trials if args.trials is not None else (FULL_TRIALS if args.full else DESK_TRIALS)
    if args.grid_config:
        spec = json.loads(Path(args.grid_config).read_text())
        procedures = [
            (c["procedure"], PolicyConfig.from_dict(c)) for c in spec["procedures"]
        ]
        grid = ExperimentGrid(
            procedures=procedures,
            pi_a_values=spec["pi_a"],
            mu_a_values=spec["mu_a"],
            mu_n_values=spec["mu_n"],
            n=int(spec["n"]),
            trials=int(spec.get("trials", trials)),
            seed=int(spec.get("seed", args.seed)),
            label=spec.get("label", "grid"),
        )
    else:
        grid = figure_grid(args.figure, trials=trials, seed=args.seed)
    results = run_grid(grid)
    paths = emit_curves(results, args.out)
    for cell in results.failed:
        print(f"warning: cell {cell.procedure} pi_a={cell.pi_a} mu_n={cell.mu_n} "
              f"failed: {cell.error}", file=sys.stderr)
    ok = len(results.rows) - len(results.failed)
    print(f"simulated {ok}/{len(results.rows)} cells "
          f"({grid.trials} trials each) -> {paths[0]}")
    return EXIT_OK


def _cmd_apply(args) -> int:
    dataset = load_pvalues(args.input, column=args.column)
    template = _template_config(args)
    names = [x.strip() for x in args.procedures.split(",") if x.strip()]
    for name in names:
        if name not in PROCEDURES:
            raise DatasetError(f"unknown procedure {name!r}; choose from {', '.join(PROCEDURES)}")
    configs = []
    for name in names:
        configs.append((name, dataclasses.replace(template, procedure=name)))
    grid = parse_alpha_grid(args.alpha_grid)
    profile = apply_profile(dataset, configs, grid)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    profile.to_csv(out)
    for name in names:
        counts = profile.counts[name]
        shown = ", ".join("-" if c is None else str(c) for c in counts)
        print(f"{name}: rejections over alpha grid = [{shown}]")
    for (name, alpha), msg in sorted(profile.errors.items()):
        print(f"warning: {name} at alpha={alpha} aborted: {msg}", file=sys.stderr)
    print(f"profile for {dataset.count} p-values -> {out}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    if args.procedure == "remark":
        procedure = RemarkPolicy(args.alpha)
        cfg_dict = {"procedure": "remark", "alpha": args.alpha}
    else:
        if getattr(args, "config", None):
            template = PolicyConfig.from_file(args.config)
            procedure = dataclasses.replace(template, procedure=args.procedure, alpha=args.alpha)
        else:
            procedure = PolicyConfig(
                procedure=args.procedure, alpha=args.alpha,
                tau=args.tau, lam=args.lam, gamma=GammaSequence(),
            )
        cfg_dict = procedure.to_dict()
    fwer = exact_fwer_global_null(procedure, args.n)
    print(f"exact FWER under the global null for {args.procedure} "
          f"(alpha={args.alpha}, n={args.n}): {fwer!r}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("a") as fh:
            fh.write(json.dumps({"config": cfg_dict, "n": args.n, "fwer": fwer}) + "\n")
        print(f"appended JSON record -> {out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .service import serve

    console = args.console
    if console is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        console = bundled if bundled.is_dir() else None
    print(f"serving sessions from {args.persist_dir} on http://{args.host}:{args.port}")
    serve(args.host, args.port, args.persist_dir, console)
    return EXIT_OK


def _cmd_replay(args) -> int:
    from .sessions import restore_all

    store, report = restore_all(args.persist_dir)
    try:
        for sid in store.ids():
            s = store.get(sid)
            print(f"{sid}: {s.config.procedure} alpha={s.config.alpha} "
                  f"steps={len(s.decisions)} remaining={s.state.remaining!r}")
        for name, line in report.dropped_tails:
            print(f"warning: {name}: dropped torn final line", file=sys.stderr)
        for name, reason in report.quarantined:
            print(f"warning: {name}: quarantined ({reason})", file=sys.stderr)
        print(f"restored {len(report.restored)} session(s), "
              f"{len(report.quarantined)} quarantined")
    finally:
        store.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="onlinefwer",
        description="Online FWER control: simulations, dataset runs, exact oracle, session service.",
        epilog="Exit codes: 0 ok, 1 internal, 2 usage, 3 bad data/config, "
               "4 admissibility violation, 5 I/O failure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment grid and write CSV curves")
    group = sim.add_mutually_exclusive_group(required=True)
    group.add_argument("--figure", type=int, choices=(3, 4, 5),
                       help="reproduce one of the published grids")
    group.add_argument("--grid-config", help="JSON file describing a custom grid")
    sim.add_argument("--trials", type=int, default=None,
                     help=f"trials per cell (default {DESK_TRIALS}, or {FULL_TRIALS} with --full)")
    sim.add_argument("--full", action="store_true", help="full-scale reproduction")
    sim.add_argument("--seed", type=int, default=1)
    sim.add_argument("--out", default=_default_out(),
                     help="output directory (default $ONLINEFWER_OUT or ./results)")
    sim.set_defaults(func=_cmd_simulate)

    app = sub.add_parser("apply", help="apply procedures to a CSV of p-values")
    app.add_argument("--input", required=True, help="CSV file of p-values in online order")
    app.add_argument("--procedures", default=",".join(PROCEDURES),
                     help="comma-separated procedure names (default: all six)")
    app.add_argument("--alpha-grid", default="0.05:0.4:0.05",
                     help="start:stop:step (inclusive) or comma-separated levels")
    app.add_argument("--config", help="policy template file (JSON or TOML)")
    app.add_argument("--column", default=None,
                     help="p-value column (index or header name)")
    app.add_argument("--out", default=str(Path(_default_out()) / "rejections.csv"))
    app.set_defaults(func=_cmd_apply, column_type=None)

    orc = sub.add_parser("oracle", help="exact FWER under the global null (small n)")
    orc.add_argument("--procedure", required=True, choices=PROCEDURES + ("remark",))
    orc.add_argument("--alpha", type=float, default=0.2)
    orc.add_argument("--n", type=int, required=True)
    orc.add_argument("--tau", type=float, default=0.8)
    orc.add_argument("--lam", type=float, default=0.16)
    orc.add_argument("--config", help="policy template file (JSON or TOML)")
    orc.add_argument("--out", help="append a JSON-lines record here")
    orc.set_defaults(func=_cmd_oracle)

    srv = sub.add_parser("serve", help="run the live session service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    srv.add_argument("--persist-dir", default="sessions")
    srv.add_argument("--console", default=None,
                     help="directory with the built web console (optional)")
    srv.set_defaults(func=_cmd_serve)

    rep = sub.add_parser("replay", help="restore sessions from a persistence directory")
    rep.add_argument("--persist-dir", required=True)
    rep.set_defaults(func=_cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "column", None) is not None and args.column.isdigit():
            args.column = int(args.column)
        return args.func(args)
    except (DatasetError, ConfigError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AdmissibilityError, RunAbort) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
