"""Command-line front end: run, converge, bench, fields, check.

Every command reads one flat key-value config file, takes repeatable
`--set key=value` overrides, and writes CSV data files (plus rendered
figures unless --no-plot) into the output directory.  Outputs contain no
timestamps, so identical invocations with one seed produce byte-identical
data files.

Exit codes: 0 success, 1 error, 2 stability warning (check only).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from piclab import engine, harness, maxwell, plots
from piclab.domain import ConfigError, GridSpec, load_config

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARN = 2

OUTPUT_DIR_ENV = "PICLAB_OUTPUT_DIR"

BENCH_METHODS = ("euler", "boris-em", "boris-filter", "cyclotronic")
BENCH_GRIDS = (32, 64, 128, 256, 512, 1024)


def _output_dir(args) -> Path:
    if args.out is not None:
        out = Path(args.out)
    elif os.environ.get(OUTPUT_DIR_ENV):
        out = Path(os.environ[OUTPUT_DIR_ENV])
    else:
        out = Path("piclab_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    return load_config(args.config, overrides=args.set)


def _ic_store_path(out: Path, config) -> Path:
    return out / f"ic_{config.model}_P{config.particles}_seed{config.seed}.csv"


def cmd_run(args) -> int:
    config = _load(args)
    out = _output_dir(args)
    store = _ic_store_path(out, config)
    final, diagnostics, report = engine.run(config, store_path=store)
    diagnostics.to_csv(out / "diagnostics.csv")
    engine.save_ensemble(final, out / "final_state.csv")
    (out / "stability.txt").write_text(report.render() + "\n")
    if not args.no_plot:
        plots.save_diagnostics_figure(diagnostics, out / "diagnostics.png")
        plots.save_phase_space_figure(final, out / "phase_space.png")
    print(f"run complete: {config.steps} steps, outputs in {out}")
    if not report.all_applicable_pass:
        print("warning: stability criteria violated (see stability.txt)")
    return EXIT_OK


def cmd_converge(args) -> int:
    config = _load(args)
    out = _output_dir(args)
    methods = [m for m in (args.methods or "").split(",") if m]
    if not methods:
        print("converge: no methods given (use --methods m1,m2,...)", file=sys.stderr)
        return EXIT_ERROR
    ensemble = engine.default_ensemble(config, store_path=_ic_store_path(out, config))
    fine_cfg = config.replace(ng=config.ng * 2 ** (args.dx_levels - 1))
    try:
        reference = harness.make_reference(fine_cfg, ensemble=ensemble)
    except harness.ReferenceNotConverged as exc:
        (out / "reference_certificate.txt").write_text(exc.certificate.render() + "\n")
        print(f"converge: {exc}", file=sys.stderr)
        return EXIT_ERROR
    (out / "reference_certificate.txt").write_text(reference.certificate.render() + "\n")
    tableaus = {}
    summary = ["method,summary_rate,coarsest_error,finest_error"]
    for method in methods:
        tableau = harness.build_tableau(
            config, method, norm=config.norm, dt_levels=args.dt_levels,
            dx_levels=args.dx_levels, reference=reference, ensemble=ensemble,
        )
        tableau.to_csv(out / f"tableau_{method}.csv")
        tableaus[method] = tableau
        summary.append(
            f"{method},{tableau.summary_rate()!r},{tableau.errors[-1, 0]!r},{tableau.errors[-1, -1]!r}"
        )
    (out / "rates_summary.csv").write_text("\n".join(summary) + "\n")
    if not args.no_plot:
        plots.save_convergence_figure(tableaus, out / "convergence.png")
    for line in summary:
        print(line)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load(args)
    out = _output_dir(args)
    methods = [m for m in (args.methods or "").split(",") if m]
    if not methods:
        print("bench: no methods given (use --methods m1,m2,...)", file=sys.stderr)
        return EXIT_ERROR
    grids = [int(g) for g in args.grids.split(",") if g]
    if not grids:
        print("bench: empty grid list", file=sys.stderr)
        return EXIT_ERROR
    rows = harness.runtime_bench(config, methods, grids, steps=args.bench_steps)
    harness.bench_to_csv(rows, out / "bench.csv")
    if not args.no_plot:
        plots.save_bench_figure(rows, out / "bench.png")
    for row in rows:
        print(f"{row.method:14s} NG={row.ng:<5d} median {row.median_seconds:.4f} s")
    return EXIT_OK


def cmd_fields(args) -> int:
    config = _load(args)
    out = _output_dir(args)
    theta = 0.5 if config.theta is None else config.theta
    grid = GridSpec(dim=2, ng=config.ng, length=config.length)
    state = maxwell.plane_wave_state(grid)
    times = [0.0]
    energies = [maxwell.em_energy(state)]
    for _ in range(config.steps):
        state = maxwell.maxwell_theta_step(state, current=None, dt=config.dt, theta=theta)
        times.append(state.time)
        energies.append(maxwell.em_energy(state))
    lines = ["step,time,energy"]
    for i, (t, en) in enumerate(zip(times, energies)):
        lines.append(f"{i},{t!r},{en!r}")
    (out / "em_energy.csv").write_text("\n".join(lines) + "\n")
    maxwell.state_to_csv(state, out / "em_state.csv")
    if not args.no_plot:
        plots.save_em_energy_figure(times, energies, out / "em_energy.png")
    drift = abs(energies[-1] / energies[0] - 1.0)
    print(f"field stepping complete: theta={theta}, {config.steps} steps, "
          f"relative energy drift {drift:.3e}")
    return EXIT_OK


def cmd_check(args) -> int:
    config = _load(args)
    report = engine.stability_check(config)
    print(report.render())
    return EXIT_OK if report.all_applicable_pass else EXIT_WARN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="piclab",
        description="Particle-in-cell integrator laboratory",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                       help="override a config key (repeatable)")
        p.add_argument("--out", default=None,
                       help=f"output directory (default ./piclab_out, or ${OUTPUT_DIR_ENV})")
        p.add_argument("--no-plot", action="store_true", help="skip figure rendering")

    p_run = sub.add_parser("run", help="execute one PIC run")
    common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_conv = sub.add_parser("converge", help="reference + per-method convergence tableaus")
    common(p_conv)
    p_conv.add_argument("--methods", default="", help="comma-separated pusher list")
    p_conv.add_argument("--dt-levels", type=int, default=6, dest="dt_levels",
                        help="number of step halvings (default 6)")
    p_conv.add_argument("--dx-levels", type=int, default=1, dest="dx_levels",
                        help="number of grid doublings (default 1)")
    p_conv.set_defaults(fn=cmd_converge)

    p_bench = sub.add_parser("bench", help="runtime benchmark over grid sizes")
    common(p_bench)
    p_bench.add_argument("--methods", default=",".join(BENCH_METHODS),
                         help="comma-separated pusher list")
    p_bench.add_argument("--grids", default=",".join(str(g) for g in BENCH_GRIDS),
                         help="comma-separated grid sizes")
    p_bench.add_argument("--bench-steps", type=int, default=None, dest="bench_steps",
                         help="steps per timed run (default: config steps)")
    p_bench.set_defaults(fn=cmd_bench)

    p_fields = sub.add_parser("fields", help="drive the implicit Maxwell field stepper")
    common(p_fields)
    p_fields.set_defaults(fn=cmd_fields)

    p_check = sub.add_parser("check", help="report explicit-scheme stability criteria")
    common(p_check)
    p_check.set_defaults(fn=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"piclab {args.verb}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # solver/pusher failures exit nonzero with a message
        print(f"piclab {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def console_main():
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
