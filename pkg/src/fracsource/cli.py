"""Command line entry points.

Subcommands: run (single reconstruction), table (alpha x epsilon sweep),
converge (closed-form-benchmark order study), validate (coefficient
assumption checks), export (re-emit CSVs/figures from a stored report).

A config file is flat ``key=value`` lines (# comments allowed); explicit
command line flags override file values.
"""

import argparse
import os
import sys

from . import harness, report as reportmod
from .errors import AssumptionViolationError, InvalidParameterError

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}

_FIELD_PARSERS = {
    "isp": str,
    "example": str,
    "alpha": float,
    "M": int,
    "N": int,
    "T": float,
    "epsilon": float,
    "c_dp": float,
    "k_max": int,
    "seed": int,
    "refine": int,
    "allow_inverse_crime": lambda s: _BOOL[s.strip().lower()],
    "method": str,
    "mollify_width": float,
    "d2_stencil": str,
    "out_dir": str,
    "jobs": int,
}


def load_config_file(path):
    """Parse a flat key=value config file into a dict of typed values."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidParameterError(
                    "%s:%d: expected key=value, got %r" % (path, lineno, raw.strip())
                )
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _FIELD_PARSERS:
                raise InvalidParameterError("%s:%d: unknown key %r" % (path, lineno, key))
            values[key] = _FIELD_PARSERS[key](value)
    return values


def _add_common(p):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--isp", choices=["ISPn", "ISPd"])
    p.add_argument("--example", choices=list(harness.EXAMPLES))
    p.add_argument("--alpha", type=float)
    p.add_argument("--M", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--eps", type=float, dest="epsilon")
    p.add_argument("--seed", type=int)
    p.add_argument("--cdp", type=float, dest="c_dp")
    p.add_argument("--kmax", type=int, dest="k_max")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--refine", type=int)
    p.add_argument("--allow-inverse-crime", action="store_true", default=None,
                   dest="allow_inverse_crime")
    p.add_argument("--method", choices=["cg", "fixed-point"])
    p.add_argument("--mollify-width", type=float, dest="mollify_width")
    p.add_argument("--d2-stencil", choices=["3-layer", "4-layer"], dest="d2_stencil")
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering, write CSVs only")


def build_config(args):
    """Defaults, then config file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for key in _FIELD_PARSERS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if "isp" not in values and "example" in values:
        values["isp"] = harness.example_isp(values["example"])
    return harness.ExperimentConfig(**values).validate()


def _cmd_run(args):
    cfg = build_config(args)
    rep = harness.run_reconstruction(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    written = [reportmod.write_report_json(rep, os.path.join(cfg.out_dir, "report.json"))]
    written += reportmod.export_plot_data(rep, cfg.out_dir)
    if not args.no_figures:
        written += reportmod.render_figures(rep, cfg.out_dir)
    if rep.e is not None:
        print("e = %.6e  (stop index %d)" % (rep.e, rep.stop_index))
    else:
        print("stop index %d" % rep.stop_index)
    print("residual = %.6e  delta = %s" % (rep.residual_norm, rep.delta))
    for path in written:
        print("wrote", path)
    return 0


def _parse_floats(text):
    return tuple(float(part) for part in text.split(",") if part.strip())


def _cmd_table(args):
    cfg = build_config(args)
    alphas = _parse_floats(args.alphas) if args.alphas else harness.TABLE_ALPHAS
    epsilons = _parse_floats(args.epsilons) if args.epsilons else harness.TABLE_EPSILONS
    table = harness.run_table(cfg, alphas=alphas, epsilons=epsilons)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = reportmod.write_table_csv(table, os.path.join(cfg.out_dir, "table.csv"))
    header = ["alpha"] + ["eps=%g" % e for e in table["epsilons"]]
    print("  ".join("%-16s" % h for h in header))
    for row in table["rows"]:
        print("  ".join("%-16s" % c for c in row))
    print("wrote", path)
    return 1 if any("failed" in c for c in table["cells"].values()) else 0


def _cmd_converge(args):
    cfg = build_config(args)
    study = harness.run_convergence_study(alpha=cfg.alpha, amplitude=args.amplitude,
                                          mode=args.mode)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = reportmod.write_convergence_csv(study, os.path.join(cfg.out_dir, "convergence.csv"))
    print("wrote", path)
    if not args.no_figures:
        print("wrote", reportmod.render_convergence_figure(
            study, os.path.join(cfg.out_dir, "convergence.png")))
    for mode in ("spatial", "temporal"):
        if mode in study:
            print("%s observed order: %.3f" % (mode, study[mode]["order"]))
    return 0


def _cmd_validate(args):
    examples = [args.example] if args.example else list(harness.EXAMPLES)
    bad = 0
    for ex in examples:
        try:
            summary = harness.validate_example(ex)
        except AssumptionViolationError as exc:
            print("%-6s REJECTED: %s" % (ex, exc))
            bad += 1
            continue
        print("%-6s ok  eig range [%.4f, %.4f]  |a12|_top %.1e  min|R|_top %.3f"
              % (ex, summary["min_eig"], summary["max_eig"],
                 summary["max_offdiag_boundary"], summary["min_R_top"]))
    return 1 if bad else 0


def _cmd_export(args):
    rep = reportmod.load_report_json(args.report)
    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.report))
    written = reportmod.export_plot_data(rep, out_dir)
    if not args.no_figures:
        written += reportmod.render_figures(rep, out_dir)
    for path in written:
        print("wrote", path)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fracsource",
        description="Reconstruct a space-time source component in a "
                    "subdiffusion model from lateral boundary data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single reconstruction experiment")
    _add_common(p)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("table", help="alpha x epsilon benchmark sweep")
    _add_common(p)
    p.add_argument("--alphas", help="comma-separated fractional orders "
                   "(default: the benchmark rows)")
    p.add_argument("--epsilons", help="comma-separated noise levels "
                   "(default: the benchmark columns)")
    p.set_defaults(fn=_cmd_table)

    p = sub.add_parser("converge", help="convergence order study")
    _add_common(p)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--mode", choices=["both", "spatial", "temporal"], default="both")
    p.set_defaults(fn=_cmd_converge)

    p = sub.add_parser("validate", help="coefficient assumption checks")
    p.add_argument("--example", choices=list(harness.EXAMPLES))
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("export", help="re-emit CSVs and figures from a stored report")
    p.add_argument("--report", required=True, help="path to a report.json")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=_cmd_export)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (InvalidParameterError, AssumptionViolationError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
