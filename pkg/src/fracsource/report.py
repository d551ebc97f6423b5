"""Structured output: CSV exports, JSON round-trip and rendered figures.

Every CSV starts with ``# key=value`` provenance lines echoing the resolved
configuration, followed by a column-header line.  Numeric values are
written with 17 significant digits so files round-trip through float64
bit-for-bit.
"""

import json
import os

import numpy as np

from .errors import InvalidParameterError
from .inversion import ReconstructionReport

FLOAT_FMT = "%.17g"


def _write_csv(path, header_pairs, columns, rows):
    with open(path, "w") as fh:
        for key, value in header_pairs:
            fh.write("# %s=%s\n" % (key, value))
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return FLOAT_FMT % v
    if isinstance(v, (np.floating,)):
        return FLOAT_FMT % float(v)
    return str(v)


def _config_pairs(report):
    pairs = sorted(report.config.items()) if report.config else []
    pairs += [("stop_index", report.stop_index),
              ("residual_norm", FLOAT_FMT % report.residual_norm)]
    if report.e is not None:
        pairs.append(("e", FLOAT_FMT % report.e))
    if report.delta is not None:
        pairs.append(("delta", FLOAT_FMT % report.delta))
    return pairs


def export_plot_data(report, out_dir):
    """Write the reconstruction, pointwise error and iteration history CSVs.

    The field files are in long format, one row per (t_n, x1_i) with
    n = 1..N (the t=0 row is identically zero and omitted), so each holds
    (M+1)*N value rows.  The history file flags the stopping index, one
    row per logged iterate.

    Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    pairs = _config_pairs(report)
    x1 = report.x1
    t = report.t
    written = []

    def field_rows(F):
        for n in range(1, len(t)):
            for i in range(len(x1)):
                yield (x1[i], t[n], F[n, i])

    path = os.path.join(out_dir, "f_hat.csv")
    _write_csv(path, pairs, ["x1", "t", "f_hat"], field_rows(report.f_hat))
    written.append(path)

    if report.f_true is not None:
        path = os.path.join(out_dir, "error.csv")
        _write_csv(path, pairs, ["x1", "t", "error"],
                   field_rows(report.f_hat - report.f_true))
        written.append(path)

    keys = [k for k in ("J", "residual_norm", "error", "step", "gamma", "increments")
            if report.history.get(k)]
    n_rows = max((len(report.history[k]) for k in keys), default=0)
    rows = []
    for k in range(n_rows):
        row = [k]
        for key in keys:
            seq = report.history[key]
            row.append(seq[k] if k < len(seq) else float("nan"))
        row.append(1 if k == report.stop_index else 0)
        rows.append(row)
    path = os.path.join(out_dir, "history.csv")
    _write_csv(path, pairs, ["k"] + keys + ["stopped"], rows)
    written.append(path)
    return written


def render_figures(report, out_dir):
    """Render the reconstruction surface, pointwise error and convergence
    history to PNG files next to the CSVs.  Returns the written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    written = []
    extent = [report.x1[0], report.x1[-1], report.t[0], report.t[-1]]

    def surface(F, title, path):
        fig, ax = plt.subplots(figsize=(5, 4))
        im = ax.imshow(F, origin="lower", aspect="auto", extent=extent)
        fig.colorbar(im, ax=ax)
        ax.set_xlabel("x1")
        ax.set_ylabel("t")
        ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    surface(report.f_hat, "reconstruction",
            os.path.join(out_dir, "reconstruction.png"))
    if report.f_true is not None:
        surface(report.f_hat - report.f_true, "pointwise error",
                os.path.join(out_dir, "error.png"))

    series = None
    label = None
    for key in ("error", "residual_norm", "increments"):
        if report.history.get(key):
            series = report.history[key]
            label = {"error": "e(f_k)", "residual_norm": "residual",
                     "increments": "increment"}[key]
            break
    if series:
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.semilogy(range(len(series)), series, "-o", ms=3, label=label)
        if 0 <= report.stop_index < len(series):
            ax.semilogy([report.stop_index], [series[report.stop_index]],
                        "ro", ms=8, label="stop")
        ax.set_xlabel("iteration")
        ax.set_ylabel(label)
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, "history.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def write_report_json(report, path):
    """Serialize a ReconstructionReport to JSON (arrays as nested lists)."""
    payload = {
        "stop_index": int(report.stop_index),
        "e": None if report.e is None else float(report.e),
        "residual_norm": float(report.residual_norm),
        "delta": None if report.delta is None else float(report.delta),
        "history": {k: [float(v) for v in seq] for k, seq in report.history.items()},
        "x1": report.x1.tolist(),
        "t": report.t.tolist(),
        "f_hat": report.f_hat.tolist(),
        "f_true": None if report.f_true is None else report.f_true.tolist(),
        "config": report.config,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
    return path


def load_report_json(path):
    """Inverse of write_report_json."""
    with open(path) as fh:
        payload = json.load(fh)
    required = ("f_hat", "x1", "t", "stop_index")
    for key in required:
        if key not in payload:
            raise InvalidParameterError("report file %r lacks field %r" % (path, key))
    return ReconstructionReport(
        f_hat=np.asarray(payload["f_hat"], dtype=float),
        stop_index=int(payload["stop_index"]),
        e=payload.get("e"),
        residual_norm=float(payload.get("residual_norm", float("nan"))),
        delta=payload.get("delta"),
        history=payload.get("history", {}),
        x1=np.asarray(payload["x1"], dtype=float),
        t=np.asarray(payload["t"], dtype=float),
        f_true=None if payload.get("f_true") is None
        else np.asarray(payload["f_true"], dtype=float),
        config=payload.get("config", {}),
    )


def write_table_csv(table, path):
    """Write a run_table result in the benchmark layout."""
    pairs = sorted(table.get("config", {}).items())
    columns = ["alpha"] + ["eps=%g" % e for e in table["epsilons"]]
    _write_csv(path, pairs, columns, table["rows"])
    return path


def write_convergence_csv(study, path):
    """Write a run_convergence_study result, one row per refinement level."""
    pairs = [("alpha", study.get("alpha")), ("amplitude", study.get("amplitude"))]
    rows = []
    for mode in ("spatial", "temporal"):
        if mode not in study:
            continue
        for r in study[mode]["rows"]:
            rows.append([mode, r["M"], r["N"], r["h"], r["tau"], r["error"],
                         study[mode]["order"]])
    _write_csv(path, pairs, ["mode", "M", "N", "h", "tau", "error", "observed_order"], rows)
    return path


def render_convergence_figure(study, path):
    """Log-log error plot of a convergence study."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for mode, xkey in (("spatial", "h"), ("temporal", "tau")):
        if mode not in study:
            continue
        rows = study[mode]["rows"]
        xs = [r[xkey] for r in rows]
        es = [r["error"] for r in rows]
        if all(e > 0 for e in es):
            ax.loglog(xs, es, "-o",
                      label="%s (order %.2f)" % (mode, study[mode]["order"]))
    ax.set_xlabel("h or tau")
    ax.set_ylabel("error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
