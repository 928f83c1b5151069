"""CSV, metadata and plot emission for scenario results."""

from __future__ import annotations

import json
import platform
from pathlib import Path

import numpy as np

from . import model
from .propagator import Trajectory

CSV_FORMAT_VERSION = 1


def csv_header(traj: Trajectory) -> list[str]:
    labels = traj.labels or tuple(str(i + 1) for i in range(traj.n_sites))
    return ["t_ps"] + [f"P_{lab}" for lab in labels] + ["trace_err"]


def emit_csv(traj: Trajectory, path) -> Path:
    """Write one row per saved step; floats use repr so they round-trip exactly."""
    path = Path(path)
    trace_err = traj.trace_error if traj.trace_error is not None else np.zeros(traj.times.size)
    lines = [",".join(csv_header(traj))]
    for t, row, err in zip(traj.times, traj.populations, trace_err):
        lines.append(",".join(repr(float(x)) for x in (t, *row, err)))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Inverse of :func:`emit_csv`: returns (header, times, populations, trace_err)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.array([[float(x) for x in line.split(",")] for line in fh if line.strip()])
    data = data.reshape(-1, len(header))
    return header, data[:, 0], data[:, 1:-1], data[:, -1]


def metadata(result) -> dict:
    import scipy

    from . import __version__

    cfg = result.config
    traj = result.trajectory
    meta = {
        "format_version": CSV_FORMAT_VERSION,
        "config": cfg.as_dict(),
        "config_sha256": cfg.digest(),
        "tables_sha256": model.bundled_checksums(),
        "versions": {"fmotrimer": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "diagnostics": {
            "steps": int(traj.steps),
            "max_trace_error": float(np.max(traj.trace_error)),
            "max_hermiticity_defect": float(np.max(traj.hermiticity_defect)),
            "min_eigenvalue": float(np.min(traj.min_eigenvalue)),
        },
    }
    if result.bath is not None:
        b = result.bath
        meta["bath"] = {"p": [[c.real, c.imag] for c in b.p],
                        "z": [[c.real, c.imag] for c in b.z],
                        "fit_residual": float(b.residual)}
    if result.rates is not None:
        meta["dephasing_rate_per_ps"] = float(result.rates[0])
    return meta


def emit_metadata(result, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(metadata(result), indent=2, sort_keys=True) + "\n")
    return path


def emit_plot(traj: Trajectory, path, title: str = "") -> Path:
    """Populations against time, one panel per monomer, as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    n_mono = traj.n_sites // model.N_BCHL
    if n_mono * model.N_BCHL != traj.n_sites:
        raise ValueError("plotting expects a trimer trajectory")
    fig, axes = plt.subplots(1, n_mono, figsize=(4 * n_mono, 3.2), squeeze=False)
    for m, ax in enumerate(axes[0]):
        for b in range(model.N_BCHL):
            ax.plot(traj.times, traj.populations[:, m * model.N_BCHL + b], lw=1.2,
                    label=str(b + 1))
        ax.set_title(f"monomer {model.MONOMERS[m]}")
        ax.set_xlabel("t (ps)")
        ax.set_xlim(traj.times[0], traj.times[-1])
    axes[0][0].set_ylabel("population")
    axes[0][0].legend(title="BChl", fontsize=7, ncol=2)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    # fixed hash salt and no date keep the SVG reproducible
    with matplotlib.rc_context({"svg.hashsalt": "fmotrimer"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def write_outputs(result, out_dir: Path, plot: bool = False) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = result.config.name
    files = {"csv": emit_csv(result.trajectory, out_dir / f"{stem}.csv"),
             "meta": emit_metadata(result, out_dir / f"{stem}.meta.json")}
    if plot:
        files["plot"] = emit_plot(result.trajectory, out_dir / f"{stem}.svg", stem)
    return files
