"""Whitespace-separated data files for plotting a completed run."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .analytic import FrequencyMixture, read_mixture_csv
from .errors import IncompleteRun
from .mcs import read_capture_csv
from .metrics import read_metrics_csv
from .pipeline import read_manifest

GRID_POINTS = 2001
GRID_HALF_WIDTH = 8.0  # in mixture standard deviations beyond the outermost component


def pdf_grid(mix: FrequencyMixture, t: float, points: int = GRID_POINTS) -> np.ndarray:
    """Grid covering every component to ``GRID_HALF_WIDTH`` of its own spread."""
    k = mix.time_index(t)
    m, sd = mix.mean_df[k], np.sqrt(mix.var_df[k])
    width = np.maximum(sd, 1e-12)
    return np.linspace(float(np.min(m - GRID_HALF_WIDTH * width)), float(np.max(m + GRID_HALF_WIDTH * width)), points)


def _write(path: Path, header: str, columns: list[np.ndarray]) -> None:
    np.savetxt(path, np.column_stack(columns), header=header, fmt="%.12e")


def emit_plot_data(run_dir: str | Path) -> list[Path]:
    """Write ``stddev_vs_time.dat``, ``pdf_t*.dat`` and ``pd_t*.dat`` into ``run_dir/plots``.

    Without Monte Carlo output only the analytic columns are written and the
    comparison files are skipped; ``plots/NOTE.txt`` says so.

    Raises:
        IncompleteRun: The manifest is missing or its status is not ``complete``.
    """
    run_dir = Path(run_dir)
    try:
        manifest = read_manifest(run_dir)
    except Exception as exc:
        raise IncompleteRun(f"{run_dir} is not a run directory: {exc}") from exc
    if manifest.get("status") != "complete":
        raise IncompleteRun(f"run in {run_dir} has status {manifest.get('status')!r}")

    mix = read_mixture_csv(run_dir / "mixture_components.csv")
    plots = run_dir / "plots"
    plots.mkdir(exist_ok=True)
    written: list[Path] = []
    mcs_info = manifest.get("mcs")
    capture = [float(t) for t in mcs_info["capture_times"]] if mcs_info else []

    std = mix.std_trajectory()
    path = plots / "stddev_vs_time.dat"
    if capture:
        emp = np.full(std.shape, np.nan)
        for t in capture:
            _, df = read_capture_csv(run_dir / f"mcs_t{t:g}.csv")
            emp[mix.time_index(t)] = np.std(df, ddof=1)
        _write(path, "time analytic mcs", [mix.times, std, emp])
    else:
        _write(path, "time analytic", [mix.times, std])
    written.append(path)

    for t in capture or _default_pdf_times(mix):
        x = pdf_grid(mix, t)
        path = plots / f"pdf_t{t:g}.dat"
        _write(path, f"t={t:g} x pdf cdf", [x, mix.pdf(t, x), mix.cdf(t, x)])
        written.append(path)

    if capture:
        rows = read_metrics_csv(run_dir / "metrics.csv")
        for t in capture:
            curves = {}
            for r in rows:
                if r.metric.endswith(".pd") and abs(r.time - t) < 1e-9:
                    curves.setdefault(r.metric[:-3], []).append((r.alpha, r.value))
            if not curves:
                continue
            labels = sorted(curves)
            alphas = np.array([a for a, _ in curves[labels[0]]])
            path = plots / f"pd_t{t:g}.dat"
            _write(path, "alpha " + " ".join(labels), [alphas] + [np.array([v for _, v in curves[l]]) for l in labels])
            written.append(path)
    else:
        note = plots / "NOTE.txt"
        note.write_text("run has no Monte Carlo samples; mcs columns and pd_t*.dat files were skipped\n")
        written.append(note)
    return written


def _default_pdf_times(mix: FrequencyMixture) -> list[float]:
    wanted = (0.5, 2.5, 5.0, 7.5, 10.0, 15.0)
    out = []
    for t in wanted:
        k = int(np.argmin(np.abs(mix.times - t)))
        if abs(mix.times[k] - t) < 1e-9:
            out.append(float(mix.times[k]))
    return out or [float(mix.times[-1])]
