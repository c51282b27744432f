"""Agreement metrics between analytic distributions and Monte Carlo samples."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .analytic import FrequencyMixture
from .errors import EmptySamples
from .mcs import McsResult

DEFAULT_ALPHAS = tuple(round(0.05 * k, 2) for k in range(1, 20))

QuantileFn = Callable[[NDArray[np.float64]], NDArray[np.float64]]
CdfFn = Callable[[NDArray[np.float64]], NDArray[np.float64]]


def _nonempty(samples: ArrayLike, name: str = "samples") -> NDArray[np.float64]:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptySamples(f"{name} is empty")
    return x


@dataclass(frozen=True)
class PdCurve:
    alphas: NDArray[np.float64]
    deviations: NDArray[np.float64]

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.deviations)))


def proportion_deviation(
    samples: ArrayLike,
    quantile_fn: QuantileFn,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
) -> PdCurve:
    """Empirical coverage of each nominal quantile minus its proportion.

    ``PD(alpha) = mean(samples <= quantile_fn(alpha)) - alpha``.
    """
    x = _nonempty(samples)
    a = np.asarray(alphas, dtype=float)
    q = np.asarray(quantile_fn(a), dtype=float)
    coverage = np.searchsorted(np.sort(x), q, side="right") / x.size
    return PdCurve(a, coverage - a)


def wasserstein_1d(samples_a: ArrayLike, samples_b: ArrayLike) -> float:
    """First Wasserstein distance between two empirical distributions.

    Equal sizes use matched order statistics; otherwise the area between the
    two empirical CDFs is integrated exactly on the merged support.
    """
    a = np.sort(_nonempty(samples_a, "samples_a"))
    b = np.sort(_nonempty(samples_b, "samples_b"))
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    grid = np.concatenate([a, b])
    grid.sort(kind="mergesort")
    widths = np.diff(grid)
    fa = np.searchsorted(a, grid[:-1], side="right") / a.size
    fb = np.searchsorted(b, grid[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * widths))


def wasserstein_to_quantile(samples: ArrayLike, quantile_fn: QuantileFn) -> float:
    """W1 between samples and a continuous law given by its quantile function.

    The law is represented by its quantiles at the mid-probabilities
    ``(k - 1/2) / n`` and matched against the sorted samples.
    """
    x = np.sort(_nonempty(samples))
    u = (np.arange(x.size) + 0.5) / x.size
    return float(np.mean(np.abs(x - np.asarray(quantile_fn(u), dtype=float))))


def kolmogorov_distance(samples: ArrayLike, cdf_fn: CdfFn) -> float:
    """``sup_x |F(x) - F_n(x)|`` for a continuous CDF ``F``."""
    x = np.sort(_nonempty(samples))
    n = x.size
    F = np.asarray(cdf_fn(x), dtype=float)
    upper = np.arange(1, n + 1) / n - F
    lower = F - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


@dataclass(frozen=True)
class StdRow:
    time: float
    analytic: float
    empirical: float

    @property
    def relative_error(self) -> float:
        return abs(self.analytic - self.empirical) / self.empirical if self.empirical else float("inf")


def stddev_comparison(
    mix: FrequencyMixture, mcs: McsResult, times: Iterable[float]
) -> list[StdRow]:
    """Mixture standard deviation against the sample standard deviation."""
    rows = []
    for t in times:
        emp = float(np.std(mcs.samples_at(t), ddof=1))
        rows.append(StdRow(float(t), mix.std(t), emp))
    return rows


@dataclass(frozen=True)
class MetricRow:
    metric: str
    time: float
    alpha: float | None
    value: float


def write_metrics_csv(rows: Iterable[MetricRow], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("metric", "time", "alpha_or_blank", "value"))
        for r in rows:
            writer.writerow((r.metric, repr(r.time), "" if r.alpha is None else repr(r.alpha), repr(r.value)))


def read_metrics_csv(path: Path) -> list[MetricRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [
            MetricRow(m, float(t), None if a == "" else float(a), float(v))
            for m, t, a, v in reader
        ]


def compare_to_reference(
    label: str, mix: FrequencyMixture, mcs: McsResult, times: Iterable[float],
    alphas: Sequence[float] = DEFAULT_ALPHAS,
) -> list[MetricRow]:
    """Full metric set for one analytic method against the Monte Carlo samples."""
    rows: list[MetricRow] = []
    for t in times:
        t = float(t)
        x = mcs.samples_at(t)
        pd = proportion_deviation(x, lambda a: mix.quantile(t, a), alphas)
        for a, d in zip(pd.alphas, pd.deviations):
            rows.append(MetricRow(f"{label}.pd", t, float(a), float(d)))
        rows.append(MetricRow(f"{label}.max_pd", t, None, pd.max_abs))
        rows.append(MetricRow(f"{label}.wasserstein", t, None, wasserstein_to_quantile(x, lambda u: mix.quantile(t, u))))
        rows.append(MetricRow(f"{label}.kolmogorov", t, None, kolmogorov_distance(x, lambda z: mix.cdf(t, z))))
        std = stddev_comparison(mix, mcs, [t])[0]
        rows.append(MetricRow(f"{label}.std", t, None, std.analytic))
        rows.append(MetricRow(f"{label}.std_rel_err", t, None, std.relative_error))
    for t in times:
        rows.append(MetricRow("mcs.std", float(t), None, float(np.std(mcs.samples_at(float(t)), ddof=1))))
    return rows


def summary_tables(rows: Sequence[MetricRow]) -> str:
    """Plain-text tables of std, max PD and W1 per method (one row per time)."""
    methods = sorted({r.metric.split(".")[0] for r in rows if r.metric != "mcs.std"})
    times = sorted({r.time for r in rows})
    lookup = {(r.metric, r.time): r.value for r in rows if r.alpha is None}

    def table(title: str, suffix: str, fmt: str, with_mcs: bool = False) -> list[str]:
        cols = (["MCS"] if with_mcs else []) + [m.upper().replace("_", "-") for m in methods]
        lines = [title, "t(s)".ljust(8) + "".join(c.rjust(12) for c in cols)]
        for t in times:
            vals = ([lookup.get(("mcs.std", t))] if with_mcs else []) + [
                lookup.get((f"{m}.{suffix}", t)) for m in methods
            ]
            lines.append(f"{t:<8g}" + "".join(
                ("-" if v is None else format(v, fmt)).rjust(12) for v in vals
            ))
        return lines + [""]

    out = table("Standard deviation of frequency deviation", "std", ".6f", with_mcs=True)
    out += table("Maximum proportion deviation (%)", "max_pd", ".2%")
    out += table("Wasserstein distance to MCS", "wasserstein", ".3e")
    return "\n".join(out)
