"""One-dimensional Gaussian mixture models fitted by EM with k-means start."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp, ndtr

from .errors import (
    DegenerateComponent,
    EmptyClusterUnrecoverable,
    InvalidGmm,
    TooFewSamples,
)

VARIANCE_FLOOR = 1e-10
DEFAULT_COMPONENTS = 10
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500
DEFAULT_MAX_FLOOR_RESETS = 25
KMEANS_MAX_ITER = 100
WEIGHT_SUM_TOL = 1e-12

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: float
    variance: float


@dataclass(frozen=True)
class Gmm:
    """Weighted list of Gaussian components.

    Weights must sum to one within ``1e-12`` and every variance must be at least
    the variance floor.
    """

    components: tuple[GaussianComponent, ...]

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise InvalidGmm("a GMM needs at least one component")
        for c in comps:
            if not all(math.isfinite(v) for v in (c.weight, c.mean, c.variance)):
                raise InvalidGmm(f"non-finite component {c}")
            if not (0.0 < c.weight <= 1.0):
                raise InvalidGmm(f"weight {c.weight!r} not in (0, 1]")
            if c.variance < VARIANCE_FLOOR:
                raise InvalidGmm(
                    f"variance {c.variance!r} below floor {VARIANCE_FLOOR:g}"
                )
        total = math.fsum(c.weight for c in comps)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidGmm(f"weights sum to {total!r}, not 1")

    @classmethod
    def from_arrays(
        cls, weights: ArrayLike, means: ArrayLike, variances: ArrayLike
    ) -> Gmm:
        w, m, v = (np.asarray(a, dtype=float).ravel() for a in (weights, means, variances))
        if not (w.size == m.size == v.size):
            raise InvalidGmm("weights, means and variances differ in length")
        return cls(
            tuple(GaussianComponent(float(a), float(b), float(c)) for a, b, c in zip(w, m, v))
        )

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> NDArray[np.float64]:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> NDArray[np.float64]:
        return np.array([c.mean for c in self.components])

    @property
    def variances(self) -> NDArray[np.float64]:
        return np.array([c.variance for c in self.components])

    def mean(self) -> float:
        return float(self.weights @ self.means)

    def variance(self) -> float:
        return mixture_variance(self.weights, self.means, self.variances)

    def pdf(self, x: ArrayLike) -> NDArray[np.float64] | float:
        return gmm_pdf(self, x)

    def cdf(self, x: ArrayLike) -> NDArray[np.float64] | float:
        return gmm_cdf(self, x)

    def to_dict(self) -> dict[str, Any]:
        return {
            "components": [
                {"weight": c.weight, "mean": c.mean, "variance": c.variance}
                for c in self.components
            ]
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> Gmm:
        try:
            items = raw["components"]
            comps = tuple(
                GaussianComponent(
                    float(item["weight"]), float(item["mean"]), float(item["variance"])
                )
                for item in items
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidGmm(f"malformed GMM record: {exc!r}") from exc
        return cls(comps)


def moment_match(model: Gmm) -> Gmm:
    """Single Gaussian with the mixture's mean and variance."""
    return Gmm((GaussianComponent(1.0, model.mean(), max(model.variance(), VARIANCE_FLOOR)),))


def mixture_variance(weights: ArrayLike, means: ArrayLike, variances: ArrayLike) -> float:
    w = np.asarray(weights, dtype=float)
    m = np.asarray(means, dtype=float)
    v = np.asarray(variances, dtype=float)
    mu = float(w @ m)
    # centred form avoids cancellation when the mean is large relative to the spread
    return float(w @ (v + (m - mu) ** 2))


def mixture_pdf(
    x: ArrayLike, weights: ArrayLike, means: ArrayLike, variances: ArrayLike
) -> NDArray[np.float64] | float:
    """Weighted Gaussian density; zero-variance components act as point masses."""
    scalar = np.ndim(x) == 0
    xx = np.atleast_1d(np.asarray(x, dtype=float))[:, None]
    w = np.asarray(weights, dtype=float)[None, :]
    m = np.asarray(means, dtype=float)[None, :]
    v = np.asarray(variances, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.exp(-((xx - m) ** 2) / (2.0 * v)) / np.sqrt(2.0 * np.pi * v)
    point = v <= 0.0
    if np.any(point):
        dens = np.where(point, np.where(xx == m, np.inf, 0.0), dens)
    out = (w * dens).sum(axis=1)
    return float(out[0]) if scalar else out


def mixture_cdf(
    x: ArrayLike, weights: ArrayLike, means: ArrayLike, variances: ArrayLike
) -> NDArray[np.float64] | float:
    """Weighted Gaussian CDF; zero-variance components act as right-continuous steps."""
    scalar = np.ndim(x) == 0
    xx = np.atleast_1d(np.asarray(x, dtype=float))[:, None]
    w = np.asarray(weights, dtype=float)[None, :]
    m = np.asarray(means, dtype=float)[None, :]
    v = np.asarray(variances, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (xx - m) / np.sqrt(v)
        comp = ndtr(z)
    point = v <= 0.0
    if np.any(point):
        comp = np.where(point, (xx >= m).astype(float), comp)
    out = (w * comp).sum(axis=1)
    return float(out[0]) if scalar else out


def gmm_pdf(model: Gmm, x: ArrayLike) -> NDArray[np.float64] | float:
    return mixture_pdf(x, model.weights, model.means, model.variances)


def gmm_cdf(model: Gmm, x: ArrayLike) -> NDArray[np.float64] | float:
    return mixture_cdf(x, model.weights, model.means, model.variances)


def log_likelihood(model: Gmm, samples: ArrayLike) -> float:
    """Mean per-sample log-likelihood of ``samples`` under ``model``."""
    x = np.asarray(samples, dtype=float).ravel()
    ll, _ = _e_step(x, model.weights, model.means, model.variances)
    return ll


# --------------------------------------------------------------------------
# k-means initialisation


@dataclass(frozen=True)
class KMeansPartition:
    """Hard partition of the samples into classes, ordered by class mean.

    ``variances`` are the raw within-class population variances; they can be
    zero for classes of identical points.
    """

    labels: NDArray[np.int64]
    means: NDArray[np.float64]
    variances: NDArray[np.float64]
    weights: NDArray[np.float64]
    iterations: int

    @property
    def counts(self) -> NDArray[np.int64]:
        return np.bincount(self.labels, minlength=self.means.size)


def _kmeanspp_centres(x: NDArray[np.float64], n: int, rng: np.random.Generator) -> NDArray[np.float64]:
    centres = np.empty(n)
    centres[0] = x[rng.integers(x.size)]
    d2 = (x - centres[0]) ** 2
    for k in range(1, n):
        total = d2.sum()
        if total > 0.0:
            idx = rng.choice(x.size, p=d2 / total)
        else:
            idx = rng.integers(x.size)
        centres[k] = x[idx]
        d2 = np.minimum(d2, (x - centres[k]) ** 2)
    return centres


def _fill_empty(x: NDArray[np.float64], labels: NDArray[np.int64], n: int) -> None:
    # move the point farthest from the largest cluster's centroid into each empty one
    while True:
        counts = np.bincount(labels, minlength=n)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return
        largest = int(np.argmax(counts))
        if counts[largest] < 2:
            raise EmptyClusterUnrecoverable(
                f"cannot refill cluster {int(empty[0])}: largest cluster has "
                f"{int(counts[largest])} point(s)"
            )
        members = np.flatnonzero(labels == largest)
        centre = x[members].mean()
        far = members[int(np.argmax(np.abs(x[members] - centre)))]
        labels[far] = empty[0]


def kmeans_partition(samples: ArrayLike, n: int, seed: int | None = 0) -> KMeansPartition:
    """Lloyd's k-means in one dimension with k-means++ seeding.

    Args:
        samples: Power values.
        n: Number of classes.
        seed: Seed for the centroid initialisation.

    Raises:
        TooFewSamples: Fewer samples than classes.
        EmptyClusterUnrecoverable: A class cannot be refilled.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if n < 1:
        raise ValueError(f"component count must be >= 1, got {n}")
    if x.size < n:
        raise TooFewSamples(f"{x.size} samples cannot fill {n} classes")

    rng = np.random.default_rng(seed)
    centres = _kmeanspp_centres(x, n, rng)
    labels = np.full(x.size, -1, dtype=np.int64)
    iterations = 0
    for iterations in range(1, KMEANS_MAX_ITER + 1):
        new = np.argmin(np.abs(x[:, None] - centres[None, :]), axis=1).astype(np.int64)
        _fill_empty(x, new, n)
        counts = np.bincount(new, minlength=n)
        centres = np.bincount(new, weights=x, minlength=n) / counts
        if np.array_equal(new, labels):
            break
        labels = new

    order = np.argsort(centres, kind="stable")
    relabel = np.empty(n, dtype=np.int64)
    relabel[order] = np.arange(n)
    labels = relabel[labels]
    counts = np.bincount(labels, minlength=n)
    means = np.bincount(labels, weights=x, minlength=n) / counts
    variances = np.bincount(labels, weights=(x - means[labels]) ** 2, minlength=n) / counts
    return KMeansPartition(
        labels=labels,
        means=means,
        variances=variances,
        weights=counts / x.size,
        iterations=iterations,
    )


# --------------------------------------------------------------------------
# EM


@dataclass
class EmReport:
    """Diagnostics of an EM run.

    ``log_likelihood_trace`` holds the mean per-sample log-likelihood evaluated
    at the parameters entering each E-step; the last entry belongs to the
    returned model.
    """

    iterations: int
    final_log_likelihood: float
    converged: bool
    log_likelihood_trace: list[float] = field(default_factory=list)
    floor_resets: int = 0
    responsibility_snapshot: NDArray[np.float64] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "iterations": self.iterations,
            "final_log_likelihood": self.final_log_likelihood,
            "converged": self.converged,
            "floor_resets": self.floor_resets,
            "log_likelihood_trace": list(self.log_likelihood_trace),
        }


def _e_step(
    x: NDArray[np.float64],
    weights: NDArray[np.float64],
    means: NDArray[np.float64],
    variances: NDArray[np.float64],
) -> tuple[float, NDArray[np.float64]]:
    log_p = (
        np.log(weights)[:, None]
        - 0.5 * (_LOG_2PI + np.log(variances))[:, None]
        - (x[None, :] - means[:, None]) ** 2 / (2.0 * variances[:, None])
    )
    log_norm = logsumexp(log_p, axis=0)
    gamma = np.exp(log_p - log_norm[None, :])
    # fsum: exact rounding keeps the monotonicity check meaningful near convergence
    ll = math.fsum(log_norm) / x.size
    return ll, gamma


def em_fit(
    samples: ArrayLike,
    n: int = DEFAULT_COMPONENTS,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int | None = 0,
    variance_floor: float = VARIANCE_FLOOR,
    max_floor_resets: int = DEFAULT_MAX_FLOOR_RESETS,
    keep_responsibilities: bool = False,
) -> tuple[Gmm, EmReport]:
    """Fit an ``n``-component GMM by EM started from a k-means partition.

    Iterates until the mean log-likelihood changes by less than ``tol`` or
    ``max_iter`` M-steps have run. A component whose variance falls below
    ``variance_floor`` is reset to the floor and its mean is moved by one
    sample standard deviation in a seeded random direction.

    Raises:
        TooFewSamples: Fewer samples than components.
        DegenerateComponent: More than ``max_floor_resets`` resets.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < n:
        raise TooFewSamples(f"{x.size} samples cannot fit {n} components")
    rng = np.random.default_rng(seed)
    part = kmeans_partition(x, n, seed=rng.integers(2**63))
    sample_std = float(x.std())

    weights = part.weights.astype(float)
    means = part.means.astype(float)
    variances = np.maximum(part.variances, variance_floor)

    trace: list[float] = []
    resets = 0
    converged = False
    iterations = 0
    gamma = None
    while True:
        ll, gamma = _e_step(x, weights, means, variances)
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol:
            converged = True
            break
        if iterations >= max_iter:
            break

        nk = gamma.sum(axis=1)
        weights = nk / x.size
        if abs(math.fsum(weights) - 1.0) > WEIGHT_SUM_TOL:
            raise DegenerateComponent(f"weights drifted to sum {math.fsum(weights)!r}")
        with np.errstate(invalid="ignore", divide="ignore"):
            means = (gamma * x[None, :]).sum(axis=1) / nk
            variances = (gamma * (x[None, :] - means[:, None]) ** 2).sum(axis=1) / nk
        iterations += 1

        for i in range(n):
            starved = not (nk[i] > 0.0) or not math.isfinite(means[i])
            if starved or not (variances[i] >= variance_floor):
                resets += 1
                if resets > max_floor_resets:
                    raise DegenerateComponent(
                        f"component {i} collapsed {resets} times (floor {variance_floor:g})"
                    )
                if starved:
                    means[i] = float(x[rng.integers(x.size)])
                    weights[i] = 1.0 / x.size
                    weights /= weights.sum()
                else:
                    means[i] += sample_std * (1.0 if rng.random() < 0.5 else -1.0)
                variances[i] = variance_floor

    model = Gmm.from_arrays(weights, means, variances)
    report = EmReport(
        iterations=iterations,
        final_log_likelihood=trace[-1],
        converged=converged,
        log_likelihood_trace=trace,
        floor_resets=resets,
        responsibility_snapshot=gamma if keep_responsibilities else None,
    )
    return model, report
