"""Closed-form moments of the linear SDEs and the resulting frequency mixture.

For ``dX = (A X + c) dt + B dW`` with ``X(0) = x0``::

    E[X_t]   = e^{At} (x0 + A^{-1} c) - A^{-1} c
    Cov[X_t] = P ([P^{-1} B B^T P^{-T}] o J(t)) P^T,
    J(t)_kj  = (e^{(l_k + l_j) t} - 1) / (l_k + l_j)

where ``A = P diag(l) P^{-1}``. Each component of the generalised Itô
process gives one Gaussian for the frequency deviation; the components keep
their input weights.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from .errors import (
    AlphaOutOfRange,
    ComplexResidue,
    IllConditionedEigenbasis,
    NonConvergedFallback,
    NonFiniteInput,
    NumericError,
    SingularA,
    TimeNotOnGrid,
)
from .gmm import mixture_cdf, mixture_pdf, mixture_variance

if TYPE_CHECKING:
    from .sfr import LinearSdeSystem

EIG_SUM_EPS = 1e-10
COND_LIMIT = 1e8
IMAG_TOL = 1e-9
RECONSTRUCT_TOL = 1e-10
QUANTILE_TOL = 1e-10
TIME_MATCH_TOL = 1e-9
DEFAULT_T_END = 15.0
DEFAULT_T_STEP = 0.05
REPORT_TIMES = (0.5, 2.5, 5.0, 7.5, 10.0, 15.0)


def default_time_grid(t_end: float = DEFAULT_T_END, step: float = DEFAULT_T_STEP) -> NDArray[np.float64]:
    n = int(round(t_end / step))
    return np.round(np.arange(n + 1) * step, 12)


def matrix_exponential(M: ArrayLike) -> NDArray[np.float64]:
    """``e^M`` by scaling and squaring with a Padé approximant (scipy)."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise NonFiniteInput("matrix exponential of a matrix with non-finite entries")
    return scipy.linalg.expm(M)


@dataclass(frozen=True)
class EigenWork:
    """Eigendecomposition ``A = P diag(eigenvalues) P^{-1}`` in complex arithmetic."""

    eigenvalues: NDArray[np.complex128]
    P: NDArray[np.complex128]
    P_inv: NDArray[np.complex128]
    condition: float

    @classmethod
    def from_matrix(cls, A: ArrayLike, cond_limit: float = COND_LIMIT) -> EigenWork:
        """Raises IllConditionedEigenbasis when ``A`` is (nearly) defective."""
        A = np.asarray(A, dtype=float)
        lam, P = np.linalg.eig(A)
        cond = float(np.linalg.cond(P))
        if not cond < cond_limit:
            raise IllConditionedEigenbasis(f"eigenvector condition number {cond:.3g}")
        P_inv = np.linalg.inv(P)
        recon = (P * lam[None, :]) @ P_inv
        scale = max(1.0, float(np.abs(A).max()))
        if np.abs(recon - A).max() > RECONSTRUCT_TOL * scale:
            raise IllConditionedEigenbasis("eigendecomposition does not reconstruct A")
        return cls(lam, P, P_inv, cond)

    def J(self, t: float | ArrayLike) -> NDArray[np.complex128]:
        """Integrals ``int_0^t e^{(l_k + l_j) s} ds``; shape ``(n, n)`` or ``(T, n, n)``."""
        tt = np.asarray(t, dtype=float)
        s = self.eigenvalues[:, None] + self.eigenvalues[None, :]
        small = np.abs(s) < EIG_SUM_EPS
        safe = np.where(small, 1.0, s)
        ts = tt[..., None, None]
        out = np.expm1(safe * ts) / safe
        return np.where(small, ts + 0j, out)


@dataclass(frozen=True)
class GaussianMoment:
    time: float
    mean: NDArray[np.float64]
    covariance: NDArray[np.float64]


def _steady_offset(A: NDArray[np.float64], c: NDArray[np.float64]) -> NDArray[np.float64]:
    try:
        offset = np.linalg.solve(A, c)
    except np.linalg.LinAlgError as exc:
        raise SingularA(str(exc)) from exc
    if not np.all(np.isfinite(offset)):
        raise SingularA("A^{-1} c is not finite")
    return offset


def mean_trajectory(
    A: ArrayLike, c: ArrayLike, x0: ArrayLike, times: ArrayLike
) -> NDArray[np.float64]:
    """Exact mean at each time; shape ``(T, n)``."""
    A = np.asarray(A, dtype=float)
    offset = _steady_offset(A, np.asarray(c, dtype=float))
    start = np.asarray(x0, dtype=float) + offset
    tt = np.atleast_1d(np.asarray(times, dtype=float))
    return np.stack([matrix_exponential(A * t) @ start - offset for t in tt])


def covariance_eigen(
    A: ArrayLike, B: ArrayLike, times: ArrayLike, work: EigenWork | None = None
) -> NDArray[np.float64]:
    """Covariance of ``int_0^t e^{A(t-s)} B dW_s`` by the eigen formula; ``(T, n, n)``.

    Raises:
        IllConditionedEigenbasis: From :meth:`EigenWork.from_matrix`.
        ComplexResidue: Imaginary parts above ``1e-9`` survive the arithmetic.
    """
    work = EigenWork.from_matrix(A) if work is None else work
    Bm = np.asarray(B, dtype=float)
    if Bm.ndim == 1:
        Bm = Bm[:, None]
    MB = work.P_inv @ Bm
    G = MB @ MB.T  # plain transpose: e^{A^T s} = P^{-T} e^{L s} P^T
    J = work.J(np.atleast_1d(np.asarray(times, dtype=float)))
    cov = np.einsum("ik,tkj,lj->til", work.P, G[None, :, :] * J, work.P)
    residue = float(np.abs(cov.imag).max()) if cov.size else 0.0
    if residue > IMAG_TOL:
        raise ComplexResidue(f"imaginary residue {residue:.3g} in covariance")
    real = cov.real
    return 0.5 * (real + np.swapaxes(real, -1, -2))


def covariance_quadrature(
    A: ArrayLike, B: ArrayLike, t: float, tol: float = 1e-13
) -> NDArray[np.float64]:
    """Covariance by adaptive quadrature of ``int_0^t e^{As} B B^T e^{A^T s} ds``.

    Raises:
        NonConvergedFallback: The integrator's error estimate exceeds the target.
    """
    A = np.asarray(A, dtype=float)
    Bm = np.asarray(B, dtype=float)
    if Bm.ndim == 1:
        Bm = Bm[:, None]
    BB = Bm @ Bm.T
    if t == 0.0:
        return np.zeros_like(BB)

    def integrand(s: float) -> NDArray[np.float64]:
        E = matrix_exponential(A * s)
        return E @ BB @ E.T

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.quad_vec(integrand, 0.0, t, epsabs=tol, epsrel=1e-12, limit=2000)
    scale = max(float(np.abs(value).max()), 1e-300)
    if not np.all(np.isfinite(value)) or err > max(100.0 * tol, 1e-9 * scale):
        raise NonConvergedFallback(f"covariance quadrature error {err:.3g} at t={t:g}")
    return 0.5 * (value + value.T)


def covariance(
    A: ArrayLike, B: ArrayLike, times: ArrayLike, work: EigenWork | None = None
) -> NDArray[np.float64]:
    """Eigen formula, falling back to quadrature for a bad eigenbasis."""
    tt = np.atleast_1d(np.asarray(times, dtype=float))
    try:
        if work is None:
            work = EigenWork.from_matrix(A)
        return covariance_eigen(A, B, tt, work)
    except IllConditionedEigenbasis:
        return np.stack([covariance_quadrature(A, B, float(t)) for t in tt])


def _check_psd(cov: NDArray[np.float64]) -> None:
    eig = np.linalg.eigvalsh(cov)
    if eig.size and eig.min() < -1e-10:
        raise NumericError(f"covariance not positive semidefinite (eigenvalue {eig.min():.3g})")


def solve_mean(system: LinearSdeSystem, component: int, t: float) -> NDArray[np.float64]:
    """Mean state of ``component`` at time ``t``."""
    return mean_trajectory(
        system.state_matrix, system.constants[component], system.initial_state, [t]
    )[0]


def solve_covariance(system: LinearSdeSystem, component: int, t: float) -> NDArray[np.float64]:
    """State covariance of ``component`` at time ``t``."""
    cov = covariance(system.state_matrix, system.diffusions[component], [t])[0]
    _check_psd(cov)
    return cov


def solve_moments(
    system: LinearSdeSystem, component: int, times: ArrayLike
) -> list[GaussianMoment]:
    tt = np.atleast_1d(np.asarray(times, dtype=float))
    means = mean_trajectory(system.state_matrix, system.constants[component], system.initial_state, tt)
    covs = covariance(system.state_matrix, system.diffusions[component], tt)
    _check_psd(covs)
    return [GaussianMoment(float(t), m, c) for t, m, c in zip(tt, means, covs)]


# --------------------------------------------------------------------------
# frequency mixture


@dataclass(frozen=True)
class FrequencyMixture:
    """Gaussian mixture of the frequency deviation on a time grid.

    Attributes:
        times: Grid times, shape ``(T,)``.
        weights: Component weights, shape ``(N,)``; identical at every time.
        mean_df: Component means, shape ``(T, N)``.
        var_df: Component variances, shape ``(T, N)``.
    """

    times: NDArray[np.float64]
    weights: NDArray[np.float64]
    mean_df: NDArray[np.float64]
    var_df: NDArray[np.float64]

    @property
    def n_components(self) -> int:
        return self.weights.size

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > TIME_MATCH_TOL:
            raise TimeNotOnGrid(f"t={t!r} is not on the solver grid")
        return k

    def _params(self, t: float) -> tuple[NDArray, NDArray, NDArray]:
        k = self.time_index(t)
        return self.weights, self.mean_df[k], self.var_df[k]

    def pdf(self, t: float, x: ArrayLike) -> NDArray[np.float64] | float:
        return mixture_pdf(x, *self._params(t))

    def cdf(self, t: float, x: ArrayLike) -> NDArray[np.float64] | float:
        return mixture_cdf(x, *self._params(t))

    def mean(self, t: float) -> float:
        w, m, _ = self._params(t)
        return float(w @ m)

    def std(self, t: float) -> float:
        return math.sqrt(mixture_variance(*self._params(t)))

    def std_trajectory(self) -> NDArray[np.float64]:
        mu = self.mean_df @ self.weights
        var = (self.var_df + (self.mean_df - mu[:, None]) ** 2) @ self.weights
        return np.sqrt(var)

    def quantile(self, t: float, alpha: ArrayLike) -> NDArray[np.float64] | float:
        """Inverse CDF by bisection to ``1e-10`` (tighter for very narrow mixtures)."""
        scalar = np.ndim(alpha) == 0
        a = np.atleast_1d(np.asarray(alpha, dtype=float))
        if np.any(~((a > 0.0) & (a < 1.0))):
            raise AlphaOutOfRange("alpha must lie in the open interval (0, 1)")
        w, m, v = self._params(t)
        sd = np.sqrt(v)
        lo = np.full(a.shape, float(np.min(m - 40.0 * sd)) - 1e-12)
        hi = np.full(a.shape, float(np.max(m + 40.0 * sd)) + 1e-12)
        positive = sd[sd > 0.0]
        tol = QUANTILE_TOL * min(1.0, float(positive.min())) if positive.size else QUANTILE_TOL
        for _ in range(200):
            if np.max(hi - lo) <= tol:
                break
            mid = 0.5 * (lo + hi)
            below = mixture_cdf(mid, w, m, v) < a
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        return float(out[0]) if scalar else out

    def to_component_rows(self) -> list[tuple[float, int, float, float, float]]:
        rows = []
        for k, t in enumerate(self.times):
            for i in range(self.n_components):
                rows.append((float(t), i, float(self.weights[i]), float(self.mean_df[k, i]), float(self.var_df[k, i])))
        return rows

    def summary_rows(self, alphas: Sequence[float] = (0.05, 0.5, 0.95)) -> list[tuple[float, ...]]:
        rows = []
        std = self.std_trajectory()
        mu = self.mean_df @ self.weights
        for k, t in enumerate(self.times):
            q = self.quantile(float(t), list(alphas))
            rows.append((float(t), float(mu[k]), float(std[k]), *map(float, q)))
        return rows

    @classmethod
    def from_component_rows(cls, rows: Sequence[Sequence[float]]) -> FrequencyMixture:
        times = sorted({float(r[0]) for r in rows})
        n = max(int(r[1]) for r in rows) + 1
        index = {t: k for k, t in enumerate(times)}
        weights = np.zeros(n)
        mean = np.zeros((len(times), n))
        var = np.zeros((len(times), n))
        for t, i, w, m, v in rows:
            k, i = index[float(t)], int(i)
            weights[i] = float(w)
            mean[k, i] = float(m)
            var[k, i] = float(v)
        return cls(np.array(times), weights, mean, var)


def solve_mixture(
    system: LinearSdeSystem, t_grid: ArrayLike | None = None, threads: int = 1
) -> FrequencyMixture:
    """Frequency-deviation mixture on ``t_grid`` (default 0..15 s every 0.05 s).

    The per-component solves are independent; with ``threads > 1`` they run on
    a thread pool and are merged by component index, so the result does not
    depend on the thread count.
    """
    times = default_time_grid() if t_grid is None else np.atleast_1d(np.asarray(t_grid, dtype=float))
    A = system.state_matrix
    try:
        work: EigenWork | None = EigenWork.from_matrix(A)
    except IllConditionedEigenbasis:
        work = None
    expms = np.stack([matrix_exponential(A * t) for t in times])
    x0 = system.initial_state

    def one(i: int) -> tuple[NDArray, NDArray]:
        offset = _steady_offset(A, system.constants[i])
        means = expms @ (x0 + offset) - offset
        if work is None:
            covs = np.stack([covariance_quadrature(A, system.diffusions[i], float(t)) for t in times])
        else:
            covs = covariance_eigen(A, system.diffusions[i], times, work)
        return means[:, 1], covs[:, 1, 1]

    idx = range(system.n_components)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, idx))
    else:
        results = [one(i) for i in idx]
    mean_df = np.stack([r[0] for r in results], axis=1)
    var_df = np.stack([r[1] for r in results], axis=1)
    if np.any(var_df < -1e-10):
        raise NumericError("negative frequency variance from the closed form")
    var_df = np.maximum(var_df, 0.0)
    return FrequencyMixture(times, np.array(system.weights, dtype=float), mean_df, var_df)


COMPONENT_HEADER = ("time", "component", "weight", "mean_df", "var_df")
SUMMARY_HEADER = ("time", "mix_mean", "mix_std", "q05", "q50", "q95")


def _fmt(value: float | int) -> str:
    return str(value) if isinstance(value, int) else repr(float(value))


def write_mixture_csvs(mix: FrequencyMixture, components_path: Path, summary_path: Path) -> None:
    with open(components_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COMPONENT_HEADER)
        for row in mix.to_component_rows():
            writer.writerow([_fmt(v) for v in row])
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for row in mix.summary_rows():
            writer.writerow([_fmt(v) for v in row])


def read_mixture_csv(path: Path) -> FrequencyMixture:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COMPONENT_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [(float(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in reader]
    return FrequencyMixture.from_component_rows(rows)
