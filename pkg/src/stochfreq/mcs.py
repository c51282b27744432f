"""Euler-Maruyama Monte Carlo reference for the mixture of linear SDEs.

Each path draws its component once, with probability equal to the component
weight, then integrates ``dX = (A X + c_i) dt + B_i dW`` from ``x0``.

Paths are grouped in fixed-size blocks. Block ``b`` owns the random stream
``SeedSequence(master_seed, spawn_key=(b,))``, so every path's randomness is a
function of ``(master_seed, path index)`` alone and results do not depend on
how many threads run the blocks.

``noise_substeps = k`` builds each Brownian increment from ``k`` standard
normals, summed and rescaled. A run with step ``dt`` and ``k = 2`` then sees
exactly the Brownian path of a run with step ``dt / 2`` and ``k = 1``, which
isolates the discretisation error in convergence checks.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import MisalignedCaptureTime, NonFiniteState, UnknownCaptureTime

if TYPE_CHECKING:
    from .sfr import LinearSdeSystem

DEFAULT_PATHS = 20_000
DEFAULT_DT = 1e-3
BLOCK_SIZE = 2048
CHUNK_STEPS = 250
TIME_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class McsConfig:
    n_paths: int = DEFAULT_PATHS
    dt: float = DEFAULT_DT
    t_end: float = 15.0
    master_seed: int = 0
    block_size: int = BLOCK_SIZE
    noise_substeps: int = 1

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.t_end >= 0.0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end!r}")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.noise_substeps < 1:
            raise ValueError("noise_substeps must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class McsResult:
    """Captured frequency-deviation samples.

    Attributes:
        capture_times: Requested times, shape ``(C,)``.
        samples: ``samples[k, p]`` is path ``p``'s deviation at ``capture_times[k]``.
        components: Component index drawn by each path.
    """

    capture_times: NDArray[np.float64]
    samples: NDArray[np.float64]
    components: NDArray[np.int64]
    config: McsConfig

    def time_index(self, t: float) -> int:
        diff = np.abs(self.capture_times - t)
        k = int(np.argmin(diff)) if diff.size else -1
        if k < 0 or diff[k] > TIME_MATCH_TOL:
            raise UnknownCaptureTime(f"t={t!r} was not captured")
        return k

    def samples_at(self, t: float) -> NDArray[np.float64]:
        return self.samples[self.time_index(t)]

    def component_frequencies(self, n_components: int) -> NDArray[np.float64]:
        return np.bincount(self.components, minlength=n_components) / self.components.size


def capture_steps(cfg: McsConfig, capture_times: ArrayLike) -> NDArray[np.int64]:
    times = np.atleast_1d(np.asarray(capture_times, dtype=float))
    steps = np.empty(times.size, dtype=np.int64)
    for k, t in enumerate(times):
        if t < -TIME_MATCH_TOL or t > cfg.t_end + TIME_MATCH_TOL:
            raise MisalignedCaptureTime(f"capture time {t!r} outside [0, {cfg.t_end!r}]")
        ratio = t / cfg.dt
        step = int(round(ratio))
        if abs(ratio - step) > TIME_MATCH_TOL * max(1.0, abs(ratio)):
            raise MisalignedCaptureTime(f"capture time {t!r} is not a multiple of dt={cfg.dt!r}")
        steps[k] = step
    return steps


def _block_streams(master_seed: int, block: int) -> tuple[np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence(master_seed, spawn_key=(block,))
    comp_ss, noise_ss = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(comp_ss)), np.random.Generator(np.random.PCG64(noise_ss))


def _simulate_block(
    system: LinearSdeSystem, cfg: McsConfig, block: int, steps: NDArray[np.int64], observe: int = 1
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    start = block * cfg.block_size
    count = min(cfg.block_size, cfg.n_paths - start)
    comp_rng, noise_rng = _block_streams(cfg.master_seed, block)

    # full-block draws sliced to the live paths: a path's randomness never depends on n_paths
    full = cfg.block_size
    k_sub = cfg.noise_substeps
    cum = np.cumsum(system.weights)
    u = comp_rng.random(full)[:count]
    comps = np.minimum(np.searchsorted(cum, u, side="right"), cum.size - 1)

    dt = cfg.dt
    AT = system.state_matrix.T * dt
    cdt = system.constants[comps] * dt
    bsq = system.diffusions[comps] * math.sqrt(dt)
    x = np.tile(system.initial_state, (count, 1))

    out = np.empty((steps.size, count))
    wanted: dict[int, list[int]] = {}
    for k, s in enumerate(steps):
        wanted.setdefault(int(s), []).append(k)
    for k in wanted.get(0, []):
        out[k] = x[:, observe]

    n_steps = int(steps.max()) if steps.size else 0
    step = 0
    while step < n_steps:
        m = min(CHUNK_STEPS, n_steps - step)
        z = noise_rng.standard_normal((m * k_sub, full))
        if k_sub > 1:
            z = z.reshape(m, k_sub, full).sum(axis=1) / math.sqrt(k_sub)
        z = z[:, :count]
        for j in range(m):
            x = x + x @ AT + cdt + bsq * z[j][:, None]
            step += 1
            rows = wanted.get(step)
            if rows:
                for k in rows:
                    out[k] = x[:, observe]
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"paths diverged by t={step * dt:g} s in block {block}")
    return out, comps.astype(np.int64)


def simulate(
    system: LinearSdeSystem,
    cfg: McsConfig,
    capture_times: Sequence[float] | ArrayLike,
    threads: int = 1,
    observe: int = 1,
) -> McsResult:
    """Simulate ``cfg.n_paths`` mixture paths and capture the frequency deviation.

    Integration stops at the last capture time (at most ``cfg.t_end``).
    ``observe`` selects the captured state (0 governor, 1 frequency, 2 wind power).

    Raises:
        MisalignedCaptureTime: A capture time is off the ``dt`` grid or outside ``[0, t_end]``.
        NonFiniteState: The state diverged.
    """
    if observe not in (0, 1, 2):
        raise ValueError(f"observe must be 0, 1 or 2, got {observe!r}")
    times = np.atleast_1d(np.asarray(capture_times, dtype=float))
    steps = capture_steps(cfg, times)
    min_tc = 1.0 / system.fastest_rate
    if cfg.dt > 0.01 * min_tc:
        warnings.warn(
            f"dt={cfg.dt:g} exceeds 1% of the fastest time constant ({min_tc:.3g} s)",
            RuntimeWarning,
            stacklevel=2,
        )
    n_blocks = -(-cfg.n_paths // cfg.block_size)

    def run(b: int):
        return _simulate_block(system, cfg, b, steps, observe)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    samples = np.concatenate([p[0] for p in parts], axis=1)
    comps = np.concatenate([p[1] for p in parts])
    return McsResult(times, samples, comps, cfg)


def empirical_cdf(result: McsResult, t: float, x: ArrayLike) -> NDArray[np.float64] | float:
    """Right-continuous empirical CDF of the samples captured at ``t``."""
    data = np.sort(result.samples_at(t))
    scalar = np.ndim(x) == 0
    out = np.searchsorted(data, np.atleast_1d(np.asarray(x, dtype=float)), side="right") / data.size
    return float(out[0]) if scalar else out


def write_capture_csv(result: McsResult, t: float, path: Path) -> None:
    k = result.time_index(t)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("path", "component", "df"))
        for p, (comp, value) in enumerate(zip(result.components, result.samples[k])):
            writer.writerow((p, int(comp), repr(float(value))))


def read_capture_csv(path: Path) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1].astype(np.int64), data[:, 2]
