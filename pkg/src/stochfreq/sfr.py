"""Aggregated VSG-SFR model and the per-component linear SDE systems.

State ordering is ``(t_g, df, P_w)`` everywhere: governor state, per-unit
frequency deviation, wind power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .analytic import matrix_exponential
from .errors import DegenerateAggregation, InvalidParams, UnstableSystem
from .ito import GeneralizedItoProcess

STATE_NAMES = ("tg", "df", "pw")
SHARE_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SfrParams:
    """Single-machine VSG-SFR parameters (per-unit on the system base).

    ``gen_power`` and ``load_power`` may be left as ``None``; the net
    deterministic imbalance then defaults to minus the wind-power mean so the
    expected steady-state frequency deviation is zero.
    """

    governor_gain_inv: float  # 1/R
    inertia: float  # H
    turbine_coeff: float  # a
    turbine_time: float  # T
    damping: float  # D
    vsg_droop: float  # delta_w
    vsg_inertia: float  # H_w
    sync_share: float  # K
    vsg_share: float  # K1
    nonvsg_share: float  # K2
    gen_power: float | None = None
    load_power: float | None = None
    ref_freq: float = 50.0
    system_damping: float | None = None  # D_s override

    def __post_init__(self) -> None:
        for name in (
            "governor_gain_inv", "inertia", "turbine_coeff", "turbine_time",
            "damping", "vsg_droop", "vsg_inertia", "sync_share", "vsg_share",
            "nonvsg_share", "ref_freq",
        ):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidParams(f"{name} must be finite, got {value!r}")
        for name in ("governor_gain_inv", "inertia", "turbine_time", "ref_freq"):
            if getattr(self, name) <= 0.0:
                raise InvalidParams(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("turbine_coeff", "vsg_droop", "vsg_inertia", "sync_share", "vsg_share", "nonvsg_share"):
            if getattr(self, name) < 0.0:
                raise InvalidParams(f"{name} must be non-negative, got {getattr(self, name)!r}")
        shares = math.fsum((self.sync_share, self.vsg_share, self.nonvsg_share))
        if abs(shares - 1.0) > SHARE_SUM_TOL:
            raise InvalidParams(f"K + K1 + K2 = {shares!r}, expected 1")
        if self.vsg_share > 0.0 and not self.vsg_droop > 0.0:
            raise InvalidParams("vsg_droop must be positive when vsg_share > 0")
        if (self.gen_power is None) != (self.load_power is None):
            raise InvalidParams("set both gen_power and load_power or neither")

    @property
    def governor_coeff(self) -> float:
        """R."""
        return 1.0 / self.governor_gain_inv

    def replace(self, **changes: Any) -> SfrParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class AggregatedSfr:
    h_s: float
    a_s: float
    r_s: float
    d_s: float
    sync_share: float

    def to_dict(self) -> dict[str, float]:
        return {"H_s": self.h_s, "a_s": self.a_s, "R_s": self.r_s, "D_s": self.d_s, "K": self.sync_share}


def aggregate(params: SfrParams) -> AggregatedSfr:
    """Equivalent single-machine coefficients of the VSG-SFR model."""
    K, K1 = params.sync_share, params.vsg_share
    R = params.governor_coeff
    vsg_gain = R * K1 / params.vsg_droop if K1 > 0.0 else 0.0
    den = K + vsg_gain
    if not den > 0.0:
        raise DegenerateAggregation(f"K + R*K1/delta_w = {den!r} is not positive")
    h_s = K * params.inertia + K1 * params.vsg_inertia
    a_s = (K * params.turbine_coeff + vsg_gain) / den
    r_s = K / den * R
    if not (h_s > 0.0 and r_s > 0.0):
        raise DegenerateAggregation(f"aggregation gives H_s={h_s!r}, R_s={r_s!r}")
    d_s = params.damping if params.system_damping is None else params.system_damping
    return AggregatedSfr(h_s=h_s, a_s=a_s, r_s=r_s, d_s=d_s, sync_share=K)


def swing_matrix(agg: AggregatedSfr, turbine_time: float) -> NDArray[np.float64]:
    """2x2 governor/frequency block of the state matrix."""
    T, K = turbine_time, agg.sync_share
    return np.array(
        [
            [-1.0 / T, (1.0 - agg.a_s) / (agg.r_s * T)],
            [-K / (2.0 * agg.h_s), -(agg.d_s + K * agg.a_s / agg.r_s) / (2.0 * agg.h_s)],
        ]
    )


def state_matrix(agg: AggregatedSfr, turbine_time: float, drift_rate: float) -> NDArray[np.float64]:
    A = np.zeros((3, 3))
    A[:2, :2] = swing_matrix(agg, turbine_time)
    A[1, 2] = 1.0 / (2.0 * agg.h_s)
    A[2, 2] = -drift_rate
    return A


def check_stable(A: NDArray[np.float64]) -> NDArray[np.complex128]:
    eig = np.linalg.eigvals(A)
    worst = eig[np.argmax(eig.real)]
    if not worst.real < 0.0:
        raise UnstableSystem(f"eigenvalue {worst:.6g} has non-negative real part", eigenvalue=complex(worst))
    return eig


@dataclass(frozen=True)
class LinearSdeSystem:
    """Per-component linear SDEs ``dX = (A X + c_i) dt + B_i dW`` sharing ``A`` and ``x0``."""

    state_matrix: NDArray[np.float64]
    constants: NDArray[np.float64]  # (n_components, 3)
    diffusions: NDArray[np.float64]  # (n_components, 3)
    initial_state: NDArray[np.float64]
    weights: NDArray[np.float64]
    eigenvalues: NDArray[np.complex128] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        A = np.array(self.state_matrix, dtype=float)
        c = np.atleast_2d(np.array(self.constants, dtype=float))
        B = np.atleast_2d(np.array(self.diffusions, dtype=float))
        x0 = np.array(self.initial_state, dtype=float).ravel()
        w = np.array(self.weights, dtype=float).ravel()
        if A.shape != (3, 3) or x0.shape != (3,):
            raise ValueError("state matrix must be 3x3 and initial state a 3-vector")
        if c.shape != (w.size, 3) or B.shape != (w.size, 3):
            raise ValueError("need one constant and one diffusion 3-vector per weight")
        if np.any(B[:, :2] != 0.0):
            raise ValueError("diffusion vectors may only act on the wind-power state")
        if not np.all(np.isfinite(A)):
            raise UnstableSystem("state matrix has non-finite entries")
        eig = check_stable(A)
        for name, arr in (("state_matrix", A), ("constants", c), ("diffusions", B),
                          ("initial_state", x0), ("weights", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        eig.setflags(write=False)
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def slowest_rate(self) -> float:
        """``min |Re(lambda)|`` over the eigenvalues of ``A``."""
        return float(np.min(np.abs(self.eigenvalues.real)))

    @property
    def fastest_rate(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def to_dict(self) -> dict[str, Any]:
        return {
            "state_order": list(STATE_NAMES),
            "A": self.state_matrix.tolist(),
            "eigenvalues": [[float(e.real), float(e.imag)] for e in self.eigenvalues],
            "x0": self.initial_state.tolist(),
            "components": [
                {"weight": float(w), "c": c.tolist(), "B": b.tolist()}
                for w, c, b in zip(self.weights, self.constants, self.diffusions)
            ],
        }


def net_imbalance(params: SfrParams, process: GeneralizedItoProcess) -> float:
    """Deterministic part ``P_G - P_L`` of the power imbalance."""
    if params.gen_power is None:
        return -float(sum(c.weight * c.drift_target for c in process.components))
    return params.gen_power - params.load_power


def build_sde_system(
    agg: AggregatedSfr,
    params: SfrParams,
    process: GeneralizedItoProcess,
    x0_override: ArrayLike | None = None,
) -> LinearSdeSystem:
    """Assemble ``A``, ``c_i``, ``B_i`` and ``x0`` for every Itô component.

    Raises:
        UnstableSystem: Some eigenvalue of ``A`` has non-negative real part.
    """
    lam = process.drift_rate
    A = state_matrix(agg, params.turbine_time, lam)
    forcing = net_imbalance(params, process) / (2.0 * agg.h_s)
    consts = np.array([[0.0, forcing, comp.drift_constant] for comp in process.components])
    diffs = np.array([[0.0, 0.0, comp.diffusion] for comp in process.components])
    if x0_override is None:
        x0 = np.array([0.0, 0.0, process.initial_value])
    else:
        x0 = np.asarray(x0_override, dtype=float).ravel()
    return LinearSdeSystem(A, consts, diffs, x0, process.weights)


@dataclass(frozen=True)
class StepResponse:
    """Deterministic frequency response to a constant power step.

    ``nadir`` is the extreme deviation in the direction of the disturbance.
    """

    times: NDArray[np.float64]
    df: NDArray[np.float64]
    tg: NDArray[np.float64]
    nadir: float
    nadir_time: float
    steady_state: float
    initial_rocof: float


def step_response(
    agg: AggregatedSfr,
    params: SfrParams,
    disturbance: float,
    t_grid: Sequence[float] | ArrayLike,
) -> StepResponse:
    """Exact response of the 2-state deterministic model to a step ``disturbance``.

    ``x(t) = e^{A t} (x0 + A^{-1} b) - A^{-1} b`` with ``x0 = 0`` and
    ``b = [0, disturbance / (2 H_s)]``.
    """
    A2 = swing_matrix(agg, params.turbine_time)
    check_stable(A2)
    times = np.asarray(t_grid, dtype=float).ravel()
    b = np.array([0.0, disturbance / (2.0 * agg.h_s)])
    offset = np.linalg.solve(A2, b)
    states = np.empty((times.size, 2))
    for k, t in enumerate(times):
        states[k] = matrix_exponential(A2 * t) @ offset - offset
    df = states[:, 1]
    if disturbance < 0.0:
        idx = int(np.argmin(df))
    elif disturbance > 0.0:
        idx = int(np.argmax(df))
    else:
        idx = 0
    return StepResponse(
        times=times,
        df=df,
        tg=states[:, 0],
        nadir=float(df[idx]),
        nadir_time=float(times[idx]),
        steady_state=float(-offset[1]),
        initial_rocof=disturbance / (2.0 * agg.h_s),
    )
