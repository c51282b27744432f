"""Reference parameter sets used by the bundled scenarios and the test suite."""

from __future__ import annotations

from .gmm import Gmm
from .sfr import SfrParams

# Single-machine data: 1/R, H, a, T, D, delta_w, H_w.
REFERENCE_MACHINE = {
    "governor_gain_inv": 16.5,
    "inertia": 4.96,
    "turbine_coeff": 0.278,
    "turbine_time": 10.0,
    "damping": 1.2,
    "vsg_droop": 0.05,
    "vsg_inertia": 2.0,
}

# Fat right tail: the slow governor mode barely shows in the mixture spread.
DESK_GMM = Gmm.from_arrays(
    weights=(0.6, 0.3, 0.1),
    means=(0.50, 0.52, 0.56),
    variances=(0.0016, 0.0049, 0.0144),
)

# Two well separated modes; a single Gaussian cannot represent the frequency law.
BIMODAL_GMM = Gmm.from_arrays(
    weights=(0.5, 0.5),
    means=(0.2, 0.8),
    variances=(0.002, 0.002),
)


def reference_params(
    sync_share: float = 0.7,
    vsg_share: float = 0.3,
    nonvsg_share: float = 0.0,
    **overrides: float,
) -> SfrParams:
    """Reference machine with the given unit shares ``K``, ``K1``, ``K2``."""
    return SfrParams(
        **{**REFERENCE_MACHINE, **overrides},
        sync_share=sync_share,
        vsg_share=vsg_share,
        nonvsg_share=nonvsg_share,
    )
