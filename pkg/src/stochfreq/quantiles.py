"""Predictive quantile series of wind power and inverse-transform sampling.

A quantile series is a list of ``(proportion, value)`` knots. Between knots the
inverse CDF is piecewise linear; outside ``[alpha_1, alpha_R]`` the end segments
are extended linearly and clamped to the physical range ``[lower, upper]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    CrossingQuantiles,
    LengthMismatch,
    MalformedRecord,
    NonMonotoneProportions,
    ProportionOutOfRange,
    RunIOError,
    UOutOfRange,
)

DEFAULT_SAMPLE_COUNT = 10_000


@dataclass(frozen=True)
class QuantileSeries:
    """Nonparametric predictive distribution at one forecast instant.

    Attributes:
        proportions: Nominal proportions, strictly increasing inside (0, 1).
        values: Quantile values in per-unit power, non-decreasing.
        horizon_id: Opaque label of the forecast instant.
    """

    proportions: tuple[float, ...]
    values: tuple[float, ...]
    horizon_id: str = ""

    def __post_init__(self) -> None:
        _validate(self.proportions, self.values)

    @property
    def size(self) -> int:
        return len(self.proportions)

    def to_dict(self) -> dict[str, Any]:
        return {
            "proportions": list(self.proportions),
            "values": list(self.values),
            "horizon_id": self.horizon_id,
        }


def _validate(proportions: tuple[float, ...], values: tuple[float, ...]) -> None:
    if len(proportions) != len(values):
        raise LengthMismatch(
            f"{len(proportions)} proportions but {len(values)} values"
        )
    if len(proportions) < 2:
        raise LengthMismatch(f"need at least 2 quantiles, got {len(proportions)}")
    for a in proportions:
        if not (0.0 < a < 1.0):
            raise ProportionOutOfRange(f"proportion {a!r} not in (0, 1)")
    for v in values:
        if not math.isfinite(v):
            raise MalformedRecord(f"quantile value {v!r} is not finite")
    for k in range(1, len(proportions)):
        if not proportions[k] > proportions[k - 1]:
            raise NonMonotoneProportions(
                f"proportions not strictly increasing at index {k}: "
                f"{proportions[k - 1]!r} -> {proportions[k]!r}"
            )
    for k in range(1, len(values)):
        if values[k] < values[k - 1]:
            raise CrossingQuantiles(
                f"quantile values cross at index {k}: "
                f"{values[k - 1]!r} -> {values[k]!r}"
            )


def _as_floats(raw: Any, key: str) -> tuple[float, ...]:
    if isinstance(raw, (str, bytes)) or not hasattr(raw, "__iter__"):
        raise MalformedRecord(f"`{key}` must be an array of decimals")
    out = []
    for item in raw:
        if isinstance(item, bool):
            raise MalformedRecord(f"`{key}` contains a boolean")
        try:
            out.append(float(item))
        except (TypeError, ValueError):
            raise MalformedRecord(f"`{key}` contains non-numeric entry {item!r}")
    return tuple(out)


def parse_quantile_series(raw: Mapping[str, Any]) -> QuantileSeries:
    """Validate a raw record into a :class:`QuantileSeries`.

    Crossing quantiles are rejected rather than sorted.

    Raises:
        MalformedRecord: Missing keys or non-numeric entries.
        NonMonotoneProportions, CrossingQuantiles, LengthMismatch,
        ProportionOutOfRange: Invariant violations.
    """
    if not isinstance(raw, Mapping):
        raise MalformedRecord("quantile record must be a mapping")
    for key in ("proportions", "values"):
        if key not in raw:
            raise MalformedRecord(f"missing key `{key}`")
    proportions = _as_floats(raw["proportions"], "proportions")
    values = _as_floats(raw["values"], "values")
    horizon = raw.get("horizon_id", "")
    return QuantileSeries(proportions, values, "" if horizon is None else str(horizon))


def load_quantile_series(path: str | Path) -> QuantileSeries:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise RunIOError(f"cannot read quantile file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"{path}: invalid JSON: {exc}") from exc
    return parse_quantile_series(raw)


def inverse_cdf(
    series: QuantileSeries,
    u: ArrayLike,
    lower: float = 0.0,
    upper: float = 1.0,
) -> NDArray[np.float64] | float:
    """Evaluate the piecewise-linear inverse CDF at probability ``u``.

    Args:
        series: Validated quantile series.
        u: Probability or array of probabilities in the open interval (0, 1).
        lower: Physical lower bound applied to extrapolated tails.
        upper: Physical upper bound (``p_max``) applied to extrapolated tails.

    Raises:
        UOutOfRange: Any ``u`` outside (0, 1).
    """
    scalar = np.ndim(u) == 0
    uu = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(~((uu > 0.0) & (uu < 1.0))):
        raise UOutOfRange("u must lie in the open interval (0, 1)")

    a = np.asarray(series.proportions)
    q = np.asarray(series.values)
    out = np.interp(uu, a, q)

    lo = uu < a[0]
    if np.any(lo):
        slope = (q[1] - q[0]) / (a[1] - a[0])
        out[lo] = np.clip(q[0] + slope * (uu[lo] - a[0]), min(lower, q[0]), q[0])
    hi = uu > a[-1]
    if np.any(hi):
        slope = (q[-1] - q[-2]) / (a[-1] - a[-2])
        out[hi] = np.clip(q[-1] + slope * (uu[hi] - a[-1]), q[-1], max(upper, q[-1]))

    return float(out[0]) if scalar else out


def sample(
    series: QuantileSeries,
    count: int = DEFAULT_SAMPLE_COUNT,
    seed: int | None = 0,
    lower: float = 0.0,
    upper: float = 1.0,
) -> NDArray[np.float64]:
    """Draw ``count`` i.i.d. power values by inverse-transform sampling."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    u = rng.random(count)
    # Generator.random is in [0, 1); zero has probability ~2^-53 but is not in the domain
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    return inverse_cdf(series, u, lower, upper)
