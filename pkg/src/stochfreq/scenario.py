"""Scenario files: one YAML (or JSON) document with dotted keys.

Keys may be written nested (``sfr: {H: 4.96}``) or flat (``sfr.H: 4.96``).
The inline mixture under ``input.gmm`` is kept as a record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .analytic import DEFAULT_T_END, DEFAULT_T_STEP, REPORT_TIMES, default_time_grid
from .errors import ConfigError, RunIOError
from .gmm import DEFAULT_COMPONENTS, DEFAULT_MAX_ITER, DEFAULT_TOL, Gmm
from .ito import DEFAULT_DRIFT_RATE
from .mcs import DEFAULT_DT, DEFAULT_PATHS, McsConfig
from .metrics import DEFAULT_ALPHAS
from .quantiles import DEFAULT_SAMPLE_COUNT
from .sfr import SfrParams

SFR_REQUIRED = ("inv_R", "H", "a", "T", "D", "delta_w", "H_w", "K", "K1", "K2")
SFR_OPTIONAL = ("P_G", "P_L", "f0", "D_s")

KNOWN_KEYS = {
    "input.quantiles", "input.gmm", "input.p_min", "input.p_max",
    "gmm.n", "gmm.tol", "gmm.max_iter", "gmm.seed", "gmm.sample_count",
    *(f"sfr.{k}" for k in SFR_REQUIRED + SFR_OPTIONAL),
    "ito.lambda_w",
    "init.tg", "init.df", "init.pw",
    "solver.t_end", "solver.dt", "solver.times",
    "mcs.enabled", "mcs.n_paths", "mcs.dt", "mcs.t_end", "mcs.seed", "mcs.capture_times",
    "metrics.alphas", "metrics.times",
    "baseline.dsm",
    "output.dir",
    "name",
}

_LEAF_RECORDS = {"input.gmm"}


def flatten(raw: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in raw.items():
        full = f"{prefix}{key}"
        if isinstance(value, Mapping) and full not in _LEAF_RECORDS:
            out.update(flatten(value, f"{full}."))
        else:
            if full in out:
                raise ConfigError(f"key `{full}` given twice")
            out[full] = value
    return out


@dataclass
class GmmSettings:
    n: int = DEFAULT_COMPONENTS
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    seed: int = 0
    sample_count: int = DEFAULT_SAMPLE_COUNT


@dataclass
class Scenario:
    """Validated experiment description."""

    sfr: SfrParams
    quantiles_path: Path | None = None
    inline_gmm: Gmm | None = None
    p_min: float = 0.0
    p_max: float = 1.0
    gmm: GmmSettings = field(default_factory=GmmSettings)
    lambda_w: float = DEFAULT_DRIFT_RATE
    init: dict[str, float] = field(default_factory=dict)
    times: list[float] = field(default_factory=lambda: default_time_grid().tolist())
    mcs_enabled: bool = True
    mcs: McsConfig = field(default_factory=McsConfig)
    capture_times: list[float] = field(default_factory=lambda: list(REPORT_TIMES))
    alphas: list[float] = field(default_factory=lambda: list(DEFAULT_ALPHAS))
    metric_times: list[float] = field(default_factory=lambda: list(REPORT_TIMES))
    dsm_baseline: bool = False
    output_dir: Path | None = None
    name: str = "scenario"
    source: Path | None = None


def _num(flat: Mapping[str, Any], key: str, default: Any = None, *, kind: type = float) -> Any:
    if key not in flat:
        if default is ConfigError:
            raise ConfigError(f"missing required key `{key}`")
        return default
    value = flat[key]
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"`{key}` must be a number, got {value!r}")
    try:
        if kind is int:
            if float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"`{key}` must be {'an integer' if kind is int else 'a number'}, got {value!r}")
    if not math.isfinite(out):
        raise ConfigError(f"`{key}` must be finite, got {value!r}")
    return out


def _num_list(flat: Mapping[str, Any], key: str, default: list[float]) -> list[float]:
    if key not in flat:
        return list(default)
    value = flat[key]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"`{key}` must be a non-empty list of numbers")
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"`{key}` must be a list of numbers, got {value!r}")
    if not all(math.isfinite(v) for v in out):
        raise ConfigError(f"`{key}` has non-finite entries")
    return out


def _bool(flat: Mapping[str, Any], key: str, default: bool) -> bool:
    value = flat.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"`{key}` must be true or false, got {value!r}")
    return value


def parse_scenario(raw: Mapping[str, Any], base_dir: Path | None = None) -> Scenario:
    """Validate a scenario mapping.

    Raises:
        ConfigError: Unknown or missing keys, wrong types, invalid parameters.
    """
    if not isinstance(raw, Mapping):
        raise ConfigError("scenario must be a mapping")
    flat = flatten(raw)
    unknown = sorted(set(flat) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown scenario key(s): {', '.join(f'`{k}`' for k in unknown)}")
    base_dir = base_dir or Path(".")

    has_q = "input.quantiles" in flat
    has_g = "input.gmm" in flat
    if has_q == has_g:
        raise ConfigError("give exactly one of `input.quantiles` and `input.gmm`")
    quantiles_path = inline = None
    if has_q:
        if not isinstance(flat["input.quantiles"], str):
            raise ConfigError("`input.quantiles` must be a file path")
        quantiles_path = Path(flat["input.quantiles"])
        if not quantiles_path.is_absolute():
            quantiles_path = base_dir / quantiles_path
    else:
        record = flat["input.gmm"]
        if not isinstance(record, Mapping):
            raise ConfigError("`input.gmm` must be a record with `components`")
        inline = Gmm.from_dict(record)

    s = {k: _num(flat, f"sfr.{k}", ConfigError) for k in SFR_REQUIRED}
    pg, pl = _num(flat, "sfr.P_G"), _num(flat, "sfr.P_L")
    sfr = SfrParams(
        governor_gain_inv=s["inv_R"], inertia=s["H"], turbine_coeff=s["a"],
        turbine_time=s["T"], damping=s["D"], vsg_droop=s["delta_w"],
        vsg_inertia=s["H_w"], sync_share=s["K"], vsg_share=s["K1"],
        nonvsg_share=s["K2"], gen_power=pg, load_power=pl,
        ref_freq=_num(flat, "sfr.f0", 50.0), system_damping=_num(flat, "sfr.D_s"),
    )

    gmm = GmmSettings(
        n=_num(flat, "gmm.n", DEFAULT_COMPONENTS, kind=int),
        tol=_num(flat, "gmm.tol", DEFAULT_TOL),
        max_iter=_num(flat, "gmm.max_iter", DEFAULT_MAX_ITER, kind=int),
        seed=_num(flat, "gmm.seed", 0, kind=int),
        sample_count=_num(flat, "gmm.sample_count", DEFAULT_SAMPLE_COUNT, kind=int),
    )
    if gmm.n < 1 or gmm.sample_count < 1 or gmm.max_iter < 0 or not gmm.tol > 0:
        raise ConfigError("gmm settings must be positive")

    if "solver.times" in flat:
        times = sorted(set(_num_list(flat, "solver.times", [])))
    else:
        t_end = _num(flat, "solver.t_end", DEFAULT_T_END)
        dt = _num(flat, "solver.dt", DEFAULT_T_STEP)
        if not (dt > 0 and t_end >= 0):
            raise ConfigError("solver.dt must be positive and solver.t_end non-negative")
        times = default_time_grid(t_end, dt).tolist()
    if min(times) < 0:
        raise ConfigError("solver times must be non-negative")

    capture = sorted(set(_num_list(flat, "mcs.capture_times", list(REPORT_TIMES))))
    try:
        mcs = McsConfig(
            n_paths=_num(flat, "mcs.n_paths", DEFAULT_PATHS, kind=int),
            dt=_num(flat, "mcs.dt", DEFAULT_DT),
            t_end=_num(flat, "mcs.t_end", max(capture)),
            master_seed=_num(flat, "mcs.seed", 0, kind=int),
        )
    except ValueError as exc:
        raise ConfigError(f"mcs: {exc}") from exc

    init = {k: _num(flat, f"init.{k}") for k in ("tg", "df", "pw") if f"init.{k}" in flat}
    lam = _num(flat, "ito.lambda_w", DEFAULT_DRIFT_RATE)
    if not lam > 0:
        raise ConfigError("`ito.lambda_w` must be positive")

    alphas = _num_list(flat, "metrics.alphas", list(DEFAULT_ALPHAS))
    if not all(0 < a < 1 for a in alphas):
        raise ConfigError("`metrics.alphas` must lie in (0, 1)")

    out = flat.get("output.dir")
    if out is not None and not isinstance(out, str):
        raise ConfigError("`output.dir` must be a path")

    return Scenario(
        sfr=sfr,
        quantiles_path=quantiles_path,
        inline_gmm=inline,
        p_min=_num(flat, "input.p_min", 0.0),
        p_max=_num(flat, "input.p_max", 1.0),
        gmm=gmm,
        lambda_w=lam,
        init=init,
        times=times,
        mcs_enabled=_bool(flat, "mcs.enabled", True),
        mcs=mcs,
        capture_times=capture,
        alphas=alphas,
        metric_times=sorted(set(_num_list(flat, "metrics.times", capture))),
        dsm_baseline=_bool(flat, "baseline.dsm", False),
        output_dir=None if out is None else (Path(out) if Path(out).is_absolute() else base_dir / out),
        name=str(flat.get("name", "scenario")),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise RunIOError(f"cannot read scenario {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: cannot parse scenario: {exc}") from exc
    scenario = parse_scenario(raw or {}, base_dir=path.parent)
    scenario.source = path
    if scenario.name == "scenario":
        scenario.name = path.stem
    return scenario
