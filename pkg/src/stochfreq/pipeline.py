"""End-to-end run: ingest, fit, decompose, build, solve, compare, emit.

A run directory always holds ``manifest.json``. Its ``status`` is ``running``
while stages execute, ``complete`` after the last artifact is written and
``incomplete`` (with the error category and message) if a stage failed.
"""

from __future__ import annotations

import json
import os
import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Iterator

import numpy as np
import scipy

from .analytic import FrequencyMixture, solve_mixture, write_mixture_csvs
from .errors import ConfigError, RunIOError, StochFreqError
from .gmm import EmReport, Gmm, em_fit, moment_match
from .ito import GeneralizedItoProcess, from_gmm
from .mcs import McsResult, simulate, write_capture_csv
from .metrics import MetricRow, compare_to_reference, summary_tables, write_metrics_csv
from .quantiles import QuantileSeries, load_quantile_series, sample
from .scenario import Scenario
from .sfr import LinearSdeSystem, aggregate, build_sde_system

OUTPUT_ENV = "STOCHFREQ_OUT"
MANIFEST = "manifest.json"
TIME_MERGE_TOL = 1e-9


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def resolve_output_dir(scenario: Scenario, override: str | Path | None = None) -> Path:
    """``--out`` wins, then ``output.dir``, then ``$STOCHFREQ_OUT/<name>``, then ``runs/<name>``."""
    if override is not None:
        return Path(override)
    if scenario.output_dir is not None:
        return scenario.output_dir
    root = os.environ.get(OUTPUT_ENV)
    return Path(root or "runs") / scenario.name


def merge_times(base: list[float], extra: list[float]) -> list[float]:
    """Union of two time lists, treating values within ``1e-9`` as equal."""
    out = sorted(base)
    for t in extra:
        if not any(abs(t - s) <= TIME_MERGE_TOL for s in out):
            out.append(t)
    return sorted(out)


def check_consistency(scenario: Scenario, with_mcs: bool) -> None:
    """Cross-key checks that need more than one section of the scenario.

    Raises:
        ConfigError: Metric times not captured, or capture times beyond ``mcs.t_end``.
    """
    if not with_mcs:
        return
    for t in scenario.metric_times:
        if not any(abs(t - c) <= TIME_MERGE_TOL for c in scenario.capture_times):
            raise ConfigError(f"metrics time {t!r} is not in `mcs.capture_times`")
    if max(scenario.capture_times) > scenario.mcs.t_end + TIME_MERGE_TOL:
        raise ConfigError("`mcs.capture_times` extends beyond `mcs.t_end`")


@dataclass
class Method:
    """One analytic route through the pipeline (the GMM method or the DSM baseline)."""

    label: str
    gmm: Gmm
    process: GeneralizedItoProcess
    system: LinearSdeSystem
    mixture: FrequencyMixture
    report: EmReport | None = None


@dataclass
class RunResult:
    out_dir: Path
    scenario: Scenario
    methods: dict[str, Method]
    mcs: McsResult | None
    metrics: list[MetricRow]
    timings: dict[str, float]
    manifest: dict[str, Any] = field(default_factory=dict)


class _Stages:
    def __init__(self) -> None:
        self.timings: dict[str, float] = {}

    @contextmanager
    def __call__(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start


def _write_json(path: Path, payload: Any) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def _initial_state(scenario: Scenario, process: GeneralizedItoProcess) -> np.ndarray:
    init = scenario.init
    return np.array([init.get("tg", 0.0), init.get("df", 0.0), init.get("pw", process.initial_value)])


def _method(
    label: str, model: Gmm, scenario: Scenario, times: list[float], threads: int,
    stage: _Stages, report: EmReport | None = None,
) -> Method:
    with stage(f"{label}.decompose"):
        process = from_gmm(model, scenario.lambda_w, scenario.init.get("pw"))
    with stage(f"{label}.build"):
        agg = aggregate(scenario.sfr)
        system = build_sde_system(agg, scenario.sfr, process, _initial_state(scenario, process))
    with stage(f"{label}.solve"):
        mixture = solve_mixture(system, times, threads=threads)
    return Method(label, model, process, system, mixture, report)


def run(
    scenario: Scenario,
    out_dir: str | Path | None = None,
    *,
    with_mcs: bool | None = None,
    seed: int | None = None,
    threads: int = 1,
) -> RunResult:
    """Execute the pipeline and write every artifact into the run directory.

    Args:
        scenario: Validated scenario.
        out_dir: Run directory; see :func:`resolve_output_dir` for the default.
        with_mcs: Override ``mcs.enabled``.
        seed: Replaces both the GMM seed and the Monte Carlo master seed.
        threads: Worker threads for the analytic solve and the Monte Carlo blocks.

    Raises:
        StochFreqError: Any typed failure; the manifest is then marked incomplete.
    """
    if seed is not None:
        scenario.gmm.seed = int(seed)
        scenario.mcs = type(scenario.mcs)(**{**scenario.mcs.to_dict(), "master_seed": int(seed)})
    use_mcs = scenario.mcs_enabled if with_mcs is None else with_mcs
    check_consistency(scenario, use_mcs)

    out = resolve_output_dir(scenario, out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for stale in out.iterdir():
            if stale.is_file() and stale.suffix in {".csv", ".json", ".txt", ".dat"}:
                stale.unlink()
    except OSError as exc:
        raise RunIOError(f"cannot prepare output directory {out}: {exc}") from exc

    manifest: dict[str, Any] = {
        "status": "running",
        "scenario": str(scenario.source) if scenario.source else scenario.name,
        "started": datetime.now(timezone.utc).isoformat(),
        "versions": {
            "artifact": package_version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "seeds": {
            "gmm": scenario.gmm.seed,
            "sample": scenario.gmm.seed,
            "mcs_master": scenario.mcs.master_seed,
        },
        "threads": threads,
    }
    _write_json(out / MANIFEST, manifest)

    stage = _Stages()
    try:
        result = _execute(scenario, out, use_mcs, threads, stage, manifest)
    except StochFreqError as exc:
        manifest.update(status="incomplete", error={"category": exc.category, "message": str(exc)})
        manifest["timings_s"] = stage.timings
        _write_json(out / MANIFEST, manifest)
        raise
    except OSError as exc:
        manifest.update(status="incomplete", error={"category": "io", "message": str(exc)})
        _write_json(out / MANIFEST, manifest)
        raise RunIOError(str(exc)) from exc
    return result


def _execute(
    scenario: Scenario, out: Path, use_mcs: bool, threads: int,
    stage: _Stages, manifest: dict[str, Any],
) -> RunResult:
    samples = None
    series: QuantileSeries | None = None
    report: EmReport | None = None
    if scenario.inline_gmm is not None:
        model = scenario.inline_gmm
    else:
        with stage("ingest"):
            series = load_quantile_series(scenario.quantiles_path)
            samples = sample(series, scenario.gmm.sample_count, scenario.gmm.seed,
                             scenario.p_min, scenario.p_max)
        g = scenario.gmm
        with stage("fit"):
            model, report = em_fit(samples, g.n, g.tol, g.max_iter, g.seed)
    _write_json(out / "gmm.json", model.to_dict())

    times = merge_times(scenario.times, scenario.capture_times + scenario.metric_times)
    methods = {"nsa_gip": _method("nsa_gip", model, scenario, times, threads, stage, report)}
    if scenario.dsm_baseline:
        with stage("dsm.fit"):
            if samples is None:
                dsm_model, dsm_report = moment_match(model), None
            else:
                dsm_model, dsm_report = em_fit(samples, 1, scenario.gmm.tol, scenario.gmm.max_iter, scenario.gmm.seed)
        methods["dsm"] = _method("dsm", dsm_model, scenario, times, threads, stage, dsm_report)
        _write_json(out / "gmm_dsm.json", dsm_model.to_dict())

    main = methods["nsa_gip"]
    _write_json(out / "ito.json", main.process.to_dict())
    agg = aggregate(scenario.sfr)
    _write_json(out / "system.json", {"aggregated": agg.to_dict(), **main.system.to_dict()})
    with stage("write"):
        for label, m in methods.items():
            prefix = "" if label == "nsa_gip" else f"{label}_"
            write_mixture_csvs(m.mixture, out / f"{prefix}mixture_components.csv",
                               out / f"{prefix}mixture_summary.csv")

    mcs = None
    rows: list[MetricRow] = []
    if use_mcs:
        with stage("mcs"):
            mcs = simulate(main.system, scenario.mcs, scenario.capture_times, threads=threads)
        with stage("write"):
            for t in scenario.capture_times:
                write_capture_csv(mcs, t, out / f"mcs_t{t:g}.csv")
        with stage("metrics"):
            for label, m in methods.items():
                rows += [r for r in compare_to_reference(label, m.mixture, mcs, scenario.metric_times, scenario.alphas)
                         if r.metric != "mcs.std" or label == "nsa_gip"]
            write_metrics_csv(rows, out / "metrics.csv")
            (out / "metrics_summary.txt").write_text(summary_tables(rows) + "\n")

    analytic_s = sum(v for k, v in stage.timings.items() if k.startswith("nsa_gip.") or k in ("fit", "ingest"))
    manifest.update(
        status="complete",
        finished=datetime.now(timezone.utc).isoformat(),
        input={
            "kind": "inline_gmm" if series is None else "quantiles",
            "path": None if series is None else str(scenario.quantiles_path),
            "horizon_id": None if series is None else series.horizon_id,
            "R": None if series is None else len(series.proportions),
            "sample_count": None if series is None else scenario.gmm.sample_count,
            "p_bounds": [scenario.p_min, scenario.p_max],
        },
        n_w=model.n_components,
        lambda_w=scenario.lambda_w,
        em=None if report is None else {
            "iterations": report.iterations,
            "converged": report.converged,
            "final_log_likelihood": report.final_log_likelihood,
            "floor_resets": report.floor_resets,
        },
        solver={"n_times": len(times), "t_end": max(times)},
        mcs=None if mcs is None else {
            "n_paths": scenario.mcs.n_paths,
            "dt": scenario.mcs.dt,
            "t_end": scenario.mcs.t_end,
            "block_size": scenario.mcs.block_size,
            "capture_times": scenario.capture_times,
        },
        dsm_baseline=scenario.dsm_baseline,
        timings_s=stage.timings,
        wall_clock_s={
            "analytic": analytic_s,
            "mcs": stage.timings.get("mcs"),
        },
    )
    _write_json(out / MANIFEST, manifest)
    return RunResult(out, scenario, methods, mcs, rows, stage.timings, manifest)


def read_manifest(run_dir: str | Path) -> dict[str, Any]:
    path = Path(run_dir) / MANIFEST
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise RunIOError(f"{run_dir} has no {MANIFEST}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise RunIOError(f"cannot read {path}: {exc}") from exc
