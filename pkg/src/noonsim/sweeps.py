"""Robustness studies: 1-D parameter sweeps and combined-factor scenarios.

A sweep runs one protocol simulation per grid point, varying exactly one
of

    delta            multiplicative resonant-drive error      (dimensionless)
    delta_omega      off-resonant drive offset                (MHz)
    delta_lambda     coupling drift                           (MHz)
    crosstalk_ratio  lambda_12 / lambda_k                     (dimensionless)
    gamma_d          qudit dephasing rate                     (kHz)
    gamma_r          qudit relaxation rate                    (kHz)
    gamma_kappa      cavity photon loss rate                  (kHz)

with every other disturbance at its baseline (zero unless overridden).
Rows are emitted in grid order regardless of execution order, and results
are identical for any parallelism degree; a failed point is recorded in
its row without aborting the sweep.

Scenario runs apply several disturbances at once (Table-II style) under
the dispersive density-matrix backend, which is the only backend where
coupling drifts, drive offsets, crosstalk and the full collapse set are
all representable at tractable cost.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import DecoherenceRates, IntegratorConfig
from .hamiltonians import ErrorModel, SystemParams
from .protocol import derive_params, run_protocol

TWO_PI = 2.0 * math.pi

PARAM_NAMES = (
    "delta",
    "delta_omega",
    "delta_lambda",
    "crosstalk_ratio",
    "gamma_d",
    "gamma_r",
    "gamma_kappa",
)
RATE_PARAMS = ("gamma_d", "gamma_r", "gamma_kappa")

# validated sweep domains; values outside these were not studied
DOMAINS = {
    "delta": (-0.3, 0.3),
    "crosstalk_ratio": (-0.02, 0.02),
    "gamma_d": (0.0, math.inf),
    "gamma_r": (0.0, math.inf),
    "gamma_kappa": (0.0, math.inf),
}

__all__ = [
    "PARAM_NAMES",
    "SweepSpec",
    "SweepRow",
    "ScenarioSpec",
    "run_sweep",
    "decoherence_sweep",
    "run_scenarios",
]


@dataclass(frozen=True)
class SweepSpec:
    """One-parameter sweep definition (points >= 2, grid order preserved)."""

    parameter: str
    lo: float
    hi: float
    points: int
    n_photons: int = 4
    model: str = "hybrid"
    pulse_shape: str = "optimized"
    system: SystemParams | None = None
    tau1: float = 0.01
    t_final: float = 15.0
    baseline_errors: ErrorModel = ErrorModel()
    baseline_decoherence: DecoherenceRates = DecoherenceRates()
    integrator: IntegratorConfig = IntegratorConfig()
    cavity_dim: int | None = None
    sample_count: int = 61
    jobs: int = 1

    def __post_init__(self):
        if self.parameter not in PARAM_NAMES:
            raise ValueError(
                f"parameter must be one of {PARAM_NAMES}, got {self.parameter!r}"
            )
        if self.points < 2:
            raise ValueError(f"a sweep needs at least 2 points, got {self.points}")
        dom = DOMAINS.get(self.parameter)
        if dom is not None and (self.lo < dom[0] or self.hi > dom[1]):
            raise ValueError(
                f"{self.parameter} range [{self.lo}, {self.hi}] outside the "
                f"validated domain {dom}"
            )

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.points)


@dataclass
class SweepRow:
    param_value: float
    f3_final: float
    warnings: list = field(default_factory=list)
    error: str | None = None


def _point_inputs(spec: SweepSpec, value: float):
    """(errors, decoherence) for one grid point of the swept parameter."""
    err = spec.baseline_errors
    dec = spec.baseline_decoherence
    p = spec.parameter
    if p == "delta":
        err = replace(err, delta=value)
    elif p == "delta_omega":
        err = replace(err, delta_omega=TWO_PI * value)
    elif p == "delta_lambda":
        err = replace(err, delta_lambda=TWO_PI * value)
    elif p == "crosstalk_ratio":
        err = replace(err, crosstalk_ratio=value)
    elif p == "gamma_d":
        dec = replace(dec, gamma_d_khz=value)
    elif p == "gamma_r":
        dec = replace(dec, gamma_r_khz=value)
    elif p == "gamma_kappa":
        dec = replace(dec, gamma_kappa_khz=value)
    return err, dec


def _run_point(args):
    spec, value = args
    errors, decoherence = _point_inputs(spec, value)
    pp = derive_params(
        spec.n_photons, spec.system, tau1=spec.tau1, t_final=spec.t_final
    )
    res = run_protocol(
        pp,
        model=spec.model,
        pulse_shape=spec.pulse_shape,
        errors=errors,
        decoherence=decoherence,
        config=spec.integrator,
        cavity_dim=spec.cavity_dim,
        sample_count=spec.sample_count,
    )
    return res.fidelity_at(3), res.metadata.get("warnings", [])


def _max_jobs(requested: int) -> int:
    cap = os.environ.get("NOONSIM_THREADS")
    if cap:
        requested = min(requested, max(1, int(cap)))
    return max(1, requested)


def run_sweep(spec: SweepSpec) -> list[SweepRow]:
    """Run the sweep; one protocol run per grid point, rows in grid order."""
    values = spec.values()
    tasks = [(spec, float(v)) for v in values]
    rows = [SweepRow(float(v), math.nan) for v in values]
    jobs = _max_jobs(spec.jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = list(pool.map(_run_point_safe, tasks))
        outcomes = futures
    else:
        outcomes = [_run_point_safe(t) for t in tasks]
    for row, (f3, warns, err) in zip(rows, outcomes):
        row.f3_final = f3
        row.warnings = warns
        row.error = err
    return rows


def _run_point_safe(args):
    try:
        f3, warns = _run_point(args)
        return f3, warns, None
    except Exception as exc:  # recorded per-row, sweep continues
        return math.nan, [], f"{type(exc).__name__}: {exc}"


def decoherence_sweep(
    rate_name: str,
    lo: float,
    hi: float,
    points: int,
    model: str = "effective",
    **kwargs,
) -> list[SweepRow]:
    """Sweep exactly one decoherence rate (kHz), others at baseline.

    Defaults to the per-step effective model: decoherence rates (kHz) are
    slow against the scales removed by the reduction, and the full model's
    GHz coefficients would make the density-matrix runs take hours.
    """
    if rate_name not in RATE_PARAMS:
        raise ValueError(f"rate must be one of {RATE_PARAMS}, got {rate_name!r}")
    spec = SweepSpec(
        parameter=rate_name, lo=lo, hi=hi, points=points, model=model, **kwargs
    )
    return run_sweep(spec)


@dataclass(frozen=True)
class ScenarioSpec:
    """One combined-disturbance row (Table-II column order and units)."""

    delta: float = 0.0
    delta_omega_mhz: float = 0.0
    delta_lambda_khz: float = 0.0
    lambda12_ratio: float = 0.0
    gamma_d_khz: float = 0.0
    gamma_r_khz: float = 0.0
    gamma_kappa_khz: float = 0.0

    def errors(self) -> ErrorModel:
        return ErrorModel(
            delta=self.delta,
            delta_omega=TWO_PI * self.delta_omega_mhz,
            delta_lambda=TWO_PI * self.delta_lambda_khz * 1e-3,
            crosstalk_ratio=self.lambda12_ratio,
        )

    def decoherence(self) -> DecoherenceRates:
        return DecoherenceRates(
            gamma_d_khz=self.gamma_d_khz,
            gamma_r_khz=self.gamma_r_khz,
            gamma_kappa_khz=self.gamma_kappa_khz,
        )


def run_scenarios(
    scenarios,
    n_photons: int = 4,
    pulse_shape: str = "optimized",
    system: SystemParams | None = None,
    model: str = "dispersive",
    integrator: IntegratorConfig | None = None,
    cavity_dim: int | None = None,
    sample_count: int = 41,
    tau1: float = 0.01,
    t_final: float = 15.0,
    jobs: int = 1,
) -> list[dict]:
    """Evaluate F3(T) with all disturbances of each scenario applied at once."""
    pp = derive_params(n_photons, system, tau1=tau1, t_final=t_final)
    out = []
    for sc in scenarios:
        row = {
            "delta": sc.delta,
            "delta_omega_mhz": sc.delta_omega_mhz,
            "delta_lambda_khz": sc.delta_lambda_khz,
            "lambda12_ratio": sc.lambda12_ratio,
            "gamma_d_khz": sc.gamma_d_khz,
            "gamma_r_khz": sc.gamma_r_khz,
            "gamma_kappa_khz": sc.gamma_kappa_khz,
            "f3_final": math.nan,
            "error": None,
        }
        try:
            res = run_protocol(
                pp,
                model=model,
                pulse_shape=pulse_shape,
                errors=sc.errors(),
                decoherence=sc.decoherence(),
                config=integrator,
                cavity_dim=cavity_dim,
                sample_count=sample_count,
            )
            row["f3_final"] = res.fidelity_at(3)
        except Exception as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        out.append(row)
    return out
