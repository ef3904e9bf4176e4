"""Three-step NOON preparation: derived parameters, targets, orchestration.

Step 1 (0 .. tau1) excites the qudit into (|3> + |4>)/sqrt(2) with a
resonant pi-pulse or the optimized error-insensitive pulse.  Step 2
(tau1 .. tau2, duration exactly 2 pi/omega_s2) conditionally displaces
cavity k by alpha0 = sqrt(N) when the qudit sits in |5-k>.  Step 3
(tau2 .. tau3) applies frequency-matched drives that take |3,0,~0> to
|0,0,N> and |4,~0,0> to |0,N,0>, disentangling the qudit.

Four dynamical models are supported:

* ``original``   -- the full rotating-frame Hamiltonian in every step
* ``effective``  -- the per-step reduced generators (exact by design;
  fidelities reach 1 up to truncation/integration error)
* ``hybrid``     -- full model for steps 1-2, dispersive model for step 3
* ``dispersive`` -- the second-order model in every step; the backend for
  combined error+decoherence studies, where the full model's GHz
  timescale would make density-matrix runs intractable
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, hamiltonians, hilbert, pulses
from .dynamics import (
    CollapseSet,
    DecoherenceRates,
    IntegratorConfig,
    build_collapse_set,
)
from .hamiltonians import DriveSet, ErrorModel, NO_ERRORS, SystemParams
from .hilbert import HilbertSpec

__all__ = [
    "ProtocolParams",
    "SimResult",
    "derive_params",
    "target_state",
    "run_protocol",
    "rwa_report",
    "choose_cavity_dim",
    "MODELS",
    "PULSE_SHAPES",
]

MODELS = ("original", "effective", "hybrid", "dispersive")
PULSE_SHAPES = ("pi", "optimized")

DENSITY_DIM_LIMIT = 1500  # direct rho propagation above this -> trajectories


@dataclass(frozen=True)
class ProtocolParams:
    """All derived protocol quantities (angular units, rad/us; times us)."""

    n_photons: int
    system: SystemParams
    tau1: float
    tau2: float
    tau3: float
    alpha0: float
    delta0: float
    omega_s2: float
    omega_s2_amp: float      # Omega_s2, drive amplitude of step 2
    omega_s3_prime: float    # Omega'_s3, constant off-resonant step-3 drive
    delta_tilde: float
    eps_n0: float
    theta_s2: float

    @property
    def lam(self) -> float:
        return self.system.lam

    @property
    def delta_cap(self) -> float:
        return self.system.delta_cap

    @property
    def delta_prime(self) -> float:
        return self.system.delta_prime

    @property
    def modulation(self) -> float:
        """Step-3 drive modulation N delta' + delta_tilde (rad/us)."""
        return self.n_photons * self.delta_prime + self.delta_tilde

    @property
    def step2_duration(self) -> float:
        return self.tau2 - self.tau1


def derive_params(
    n_photons: int,
    system: SystemParams | None = None,
    tau1: float = 0.01,
    t_final: float = 15.0,
) -> ProtocolParams:
    """Derive every protocol quantity from N and the system constants.

    omega_s2 = delta0 + delta' must come out positive, and the step-2
    window tau1 + 2 pi/omega_s2 must fit before t_final.
    """
    if n_photons < 1 or int(n_photons) != n_photons:
        raise ValueError(f"photon number must be a positive integer, got {n_photons}")
    if system is None:
        system = SystemParams.for_photon_number(n_photons)
    lam, delta_cap, delta_prime = system.lam, system.delta_cap, system.delta_prime

    delta0 = lam**2 / delta_cap
    omega_s2 = delta0 + delta_prime
    if omega_s2 <= 0:
        raise ValueError(
            f"omega_s2 = delta0 + delta' = {omega_s2:.4g} rad/us must be positive"
        )
    t2dur = 2.0 * math.pi / omega_s2
    tau2 = tau1 + t2dur
    if tau2 >= t_final:
        raise ValueError(
            f"step-2 end {tau2:.4g} us does not fit before t_final={t_final} us"
        )
    alpha0 = math.sqrt(n_photons)
    omega_s2_amp = alpha0 * delta_cap / (lam * t2dur)
    omega_s3_prime = -omega_s2 * alpha0 * delta_cap / lam
    delta_tilde = (
        n_photons * omega_s2 - omega_s3_prime**2 / delta_cap - delta0
    )
    eps_n0 = math.exp(
        0.5 * n_photons * (math.log(n_photons) - 1.0)
        - 0.5 * math.lgamma(n_photons + 1)
    )
    theta_s2 = (lam**2 + omega_s2_amp**2) * t2dur / delta_cap
    return ProtocolParams(
        n_photons=int(n_photons),
        system=system,
        tau1=tau1,
        tau2=tau2,
        tau3=t_final,
        alpha0=alpha0,
        delta0=delta0,
        omega_s2=omega_s2,
        omega_s2_amp=omega_s2_amp,
        omega_s3_prime=omega_s3_prime,
        delta_tilde=delta_tilde,
        eps_n0=eps_n0,
        theta_s2=theta_s2,
    )


def choose_cavity_dim(pp: ProtocolParams, density_run: bool) -> int:
    """Default truncation: generous for pure-state runs, economical for
    density runs where the cost scales with d^4 and the sweep tolerances
    absorb the ~1e-3 coherent tail."""
    full = hilbert.default_cavity_dim(pp.n_photons)
    if not density_run:
        return full
    return min(full, max(pp.n_photons + 8, 12))


def target_state(p: int, pp: ProtocolParams, spec: HilbertSpec,
                 with_phases: bool = True) -> np.ndarray:
    """Normalized step-p target ket (p = 1, 2, 3) including the global
    phases Theta_s2 and N delta' tau3 (fidelities do not depend on them)."""
    d = spec.cavity_dim
    n = pp.n_photons
    if p == 1:
        psi = (
            hilbert.basis_state(spec, 3, 0, 0) + hilbert.basis_state(spec, 4, 0, 0)
        ) / math.sqrt(2.0)
        return psi
    if p == 2:
        disp = hilbert.displaced_vacuum(pp.alpha0, d)
        vac = np.zeros(d, dtype=complex)
        vac[0] = 1.0
        q3 = np.zeros(5, dtype=complex)
        q3[3] = 1.0
        q4 = np.zeros(5, dtype=complex)
        q4[4] = 1.0
        psi = (
            np.kron(q3, np.kron(vac, disp)) + np.kron(q4, np.kron(disp, vac))
        ) / math.sqrt(2.0)
        phase = np.exp(1j * pp.theta_s2) if with_phases else 1.0
        return phase * psi / np.linalg.norm(psi)
    if p == 3:
        psi = (
            hilbert.basis_state(spec, 0, n, 0) + hilbert.basis_state(spec, 0, 0, n)
        ) / math.sqrt(2.0)
        phase = (
            np.exp(1j * (pp.theta_s2 + pp.n_photons * pp.delta_prime * pp.tau3))
            if with_phases
            else 1.0
        )
        return phase * psi
    raise ValueError(f"step index must be 1, 2 or 3, got {p}")


def _step_drives(pp: ProtocolParams, step: int, pulse_shape: str,
                 loop_coeff: float, delta_tilde_offset: float) -> DriveSet:
    """Per-step drive activation: step 1 resonant only, step 2 off-resonant
    only, step 3 all four."""
    if pulse_shape not in PULSE_SHAPES:
        raise ValueError(f"pulse_shape must be one of {PULSE_SHAPES}")
    if step == 1:
        base = (
            pulses.pi_pulse(0.0, pp.tau1)
            if pulse_shape == "pi"
            else pulses.optimized_pulse(0.0, pp.tau1, loop_coeff)
        )
        half = base.scaled(1.0 / math.sqrt(2.0))
        return DriveSet(resonant3=half, resonant4=half)
    if step == 2:
        env = pulses.step2_drive(
            pp.omega_s2_amp, pp.omega_s2, pp.tau1, pp.step2_duration
        )
        return DriveSet(offres1=env, offres2=env)
    if step == 3:
        res = pulses.step3_resonant_drive(
            pp.tau2,
            pp.tau3 - pp.tau2,
            modulation=pp.modulation + delta_tilde_offset,
            eps_n0=pp.eps_n0,
            shape=pulse_shape if pulse_shape == "pi" else "optimized",
            loop_coeff=loop_coeff,
        )
        off = pulses.constant_drive(
            pp.omega_s3_prime, t0=pp.tau2, tau=pp.tau3 - pp.tau2,
            label="step3_offres",
        )
        return DriveSet(resonant3=res, resonant4=res, offres1=off, offres2=off)
    raise ValueError(f"step index must be 1, 2 or 3, got {step}")


def _step1_envelope(pp, pulse_shape, loop_coeff):
    return (
        pulses.pi_pulse(0.0, pp.tau1)
        if pulse_shape == "pi"
        else pulses.optimized_pulse(0.0, pp.tau1, loop_coeff)
    )


def _build_step(pp, spec, step, model, pulse_shape, errors, loop_coeff,
                delta_tilde_offset, density_run):
    drives = _step_drives(pp, step, pulse_shape, loop_coeff, delta_tilde_offset)
    if model == "original" or (model == "hybrid" and step < 3):
        return hamiltonians.build_full(spec, pp.system, drives, errors)
    if model in ("dispersive",) or (model == "hybrid" and step == 3):
        mode = "averaged" if density_run else "literal"
        return hamiltonians.build_effective(
            spec, pp.system, drives, errors, crosstalk_mode=mode
        )
    if model == "effective":
        if step == 1:
            return hamiltonians.build_step1_eff(
                spec, _step1_envelope(pp, pulse_shape, loop_coeff), errors.delta
            )
        if step == 2:
            return hamiltonians.build_step2_eff(spec, pp)
        return hamiltonians.build_step3_reduced(
            spec, pp, shape=pulse_shape if pulse_shape == "pi" else "optimized",
            error_delta=errors.delta, loop_coeff=loop_coeff,
        )
    raise ValueError(f"model must be one of {MODELS}, got {model!r}")


@dataclass
class SimResult:
    """Protocol run output: fidelity/population time series and metadata."""

    times: np.ndarray
    fidelities: np.ndarray        # (nsamples, 3), F_p(t)
    qudit_populations: np.ndarray  # (nsamples, 5)
    mean_photons: np.ndarray       # (nsamples, 2)
    leakage: np.ndarray            # (nsamples,), top-two Fock levels
    final: np.ndarray              # state vector or density matrix
    boundaries: tuple              # (tau1, tau2, tau3)
    metadata: dict = field(default_factory=dict)

    def fidelity_at(self, p: int) -> float:
        """F_p evaluated at its own step boundary tau_p."""
        idx = int(np.argmin(np.abs(self.times - self.boundaries[p - 1])))
        return float(self.fidelities[idx, p - 1])

    @property
    def max_leakage(self) -> float:
        return float(self.leakage.max()) if self.leakage.size else 0.0

    @property
    def leakage_flagged(self) -> bool:
        return self.max_leakage >= 1e-4


def run_protocol(
    pp: ProtocolParams,
    model: str = "original",
    pulse_shape: str = "optimized",
    errors: ErrorModel = NO_ERRORS,
    decoherence: DecoherenceRates | None = None,
    config: IntegratorConfig | None = None,
    cavity_dim: int | None = None,
    sample_count: int = 301,
    loop_coeff: float = 1.0,
    delta_tilde_offset: float = 0.0,
    method: str = "auto",
) -> SimResult:
    """Run the three-step protocol from |0,0,0> and sample F1, F2, F3.

    Each step starts from the previous step's final state.  With
    decoherence the density matrix is propagated directly while
    5 d^2 <= 1500, and by trajectory unraveling above that (``method``
    can force either).  Fidelities are measured against the fixed step
    targets at every sample time.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    config = config or IntegratorConfig()
    decoherence = decoherence or DecoherenceRates()
    wants_collapse = decoherence.any_active()
    d = cavity_dim or choose_cavity_dim(pp, wants_collapse)
    spec = HilbertSpec(cavity_dim=d)

    if method == "auto":
        if not wants_collapse:
            method = "state"
        elif spec.size <= DENSITY_DIM_LIMIT:
            method = "density"
        else:
            method = "trajectories"
    if method in ("density", "trajectories") and not wants_collapse:
        method = "density" if method == "density" else "state"
    density_run = method == "density"

    run_warnings = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        targets = np.array([target_state(p, pp, spec) for p in (1, 2, 3)])
    run_warnings += [str(w.message) for w in caught]

    diag = _diagnostic_weights(spec)
    grid = np.union1d(
        np.linspace(0.0, pp.tau3, sample_count), [pp.tau1, pp.tau2]
    )
    collapse = (
        build_collapse_set(
            spec,
            decoherence.gamma_d_khz,
            decoherence.gamma_r_khz,
            decoherence.gamma_kappa_khz,
        )
        if wants_collapse
        else None
    )

    psi0 = hilbert.basis_state(spec, 0, 0, 0)
    t_begin = time.perf_counter()

    if method == "trajectories":
        # each trajectory runs through all three steps in one piece, so the
        # jump record is continuous; averaging happens per sample
        ham = _combined_operator(
            pp, spec, model, pulse_shape, errors, loop_coeff,
            delta_tilde_offset, density_run=False,
        )
        rec = dynamics.evolve_trajectories(
            ham, psi0, (0.0, pp.tau3), collapse, config, sample_times=grid,
            projectors=targets, diagonals=diag,
        )
        pieces = [rec]
        stats_meta = [
            {
                "step": 0,
                "accepted": rec.stats.accepted,
                "rejected": rec.stats.rejected,
                "nfev": rec.stats.nfev,
                "max_norm_drift": 0.0,
                "max_trace_drift": 0.0,
                "trajectories": rec.metadata.get("trajectories"),
                "jumps": rec.metadata.get("jumps"),
            }
        ]
        state = rec.final
    else:
        state = np.outer(psi0, psi0.conj()) if method == "density" else psi0
        bounds = [(0.0, pp.tau1), (pp.tau1, pp.tau2), (pp.tau2, pp.tau3)]
        pieces = []
        stats_meta = []
        for step, (ta, tb) in enumerate(bounds, start=1):
            ham = _build_step(
                pp, spec, step, model, pulse_shape, errors, loop_coeff,
                delta_tilde_offset, density_run,
            )
            if step == 1:
                sub = grid[grid <= pp.tau1 + 1e-15]
            else:
                sub = grid[(grid > ta + 1e-15) & (grid <= tb + 1e-15)]
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                if method == "state":
                    rec = dynamics.evolve_state(
                        ham, state, (ta, tb), config, sample_times=sub,
                        projectors=targets, diagonals=diag,
                    )
                else:
                    rec = dynamics.evolve_density(
                        ham, state, (ta, tb), collapse, config,
                        sample_times=sub, projectors=targets, diagonals=diag,
                    )
            run_warnings += [str(w.message) for w in caught]
            state = rec.final
            pieces.append(rec)
            stats_meta.append(
                {
                    "step": step,
                    "accepted": rec.stats.accepted,
                    "rejected": rec.stats.rejected,
                    "nfev": rec.stats.nfev,
                    "max_norm_drift": rec.stats.max_norm_drift,
                    "max_trace_drift": rec.stats.max_trace_drift,
                }
            )

    times = np.concatenate([p.times for p in pieces])
    fvals = np.concatenate([p.proj_values for p in pieces])
    dvals = np.concatenate([p.diag_values for p in pieces])
    fid = np.sqrt(np.clip(fvals, 0.0, None))
    result = SimResult(
        times=times,
        fidelities=fid,
        qudit_populations=dvals[:, :5],
        mean_photons=dvals[:, 5:7],
        leakage=dvals[:, 7],
        final=state,
        boundaries=(pp.tau1, pp.tau2, pp.tau3),
        metadata={
            "model": model,
            "pulse_shape": pulse_shape,
            "method": method,
            "cavity_dim": d,
            "n_photons": pp.n_photons,
            "steps": stats_meta,
            "warnings": run_warnings,
            "wall_time_s": time.perf_counter() - t_begin,
            "max_norm_drift": max(s["max_norm_drift"] for s in stats_meta),
            "max_trace_drift": max(s["max_trace_drift"] for s in stats_meta),
        },
    )
    if result.leakage_flagged:
        result.metadata["warnings"].append(
            f"truncation leakage {result.max_leakage:.2e} >= 1e-4"
        )
    return result


def _combined_operator(pp, spec, model, pulse_shape, errors, loop_coeff,
                       delta_tilde_offset, density_run):
    """All three step Hamiltonians merged into one operator, each term
    clipped to its step window (half-open except the last step), so a
    single continuous integration covers [0, tau3]."""
    from dataclasses import replace

    combined = hamiltonians.TimeDependentOperator(spec)
    bounds = [(0.0, pp.tau1), (pp.tau1, pp.tau2), (pp.tau2, pp.tau3)]
    for step, (ta, tb) in enumerate(bounds, start=1):
        ham = _build_step(
            pp, spec, step, model, pulse_shape, errors, loop_coeff,
            delta_tilde_offset, density_run,
        )
        t_hi = tb if step == 3 else math.nextafter(tb, -math.inf)
        for m, env in ham.terms:
            t0 = max(env.t0, ta)
            t1 = min(env.t0 + env.tau, t_hi)
            combined.add(m, replace(env, t0=t0, tau=max(t1 - t0, 0.0)))
    return combined


def _diagnostic_weights(spec: HilbertSpec) -> np.ndarray:
    """Diagonal observables: 5 qudit populations, 2 mean photon numbers,
    and the top-two-Fock-level leakage indicator."""
    d = spec.cavity_dim
    rows = []
    for j in range(5):
        w = np.zeros(spec.dims)
        w[j, :, :] = 1.0
        rows.append(w.reshape(-1))
    n = np.arange(d, dtype=float)
    w1 = np.zeros(spec.dims)
    w1 += n[None, :, None]
    rows.append(w1.reshape(-1))
    w2 = np.zeros(spec.dims)
    w2 += n[None, None, :]
    rows.append(w2.reshape(-1))
    rows.append(hilbert.fock_level_weights(spec, [d - 2, d - 1]))
    return np.array(rows)


def rwa_report(pp: ProtocolParams, pulse_shape: str = "optimized",
               loop_coeff: float = 1.0) -> dict:
    """Scale-separation margins behind the effective reductions.

    Ratios below 10 are flagged; they indicate where the dispersive or
    rotating-wave step is marginal at the configured parameters.
    """
    if pulse_shape == "pi":
        peak_s1 = math.pi / (2.0 * pp.tau1)
        peak_s3 = math.pi / (2.0 * (pp.tau3 - pp.tau2))
    else:
        peak_s1 = pulses.sta_peak_amplitude(pp.tau1, loop_coeff)
        peak_s3 = pulses.sta_peak_amplitude(pp.tau3 - pp.tau2, loop_coeff)
    peak_s3_mod = peak_s3 / pp.eps_n0
    ratios = {
        "step1_drive_over_stark": peak_s1 / pp.delta0,
        "omega_s2_over_step3_drive": pp.omega_s2 / peak_s3_mod,
        "delta_prime_over_step3_drive": abs(pp.delta_prime) / peak_s3_mod,
        "detuning_over_coupling": pp.delta_cap / pp.lam,
        "detuning_over_step2_drive": pp.delta_cap / pp.omega_s2_amp,
    }
    warnings_list = [
        f"{name} = {val:.2f} < 10" for name, val in ratios.items() if val < 10
    ]
    return {"ratios": ratios, "warnings": warnings_list}
