"""Drive envelopes: resonant pi-pulse, invariant-engineered optimized pulse,
step-2 displacement drive, and step-3 frequency-matched drives.

All amplitudes are angular (rad/us), all times are us.  The optimized pulse
comes from reverse engineering a two-level SU(2) invariant

    I(t) = sin(theta) sin(beta) sx + sin(theta) cos(beta) sy + cos(theta) sz

with theta(t) = pi sin^2(pi t / 2 tau) and beta = (4A/3) sin^3(theta); the
loop coefficient A makes the Lewis-Riesenfeld phase chi = A (2 theta -
sin 2 theta), which nullifies the second-order amplitude-error sensitivity
Q = sin^2(A pi)/A^2 at integer A.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

__all__ = [
    "Envelope",
    "theta",
    "theta_dot",
    "beta",
    "lr_phase",
    "optimized_envelope",
    "pi_envelope",
    "step2_envelope",
    "step3_resonant_envelope",
    "sensitivity_q",
    "invariant_residual",
    "two_level_transfer",
    "pi_pulse",
    "optimized_pulse",
    "step2_drive",
    "step3_resonant_drive",
    "constant_drive",
    "sta_peak_amplitude",
]

KIND_CONST = 0
KIND_STA = 1


# ---------------------------------------------------------------------------
# scalar building blocks (Appendix-level formulas)
# ---------------------------------------------------------------------------

def theta(t: float, tau: float) -> float:
    """Polar invariant angle, theta = pi sin^2(pi t / 2 tau); 0 -> 0, tau -> pi."""
    if t < 0.0 or t > tau:
        raise ValueError(f"t={t} outside pulse support [0, {tau}]")
    return math.pi * math.sin(0.5 * math.pi * t / tau) ** 2


def theta_dot(t: float, tau: float) -> float:
    """Analytic d(theta)/dt = (pi^2 / 2 tau) sin(pi t / tau)."""
    return (math.pi**2 / (2.0 * tau)) * math.sin(math.pi * t / tau)


def beta(th: float, loop_coeff: float = 1.0) -> float:
    """Azimuthal invariant angle, beta = (4A/3) sin^3(theta)."""
    return (4.0 * loop_coeff / 3.0) * math.sin(th) ** 3


def lr_phase(t: float, tau: float, loop_coeff: float = 1.0) -> float:
    """Accumulated Lewis-Riesenfeld phase chi(t) = A (2 theta - sin 2 theta)."""
    th = theta(t, tau)
    return loop_coeff * (2.0 * th - math.sin(2.0 * th))


def sensitivity_q(loop_coeff: float) -> float:
    """Amplitude-error sensitivity Q = sin^2(A pi) / A^2; zero at integer A."""
    if loop_coeff == 0:
        raise ValueError("loop coefficient A must be nonzero")
    return math.sin(loop_coeff * math.pi) ** 2 / loop_coeff**2


def optimized_envelope(t: float, tau: float, loop_coeff: float = 1.0) -> complex:
    """Error-insensitive pulse: Re = (th'/2)(4A sin(b) sin^3(th) - cos(b)),
    Im = (th'/2)(4A cos(b) sin^3(th) + sin(b)).  Zero at both endpoints."""
    th = theta(t, tau)
    thd = theta_dot(t, tau)
    s3 = math.sin(th) ** 3
    b = beta(th, loop_coeff)
    re = 0.5 * thd * (4.0 * loop_coeff * math.sin(b) * s3 - math.cos(b))
    im = 0.5 * thd * (4.0 * loop_coeff * math.cos(b) * s3 + math.sin(b))
    return complex(re, im)


def pi_envelope(tau: float) -> complex:
    """Resonant pi-pulse amplitude, constant -i pi / (2 tau)."""
    if tau <= 0:
        raise ValueError(f"pulse duration must be positive, got {tau}")
    return -0.5j * math.pi / tau


def step2_envelope(
    t: float, omega_s2_amp: float, omega_s2: float, t0: float = 0.0
) -> complex:
    """Step-2 cavity-displacement drive i*Omega_s2 * exp(-i omega_s2 (t - t0))."""
    return 1j * omega_s2_amp * complex(
        math.cos(omega_s2 * (t - t0)), -math.sin(omega_s2 * (t - t0))
    )


def step3_resonant_envelope(
    t: float,
    t_start: float,
    t_end: float,
    modulation: float,
    eps_n0: float,
    shape: str = "pi",
    loop_coeff: float = 1.0,
) -> complex:
    """Step-3 resonant drive Omega_s3(t) exp(-i modulation * t) / eps_N0.

    ``modulation`` is N*delta' + delta_tilde (rad/us), applied in absolute
    protocol time; the base shape lives on the shifted interval
    [t_start, t_end].
    """
    if eps_n0 <= 0:
        raise ValueError(f"eps_N0 must be positive, got {eps_n0}")
    tau = t_end - t_start
    if shape == "pi":
        base = pi_envelope(tau)
    elif shape == "optimized":
        base = optimized_envelope(t - t_start, tau, loop_coeff)
    else:
        raise ValueError(f"unknown step-3 shape {shape!r}")
    ph = -modulation * t
    return base * complex(math.cos(ph), math.sin(ph)) / eps_n0


# ---------------------------------------------------------------------------
# Envelope objects (windowed coefficients usable by the Hamiltonian builders)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Envelope:
    """Windowed complex drive coefficient.

    Evaluates to  amp * base(t) * exp(i omega (t - tref))  for t inside
    [t0, t0 + tau] and exactly 0 outside.  ``base`` is 1 for kind "const"
    and the optimized-pulse waveform for kind "sta" (supported on
    [sta_t0, sta_t0 + sta_tau]).  ``conj`` conjugates the whole value,
    which is how hermitian-conjugate partner terms are expressed.
    """

    kind: int = KIND_CONST
    t0: float = -math.inf
    tau: float = math.inf
    amp: complex = 1.0 + 0j
    omega: float = 0.0
    tref: float = 0.0
    sta_t0: float = 0.0
    sta_tau: float = 1.0
    sta_coeff: float = 1.0
    conj: bool = False
    label: str = ""

    def __call__(self, t: float) -> complex:
        if t < self.t0 or t > self.t0 + self.tau:
            return 0j
        val = self.amp
        if self.kind == KIND_STA:
            s = min(max(t - self.sta_t0, 0.0), self.sta_tau)
            val = val * optimized_envelope(s, self.sta_tau, self.sta_coeff)
        if self.omega != 0.0:
            ph = self.omega * (t - self.tref)
            val = val * complex(math.cos(ph), math.sin(ph))
        return val.conjugate() if self.conj else val

    def conjugated(self) -> "Envelope":
        return replace(self, conj=not self.conj)

    def scaled(self, factor: complex) -> "Envelope":
        f = np.conj(factor) if self.conj else factor
        return replace(self, amp=self.amp * f)

    def modulated(self, extra_omega: float) -> "Envelope":
        """Multiply by exp(i extra_omega t), folding the old phase reference
        into the amplitude so a single (omega, tref) pair remains."""
        if self.conj:
            raise ValueError("modulated() must be applied before conjugation")
        ph = -self.omega * self.tref
        amp = self.amp * complex(math.cos(ph), math.sin(ph))
        return replace(self, amp=amp, omega=self.omega + extra_omega, tref=0.0)

    @property
    def window(self) -> tuple[float, float]:
        return (self.t0, self.t0 + self.tau)

    def pack(self) -> tuple[int, np.ndarray]:
        """(kind, params) encoding consumed by the compiled integrator kernels."""
        p = np.array(
            [
                self.t0,
                self.t0 + self.tau,
                self.amp.real,
                self.amp.imag,
                self.omega,
                self.tref,
                self.sta_t0,
                self.sta_tau,
                self.sta_coeff,
                1.0 if self.conj else 0.0,
            ],
            dtype=np.float64,
        )
        return self.kind, p


def constant_drive(value: complex, t0: float = -math.inf, tau: float = math.inf,
                   label: str = "const") -> Envelope:
    return Envelope(kind=KIND_CONST, t0=t0, tau=tau, amp=complex(value), label=label)


def pi_pulse(t0: float, tau: float) -> Envelope:
    """Constant -i pi/(2 tau) on [t0, t0+tau] (area pi/2)."""
    return Envelope(
        kind=KIND_CONST, t0=t0, tau=tau, amp=pi_envelope(tau), label="pi"
    )


def optimized_pulse(t0: float, tau: float, loop_coeff: float = 1.0) -> Envelope:
    """Invariant-engineered pulse on [t0, t0+tau], zero at both endpoints."""
    return Envelope(
        kind=KIND_STA,
        t0=t0,
        tau=tau,
        amp=1.0 + 0j,
        sta_t0=t0,
        sta_tau=tau,
        sta_coeff=loop_coeff,
        label="optimized",
    )


def step2_drive(omega_s2_amp: float, omega_s2: float, t0: float, tau: float) -> Envelope:
    """i Omega_s2 exp(-i omega_s2 (t - t0)) on [t0, t0+tau].

    The modulation phase is referenced to the step start, which keeps the
    conditional displacement along the real axis regardless of tau1.
    """
    return Envelope(
        kind=KIND_CONST,
        t0=t0,
        tau=tau,
        amp=1j * omega_s2_amp,
        omega=-omega_s2,
        tref=t0,
        label="step2",
    )


def step3_resonant_drive(
    t0: float,
    tau: float,
    modulation: float,
    eps_n0: float,
    shape: str = "pi",
    loop_coeff: float = 1.0,
) -> Envelope:
    """Omega_s3(t) exp(-i modulation t)/eps_N0 on [t0, t0+tau], absolute-time
    modulation per the step-3 frequency-matching condition."""
    if eps_n0 <= 0:
        raise ValueError(f"eps_N0 must be positive, got {eps_n0}")
    if shape == "pi":
        return Envelope(
            kind=KIND_CONST,
            t0=t0,
            tau=tau,
            amp=(0.5j * math.pi / tau) / eps_n0,
            omega=-modulation,
            tref=0.0,
            label="step3_pi",
        )
    if shape == "optimized":
        return Envelope(
            kind=KIND_STA,
            t0=t0,
            tau=tau,
            amp=(1.0 / eps_n0) + 0j,
            omega=-modulation,
            tref=0.0,
            sta_t0=t0,
            sta_tau=tau,
            sta_coeff=loop_coeff,
            label="step3_optimized",
        )
    raise ValueError(f"unknown step-3 shape {shape!r}")


def sta_peak_amplitude(tau: float, loop_coeff: float = 1.0, ngrid: int = 2001) -> float:
    """Numerical max of |optimized_envelope| over the pulse (for RWA margins)."""
    ts = np.linspace(0.0, tau, ngrid)
    return max(abs(optimized_envelope(t, tau, loop_coeff)) for t in ts)


# ---------------------------------------------------------------------------
# verification tools
# ---------------------------------------------------------------------------

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def invariant_residual(
    grid, tau: float, loop_coeff: float = 1.0, amplitude_scale: float = 1.0
) -> float:
    """Max-norm residual of the invariant condition i dI/dt - [H, I] over a grid.

    H(t) = Re(W) sx + Im(W) sy with W = amplitude_scale * optimized_envelope,
    I(t) built from the same theta/beta, dI/dt by analytic differentiation.
    The designed pulse (scale 1) satisfies the condition identically.
    """
    worst = 0.0
    for t in grid:
        th = theta(t, tau)
        thd = theta_dot(t, tau)
        b = beta(th, loop_coeff)
        bd = 4.0 * loop_coeff * thd * math.sin(th) ** 2 * math.cos(th)
        w = amplitude_scale * optimized_envelope(t, tau, loop_coeff)
        ham = w.real * _SX + w.imag * _SY
        inv = (
            math.sin(th) * math.sin(b) * _SX
            + math.sin(th) * math.cos(b) * _SY
            + math.cos(th) * _SZ
        )
        dp = thd * math.cos(th) * math.sin(b) + bd * math.sin(th) * math.cos(b)
        dq = thd * math.cos(th) * math.cos(b) - bd * math.sin(th) * math.sin(b)
        dr = -thd * math.sin(th)
        dinv = dp * _SX + dq * _SY + dr * _SZ
        res = 1j * dinv - (ham @ inv - inv @ ham)
        worst = max(worst, float(np.abs(res).max()))
    return worst


def two_level_transfer(pulse: Envelope, delta: float = 0.0,
                       rtol: float = 1e-11, atol: float = 1e-13) -> float:
    """Transfer |xi1> -> |xi2> under H = (1+delta)[W(t)|xi1><xi2| + h.c.].

    Returns |<xi2|psi(t_end)>| after integrating across the pulse window.
    This is the closed two-level bench used to verify both pulse families
    and the quartic error scaling of the optimized pulse.
    """
    t0, t1 = pulse.window
    if not (math.isfinite(t0) and math.isfinite(t1)):
        raise ValueError("two_level_transfer needs a pulse with finite support")

    def rhs(t, y):
        w = (1.0 + delta) * pulse(t)
        return [-1j * w * y[1], -1j * np.conj(w) * y[0]]

    sol = solve_ivp(
        rhs,
        (t0, t1),
        np.array([1.0 + 0j, 0j]),
        method="DOP853",
        rtol=rtol,
        atol=atol,
        dense_output=False,
    )
    if not sol.success:
        raise RuntimeError(f"two-level integration failed: {sol.message}")
    return float(abs(sol.y[1, -1]))
