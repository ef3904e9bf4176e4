"""Time-dependent Hamiltonian builders.

Every builder returns a :class:`TimeDependentOperator`: a static sparse
skeleton per term plus a scalar envelope, so assembly at time t is a
scalar-weighted sum and the integrator never re-allocates sparsity
structure.  All frequencies are angular (rad/us), all times us.

The three model families are

* the full rotating-frame Hamiltonian (drives modulated at the large
  detunings Delta_k),
* its second-order dispersive reduction (qudit-state-conditioned Stark
  shifts and effective cavity drives), and
* the per-step reduced Hamiltonians used for effective-model runs
  (two-level transfer generator for step 1, conditional driven oscillator
  for step 2, and the frame-rotated resonant transfer operator for step 3).

Systematic errors enter exactly as multiplicative/additive modifications
of the drive and coupling coefficients.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import hilbert
from .hilbert import HilbertSpec
from .pulses import Envelope, constant_drive

TWO_PI = 2.0 * math.pi

__all__ = [
    "SystemParams",
    "ErrorModel",
    "DriveSet",
    "TimeDependentOperator",
    "build_full",
    "build_effective",
    "build_step1_eff",
    "build_step2_eff",
    "build_step3_reduced",
    "build_crosstalk",
    "TABLE_I",
]

# Table-I couplings/detunings keyed by photon number: (delta'/2pi MHz,
# Delta/2pi GHz, lambda/2pi MHz)
TABLE_I = {
    2: (-0.67, 5.00, 141.42),
    3: (-0.67, 7.50, 173.48),
    4: (-0.67, 5.96, 130.00),
}

LEVEL_FREQS_GHZ = (0.0, 3.0, 5.0, 15.0, 20.0)
CAVITY_FREQS_GHZ = (11.0346, 4.0346)


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the qudit + two-cavity system.

    Configuration values are ordinary frequencies (nu = omega/2pi, MHz or
    GHz as named); the angular properties apply the 2pi exactly once.
    The paper's symmetric choice lambda1 = lambda2, Delta1 = Delta2,
    delta1 = delta2 = delta' is built in.
    """

    lambda_mhz: float
    delta_ghz: float
    delta_prime_mhz: float = -0.67
    level_freqs_ghz: tuple = LEVEL_FREQS_GHZ
    cavity_freqs_ghz: tuple = CAVITY_FREQS_GHZ

    def __post_init__(self):
        if self.delta_ghz == 0:
            raise ValueError("detuning Delta must be nonzero")
        ratio = abs(self.delta_ghz) * 1e3 / abs(self.lambda_mhz)
        if ratio < 10:
            raise ValueError(
                f"large-detuning condition violated: Delta/lambda = {ratio:.2f} < 10"
            )
        if ratio < 20:
            warnings.warn(
                f"Delta/lambda = {ratio:.2f} is marginal for the dispersive "
                "reduction (< 20)",
                stacklevel=2,
            )

    @classmethod
    def for_photon_number(cls, n: int) -> "SystemParams":
        if n not in TABLE_I:
            raise ValueError(
                f"no tabulated couplings for N={n}; supply lambda/Delta explicitly"
            )
        dp, dlt, lam = TABLE_I[n]
        return cls(lambda_mhz=lam, delta_ghz=dlt, delta_prime_mhz=dp)

    # angular quantities, rad/us
    @property
    def lam(self) -> float:
        return TWO_PI * self.lambda_mhz

    @property
    def delta_cap(self) -> float:
        return TWO_PI * self.delta_ghz * 1e3

    @property
    def delta_prime(self) -> float:
        return TWO_PI * self.delta_prime_mhz

    @property
    def crosstalk_detuning(self) -> float:
        """Delta' = |omega_1 - omega_2| between the two cavities (rad/us)."""
        return TWO_PI * abs(self.cavity_freqs_ghz[0] - self.cavity_freqs_ghz[1]) * 1e3


@dataclass(frozen=True)
class ErrorModel:
    """Systematic-error and crosstalk knobs (all angular internal units).

    delta          multiplicative error on the resonant drives (dimensionless)
    delta_omega    additive offset on the off-resonant drives (rad/us)
    delta_lambda   coupling-strength drift (rad/us)
    crosstalk_ratio  lambda_12 as a fraction of lambda_k
    """

    delta: float = 0.0
    delta_omega: float = 0.0
    delta_lambda: float = 0.0
    crosstalk_ratio: float = 0.0

    def lambda12(self, params: SystemParams) -> float:
        return self.crosstalk_ratio * params.lam


NO_ERRORS = ErrorModel()


@dataclass(frozen=True)
class DriveSet:
    """Envelopes of the four classical drives; None means switched off.

    resonant3/resonant4 drive |0><3| and |0><4|; offres1/offres2 are the
    off-resonant drives on |4><1| and |3><2| whose carrier detunings
    Delta_k are applied by the builders, not by the envelopes.
    """

    resonant3: Envelope | None = None
    resonant4: Envelope | None = None
    offres1: Envelope | None = None
    offres2: Envelope | None = None


@dataclass
class TimeDependentOperator:
    """H(t) = sum_i c_i(t) A_i with CSR matrices A_i and Envelope coefficients."""

    spec: HilbertSpec
    terms: list = field(default_factory=list)
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.spec.size

    def add(self, matrix, env: Envelope):
        m = sp.csr_matrix(matrix, dtype=complex)
        if m.shape != (self.dim, self.dim):
            raise ValueError(f"term shape {m.shape} does not match dim {self.dim}")
        m.sort_indices()
        self.terms.append((m, env))
        self._packed = None

    def add_pair(self, matrix, env: Envelope):
        """Add matrix * env(t) together with its hermitian conjugate."""
        self.add(matrix, env)
        m = sp.csr_matrix(matrix, dtype=complex)
        self.add(m.conj().T.tocsr(), env.conjugated())

    def add_static(self, matrix, value: float = 1.0,
                   t0: float = -math.inf, tau: float = math.inf):
        self.add(matrix, constant_drive(value, t0=t0, tau=tau, label="static"))

    def value(self, t: float) -> sp.csr_matrix:
        """Assemble the sparse matrix at time t."""
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for m, env in self.terms:
            c = env(t)
            if c != 0:
                out = out + c * m
        return out

    def omega_max(self) -> float:
        """Fastest coefficient frequency, used for the integrator's max-step bound."""
        w = 0.0
        for _, env in self.terms:
            wi = abs(env.omega)
            if env.kind != 0 and math.isfinite(env.sta_tau):
                wi += 6.0 * math.pi / env.sta_tau
            w = max(w, wi)
        return w

    def packed(self):
        """(kinds, params, indptr, indices, data) arrays for the compiled kernels."""
        if self._packed is None:
            nterms = len(self.terms)
            kinds = np.zeros(nterms, dtype=np.int64)
            params = np.zeros((nterms, 10), dtype=np.float64)
            indptr = np.zeros((nterms, self.dim + 1), dtype=np.int64)
            idx_parts, data_parts = [], []
            off = 0
            for i, (m, env) in enumerate(self.terms):
                kinds[i], params[i] = env.pack()
                indptr[i] = m.indptr.astype(np.int64) + off
                idx_parts.append(m.indices.astype(np.int64))
                data_parts.append(m.data.astype(np.complex128))
                off += m.nnz
            indices = (
                np.concatenate(idx_parts) if idx_parts else np.zeros(0, np.int64)
            )
            data = (
                np.concatenate(data_parts) if data_parts else np.zeros(0, np.complex128)
            )
            self._packed = (kinds, params, indptr, indices, data)
        return self._packed


# ---------------------------------------------------------------------------
# local operators embedded once per builder call
# ---------------------------------------------------------------------------

def _ops(spec: HilbertSpec):
    d = spec.cavity_dim
    a = hilbert.annihilation(d)
    return {
        "a1": hilbert.embed(a, "cavity1", spec),
        "a2": hilbert.embed(a, "cavity2", spec),
        "n1": hilbert.embed(hilbert.number_op(d), "cavity1", spec),
        "n2": hilbert.embed(hilbert.number_op(d), "cavity2", spec),
    }


def _qt(spec: HilbertSpec, j: int, k: int) -> sp.csr_matrix:
    return hilbert.embed(hilbert.qudit_transition(j, k), "qudit", spec)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_full(
    spec: HilbertSpec,
    params: SystemParams,
    drives: DriveSet,
    errors: ErrorModel = NO_ERRORS,
) -> TimeDependentOperator:
    """Full rotating-frame model: resonant drives on |0><3|, |0><4|,
    detuning-modulated off-resonant drives and qudit-cavity couplings,
    cavity detuning terms, plus optional inter-cavity crosstalk."""
    op = TimeDependentOperator(spec)
    ops = _ops(spec)
    lam = params.lam + errors.delta_lambda
    big_delta = params.delta_cap

    for level, env in ((3, drives.resonant3), (4, drives.resonant4)):
        if env is not None:
            op.add_pair(_qt(spec, 0, level), env.scaled(1.0 + errors.delta))

    # |4><1| drive and cavity-1 coupling at detuning +/-Delta
    q41 = _qt(spec, 4, 1)
    if drives.offres1 is not None:
        op.add_pair(q41, drives.offres1.modulated(big_delta))
        if errors.delta_omega != 0.0:
            w0, w1 = drives.offres1.window
            op.add_pair(
                q41,
                Envelope(t0=w0, tau=w1 - w0, amp=errors.delta_omega + 0j,
                         omega=big_delta, label="delta_omega"),
            )
    op.add_pair(
        ops["a1"].conj().T.tocsr() @ _qt(spec, 1, 4),
        constant_drive(lam, label="coupling1").modulated(-big_delta),
    )

    # |3><2| drive and cavity-2 coupling
    q32 = _qt(spec, 3, 2)
    if drives.offres2 is not None:
        op.add_pair(q32, drives.offres2.modulated(big_delta))
        if errors.delta_omega != 0.0:
            w0, w1 = drives.offres2.window
            op.add_pair(
                q32,
                Envelope(t0=w0, tau=w1 - w0, amp=errors.delta_omega + 0j,
                         omega=big_delta, label="delta_omega"),
            )
    op.add_pair(
        ops["a2"].conj().T.tocsr() @ _qt(spec, 2, 3),
        constant_drive(lam, label="coupling2").modulated(-big_delta),
    )

    if params.delta_prime != 0.0:
        op.add_static(params.delta_prime * (ops["n1"] + ops["n2"]))

    lam12 = errors.lambda12(params)
    if lam12 != 0.0:
        _add_crosstalk(op, spec, lam12, params.crosstalk_detuning, mode="literal")
    return op


def build_effective(
    spec: HilbertSpec,
    params: SystemParams,
    drives: DriveSet,
    errors: ErrorModel = NO_ERRORS,
    crosstalk_mode: str = "literal",
) -> TimeDependentOperator:
    """Second-order dispersive model: per qudit state |5-k><5-k| a Stark-
    shifted cavity, an effective drive (lambda/Delta) Omega_k, and the
    scalar shift (lambda^2 + |Omega_k|^2)/Delta; resonant drives unchanged.

    ``crosstalk_mode`` selects the literal oscillating exchange term or its
    rotating-averaged form (lambda_12^2/Delta')(n1 - n2), the latter being
    the appropriate choice for density-matrix runs where resolving the
    inter-cavity detuning is prohibitive.
    """
    op = TimeDependentOperator(spec)
    ops = _ops(spec)
    lam = params.lam + errors.delta_lambda
    big_delta = params.delta_cap

    for level, env in ((3, drives.resonant3), (4, drives.resonant4)):
        if env is not None:
            op.add_pair(_qt(spec, 0, level), env.scaled(1.0 + errors.delta))

    for k, (level, a, n) in enumerate(
        (((4, ops["a1"], ops["n1"])), ((3, ops["a2"], ops["n2"]))), start=1
    ):
        proj = _qt(spec, level, level)
        env = drives.offres1 if k == 1 else drives.offres2
        op.add_static((lam**2 / big_delta) * (n @ proj + proj))
        if env is not None:
            adag_p = a.conj().T.tocsr() @ proj
            op.add_pair(adag_p, env.scaled(lam / big_delta))
            w0, w1 = env.window
            dw = errors.delta_omega
            if dw != 0.0:
                op.add_static(
                    (lam * dw / big_delta) * (a + a.conj().T.tocsr()) @ proj,
                    t0=w0, tau=w1 - w0,
                )
            # |Omega(t) + dw|^2 / Delta conditioned on the qudit level
            amp2 = abs(env.amp) ** 2 + dw**2
            op.add_static((amp2 / big_delta) * proj, t0=w0, tau=w1 - w0)
            if dw != 0.0:
                op.add_pair(proj, env.scaled(dw / big_delta))

    if params.delta_prime != 0.0:
        op.add_static(params.delta_prime * (ops["n1"] + ops["n2"]))

    lam12 = errors.lambda12(params)
    if lam12 != 0.0:
        _add_crosstalk(op, spec, lam12, params.crosstalk_detuning, crosstalk_mode)
    return op


def build_step1_eff(
    spec: HilbertSpec, envelope: Envelope, error_delta: float = 0.0
) -> TimeDependentOperator:
    """Rank-2 step-1 generator Omega_s1(t)|0,0,0><Phi_+| + h.c. with
    |Phi_+> = (|3,0,0> + |4,0,0>)/sqrt(2)."""
    op = TimeDependentOperator(spec)
    m = sp.lil_matrix((spec.size, spec.size), dtype=complex)
    i0 = spec.index(0, 0, 0)
    m[i0, spec.index(3, 0, 0)] = 1.0 / math.sqrt(2.0)
    m[i0, spec.index(4, 0, 0)] = 1.0 / math.sqrt(2.0)
    op.add_pair(m.tocsr(), envelope.scaled(1.0 + error_delta))
    return op


def build_step2_eff(spec: HilbertSpec, pp) -> TimeDependentOperator:
    """Step-2 conditional driven oscillator: for each cavity k (conditioned
    on qudit level 5-k) omega_s2 n_k + (i alpha0/T2)(e^{-i omega_s2 (t-tau1)}
    a_k^dag - h.c.) + (lambda^2 + Omega_s2^2)/Delta.

    ``pp`` carries the derived protocol quantities (see protocol.derive_params).
    """
    if pp.omega_s2 <= 0:
        raise ValueError(f"omega_s2 must be positive, got {pp.omega_s2}")
    op = TimeDependentOperator(spec)
    ops = _ops(spec)
    t2dur = pp.tau2 - pp.tau1
    drive_coeff = pp.alpha0 / t2dur
    const = (pp.lam**2 + abs(pp.omega_s2_amp) ** 2) / pp.delta_cap
    env = Envelope(
        t0=pp.tau1,
        tau=t2dur,
        amp=1j * drive_coeff,
        omega=-pp.omega_s2,
        tref=pp.tau1,
        label="step2_eff_drive",
    )
    for level, a, n in ((4, ops["a1"], ops["n1"]), (3, ops["a2"], ops["n2"])):
        proj = _qt(spec, level, level)
        op.add_static(pp.omega_s2 * (n @ proj) + const * proj)
        op.add_pair(a.conj().T.tocsr() @ proj, env)
    return op


def build_step3_reduced(
    spec: HilbertSpec,
    pp,
    shape: str = "pi",
    error_delta: float = 0.0,
    loop_coeff: float = 1.0,
) -> TimeDependentOperator:
    """Frame-rotated resonant step-3 operator
    sum_k Omega_s3(t) |0><5-k| (x) |N>_k <displaced vacuum|_k + h.c."""
    from .pulses import step3_resonant_drive

    d = spec.cavity_dim
    disp0 = hilbert.displaced_vacuum(pp.alpha0, d)
    ket_n = np.zeros(d, dtype=complex)
    ket_n[pp.n_photons] = 1.0
    flip = sp.csr_matrix(np.outer(ket_n, disp0.conj()))
    m = hilbert.embed(flip, "cavity1", spec) @ _qt(spec, 0, 4)
    m = m + hilbert.embed(flip, "cavity2", spec) @ _qt(spec, 0, 3)

    env = step3_resonant_drive(
        pp.tau2, pp.tau3 - pp.tau2, modulation=0.0, eps_n0=1.0,
        shape=shape, loop_coeff=loop_coeff,
    ).scaled(1.0 + error_delta)
    op = TimeDependentOperator(spec)
    op.add_pair(sp.csr_matrix(m), env)
    return op


def build_crosstalk(
    spec: HilbertSpec, lambda12: float, delta_prime_ct: float
) -> TimeDependentOperator:
    """Inter-cavity exchange lambda_12 a1^dag a2 e^{i Delta' t} + h.c."""
    op = TimeDependentOperator(spec)
    if lambda12 != 0.0:
        _add_crosstalk(op, spec, lambda12, delta_prime_ct, mode="literal")
    return op


def _add_crosstalk(op, spec, lambda12, delta_ct, mode):
    ops = _ops(spec)
    if mode == "literal":
        x = ops["a1"].conj().T.tocsr() @ ops["a2"]
        op.add_pair(x, constant_drive(lambda12, label="crosstalk").modulated(delta_ct))
    elif mode == "averaged":
        # second-order exchange at detuning Delta' >> lambda_12
        op.add_static((lambda12**2 / delta_ct) * (ops["n1"] - ops["n2"]))
    else:
        raise ValueError(f"unknown crosstalk mode {mode!r}")
