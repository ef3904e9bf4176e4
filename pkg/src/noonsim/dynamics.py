"""Time integration of the Schrodinger, von Neumann and Lindblad equations.

A single adaptive Dormand-Prince 5(4) pair (compiled in
:mod:`noonsim._kernels`) drives three paths:

* ``evolve_state``   -- pure states, i dpsi/dt = H(t) psi
* ``evolve_density`` -- density matrices, drho/dt = -i[H, rho] + sum_k
  gamma_k D[O_k] rho with D[O] rho = O rho O^dag - {O^dag O, rho}/2
* ``evolve_trajectories`` -- Monte Carlo wave-function unraveling of the
  same master equation with fixed seeds (used when the density matrix is
  too large to propagate directly)

Observables are sampled on a caller-supplied grid: squared overlaps with
target kets and weighted diagonal sums, so density matrices never need to
be stored along the way.  Decay rates are entered in kHz and interpreted
as linear rates 1/T (Gamma in exp(-Gamma t)); the 2pi never enters here,
which is what makes Gamma = 1/T1 reproduce the quoted T1 values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels, hilbert
from .hilbert import HilbertSpec, NumericalIntegrityError
from .pulses import constant_drive
from .hamiltonians import TimeDependentOperator

KHZ_TO_INV_US = 1e-3  # linear rate: 1 kHz = 1e-3 / us

__all__ = [
    "IntegratorConfig",
    "IntegrationStats",
    "StiffnessError",
    "DecoherenceRates",
    "CollapseTerm",
    "CollapseSet",
    "EvolutionResult",
    "build_collapse_set",
    "dressed_decoherence",
    "evolve_state",
    "evolve_density",
    "evolve_trajectories",
]


class StiffnessError(RuntimeError):
    """Adaptive step size underflowed; the problem is stiffer than the method."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Error-control settings for the adaptive RK pair.

    max_step defaults to 2 pi / (20 omega_max) where omega_max is the
    fastest coefficient frequency of the Hamiltonian at hand; runs are
    deterministic given a config (trajectories use seed + trajectory index).
    """

    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float | None = None
    trajectories: int = 500
    seed: int = 1234

    def resolved_max_step(self, ham: TimeDependentOperator, span: float) -> float:
        if self.max_step is not None:
            return self.max_step
        om = ham.omega_max()
        cap = span / 20.0
        if om > 0.0:
            cap = min(cap, 2.0 * math.pi / (20.0 * om))
        return cap


@dataclass
class IntegrationStats:
    accepted: int = 0
    rejected: int = 0
    nfev: int = 0
    max_norm_drift: float = 0.0
    max_trace_drift: float = 0.0

    def absorb(self, na, nr, nf):
        self.accepted += int(na)
        self.rejected += int(nr)
        self.nfev += int(nf)


@dataclass(frozen=True)
class DecoherenceRates:
    """Decoherence inputs in kHz (linear rates; see module docstring)."""

    gamma_d_khz: float = 0.0
    gamma_r_khz: float = 0.0
    gamma_kappa_khz: float = 0.0
    kappa_phi_khz: float = 0.0

    def __post_init__(self):
        for name in ("gamma_d_khz", "gamma_r_khz", "gamma_kappa_khz",
                     "kappa_phi_khz"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def any_active(self) -> bool:
        return (self.gamma_d_khz > 0 or self.gamma_r_khz > 0
                or self.gamma_kappa_khz > 0)


@dataclass(frozen=True)
class CollapseTerm:
    """One Lindblad dissipator: rate (1/us) and its operator on the full space.

    qudit_levels is set to (i, j) when the operator is |i><j| on the qudit
    tensor cavity identities; the density solver then applies the recycling
    term as a block copy instead of a generic sparse product.
    """

    rate: float
    op: sp.csr_matrix
    qudit_levels: tuple | None = None


@dataclass
class CollapseSet:
    spec: HilbertSpec
    terms: list = field(default_factory=list)

    def __len__(self):
        return len(self.terms)

    def add(self, rate: float, op, qudit_levels=None):
        if rate < 0:
            raise ValueError(f"collapse rate must be >= 0, got {rate}")
        if rate > 0:
            self.terms.append(
                CollapseTerm(rate, sp.csr_matrix(op, dtype=complex), qudit_levels)
            )

    def damping(self) -> sp.csr_matrix:
        """sum_k gamma_k O_k^dag O_k (the anti-hermitian part of the
        effective non-hermitian Hamiltonian carries -i/2 of this)."""
        n = self.spec.size
        out = sp.csr_matrix((n, n), dtype=complex)
        for term in self.terms:
            out = out + term.rate * (term.op.conj().T @ term.op)
        return out.tocsr()

    def packed_jumps(self):
        """(block rates, block (i,j) pairs, blocksize, generic rates/csr arrays)."""
        n = self.spec.size
        blocksize = self.spec.cavity_dim ** 2
        b_rates, b_blocks = [], []
        g_terms = []
        for term in self.terms:
            if term.qudit_levels is not None:
                b_rates.append(term.rate)
                b_blocks.append(term.qudit_levels)
            else:
                g_terms.append(term)
        bj_rates = np.asarray(b_rates, dtype=np.float64)
        bj_blocks = (
            np.asarray(b_blocks, dtype=np.int64)
            if b_blocks
            else np.zeros((0, 2), dtype=np.int64)
        )
        gj_rates = np.asarray([t.rate for t in g_terms], dtype=np.float64)
        gj_indptr = np.zeros((len(g_terms), n + 1), dtype=np.int64)
        idx_parts, data_parts = [], []
        off = 0
        for i, term in enumerate(g_terms):
            m = term.op.tocsr()
            m.sort_indices()
            gj_indptr[i] = m.indptr.astype(np.int64) + off
            idx_parts.append(m.indices.astype(np.int64))
            data_parts.append(m.data.astype(np.complex128))
            off += m.nnz
        gj_indices = (
            np.concatenate(idx_parts) if idx_parts else np.zeros(0, np.int64)
        )
        gj_data = (
            np.concatenate(data_parts) if data_parts else np.zeros(0, np.complex128)
        )
        return bj_rates, bj_blocks, blocksize, gj_rates, gj_indptr, gj_indices, gj_data


def build_collapse_set(
    spec: HilbertSpec,
    gamma_d_khz: float = 0.0,
    gamma_r_khz: float = 0.0,
    gamma_kappa_khz: float = 0.0,
) -> CollapseSet:
    """Dissipators of the master equation.

    Dephasing |f><f| (f = 3, 4) at Gamma_d; relaxation |i><4| (i = 0..3) at
    Gamma_r/4, |j><3| (j = 0..2) at Gamma_r/3, |0><2| and |0><1| at Gamma_r;
    photon loss a_1, a_2 at Gamma_kappa.  Rates in kHz, converted once to
    linear 1/us rates.
    """
    for name, g in (("gamma_d", gamma_d_khz), ("gamma_r", gamma_r_khz),
                    ("gamma_kappa", gamma_kappa_khz)):
        if g < 0:
            raise ValueError(f"{name} must be >= 0, got {g}")
    cs = CollapseSet(spec)
    gd = gamma_d_khz * KHZ_TO_INV_US
    gr = gamma_r_khz * KHZ_TO_INV_US
    gk = gamma_kappa_khz * KHZ_TO_INV_US

    def qudit_op(i, j):
        return hilbert.embed(hilbert.qudit_transition(i, j), "qudit", spec)

    for f in (3, 4):
        cs.add(gd, qudit_op(f, f), qudit_levels=(f, f))
    for i in range(4):
        cs.add(gr / 4.0, qudit_op(i, 4), qudit_levels=(i, 4))
    for j in range(3):
        cs.add(gr / 3.0, qudit_op(j, 3), qudit_levels=(j, 3))
    cs.add(gr, qudit_op(0, 2), qudit_levels=(0, 2))
    cs.add(gr, qudit_op(0, 1), qudit_levels=(0, 1))
    a = hilbert.annihilation(spec.cavity_dim)
    cs.add(gk, hilbert.embed(a, "cavity1", spec))
    cs.add(gk, hilbert.embed(a, "cavity2", spec))
    return cs


def dressed_decoherence(
    lambda1: float,
    lambda2: float,
    delta1: float,
    delta2: float,
    gamma_kappa_khz: float,
    kappa_phi_khz: float,
    gamma_r_khz: float,
    gamma_d_khz: float,
) -> tuple[float, float]:
    """Coupling-dressed relaxation and dephasing times (T1', T2') in us.

    Gamma_1' = (lambda1^2/Delta1^2 + lambda2^2/Delta2^2) Gamma_kappa +
    Gamma_r and Gamma_phi = (same factor) kappa_phi + Gamma_d with
    T2' = 1/(1/(2 T1') + Gamma_phi).  Couplings and detunings may be in any
    common unit (only the ratios enter); rates are kHz.
    """
    if delta1 == 0 or delta2 == 0:
        raise ValueError("detunings must be nonzero")
    purcell = (lambda1 / delta1) ** 2 + (lambda2 / delta2) ** 2
    g1 = (purcell * gamma_kappa_khz + gamma_r_khz) * KHZ_TO_INV_US
    gphi = (purcell * kappa_phi_khz + gamma_d_khz) * KHZ_TO_INV_US
    if g1 <= 0:
        raise ValueError("total relaxation rate is zero; T1' undefined")
    t1 = 1.0 / g1
    t2 = 1.0 / (0.5 / t1 + gphi)
    return t1, t2


@dataclass
class EvolutionResult:
    """Sampled output of an evolution run.

    proj_values[i, j] is <T_j|rho(t_i)|T_j> (equals |<T_j|psi>|^2 on the
    pure-state path), diag_values are weighted diagonal sums (populations,
    mean photon numbers, truncation leakage), drift records the norm or
    trace deviation seen at each sample before renormalization.
    """

    times: np.ndarray
    proj_values: np.ndarray
    diag_values: np.ndarray
    final: np.ndarray
    stats: IntegrationStats
    drift: np.ndarray
    states: list | None = None
    metadata: dict = field(default_factory=dict)


_EMPTY_JUMPS = (
    np.zeros(0, np.float64),
    np.zeros((0, 2), np.int64),
    1,
    np.zeros(0, np.float64),
    np.zeros((0, 1), np.int64),
    np.zeros(0, np.int64),
    np.zeros(0, np.complex128),
)


def _sample_grid(t_span, sample_times):
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 < t0:
        raise ValueError(f"t_span must be increasing, got {t_span}")
    if sample_times is None:
        grid = np.array([t0, t1])
    else:
        grid = np.asarray(sample_times, dtype=float)
        if grid.size == 0 or grid[0] < t0 - 1e-12 or grid[-1] > t1 + 1e-12:
            raise ValueError("sample_times must lie within t_span")
    return t0, t1, grid


def _measure(y, nside, projectors, diagonals):
    if y.ndim == 1:
        pv = (
            np.abs(projectors @ y.conj()) ** 2
            if projectors is not None
            else np.zeros(0)
        )
        dv = diagonals @ np.abs(y) ** 2 if diagonals is not None else np.zeros(0)
    else:
        if projectors is not None:
            pv = np.real(np.einsum("ji,ik,jk->j", projectors.conj(),
                                   y, projectors))
        else:
            pv = np.zeros(0)
        dv = (
            diagonals @ np.real(np.diagonal(y))
            if diagonals is not None
            else np.zeros(0)
        )
    return pv, dv


def evolve_state(
    ham: TimeDependentOperator,
    psi0: np.ndarray,
    t_span,
    config: IntegratorConfig | None = None,
    sample_times=None,
    projectors=None,
    diagonals=None,
    store_states: bool = False,
    renormalize: bool = True,
) -> EvolutionResult:
    """Integrate i dpsi/dt = H(t) psi and sample observables on a grid.

    The propagating state is never renormalized between samples; at each
    sample the norm deviation is recorded (and optionally divided out).
    """
    config = config or IntegratorConfig()
    t0, t1, grid = _sample_grid(t_span, sample_times)
    n = ham.dim
    if psi0.shape != (n,):
        raise ValueError(f"psi0 has shape {psi0.shape}, expected ({n},)")
    max_step = config.resolved_max_step(ham, t1 - t0)
    kinds, params, indptr, indices, data = ham.packed()

    y = psi0.astype(np.complex128).copy()
    k = np.zeros((7, n), np.complex128)
    ytmp = np.zeros(n, np.complex128)
    work = np.zeros((0, 0), np.complex128)
    stats = IntegrationStats()
    h = 0.0
    fsal = 0
    t = t0

    rows_p, rows_d, drifts, states = [], [], [], []
    for ts in grid:
        if ts > t:
            t, h, na, nr, nf, status, fsal = _kernels.rk45_advance(
                0, t, ts, y, h, config.rtol, config.atol, max_step, 10**9,
                kinds, params, indptr, indices, data, n, *_EMPTY_JUMPS,
                k, ytmp, work, fsal,
            )
            stats.absorb(na, nr, nf)
            if status == _kernels.STATUS_MIN_STEP:
                raise StiffnessError(
                    f"step size underflow at t={t:.6g} us (h={h:.3e}, "
                    f"dim={n}, nfev={stats.nfev}); the Hamiltonian is too "
                    "stiff for the requested tolerances"
                )
        nrm = math.sqrt(_kernels.norm2(y))
        drift = abs(nrm - 1.0)
        drifts.append(drift)
        stats.max_norm_drift = max(stats.max_norm_drift, drift)
        if renormalize and nrm > 0:
            y /= nrm
            fsal = 0
        pv, dv = _measure(y, n, projectors, diagonals)
        rows_p.append(pv)
        rows_d.append(dv)
        if store_states:
            states.append(y.copy())

    return EvolutionResult(
        times=grid.copy(),
        proj_values=np.array(rows_p),
        diag_values=np.array(rows_d),
        final=y,
        stats=stats,
        drift=np.array(drifts),
        states=states if store_states else None,
    )


def evolve_density(
    ham: TimeDependentOperator,
    rho0: np.ndarray,
    t_span,
    collapse: CollapseSet | None = None,
    config: IntegratorConfig | None = None,
    sample_times=None,
    projectors=None,
    diagonals=None,
    store_states: bool = False,
) -> EvolutionResult:
    """Integrate the (Lindblad) master equation for a density matrix.

    Hermiticity is enforced by symmetrization at each sample; the trace
    deviation is recorded and a deviation beyond 1e-4 raises
    :class:`NumericalIntegrityError`.
    """
    config = config or IntegratorConfig()
    t0, t1, grid = _sample_grid(t_span, sample_times)
    n = ham.dim
    if rho0.shape != (n, n):
        raise ValueError(f"rho0 has shape {rho0.shape}, expected ({n},{n})")
    max_step = config.resolved_max_step(ham, t1 - t0)

    terms = TimeDependentOperator(ham.spec, list(ham.terms))
    if collapse is not None and len(collapse):
        terms.add(collapse.damping(), constant_drive(-0.5j, label="damping"))
        jumps = collapse.packed_jumps()
    else:
        jumps = _EMPTY_JUMPS
    kinds, params, indptr, indices, data = terms.packed()

    y = rho0.astype(np.complex128).reshape(-1).copy()
    k = np.zeros((7, n * n), np.complex128)
    ytmp = np.zeros(n * n, np.complex128)
    work = np.zeros((n, n), np.complex128)
    stats = IntegrationStats()
    h = 0.0
    fsal = 0
    t = t0

    rows_p, rows_d, drifts, states = [], [], [], []
    for ts in grid:
        if ts > t:
            t, h, na, nr, nf, status, fsal = _kernels.rk45_advance(
                1, t, ts, y, h, config.rtol, config.atol, max_step, 10**9,
                kinds, params, indptr, indices, data, n, *jumps,
                k, ytmp, work, fsal,
            )
            stats.absorb(na, nr, nf)
            if status == _kernels.STATUS_MIN_STEP:
                raise StiffnessError(
                    f"step size underflow at t={t:.6g} us (h={h:.3e}, "
                    f"dim={n}x{n}, nfev={stats.nfev})"
                )
        rho = y.reshape(n, n)
        rho[:] = 0.5 * (rho + rho.conj().T)
        fsal = 0
        tr = float(np.real(np.trace(rho)))
        drift = abs(tr - 1.0)
        drifts.append(drift)
        stats.max_trace_drift = max(stats.max_trace_drift, drift)
        if drift > 1e-4:
            raise NumericalIntegrityError(
                f"trace drift {drift:.3e} exceeds 1e-4 at t={ts:.6g} us"
            )
        pv, dv = _measure(rho, n, projectors, diagonals)
        rows_p.append(pv)
        rows_d.append(dv)
        if store_states:
            states.append(rho.copy())

    return EvolutionResult(
        times=grid.copy(),
        proj_values=np.array(rows_p),
        diag_values=np.array(rows_d),
        final=y.reshape(n, n),
        stats=stats,
        drift=np.array(drifts),
        states=states if store_states else None,
    )


def evolve_trajectories(
    ham: TimeDependentOperator,
    psi0: np.ndarray,
    t_span,
    collapse: CollapseSet,
    config: IntegratorConfig | None = None,
    sample_times=None,
    projectors=None,
    diagonals=None,
) -> EvolutionResult:
    """Monte Carlo wave-function unraveling of the master equation.

    Each trajectory evolves under the non-hermitian H - i/2 sum gamma
    O^dag O; a quantum jump fires when the squared norm crosses a uniform
    draw, with the jump time located by bisection and the channel chosen
    proportionally to gamma ||O psi||^2.  Trajectory k is seeded with
    (seed, k), so results are reproducible and independent of scheduling;
    averages are accumulated in trajectory order.
    """
    config = config or IntegratorConfig()
    t0, t1, grid = _sample_grid(t_span, sample_times)
    n = ham.dim
    max_step = config.resolved_max_step(ham, t1 - t0)

    terms = TimeDependentOperator(ham.spec, list(ham.terms))
    if len(collapse):
        terms.add(collapse.damping(), constant_drive(-0.5j, label="damping"))
    kinds, params, indptr, indices, data = terms.packed()
    jump_ops = [(term.rate, term.op) for term in collapse.terms]

    k = np.zeros((7, n), np.complex128)
    ytmp = np.zeros(n, np.complex128)
    work = np.zeros((0, 0), np.complex128)
    stats = IntegrationStats()
    ntraj = config.trajectories
    acc_p = np.zeros((grid.size, projectors.shape[0] if projectors is not None else 0))
    acc_d = np.zeros((grid.size, diagonals.shape[0] if diagonals is not None else 0))
    n_jumps = 0

    def advance(y, ta, tb, h, fsal, nmax=10**9):
        t, h, na, nr, nf, status, fsal = _kernels.rk45_advance(
            0, ta, tb, y, h, config.rtol, config.atol, max_step, nmax,
            kinds, params, indptr, indices, data, n, *_EMPTY_JUMPS,
            k, ytmp, work, fsal,
        )
        stats.absorb(na, nr, nf)
        if status == _kernels.STATUS_MIN_STEP:
            raise StiffnessError(f"trajectory step underflow at t={t:.6g}")
        return t, h, fsal

    for traj in range(ntraj):
        rng = np.random.default_rng((config.seed, traj))
        y = psi0.astype(np.complex128).copy()
        t = t0
        h = 0.0
        fsal = 0
        threshold = rng.random()
        for i, ts in enumerate(grid):
            while t < ts:
                y_prev = y.copy()
                t_prev = t
                t, h, fsal = advance(y, t, ts, h, fsal, nmax=1)
                if _kernels.norm2(y) < threshold:
                    # bisect the jump time inside [t_prev, t]
                    lo, hi, ylo = t_prev, t, y_prev
                    for _ in range(48):
                        if hi - lo <= 1e-12 * max(1.0, abs(hi)):
                            break
                        mid = 0.5 * (lo + hi)
                        ym = ylo.copy()
                        _, _, _ = advance(ym, lo, mid, 0.0, 0)
                        if _kernels.norm2(ym) < threshold:
                            hi = mid
                        else:
                            lo, ylo = mid, ym
                    y = ylo
                    t = lo
                    weights = np.array(
                        [rate * _kernels.norm2(op @ y) for rate, op in jump_ops]
                    )
                    total = weights.sum()
                    pick = rng.random() * total
                    c = int(np.searchsorted(np.cumsum(weights), pick))
                    c = min(c, len(jump_ops) - 1)
                    y = jump_ops[c][1] @ y
                    y /= math.sqrt(_kernels.norm2(y))
                    threshold = rng.random()
                    h, fsal = 0.0, 0
                    n_jumps += 1
            ynorm = y / math.sqrt(_kernels.norm2(y))
            pv, dv = _measure(ynorm, n, projectors, diagonals)
            acc_p[i] += pv
            acc_d[i] += dv

    acc_p /= ntraj
    acc_d /= ntraj
    return EvolutionResult(
        times=grid.copy(),
        proj_values=acc_p,
        diag_values=acc_d,
        final=np.zeros(0, np.complex128),
        stats=stats,
        drift=np.zeros(grid.size),
        metadata={"trajectories": ntraj, "jumps": n_jumps},
    )
