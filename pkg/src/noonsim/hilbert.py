"""Truncated Fock-space and qudit operator algebra.

The simulated system is a five-level qudit coupled to two microwave
cavities, each truncated to ``d`` Fock levels.  The tensor-product
ordering is fixed everywhere to (qudit, cavity1, cavity2), so a basis
state reads |j, n1, n2> with j in 0..4 and nk in 0..d-1.

Operators are plain ``scipy.sparse`` CSR matrices and states are plain
complex ndarrays; there is deliberately no operator wrapper class, so
everything composes directly with scipy/numpy.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

QUDIT_DIM = 5

__all__ = [
    "QUDIT_DIM",
    "HilbertSpec",
    "TruncationError",
    "TruncationWarning",
    "NumericalIntegrityError",
    "annihilation",
    "creation",
    "number_op",
    "qudit_transition",
    "identity",
    "embed",
    "displacement",
    "coherent_tail",
    "default_cavity_dim",
    "basis_state",
    "displaced_vacuum",
    "expectation",
    "fidelity_state",
    "qudit_populations",
    "cavity_mean_photons",
    "fock_level_weights",
]


class TruncationError(ValueError):
    """Cavity truncation too small for the requested coherent amplitude."""


class TruncationWarning(UserWarning):
    """Coherent-state tail is small but not negligible at this truncation."""


class NumericalIntegrityError(RuntimeError):
    """A quantity left its mathematically allowed range beyond noise level."""


@dataclass(frozen=True)
class HilbertSpec:
    """Dimensions of the qudit (+) two-cavity product space.

    Attributes
    ----------
    cavity_dim : int
        Fock truncation d; both cavities keep levels 0..d-1.
    qudit_dim : int
        Number of qudit levels (fixed to 5 for this system).
    """

    cavity_dim: int
    qudit_dim: int = QUDIT_DIM

    def __post_init__(self):
        if self.qudit_dim != QUDIT_DIM:
            raise ValueError(f"qudit_dim must be {QUDIT_DIM}, got {self.qudit_dim}")
        if self.cavity_dim < 2:
            raise ValueError(f"cavity_dim must be >= 2, got {self.cavity_dim}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.qudit_dim, self.cavity_dim, self.cavity_dim)

    @property
    def size(self) -> int:
        return self.qudit_dim * self.cavity_dim**2

    def index(self, j: int, n1: int, n2: int) -> int:
        """Flat index of |j, n1, n2> in the (qudit, cavity1, cavity2) ordering."""
        d = self.cavity_dim
        if not (0 <= j < self.qudit_dim and 0 <= n1 < d and 0 <= n2 < d):
            raise ValueError(f"state label ({j},{n1},{n2}) outside {self.dims}")
        return (j * d + n1) * d + n2


def default_cavity_dim(n_photons: int) -> int:
    """Truncation that keeps the coherent-state tail of |a0|^2 = N below ~1e-8."""
    return max(15, math.ceil(n_photons + 6.0 * math.sqrt(n_photons)) + 2)


def annihilation(d: int) -> sp.csr_matrix:
    """Single-mode annihilation operator, <m|a|n> = sqrt(n) delta_{m,n-1}."""
    if d < 2:
        raise ValueError(f"cavity dimension must be >= 2, got {d}")
    return sp.diags(np.sqrt(np.arange(1, d)), offsets=1, format="csr").astype(complex)


def creation(d: int) -> sp.csr_matrix:
    return annihilation(d).conj().T.tocsr()


def number_op(d: int) -> sp.csr_matrix:
    if d < 2:
        raise ValueError(f"cavity dimension must be >= 2, got {d}")
    return sp.diags(np.arange(d, dtype=float), format="csr").astype(complex)


def qudit_transition(j: int, k: int) -> sp.csr_matrix:
    """|j><k| on the five-level qudit."""
    if not (0 <= j < QUDIT_DIM and 0 <= k < QUDIT_DIM):
        raise ValueError(f"qudit levels must be in 0..{QUDIT_DIM - 1}, got ({j},{k})")
    op = sp.lil_matrix((QUDIT_DIM, QUDIT_DIM), dtype=complex)
    op[j, k] = 1.0
    return op.tocsr()


def identity(n: int) -> sp.csr_matrix:
    return sp.identity(n, dtype=complex, format="csr")


_SLOTS = ("qudit", "cavity1", "cavity2")


def embed(local_op, slot: str, spec: HilbertSpec) -> sp.csr_matrix:
    """Embed a single-slot operator into the full product space.

    ``slot`` is one of "qudit", "cavity1", "cavity2"; identity acts on the
    other two slots.  The local operator dimension must match the slot.
    """
    if slot not in _SLOTS:
        raise ValueError(f"slot must be one of {_SLOTS}, got {slot!r}")
    local_op = sp.csr_matrix(local_op, dtype=complex)
    expected = spec.qudit_dim if slot == "qudit" else spec.cavity_dim
    if local_op.shape != (expected, expected):
        raise ValueError(
            f"operator shape {local_op.shape} does not match slot {slot!r} "
            f"dimension {expected}"
        )
    iq = identity(spec.qudit_dim)
    ic = identity(spec.cavity_dim)
    factors = {
        "qudit": (local_op, ic, ic),
        "cavity1": (iq, local_op, ic),
        "cavity2": (iq, ic, local_op),
    }[slot]
    return sp.kron(sp.kron(factors[0], factors[1]), factors[2], format="csr")


def coherent_tail(alpha: float, d: int) -> float:
    """Poisson weight of D(alpha)|0> above Fock level d-2 (truncation proxy)."""
    if alpha == 0.0:
        return 0.0
    n = np.arange(d - 1)
    logp = -alpha**2 + 2.0 * n * np.log(abs(alpha)) - np.array(
        [math.lgamma(k + 1) for k in n]
    )
    return float(max(0.0, 1.0 - np.exp(logp).sum()))


def displacement(alpha: float, d: int, check: bool = True) -> np.ndarray:
    """Displacement operator D(alpha) = exp[alpha (a^dag - a)] on d Fock levels.

    Realized by matrix exponential of the anti-hermitian generator, so it is
    exactly unitary up to truncation leakage.  Column 0 holds the coherent
    state coefficients <m|D(alpha)|0>.

    Raises
    ------
    TruncationError
        if the top-two-level population of D(alpha)|0> is >= 1e-4.

    Warns
    -----
    TruncationWarning
        if that population is >= 1e-8 (recorded, run still usable).
    """
    alpha = float(alpha)
    if check:
        tail = coherent_tail(alpha, d) if alpha != 0.0 else 0.0
        if tail >= 1e-4:
            raise TruncationError(
                f"cavity_dim={d} inadequate for alpha={alpha:.4g} "
                f"(top-level population {tail:.3e} >= 1e-4)"
            )
        if tail >= 1e-8:
            warnings.warn(
                f"cavity_dim={d} marginal for alpha={alpha:.4g} "
                f"(top-level population {tail:.3e})",
                TruncationWarning,
                stacklevel=2,
            )
    gen = alpha * (creation(d) - annihilation(d)).toarray()
    return expm(gen)


def basis_state(spec: HilbertSpec, j: int, n1: int, n2: int) -> np.ndarray:
    psi = np.zeros(spec.size, dtype=complex)
    psi[spec.index(j, n1, n2)] = 1.0
    return psi


def displaced_vacuum(alpha: float, d: int, check: bool = True) -> np.ndarray:
    """Coherent state D(alpha)|0> as a length-d vector."""
    return displacement(alpha, d, check=check)[:, 0].copy()


def expectation(op, state: np.ndarray) -> complex:
    """<op> for a state vector (1-D) or density matrix (2-D)."""
    if state.ndim == 1:
        return complex(np.vdot(state, op @ state))
    return complex(np.trace(op @ state))


def fidelity_state(psi_target: np.ndarray, state: np.ndarray) -> float:
    """Fidelity F = sqrt(<psi|rho|psi>) of a target ket against rho (or a ket).

    Values in [-1e-10, 0) are clamped to 0 as integration noise; anything
    below -1e-10 raises :class:`NumericalIntegrityError`.
    """
    if state.ndim == 1:
        return float(abs(np.vdot(psi_target, state)))
    val = np.real(np.vdot(psi_target, state @ psi_target))
    if val < -1e-10:
        raise NumericalIntegrityError(f"<psi|rho|psi> = {val:.3e} below -1e-10")
    return math.sqrt(max(val, 0.0))


def qudit_populations(spec: HilbertSpec, state: np.ndarray) -> np.ndarray:
    """Populations of the five qudit levels (traced over both cavities)."""
    w = _diag_probs(state)
    return w.reshape(spec.dims).sum(axis=(1, 2))


def cavity_mean_photons(spec: HilbertSpec, state: np.ndarray) -> tuple[float, float]:
    w = _diag_probs(state).reshape(spec.dims)
    n = np.arange(spec.cavity_dim)
    return float((w.sum(axis=(0, 2)) * n).sum()), float((w.sum(axis=(0, 1)) * n).sum())


def fock_level_weights(spec: HilbertSpec, levels) -> np.ndarray:
    """Diagonal weight vector selecting the given Fock levels on either cavity."""
    w = np.zeros(spec.dims)
    for n in levels:
        w[:, n, :] = 1.0
        w[:, :, n] = 1.0
    w = np.minimum(w, 1.0)
    return w.reshape(-1)


def _diag_probs(state: np.ndarray) -> np.ndarray:
    if state.ndim == 1:
        return np.abs(state) ** 2
    return np.real(np.diagonal(state)).copy()
