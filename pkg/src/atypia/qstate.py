"""Finite-dimensional quantum states and the entropic functionals used by the rates.

Every functional here is a function of a spectrum: matrices are
diagonalised once with :func:`numpy.linalg.eigh` and everything else is
computed from the eigenvalues, so results are basis independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-12
RANK_TOL = 1e-12

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


class ValidationError(ValueError):
    """Raised when a matrix or vector violates a state invariant."""


def _hermitian_defect(a: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    return float(np.max(np.abs(a - a.conj().T))) / scale if a.size else 0.0


def _as_square(entries, name: str) -> np.ndarray:
    a = np.array(entries, dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValidationError(f"{name} must be a nonempty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues sorted in nonincreasing order."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        ev = np.sort(np.asarray(self.eigenvalues, dtype=float))[::-1].copy()
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[-1])

    def __len__(self):
        return self.eigenvalues.size

    def __iter__(self):
        return iter(self.eigenvalues)

    def __repr__(self):
        return f"Spectrum({np.array2string(self.eigenvalues, precision=6)})"


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A Hermitian, positive semidefinite, unit-trace matrix.

    The constructor validates the invariants to 1e-12. Hot loops that
    already know their input is valid use :meth:`trusted` instead.
    """

    entries: np.ndarray
    _eigvals: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        a = _as_square(self.entries, "density matrix")
        if _hermitian_defect(a) > HERMITIAN_TOL:
            raise ValidationError("density matrix is not Hermitian")
        a = 0.5 * (a + a.conj().T)
        tr = np.trace(a).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"density matrix has trace {tr!r}, expected 1")
        ev = np.linalg.eigvalsh(a)
        if ev[0] < -PSD_TOL:
            raise ValidationError(f"density matrix has negative eigenvalue {ev[0]!r}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "_eigvals", ev)

    @classmethod
    def trusted(cls, entries: np.ndarray) -> "DensityMatrix":
        """Wrap ``entries`` without validation. The caller guarantees the invariants."""
        obj = object.__new__(cls)
        a = np.asarray(entries, dtype=complex)
        object.__setattr__(obj, "entries", a)
        object.__setattr__(obj, "_eigvals", None)
        return obj

    @classmethod
    def maximally_mixed(cls, m: int) -> "DensityMatrix":
        if m < 1:
            raise ValidationError("dimension must be positive")
        return cls.trusted(np.eye(m, dtype=complex) / m)

    @classmethod
    def from_spectrum(cls, eigenvalues, basis: np.ndarray | None = None) -> "DensityMatrix":
        """Build ``V diag(p) V^dagger``; the computational basis when ``basis`` is None."""
        p = np.asarray(eigenvalues, dtype=float)
        if basis is None:
            return cls(np.diag(p).astype(complex))
        v = np.asarray(basis, dtype=complex)
        return cls((v * p) @ v.conj().T)

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        v = np.asarray(psi, dtype=complex).ravel()
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def eigvals(self) -> np.ndarray:
        """Ascending eigenvalues (cached)."""
        if self._eigvals is None:
            object.__setattr__(self, "_eigvals", np.linalg.eigvalsh(self.entries))
        return self._eigvals

    def spectrum(self) -> Spectrum:
        return Spectrum(self.eigvals())

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, spectrum={np.round(self.eigvals()[::-1], 6)})"


@dataclass(frozen=True, eq=False)
class HermitianObservable:
    entries: np.ndarray
    traceless: bool = False

    def __post_init__(self):
        a = _as_square(self.entries, "observable")
        if _hermitian_defect(a) > HERMITIAN_TOL:
            raise ValidationError("observable is not Hermitian")
        a = 0.5 * (a + a.conj().T)
        if self.traceless and abs(np.trace(a)) > TRACE_TOL:
            raise ValidationError("observable flagged traceless has nonzero trace")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def diag(cls, values, traceless: bool = False) -> "HermitianObservable":
        return cls(np.diag(np.asarray(values, dtype=float)).astype(complex), traceless=traceless)

    @classmethod
    def projector(cls, m: int, rank: int) -> "HermitianObservable":
        """Projector onto the first ``rank`` computational basis vectors."""
        if not 0 <= rank <= m:
            raise ValidationError(f"projector rank {rank} outside [0, {m}]")
        return cls.diag([1.0] * rank + [0.0] * (m - rank))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def centered(self) -> "HermitianObservable":
        """The traceless part ``W - Tr[W]/m``."""
        m = self.dim
        return HermitianObservable(
            self.entries - np.trace(self.entries).real / m * np.eye(m), traceless=True
        )

    def expectation(self, rho) -> float:
        return float(np.real(np.trace(self.entries @ np.asarray(rho))))

    def op_norm(self) -> float:
        return float(np.max(np.abs(self.eigvals())))


@dataclass(frozen=True, eq=False)
class BlochVector:
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise ValidationError("Bloch vector must be a finite real 3-vector")
        if np.linalg.norm(t) > 1.0 + 1e-12:
            raise ValidationError(f"Bloch vector norm {np.linalg.norm(t)!r} exceeds 1")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.t))


def _check_state(rho) -> DensityMatrix:
    if isinstance(rho, DensityMatrix):
        return rho
    return DensityMatrix(rho)


def _zero_cut(ev: np.ndarray) -> float:
    return RANK_TOL * max(1.0, float(np.max(ev)))


def rel_entropy_vs_pi_from_spectrum(eigenvalues) -> float:
    """``-(1/m) sum_k ln(m p_k)``; ``+inf`` when any ``p_k`` falls under the rank tolerance."""
    p = np.asarray(eigenvalues, dtype=float)
    m = p.size
    if np.any(p < _zero_cut(p)):
        return float("inf")
    return max(0.0, float(-np.sum(np.log(m * p)) / m))


def rel_entropy_vs_pi(rho) -> float:
    """Relative entropy ``D(pi || rho)`` against the maximally mixed state, in nats.

    Uses the trace-log form ``-(1/m) Tr ln(m rho)``. Returns ``inf`` for
    rank-deficient states.
    """
    return rel_entropy_vs_pi_from_spectrum(_check_state(rho).eigvals())


def von_neumann_entropy_from_spectrum(eigenvalues) -> float:
    p = np.asarray(eigenvalues, dtype=float)
    p = p[p >= _zero_cut(p)]
    return max(0.0, float(-np.sum(p * np.log(p))))


def von_neumann_entropy(rho) -> float:
    """``-Tr[rho ln rho]`` in nats; eigenvalues under the rank tolerance contribute 0."""
    return von_neumann_entropy_from_spectrum(_check_state(rho).eigvals())


def trace_distance(rho, sigma) -> float:
    r = _check_state(rho)
    s = _check_state(sigma)
    if r.dim != s.dim:
        raise ValidationError(f"dimension mismatch: {r.dim} vs {s.dim}")
    ev = np.linalg.eigvalsh(r.entries - s.entries)
    return float(min(1.0, 0.5 * np.sum(np.abs(ev))))


def spectral_distance(p, q) -> float:
    """Half the l1 distance between sorted spectra.

    This is the trace distance between the unitary orbits of two states,
    i.e. ``min_U (1/2)||rho - U sigma U^dagger||_1``.
    """
    a = np.sort(np.asarray(p, dtype=float))
    b = np.sort(np.asarray(q, dtype=float))
    return float(0.5 * np.sum(np.abs(a - b)))


def _check_prob(x: float, name: str) -> float:
    x = float(x)
    if not (0.0 <= x <= 1.0) or not np.isfinite(x):
        raise ValidationError(f"{name}={x!r} outside [0, 1]")
    return x


def _xlogy_ratio(a: float, b: float) -> float:
    if a == 0.0:
        return 0.0
    if b == 0.0:
        return float("inf")
    return a * np.log(a / b)


def binary_rel_entropy(alpha: float, beta: float) -> float:
    """Binary relative entropy ``D({a, 1-a} || {b, 1-b})`` in nats, with ``0 ln 0 = 0``."""
    a = _check_prob(alpha, "alpha")
    b = _check_prob(beta, "beta")
    val = _xlogy_ratio(a, b) + _xlogy_ratio(1.0 - a, 1.0 - b)
    return max(0.0, float(val))


def binary_rel_entropy_derivatives(alpha: float, beta: float) -> tuple[float, float, float, float]:
    """First and second partial derivatives ``(d/da, d/db, d2/da2, d2/db2)``."""
    a = float(alpha)
    b = float(beta)
    if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
        raise ValidationError("derivatives need 0 < alpha, beta < 1")
    d_a = np.log(a / (1.0 - a) * (1.0 - b) / b)
    d_b = -a / b + (1.0 - a) / (1.0 - b)
    d_aa = 1.0 / a + 1.0 / (1.0 - a)
    d_bb = a / b**2 + (1.0 - a) / (1.0 - b) ** 2
    return float(d_a), float(d_b), float(d_aa), float(d_bb)


def qubit_from_bloch(t) -> DensityMatrix:
    bv = t if isinstance(t, BlochVector) else BlochVector(t)
    rho = 0.5 * (np.eye(2) + np.einsum("k,kij->ij", bv.t, PAULI))
    return DensityMatrix(rho)


def bloch_from_qubit(rho) -> BlochVector:
    r = _check_state(rho)
    if r.dim != 2:
        raise ValidationError("Bloch vectors exist only for qubits")
    t = np.real(np.einsum("kij,ji->k", PAULI, r.entries))
    n = np.linalg.norm(t)
    if n > 1.0:
        t = t / n
    return BlochVector(t)
