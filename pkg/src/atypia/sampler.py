"""Gaussian samplers for induced random states and Haar random pure vectors.

Conventions
-----------
Columns are drawn as *unit* complex normals, ``g = (X + iY)/sqrt(2)`` with
``X, Y`` standard normal, so ``E[g g^dagger] = I`` and the density is
``pi^{-m} exp(-g^dagger g)``.  The induced state ``G G^dagger / Tr[G G^dagger]``
does not depend on the overall scale, and neither do likelihood ratios
(the Jacobian of the rescaling cancels), so this is the same measure as
the real ``G_{2m}`` picture with ``z = sqrt(2) (Re g, Im g)``.

A tilted proposal draws columns from ``CN(0, Sigma)`` with
``Sigma = m * sigma_target``; its log likelihood ratio against the nominal
draw is ``-Tr[(I - Sigma^{-1}) W] + n log det Sigma`` with ``W = G G^dagger``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.special import ive, logsumexp

from .qstate import DensityMatrix, ValidationError

PROPOSAL_FLOOR = 1e-6
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeededStream:
    """Key for an independent, reproducible random stream.

    Backed by the counter-based Philox generator keyed on
    ``(seed, stream_index)``, so workers holding distinct indices never
    share state.
    """

    seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_index"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= _MASK64:
                raise ValidationError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        key = np.array([int(self.seed), int(self.stream_index)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "SeededStream":
        """A sibling stream; ``index`` is mixed into the stream index."""
        return SeededStream(self.seed, (int(self.stream_index) * 1_000_003 + int(index) + 1) & _MASK64)


def _rng(stream) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, SeededStream):
        return stream.generator()
    raise TypeError(f"expected SeededStream or numpy Generator, got {type(stream).__name__}")


def complex_normal(gen: np.random.Generator, shape) -> np.ndarray:
    """Unit complex normals: ``E|g|^2 = 1``."""
    z = gen.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


def ginibre(m: int, n: int, stream) -> np.ndarray:
    """One ``m x n`` Ginibre draw with unit complex normal entries."""
    _check_dims(m, n)
    return complex_normal(_rng(stream), (m, n))


def _check_dims(m, n):
    if int(m) < 1 or int(n) < 1:
        raise ValidationError(f"dimensions must be positive, got m={m}, n={n}")


def _gram(g: np.ndarray) -> np.ndarray:
    # g has shape (..., m, n); returns G G^dagger with shape (..., m, m)
    return g @ np.conj(np.swapaxes(g, -1, -2))


def _normalise(w: np.ndarray) -> np.ndarray:
    tr = np.real(np.trace(w, axis1=-2, axis2=-1))
    w = w / tr[..., None, None]
    return 0.5 * (w + np.conj(np.swapaxes(w, -1, -2)))


def sample_induced_state(m: int, n: int, stream) -> DensityMatrix:
    """Reduced state of a Haar random pure state on ``C^m (x) C^n``."""
    g = ginibre(m, n, stream)
    return DensityMatrix.trusted(_normalise(_gram(g)))


def induced_states(m: int, n: int, count: int, stream) -> np.ndarray:
    """``count`` induced states as an array of shape ``(count, m, m)``."""
    _check_dims(m, n)
    g = complex_normal(_rng(stream), (count, m, n))
    return _normalise(_gram(g))


def sample_haar_pure(D: int, stream) -> np.ndarray:
    if int(D) < 1:
        raise ValidationError("dimension must be positive")
    return haar_pure_batch(D, 1, stream)[0]


def haar_pure_batch(D: int, count: int, stream) -> np.ndarray:
    z = complex_normal(_rng(stream), (count, D))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def coherence_statistic(psi) -> tuple[float, float]:
    """``(p_star, C_r)``: largest squared amplitude and the Shannon entropy of the amplitudes."""
    v = np.asarray(psi, dtype=complex).ravel()
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValidationError("coherence statistic needs a unit vector")
    p = np.abs(v) ** 2
    nz = p[p > 0]
    return float(p.max()), float(max(0.0, -np.sum(nz * np.log(nz))))


# --------------------------------------------------------------------------
# single-direction tilt


@dataclass(frozen=True, eq=False)
class TiltedProposal:
    """Column covariance ``Sigma = m * sigma`` with cached inverse and log-determinant."""

    sigma: np.ndarray
    sigma_inv: np.ndarray
    chol: np.ndarray
    logdet: float
    target: DensityMatrix
    gamma: float = 0.0

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    @property
    def is_nominal(self) -> bool:
        return bool(np.allclose(self.sigma, np.eye(self.dim), atol=1e-15, rtol=0))


def floor_state(sigma: DensityMatrix, floor: float = PROPOSAL_FLOOR) -> tuple[DensityMatrix, float]:
    """Mix ``sigma`` toward ``pi`` just enough that its smallest eigenvalue reaches ``floor``.

    Returns the floored state and the mixing weight ``gamma``.
    """
    m = sigma.dim
    lam_min = float(sigma.eigvals()[0])
    if lam_min >= floor or m == 1:
        return sigma, 0.0
    gamma = (floor - lam_min) / (1.0 / m - lam_min)
    a = (1.0 - gamma) * sigma.entries + gamma * np.eye(m) / m
    return DensityMatrix.trusted(0.5 * (a + a.conj().T)), float(gamma)


def make_tilted_proposal(sigma_target, floor: float = PROPOSAL_FLOOR) -> TiltedProposal:
    target = sigma_target if isinstance(sigma_target, DensityMatrix) else DensityMatrix(sigma_target)
    floored, gamma = floor_state(target, floor)
    m = floored.dim
    big = m * np.asarray(floored.entries)
    ev, vec = np.linalg.eigh(big)
    ev = np.maximum(ev, m * floor * (1 - 1e-9))
    big = (vec * ev) @ vec.conj().T
    inv = (vec / ev) @ vec.conj().T
    chol = vec * np.sqrt(ev)
    return TiltedProposal(
        sigma=big,
        sigma_inv=inv,
        chol=chol,
        logdet=float(np.sum(np.log(ev))),
        target=floored,
        gamma=gamma,
    )


def tilted_batch(prop: TiltedProposal, n: int, count: int, stream) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` tilted Gram matrices ``W`` and their log weights.

    Returns ``(W, log_weight)`` with shapes ``(count, m, m)`` and ``(count,)``.
    """
    m = prop.dim
    _check_dims(m, n)
    h = complex_normal(_rng(stream), (count, m, n))
    g = prop.chol @ h
    log_w = (
        -np.sum(np.abs(g) ** 2, axis=(1, 2))
        + np.sum(np.abs(h) ** 2, axis=(1, 2))
        + n * prop.logdet
    )
    return _gram(g), log_w


def sample_tilted_induced_state(prop: TiltedProposal, n: int, stream) -> tuple[DensityMatrix, float]:
    """One state from the tilted proposal and its log likelihood ratio against the nominal draw."""
    w, log_w = tilted_batch(prop, n, 1, stream)
    return DensityMatrix.trusted(_normalise(w)[0]), float(log_w[0])


def tilted_log_weight(prop: TiltedProposal, g: np.ndarray) -> float:
    """Log weight of given columns ``g`` (shape ``(m, n)``) under ``prop``."""
    g = np.asarray(g, dtype=complex)
    n = g.shape[1]
    w = g @ g.conj().T
    return float(-np.real(np.trace(w - prop.sigma_inv @ w)) + n * prop.logdet)


# --------------------------------------------------------------------------
# orbit-averaged tilt for unitarily invariant events


def log_hciz(a, b) -> np.ndarray:
    """``log E_U exp(-Tr[A U B U^dagger])`` over Haar ``U`` for eigenvalues ``a`` and ``b``.

    ``a`` has shape ``(m,)`` with distinct entries; ``b`` has shape
    ``(..., m)`` with distinct entries along the last axis. Uses the
    Harish-Chandra-Itzykson-Zuber formula; the ``m = 2`` case is evaluated
    in closed form, larger ``m`` by an exact permutation expansion in
    extended precision.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float), axis=-1)
    m = a.size
    if b.shape[-1] != m:
        raise ValidationError("eigenvalue vectors differ in length")
    if m == 1:
        return -a[0] * b[..., 0]
    if m == 2:
        da = a[1] - a[0]
        db = b[..., 1] - b[..., 0]
        x = da * db
        base = -(a[0] * b[..., 1] + a[1] * b[..., 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = np.where(x > 1e-300, np.log(-np.expm1(-np.maximum(x, 1e-300)) / np.maximum(x, 1e-300)), 0.0)
        return base + corr
    return _log_hciz_mp(a, b)


def _log_hciz_mp(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    import mpmath as mp

    m = a.size
    perms = [(p, _perm_sign(p)) for p in permutations(range(m))]
    c_m = math.prod(math.factorial(p) for p in range(1, m))
    sign_t = (-1) ** (m * (m - 1) // 2)
    flat = b.reshape(-1, m)
    out = np.empty(flat.shape[0])
    with mp.workdps(40):
        am = [mp.mpf(float(x)) for x in a]
        va = mp.mpf(1)
        for i in range(m):
            for j in range(i + 1, m):
                va *= am[j] - am[i]
        for r, row in enumerate(flat):
            bm = [mp.mpf(float(x)) for x in row]
            vb = mp.mpf(1)
            for i in range(m):
                for j in range(i + 1, m):
                    vb *= bm[j] - bm[i]
            det = mp.mpf(0)
            for p, s in perms:
                det += s * mp.exp(-mp.fsum(am[i] * bm[p[i]] for i in range(m)))
            val = c_m * det / (sign_t * va * vb)
            out[r] = float(mp.log(val))
    return out.reshape(b.shape[:-1])


def _perm_sign(p) -> int:
    sign = 1
    p = list(p)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


@dataclass(frozen=True, eq=False)
class OrbitProposal:
    """Tilted proposal averaged over the unitary orbit of its covariance.

    For events that depend only on the spectrum of ``rho`` the rotated draw
    never has to be formed: the spectrum of ``U G G^dagger U^dagger`` is the
    spectrum of ``G G^dagger``, and the averaged density only needs the
    eigenvalues of ``Sigma^{-1}`` and of ``W`` (via :func:`log_hciz`).
    """

    base: TiltedProposal
    inv_eigs: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.base.dim


ORBIT_SPLIT = 1e-3


def make_orbit_proposal(sigma_target, floor: float = PROPOSAL_FLOOR) -> OrbitProposal:
    """Orbit-averaged tilt toward the spectrum of ``sigma_target``.

    Degenerate eigenvalues are split by a relative ``ORBIT_SPLIT`` so the
    averaged density has a closed form; any full-rank covariance gives an
    unbiased estimator, so this only changes the proposal, not the answer.
    """
    target = sigma_target if isinstance(sigma_target, DensityMatrix) else DensityMatrix(sigma_target)
    floored, _ = floor_state(target, floor)
    p = np.sort(floored.eigvals())[::-1].copy()
    m = p.size
    if np.allclose(p, 1.0 / m, atol=1e-14, rtol=0):
        base = make_tilted_proposal(DensityMatrix.maximally_mixed(m), floor)
        return OrbitProposal(base=base, inv_eigs=np.ones(m))
    for k in range(1, m):
        if p[k - 1] - p[k] < ORBIT_SPLIT * p[k - 1]:
            p[k] = p[k - 1] * (1 - ORBIT_SPLIT)
    p = p / p.sum()
    base = make_tilted_proposal(DensityMatrix.trusted(np.diag(p).astype(complex)), floor)
    inv_eigs = np.sort(1.0 / np.linalg.eigvalsh(base.sigma))
    if m > 1 and np.min(np.diff(inv_eigs)) <= 0 and not base.is_nominal:
        raise ValidationError("orbit proposal needs distinct covariance eigenvalues")
    return OrbitProposal(base=base, inv_eigs=inv_eigs)


def orbit_gram_eigs(prop: OrbitProposal, n: int, count: int, stream) -> np.ndarray:
    """Eigenvalues (ascending, unnormalised) of ``count`` Gram matrices drawn from ``prop``."""
    m = prop.dim
    _check_dims(m, n)
    h = complex_normal(_rng(stream), (count, m, n))
    g = prop.base.chol @ h
    return np.maximum(np.linalg.eigvalsh(_gram(g)), 0.0)


def orbit_log_ratio(prop: OrbitProposal, b: np.ndarray, n: int) -> np.ndarray:
    """``log(nominal / proposal)`` at Gram eigenvalues ``b`` of shape ``(count, m)``."""
    b = np.atleast_2d(b)
    if prop.base.is_nominal:
        return np.zeros(b.shape[0])
    return -np.sum(b, axis=1) + n * prop.base.logdet - log_hciz(prop.inv_eigs, b)


def orbit_spectra_batch(prop: OrbitProposal, n: int, count: int, stream) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` spectra of normalised states and their log weights.

    Returns ``(spectra, log_weight)``; spectra have shape ``(count, m)``,
    sorted in nonincreasing order.
    """
    b = orbit_gram_eigs(prop, n, count, stream)
    log_w = orbit_log_ratio(prop, b, n)
    spectra = (b / np.sum(b, axis=1)[:, None])[:, ::-1]
    return spectra, log_w


# --------------------------------------------------------------------------
# coherence: tilt one coordinate of a Haar vector


def coherence_tilted_batch(D: int, kappa: float, count: int, stream) -> tuple[np.ndarray, np.ndarray]:
    """Haar vectors tilted toward ``|<e_l|psi>|^2 >= kappa`` for a random ``l``.

    Coordinates are drawn with real-component variance ``1 - kappa``; one
    uniformly chosen coordinate gets a mean of modulus ``sqrt(2 kappa D)``
    and uniform phase. The log weight is taken against the equal mixture
    over coordinates and phases (the phase average is a Bessel ``I_0``).

    Returns ``(probabilities |psi_l|^2, log_weight)``; shapes ``(count, D)``
    and ``(count,)``.
    """
    if not 0.0 < kappa < 1.0:
        raise ValidationError("kappa must lie in (0, 1)")
    gen = _rng(stream)
    var = 1.0 - kappa
    c = math.sqrt(2.0 * kappa * D)
    z = gen.standard_normal((count, D, 2)) * math.sqrt(var)
    z = z[..., 0] + 1j * z[..., 1]
    pick = gen.integers(0, D, size=count)
    phase = gen.uniform(0.0, 2.0 * math.pi, size=count)
    z[np.arange(count), pick] += c * np.exp(1j * phase)
    sq = np.abs(z) ** 2
    total = np.sum(sq, axis=1)
    log_nominal = -0.5 * total - D * math.log(2.0 * math.pi)
    arg = c * np.sqrt(sq) / var
    log_i0 = np.log(ive(0, arg)) + arg
    log_prop = (
        -(total + c * c) / (2.0 * var)
        - D * math.log(2.0 * math.pi * var)
        + logsumexp(log_i0, axis=1)
        - math.log(D)
    )
    return sq / total[:, None], log_nominal - log_prop
