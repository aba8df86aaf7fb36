"""Closed-form large-deviation rates for the example families.

Every ``rate_*`` function returns the relative-entropy infimum
``inf_{rho in Omega} D(pi || rho)`` in nats. The exponent of the
probability itself carries an extra factor ``m``; use
:attr:`RateResult.exponent`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .qstate import (
    DensityMatrix,
    HermitianObservable,
    Spectrum,
    ValidationError,
    binary_rel_entropy,
    rel_entropy_vs_pi_from_spectrum,
)
from .roots import BracketError, nu_residual, solve_entropy_root, solve_nu

INF = float("inf")
TIE_TOL = 1e-12


@dataclass
class RateResult:
    """A relative-entropy infimum with its minimiser and solver diagnostics."""

    rate: float
    m: int
    minimizer: Spectrum | DensityMatrix | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def exponent(self) -> float:
        """The large-deviation exponent ``m * rate``."""
        return self.m * self.rate

    def minimizer_spectrum(self) -> np.ndarray | None:
        if self.minimizer is None:
            return None
        if isinstance(self.minimizer, Spectrum):
            return self.minimizer.eigenvalues
        return self.minimizer.spectrum().eigenvalues

    def __float__(self):
        return float(self.rate)


def _check_open_unit(x: float, name: str) -> float:
    x = float(x)
    if not 0.0 < x < 1.0:
        raise ValidationError(f"{name}={x!r} outside (0, 1)")
    return x


def _two_level(k: int, mass: float, m: int) -> np.ndarray:
    """Spectrum with ``k`` entries ``mass/k`` and ``m-k`` entries ``(1-mass)/(m-k)``."""
    return np.array([mass / k] * k + [(1.0 - mass) / (m - k)] * (m - k))


def rate_qubit(t_norm: float) -> float:
    t = float(t_norm)
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"Bloch radius {t!r} outside [0, 1]")
    if t == 1.0:
        return INF
    return -0.5 * math.log1p(-t * t)


def rate_max_eigenvalue(eps: float, m: int) -> RateResult:
    """Infimum over ``lambda_max(rho) >= (1 + (m-1) eps)/m``."""
    eps = float(eps)
    m = int(m)
    if m < 2:
        raise ValidationError("m must be at least 2")
    if not 0.0 < eps <= 1.0:
        raise ValidationError(f"eps={eps!r} outside (0, 1)")
    if eps == 1.0:
        return RateResult(INF, m, None, {"note": "only pure states qualify"})
    val = -(math.log1p((m - 1) * eps) + (m - 1) * math.log1p(-eps)) / m
    spec = np.array([(1 + (m - 1) * eps) / m] + [(1 - eps) / m] * (m - 1))
    return RateResult(val, m, Spectrum(spec))


def rate_binary_measurement(q: float, m0: int, m: int) -> RateResult:
    """Infimum over states with ``Tr[Pi_0 rho] = q`` for a rank-``m0`` projector."""
    m0, m = int(m0), int(m)
    if not 1 <= m0 < m:
        raise ValidationError(f"need 1 <= m0 < m, got m0={m0}, m={m}")
    q = float(q)
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"q={q!r} outside [0, 1]")
    val = binary_rel_entropy(m0 / m, q)
    if not math.isfinite(val):
        return RateResult(INF, m, None)
    rho = DensityMatrix(np.diag(_two_level(m0, q, m)).astype(complex))
    return RateResult(val, m, rho)


def rate_trace_distance(t: float, m: int) -> RateResult:
    """Infimum over ``(1/2)||rho - pi||_1 >= t``: a minimum over ``m' = 1..floor(m(1-t))``."""
    t = _check_open_unit(t, "t")
    m = int(m)
    if m < 2:
        raise ValidationError("m must be at least 2")
    top = int(math.floor(m * (1.0 - t) + 1e-12))
    best, arg = INF, None
    for mp in range(1, top + 1):
        val = binary_rel_entropy(mp / m, min(1.0, mp / m + t))
        if val < best - TIE_TOL:
            best, arg = val, mp
    if arg is None or not math.isfinite(best):
        return RateResult(INF, m, None, {"grid_size": top})
    spec = _two_level(arg, arg / m + t, m)
    return RateResult(best, m, Spectrum(spec), {"m_star": arg, "grid_size": top})


def rate_entropy(eta: float, m: int) -> RateResult:
    """Infimum over ``H(rho) <= eta ln m``, minimised over two-level spectra."""
    eta = _check_open_unit(eta, "eta")
    m = int(m)
    if m < 2:
        raise ValidationError("m must be at least 2")
    best, arg, r_best = INF, None, None
    skipped = []
    for mu in range(1, m):
        try:
            r = solve_entropy_root(mu, eta, m)
        except BracketError:
            skipped.append(mu)
            continue
        if r <= 0.0:
            skipped.append(mu)
            continue
        val = binary_rel_entropy(mu / m, r)
        if val < best - TIE_TOL:
            best, arg, r_best = val, mu, r
    if arg is None:
        return RateResult(INF, m, None, {"skipped_mu": skipped})
    spec = _two_level(arg, r_best, m)
    diag = {"mu_star": arg, "r_star": r_best, "skipped_mu": skipped}
    if eta < 0.05:
        warnings.warn(
            f"entropy rate at eta={eta} approaches a rank-deficient minimiser; value may be large",
            RuntimeWarning,
            stacklevel=2,
        )
        diag["divergence_warning"] = True
    return RateResult(best, m, Spectrum(spec), diag)


def rate_expectation(w: float, W, m: int | None = None) -> RateResult:
    """Infimum over ``Tr[W rho] = w``.

    ``W`` is centered to zero trace (with ``w`` shifted accordingly), so
    any Hermitian ``W`` is accepted.
    """
    obs = W if isinstance(W, HermitianObservable) else HermitianObservable(W)
    m = obs.dim if m is None else int(m)
    if m != obs.dim:
        raise ValidationError(f"observable has dimension {obs.dim}, expected {m}")
    shift = float(np.trace(obs.entries).real) / m
    wc = float(w) - shift
    if wc == 0.0:
        return RateResult(0.0, m, DensityMatrix.maximally_mixed(m), {"nu": 0.0})
    nu = solve_nu(float(w), obs)
    Wc = obs.entries - shift * np.eye(m)
    mat = (1.0 - wc * nu) * np.eye(m) + nu * Wc
    ev = np.linalg.eigvalsh(mat)
    val = float(np.sum(np.log(ev)) / m)
    rho = np.linalg.inv(mat) / m
    return RateResult(
        max(0.0, val),
        m,
        DensityMatrix(0.5 * (rho + rho.conj().T)),
        {"nu": nu, "residual": abs(nu_residual(nu, float(w), obs))},
    )


def nu_star_m3(w: float) -> float:
    """Closed-form multiplier for ``m = 3``, ``W = diag(1, 0, -1)``."""
    w = float(w)
    if w == 0.0:
        raise ValidationError("w = 0 is a removable point; the limit is nu ~ -3w/2")
    if not -1.0 < w < 1.0:
        raise ValidationError(f"w={w!r} outside (-1, 1)")
    # (1 - 3w^2 - sqrt(1+3w^2)) / (3w(1-w^2)), rationalised to avoid cancellation at small w
    return -3.0 * w / (1.0 - 3.0 * w * w + math.sqrt(1.0 + 3.0 * w * w))


def rate_w3(w: float) -> float:
    w = float(w)
    if not -1.0 < w < 1.0:
        raise ValidationError(f"w={w!r} outside (-1, 1)")
    if w == 0.0:
        return 0.0
    nu = nu_star_m3(w)
    return sum(math.log(1.0 - (w - k) * nu) for k in (-1, 0, 1)) / 3.0


# --------------------------------------------------------------------------
# Gaussian picture


def gell_mann_basis(m: int) -> np.ndarray:
    """Hermitian basis ``A_0 = I, A_1..A_{m^2-1}`` with ``(1/m) Tr[A_r A_s] = delta_rs``.

    Order after the identity: symmetric off-diagonals ``(j<k)``, then
    antisymmetric off-diagonals ``(j<k)``, then diagonal ones ``l = 1..m-1``.
    """
    m = int(m)
    mats = [np.eye(m, dtype=complex)]
    scale = math.sqrt(m / 2.0)
    pairs = [(j, k) for j in range(m) for k in range(j + 1, m)]
    for j, k in pairs:
        a = np.zeros((m, m), dtype=complex)
        a[j, k] = a[k, j] = 1.0
        mats.append(scale * a)
    for j, k in pairs:
        a = np.zeros((m, m), dtype=complex)
        a[j, k] = -1j
        a[k, j] = 1j
        mats.append(scale * a)
    for l in range(1, m):
        d = np.zeros(m)
        d[:l] = 1.0
        d[l] = -l
        d *= math.sqrt(2.0 / (l * (l + 1)))
        mats.append(scale * np.diag(d).astype(complex))
    return np.array(mats)


@dataclass(frozen=True, eq=False)
class GaussianRatePoint:
    """Coordinates of an operator in the basis of :func:`gell_mann_basis`."""

    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        m = int(round(math.sqrt(t.size)))
        if m * m != t.size or m < 1:
            raise ValidationError(f"coordinate vector length {t.size} is not a square")
        if not np.all(np.isfinite(t)):
            raise ValidationError("coordinates must be finite")
        object.__setattr__(self, "t", t)

    @property
    def m(self) -> int:
        return int(round(math.sqrt(self.t.size)))

    def operator(self) -> np.ndarray:
        """``t . A``."""
        return np.einsum("r,rij->ij", self.t, gell_mann_basis(self.m))

    @classmethod
    def from_operator(cls, op) -> "GaussianRatePoint":
        a = np.asarray(op, dtype=complex)
        m = a.shape[0]
        basis = gell_mann_basis(m)
        return cls(np.real(np.einsum("rij,ji->r", basis, a)) / m)


def _point(t) -> GaussianRatePoint:
    return t if isinstance(t, GaussianRatePoint) else GaussianRatePoint(t)


def gaussian_sanov_rate(t) -> float:
    """Relative entropy of the nearest Gaussian law with second moments ``t``.

    ``Tr[s - I - ln s]`` with ``s = t.A / 2m`` when ``t.A`` is positive
    definite, ``inf`` otherwise.
    """
    p = _point(t)
    m = p.m
    ev = np.linalg.eigvalsh(p.operator()) / (2 * m)
    if ev[0] <= 1e-12 * max(1.0, abs(ev[-1])):
        return INF
    return float(np.sum(ev - 1.0 - np.log(ev)))


def gaussian_rate_scale_min(t) -> float:
    """Minimum of :func:`gaussian_sanov_rate` along the ray ``lambda t``, ``lambda > 0``.

    Closed form ``-Tr ln(m rho(t))`` with ``rho(t) = t.A / Tr[t.A]``.
    """
    p = _point(t)
    m = p.m
    ev = np.linalg.eigvalsh(p.operator())
    if ev[0] < -1e-12 * max(1.0, abs(ev[-1])):
        return INF
    if np.sum(ev) <= 0:
        raise ValidationError("t.A must be a nonzero positive semidefinite operator")
    return m * rel_entropy_vs_pi_from_spectrum(ev / np.sum(ev))


# --------------------------------------------------------------------------
# coherence


def coherence_rate_upper(omega: float) -> float:
    omega = _check_open_unit(omega, "omega")
    return -math.log1p(-omega)


def coherence_rate_levy(omega: float) -> float:
    omega = _check_open_unit(omega, "omega")
    return omega * omega / (36.0 * math.pi**3 * math.log(2.0))


def coherence_dstar(s: float, t_norm_sq: float) -> float:
    """Gaussian rate for a 2-vector law with ``E|z|^2 = s`` and ``|E z|^2 = t_norm_sq``."""
    s, tsq = float(s), float(t_norm_sq)
    if not (s > 0.0 and tsq >= 0.0 and tsq / s < 1.0):
        return INF
    return s / 2.0 - math.log((s - tsq) / 2.0) - 1.0


def coherence_dstar_min(kappa: float) -> float:
    """Numerical minimum of :func:`coherence_dstar` over ``kappa <= |t|^2 / s``."""
    kappa = _check_open_unit(kappa, "kappa")

    def obj(x):
        s = math.exp(x[0])
        frac = kappa + (1.0 - kappa) * expit(x[1])
        return coherence_dstar(s, frac * s)

    best = INF
    for x0 in ([0.0, -4.0], [1.5, 0.0], [-1.0, -8.0]):
        res = minimize(obj, x0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
        best = min(best, float(res.fun))
    return best


# --------------------------------------------------------------------------
# comparison exponents from concentration-of-measure bounds

LEVY_KINDS = ("max_eig", "entropy", "expectation_opnorm", "expectation_spread", "coherence")


def levy_comparison_rates(kind: str, **params) -> float:
    """Exponent implied by an earlier Levy-lemma style bound.

    Kinds and parameters:

    ``max_eig`` (``m``, ``eps``), ``entropy`` (``m``, ``delta``),
    ``expectation_opnorm`` (``m``, ``w``, ``W``),
    ``expectation_spread`` (``m``, ``w``, ``W``), ``coherence`` (``omega``).
    """
    if kind == "max_eig":
        m, eps = int(params["m"]), float(params["eps"])
        return (m - 1) ** 2 * eps**2 / 14.0
    if kind == "entropy":
        m, delta = int(params["m"]), float(params["delta"])
        return m * delta**2 / (8.0 * math.pi**2)
    if kind in ("expectation_opnorm", "expectation_spread"):
        m, w = int(params["m"]), float(params["w"])
        ev = np.linalg.eigvalsh(np.asarray(params["W"], dtype=complex))
        if kind == "expectation_opnorm":
            return m * w * w / (18.0 * math.pi**3 * float(np.max(np.abs(ev))) ** 2)
        spread = float(ev[-1] - ev[0])
        return 2.0 * m * w * w / (9.0 * math.pi**3 * spread**2)
    if kind == "coherence":
        return coherence_rate_levy(params["omega"])
    raise ValidationError(f"unknown comparison kind {kind!r}; expected one of {LEVY_KINDS}")
