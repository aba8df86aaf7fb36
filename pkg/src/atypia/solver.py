"""Generic minimisation of ``D(pi || rho)`` over declarative constraint sets.

This is the independent check on the closed forms in :mod:`atypia.rates`:
nothing here uses the example-specific formulas.

* Linear expectation constraints are solved through the concave dual of
  ``min -(1/m) ln det(m rho)``; at the optimum ``rho = (m Y)^{-1}`` with
  ``Y = sum_k y_k B_k``, so a projected Newton method on the handful of
  multipliers ``y`` is exact to machine precision.
* Spectral constraints live on the probability simplex. Those built from
  ``lambda_max``, ``lambda_min`` and trace distance split into convex
  pieces with linear constraints (by permutation symmetry) and reuse the
  dual solver; entropy constraints go through a multistart SLSQP.
* Bloch regions (qubits only) reduce to the point of smallest Bloch radius.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .qstate import (
    BlochVector,
    DensityMatrix,
    HermitianObservable,
    PAULI,
    ValidationError,
    qubit_from_bloch,
    rel_entropy_vs_pi,
    rel_entropy_vs_pi_from_spectrum,
    spectral_distance,
    trace_distance,
)
from .rates import RateResult
from .roots import solve_entropy_root, solve_nu  # noqa: F401  re-exported

RELATIONS = ("=", ">=", "<=")
SPECTRAL_FUNCTIONS = ("lambda_max", "lambda_min", "entropy", "trace_distance")
BLOCH_SHAPES = ("halfspace", "ball", "outside_ball")
INFEASIBLE_RESIDUAL = 1e-4
RESIDUAL_TOL = 1e-8


class InfeasibleError(RuntimeError):
    """The constraint set has no state in it."""


def _check_relation(rel: str) -> str:
    if rel in ("<", ">"):
        raise ValidationError(
            f"strict relation {rel!r} rejected: only closed sets are supported; the rate of "
            "a set with cl(int Omega) = cl Omega equals the rate of its closure, so use "
            "'<=' or '>='"
        )
    if rel == "==":
        rel = "="
    if rel not in RELATIONS:
        raise ValidationError(f"unknown relation {rel!r}; expected one of {RELATIONS}")
    return rel


def _compare(values: np.ndarray, rel: str, target: float) -> np.ndarray:
    if rel == ">=":
        return values >= target
    if rel == "<=":
        return values <= target
    return np.abs(values - target) <= 1e-12 * max(1.0, abs(target))


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    W: HermitianObservable
    target: float
    rel: str = "="

    def __post_init__(self):
        if not isinstance(self.W, HermitianObservable):
            object.__setattr__(self, "W", HermitianObservable(self.W))
        object.__setattr__(self, "rel", _check_relation(self.rel))
        object.__setattr__(self, "target", float(self.target))

    def __eq__(self, other):
        return (
            isinstance(other, LinearConstraint)
            and self.rel == other.rel
            and self.target == other.target
            and np.array_equal(self.W.entries, other.W.entries)
        )


@dataclass(frozen=True)
class SpectralConstraint:
    fn: str
    target: float
    rel: str = ">="

    def __post_init__(self):
        if self.fn not in SPECTRAL_FUNCTIONS:
            raise ValidationError(f"unknown spectral function {self.fn!r}; expected one of {SPECTRAL_FUNCTIONS}")
        object.__setattr__(self, "rel", _check_relation(self.rel))
        object.__setattr__(self, "target", float(self.target))

    def evaluate(self, spectra: np.ndarray) -> np.ndarray:
        """Function value for spectra of shape ``(..., m)``."""
        p = np.asarray(spectra, dtype=float)
        m = p.shape[-1]
        if self.fn == "lambda_max":
            return p.max(axis=-1)
        if self.fn == "lambda_min":
            return p.min(axis=-1)
        if self.fn == "trace_distance":
            return 0.5 * np.sum(np.abs(p - 1.0 / m), axis=-1)
        q = np.clip(p, 0.0, None)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(q > 1e-300, -q * np.log(np.where(q > 1e-300, q, 1.0)), 0.0)
        return terms.sum(axis=-1)


@dataclass(frozen=True, eq=False)
class BlochRegion:
    """A region of the Bloch ball.

    ``shape`` is one of ``halfspace`` (``normal . t >= offset``), ``ball``
    (``|t - center| <= radius``) or ``outside_ball`` (``|t| >= radius``).
    A vectorised ``predicate`` mapping ``(N, 3)`` arrays to booleans may be
    given instead; it is searched on a dense grid.
    """

    shape: str | None = None
    params: dict = field(default_factory=dict)
    predicate: object = None

    def __post_init__(self):
        if self.predicate is None and self.shape not in BLOCH_SHAPES:
            raise ValidationError(f"unknown Bloch shape {self.shape!r}; expected one of {BLOCH_SHAPES}")

    def contains(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        if self.predicate is not None:
            return np.asarray(self.predicate(t), dtype=bool)
        p = self.params
        if self.shape == "halfspace":
            return t @ np.asarray(p["normal"], dtype=float) >= float(p["offset"])
        if self.shape == "ball":
            return np.linalg.norm(t - np.asarray(p["center"], dtype=float), axis=1) <= float(p["radius"])
        return np.linalg.norm(t, axis=1) >= float(p["radius"])

    def __eq__(self, other):
        if not isinstance(other, BlochRegion) or self.shape != other.shape:
            return False
        if self.predicate is not None or other.predicate is not None:
            return self.predicate is other.predicate
        keys = set(self.params) | set(other.params)
        return all(np.array_equal(np.asarray(self.params.get(k)), np.asarray(other.params.get(k))) for k in keys)


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """A closed region of the state space of dimension ``m``.

    Exactly one of ``linear`` (a nonempty list of :class:`LinearConstraint`),
    ``spectral`` or ``bloch`` is given. ``full`` marks the whole state space.
    """

    m: int
    linear: tuple = ()
    spectral: SpectralConstraint | None = None
    bloch: BlochRegion | None = None
    full: bool = False

    def __post_init__(self):
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "linear", tuple(self.linear))
        if self.m < 1:
            raise ValidationError("dimension must be positive")
        given = sum([bool(self.linear), self.spectral is not None, self.bloch is not None])
        if self.full:
            if given:
                raise ValidationError("the full state space takes no constraints")
            return
        if given != 1:
            raise ValidationError("give exactly one nonempty constraint kind")
        for c in self.linear:
            if c.W.dim != self.m:
                raise ValidationError(f"observable dimension {c.W.dim} differs from m={self.m}")
        if self.bloch is not None and self.m != 2:
            raise ValidationError("Bloch regions exist only for m = 2")

    @classmethod
    def full_space(cls, m: int) -> "ConstraintSet":
        return cls(m, full=True)

    @property
    def kind(self) -> str:
        if self.full:
            return "full"
        if self.linear:
            return "linear"
        return "spectral" if self.spectral is not None else "bloch"

    @property
    def unitarily_invariant(self) -> bool:
        return self.full or self.spectral is not None

    def contains_spectra(self, spectra: np.ndarray) -> np.ndarray:
        if self.full:
            return np.ones(np.shape(spectra)[:-1], dtype=bool)
        if self.spectral is None:
            raise ValidationError("only unitarily invariant sets can be tested on spectra")
        return _compare(self.spectral.evaluate(spectra), self.spectral.rel, self.spectral.target)

    def contains_states(self, states: np.ndarray) -> np.ndarray:
        """Membership for a batch of states of shape ``(N, m, m)``."""
        states = np.asarray(states)
        if states.ndim == 2:
            states = states[None]
        if self.full:
            return np.ones(states.shape[0], dtype=bool)
        if self.spectral is not None:
            return self.contains_spectra(np.linalg.eigvalsh(states))
        if self.bloch is not None:
            t = np.real(np.einsum("kij,nji->nk", PAULI, states))
            return self.bloch.contains(t)
        ok = np.ones(states.shape[0], dtype=bool)
        for c in self.linear:
            vals = np.real(np.einsum("ij,nji->n", c.W.entries, states))
            ok &= _compare(vals, c.rel, c.target)
        return ok

    def contains(self, rho) -> bool:
        return bool(self.contains_states(np.asarray(rho))[0])

    def distance(self, states: np.ndarray, rho_star: DensityMatrix) -> np.ndarray:
        """Distance from each state to the minimiser set.

        For unitarily invariant sets the minimiser set contains the whole
        unitary orbit of ``rho_star``, so the orbit (spectral) distance is used.
        """
        states = np.asarray(states)
        if self.unitarily_invariant:
            ev = np.linalg.eigvalsh(states)
            ref = np.sort(rho_star.eigvals())
            return 0.5 * np.sum(np.abs(ev - ref), axis=1)
        diff = states - np.asarray(rho_star.entries)[None]
        return 0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff)), axis=1)

    def residuals(self, rho) -> np.ndarray:
        """Constraint violations at ``rho`` (zero when satisfied)."""
        a = np.asarray(rho)
        out = []
        if self.linear:
            for c in self.linear:
                v = float(np.real(np.trace(c.W.entries @ a)))
                out.append(_violation(v, c.rel, c.target))
        elif self.spectral is not None:
            v = float(self.spectral.evaluate(np.linalg.eigvalsh(a)))
            out.append(_violation(v, self.spectral.rel, self.spectral.target))
        elif self.bloch is not None:
            out.append(0.0 if self.contains(a) else 1.0)
        return np.array(out)

    def to_dict(self) -> dict:
        """JSON-ready description; complex entries are stored as ``[re, im]`` pairs."""
        d = {"m": self.m}
        if self.full:
            d["full"] = True
        elif self.linear:
            d["linear"] = [{"W": _matrix_to_json(c.W.entries), "w": c.target, "rel": c.rel} for c in self.linear]
        elif self.spectral is not None:
            d["spectral"] = {"fn": self.spectral.fn, "target": self.spectral.target, "rel": self.spectral.rel}
        else:
            if self.bloch.predicate is not None:
                raise ValidationError("Bloch regions given by a Python predicate cannot be serialised")
            d["bloch"] = {"shape": self.bloch.shape}
            d["bloch"].update({k: np.asarray(v, dtype=float).tolist() for k, v in self.bloch.params.items()})
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintSet":
        """Inverse of :meth:`to_dict`; unknown keys are rejected.

        Observables may be dense matrices (real, or ``[re, im]`` pairs) or the
        shorthands ``{"diag": [...]}``, ``{"projector_rank": k}`` and
        ``"projector_rank_k"``.
        """
        if not isinstance(d, dict):
            raise ValidationError("constraint set must be a JSON object")
        _reject_unknown(d, {"m", "full", "linear", "spectral", "bloch"}, "constraint set")
        if "m" not in d:
            raise ValidationError("constraint set needs the dimension 'm'")
        try:
            m = int(d["m"])
            if d.get("full"):
                return cls.full_space(m)
            if "linear" in d:
                if not isinstance(d["linear"], list) or not d["linear"]:
                    raise ValidationError("'linear' must be a nonempty list of constraints")
                items = []
                for c in d["linear"]:
                    _reject_unknown(c, {"W", "w", "rel"}, "linear constraint")
                    items.append(LinearConstraint(_observable_from_json(c["W"], m), c["w"], c.get("rel", "=")))
                return cls(m, linear=items)
            if "spectral" in d:
                sp = d["spectral"]
                _reject_unknown(sp, {"fn", "target", "rel"}, "spectral constraint")
                return cls(m, spectral=SpectralConstraint(sp["fn"], sp["target"], sp.get("rel", ">=")))
            if "bloch" in d:
                bl = dict(d["bloch"])
                shape = bl.pop("shape")
                allowed = {"halfspace": {"normal", "offset"}, "ball": {"center", "radius"}, "outside_ball": {"radius"}}
                _reject_unknown(bl, allowed.get(shape, set()), f"Bloch region {shape!r}")
                params = {k: (float(v) if np.ndim(v) == 0 else [float(x) for x in v]) for k, v in bl.items()}
                return cls(m, bloch=BlochRegion(shape, params))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed constraint set: missing or invalid {exc}") from exc
        raise ValidationError("constraint set needs one of 'linear', 'spectral', 'bloch' or 'full'")

    @classmethod
    def from_json(cls, text: str) -> "ConstraintSet":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}") from exc

    def __eq__(self, other):
        return (
            isinstance(other, ConstraintSet)
            and self.m == other.m
            and self.full == other.full
            and self.linear == other.linear
            and self.spectral == other.spectral
            and self.bloch == other.bloch
        )

    __hash__ = None


def _matrix_to_json(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def _reject_unknown(d, allowed: set, what: str) -> None:
    if not isinstance(d, dict):
        raise ValidationError(f"{what} must be a JSON object")
    extra = set(d) - set(allowed)
    if extra:
        raise ValidationError(f"unknown keys in {what}: {sorted(extra)}")


def _observable_from_json(spec, m: int) -> HermitianObservable:
    if isinstance(spec, str):
        if spec.startswith("projector_rank_"):
            return HermitianObservable.projector(m, int(spec.rsplit("_", 1)[1]))
        raise ValidationError(f"unknown observable shorthand {spec!r}")
    if isinstance(spec, dict):
        if "diag" in spec:
            return HermitianObservable.diag(spec["diag"])
        if "projector_rank" in spec:
            return HermitianObservable.projector(m, int(spec["projector_rank"]))
        raise ValidationError(f"unknown observable shorthand {sorted(spec)}")
    a = np.asarray(spec, dtype=float)
    if a.ndim == 3 and a.shape[-1] == 2:
        return HermitianObservable(a[..., 0] + 1j * a[..., 1])
    return HermitianObservable(a)


def _violation(v: float, rel: str, target: float) -> float:
    if rel == "=":
        return abs(v - target)
    if rel == ">=":
        return max(0.0, target - v)
    return max(0.0, v - target)


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 10_000
    grad_tol: float = 1e-6
    initial_step: float = 1.0
    backtrack: float = 0.5
    restarts: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.grad_tol <= 0 or self.max_iters < 1 or not 0 < self.backtrack < 1 or self.initial_step <= 0:
            raise ValidationError("solver tolerances and step parameters must be positive")
        if self.restarts < 1:
            raise ValidationError("need at least one restart")


# --------------------------------------------------------------------------
# dual Newton for linear constraints


@dataclass
class _DualSolution:
    rho: np.ndarray
    value: float
    y: np.ndarray
    iterations: int
    residual: float
    converged: bool
    unbounded: bool


def _dual_newton(B: np.ndarray, b: np.ndarray, rels: list[str], max_iter: int = 300) -> _DualSolution:
    """Maximise ``(1/m) ln det Y + 1 - y.b`` with ``Y = sum_k y_k B_k``.

    ``B[0]`` must be the identity with ``b[0] = 1`` (normalisation).
    ``rels[k]`` fixes the sign of ``y_k``: free for ``=``, ``<= 0`` for
    ``>=`` and ``>= 0`` for ``<=``.
    """
    K, m, _ = B.shape
    lower = np.array([-np.inf if r in ("=", ">=") else 0.0 for r in rels])
    upper = np.array([np.inf if r in ("=", "<=") else 0.0 for r in rels])
    y = np.zeros(K)
    y[0] = 1.0

    def evaluate(yv):
        Y = np.einsum("k,kij->ij", yv, B)
        Y = 0.5 * (Y + Y.conj().T)
        d, V = np.linalg.eigh(Y)
        if d[0] <= 1e-300 * max(1.0, abs(d[-1])) or d[0] <= 0:
            return None
        Yinv = (V / d) @ V.conj().T
        g = float(np.sum(np.log(d)) / m + 1.0 - yv @ b)
        return g, Yinv

    cur = evaluate(y)
    g, Yinv = cur
    converged = False
    unbounded = False
    it = 0
    pg_norm = np.inf
    for it in range(1, max_iter + 1):
        YB = np.einsum("ij,kjl->kil", Yinv, B)
        grad = np.real(np.einsum("kii->k", YB)) / m - b
        at_lo = (y <= lower + 1e-15) & (grad < 0)
        at_hi = (y >= upper - 1e-15) & (grad > 0)
        free = ~(at_lo | at_hi)
        pg = np.where(free, grad, 0.0)
        pg_norm = float(np.max(np.abs(pg))) if K else 0.0
        if pg_norm <= 1e-13:
            converged = True
            break
        H = -np.real(np.einsum("kij,lji->kl", YB, YB)) / m
        Hf = H[np.ix_(free, free)]
        step_f = np.linalg.lstsq(-Hf, grad[free], rcond=1e-14)[0]
        direction = np.zeros(K)
        direction[free] = step_f
        s = 1.0
        accepted = False
        for _ in range(80):
            y_new = np.clip(y + s * direction, lower, upper)
            res = evaluate(y_new)
            if res is not None and res[0] >= g + 1e-4 * s * float(pg @ direction) - 1e-15:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            # gradient step as a fallback
            s = 1.0
            for _ in range(80):
                y_new = np.clip(y + s * pg, lower, upper)
                res = evaluate(y_new)
                if res is not None and res[0] > g:
                    accepted = True
                    break
                s *= 0.5
        if not accepted:
            break
        y = y_new
        g, Yinv = res
        if g > 1e4 or np.max(np.abs(y)) > 1e14:
            unbounded = True
            break
    if not converged and not unbounded:
        unbounded = _is_recession_direction(y, B, b)
    rho = Yinv / m
    rho = 0.5 * (rho + rho.conj().T)
    resid = _primal_residual(rho, B, b, rels)
    return _DualSolution(rho, g, y, it, resid, converged or resid <= 1e-12, unbounded)


def _is_recession_direction(y, B, b, tol: float = 1e-6) -> bool:
    """Whether the dual iterate has run off along a ray ``d`` with ``sum d_k B_k >= 0`` and ``d.b <= 0``.

    Such a ray exists exactly when no full-rank state satisfies the constraints.
    """
    n = float(np.linalg.norm(y))
    if n < 1e3:
        return False
    d = y / n
    Y = np.einsum("k,kij->ij", d, B)
    return bool(np.linalg.eigvalsh(0.5 * (Y + Y.conj().T))[0] >= -tol and d @ b <= tol)


def _primal_residual(rho, B, b, rels) -> float:
    vals = np.real(np.einsum("kij,ji->k", B, rho))
    return max(_violation(v, r, t) for v, r, t in zip(vals, rels, b))


def _feasible_point(B, b, rels, iters: int = 20000) -> tuple[np.ndarray, float]:
    """Alternating projections onto the PSD cone and each linear constraint."""
    K, m, _ = B.shape
    rho = np.eye(m, dtype=complex) / m
    norms = np.real(np.einsum("kij,kji->k", B, B))
    resid = np.inf
    for it in range(iters):
        for k in range(K):
            v = float(np.real(np.trace(B[k] @ rho)))
            viol = v - b[k]
            if rels[k] == ">=" and viol >= 0 or rels[k] == "<=" and viol <= 0:
                continue
            rho = rho - viol / norms[k] * B[k]
        d, V = np.linalg.eigh(0.5 * (rho + rho.conj().T))
        rho = (V * np.clip(d, 0.0, None)) @ V.conj().T
        if it % 50 == 0 or it == iters - 1:
            resid = _primal_residual(rho, B, b, rels)
            if resid <= 1e-10:
                break
    return rho, resid


def _solve_linear_system(B, b, rels, m) -> RateResult:
    sol = _dual_newton(B, b, rels)
    diag = {
        "method": "dual-newton",
        "iterations": sol.iterations,
        "residual": sol.residual,
        "multipliers": sol.y.tolist(),
    }
    if not sol.unbounded and sol.residual <= RESIDUAL_TOL:
        rho = DensityMatrix.trusted(sol.rho / np.real(np.trace(sol.rho)))
        diag["converged"] = sol.converged
        diag["stationarity"] = sol.residual
        return RateResult(rel_entropy_vs_pi(rho), m, rho, diag)
    point, resid = _feasible_point(B, b, rels)
    diag["projection_residual"] = resid
    if resid >= INFEASIBLE_RESIDUAL:
        raise InfeasibleError(f"constraint set looks empty (projection residual {resid:.3g})")
    if sol.unbounded:
        diag["converged"] = True
        return RateResult(float("inf"), m, DensityMatrix.trusted(point / np.real(np.trace(point))), diag)
    diag["converged"] = False
    rho = DensityMatrix.trusted(sol.rho / np.real(np.trace(sol.rho)))
    return RateResult(rel_entropy_vs_pi(rho), m, rho, diag)


def _linear_blocks(cs: ConstraintSet):
    m = cs.m
    B = [np.eye(m, dtype=complex)] + [np.asarray(c.W.entries) for c in cs.linear]
    b = [1.0] + [c.target for c in cs.linear]
    rels = ["="] + [c.rel for c in cs.linear]
    return np.array(B), np.array(b), rels


def _diag_blocks(rows: list[np.ndarray], targets: list[float], rels: list[str], m: int):
    B = [np.eye(m, dtype=complex)] + [np.diag(r).astype(complex) for r in rows]
    return np.array(B), np.array([1.0] + list(targets)), ["="] + list(rels)


# --------------------------------------------------------------------------
# spectral constraints


def _spectral_pieces(sc: SpectralConstraint, m: int):
    """Convex pieces (lists of linear constraints on the spectrum) whose union is the set.

    Returns ``None`` for kinds without a linear decomposition.
    """
    c = sc.target
    e = np.eye(m)
    ones = np.ones(m)
    if sc.fn == "lambda_max":
        if sc.rel == ">=":
            return [([e[0]], [c], [">="])]
        if sc.rel == "<=":
            return [(list(e), [c] * m, ["<="] * m)]
        return [([e[0]] + list(e[1:]), [c] * m, ["="] + ["<="] * (m - 1))]
    if sc.fn == "lambda_min":
        if sc.rel == "<=":
            return [([e[-1]], [c], ["<="])]
        if sc.rel == ">=":
            return [(list(e), [c] * m, [">="] * m)]
        return [([e[-1]] + list(e[:-1]), [c] * m, ["="] + [">="] * (m - 1))]
    if sc.fn == "trace_distance":
        # TD(p) = max_S sum_{k in S} (p_k - 1/m); by symmetry S = {1..k}
        if sc.rel == ">=":
            return [([ones * (np.arange(m) < k)], [k / m + c], [">="]) for k in range(1, m)]
        if sc.rel == "<=" and m <= 12:
            rows, tg = [], []
            for k in range(1, m):
                for S in itertools.combinations(range(m), k):
                    r = np.zeros(m)
                    r[list(S)] = 1.0
                    rows.append(r)
                    tg.append(k / m + c)
            return [(rows, tg, ["<="] * len(rows))]
        return None
    return None


def _solve_spectral(cs: ConstraintSet, cfg: SolverConfig) -> RateResult:
    sc = cs.spectral
    m = cs.m
    pi_spec = np.full(m, 1.0 / m)
    if cs.contains_spectra(pi_spec[None])[0]:
        return RateResult(0.0, m, DensityMatrix.maximally_mixed(m), {"method": "pi-feasible", "converged": True})
    if sc.fn == "trace_distance" and sc.rel == "=":
        # the '>=' optimum also solves '=' whenever it lands on the boundary
        res = _solve_spectral(ConstraintSet(m, spectral=SpectralConstraint(sc.fn, sc.target, ">=")), cfg)
        if math.isfinite(res.rate) and abs(float(sc.evaluate(res.minimizer_spectrum())) - sc.target) <= RESIDUAL_TOL:
            res.diagnostics["method"] += "+boundary-check"
            return res
        return _solve_spectral_slsqp(cs, cfg)
    pieces = _spectral_pieces(sc, m)
    if pieces is None:
        return _solve_spectral_slsqp(cs, cfg)
    best = None
    infeasible = 0
    for rows, targets, rels in pieces:
        B, b, rr = _diag_blocks(rows, targets, rels, m)
        try:
            res = _solve_linear_system(B, b, rr, m)
        except InfeasibleError:
            infeasible += 1
            continue
        if best is None or res.rate < best.rate - 1e-12:
            best = res
    if best is None:
        raise InfeasibleError("no spectrum satisfies the constraint")
    best.diagnostics["method"] = "dual-newton/convex-pieces"
    best.diagnostics["pieces"] = len(pieces)
    best.diagnostics["infeasible_pieces"] = infeasible
    return best


def _solve_spectral_slsqp(cs: ConstraintSet, cfg: SolverConfig) -> RateResult:
    sc = cs.spectral
    m = cs.m
    rng = np.random.default_rng(cfg.seed)
    floor = 1e-14

    def obj(p):
        return float(-np.sum(np.log(m * np.maximum(p, floor))) / m)

    def obj_grad(p):
        return -1.0 / (m * np.maximum(p, floor))

    def fval(p):
        return float(sc.evaluate(np.maximum(p, 0.0)))

    def fgrad(p):
        q = np.maximum(p, floor)
        if sc.fn == "entropy":
            return -(np.log(q) + 1.0)
        if sc.fn == "trace_distance":
            return 0.5 * np.sign(p - 1.0 / m)
        g = np.zeros(m)
        g[np.argmax(p) if sc.fn == "lambda_max" else np.argmin(p)] = 1.0
        return g

    cons = [{"type": "eq", "fun": lambda p: np.sum(p) - 1.0, "jac": lambda p: np.ones(m)}]
    if sc.rel == "=":
        cons.append({"type": "eq", "fun": lambda p: fval(p) - sc.target, "jac": fgrad})
    elif sc.rel == ">=":
        cons.append({"type": "ineq", "fun": lambda p: fval(p) - sc.target, "jac": fgrad})
    else:
        cons.append({"type": "ineq", "fun": lambda p: sc.target - fval(p), "jac": lambda p: -fgrad(p)})

    n_starts = max(cfg.restarts, 4 * m)
    starts = [rng.dirichlet(np.full(m, 0.5)) for _ in range(n_starts)]
    best_p, best_val, total_iters, runs = None, np.inf, 0, []
    for p0 in starts:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(
                obj,
                np.maximum(p0, 1e-6) / np.maximum(p0, 1e-6).sum(),
                jac=obj_grad,
                method="SLSQP",
                bounds=[(floor, 1.0)] * m,
                constraints=cons,
                options={"ftol": 1e-15, "maxiter": min(cfg.max_iters, 2000)},
            )
        total_iters += int(res.nit)
        p = np.maximum(res.x, floor)
        p = p / p.sum()
        viol = float(cs.residuals(np.diag(p))[0])
        runs.append(float(res.fun))
        if viol <= RESIDUAL_TOL and obj(p) < best_val:
            best_val, best_p = obj(p), p
    if best_p is None:
        raise InfeasibleError("no feasible spectrum found from any restart")
    rho = DensityMatrix(np.diag(np.sort(best_p)[::-1]).astype(complex))
    finite_runs = sorted(v for v in runs if np.isfinite(v))
    diag = {
        "method": "slsqp-multistart",
        "restarts": n_starts,
        "iterations": total_iters,
        "residual": float(cs.residuals(rho.entries)[0]),
        "converged": True,
        "best_runs": finite_runs[:3],
    }
    return RateResult(rel_entropy_vs_pi(rho), m, rho, diag)


# --------------------------------------------------------------------------
# Bloch regions


def _fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * k / n)
    theta = math.pi * (1 + 5**0.5) * k
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


def _min_norm_point(region: BlochRegion) -> np.ndarray:
    p = region.params
    if region.predicate is None:
        if region.shape == "halfspace":
            nrm = np.asarray(p["normal"], dtype=float)
            nn = np.linalg.norm(nrm)
            if nn == 0:
                raise ValidationError("halfspace normal must be nonzero")
            off = float(p["offset"])
            if off > nn:
                raise InfeasibleError("halfspace misses the Bloch ball")
            return max(off, 0.0) / nn * (nrm / nn)
        if region.shape == "ball":
            c = np.asarray(p["center"], dtype=float)
            r = float(p["radius"])
            dist = np.linalg.norm(c)
            if dist - r > 1.0:
                raise InfeasibleError("ball misses the Bloch ball")
            if dist <= r:
                return np.zeros(3)
            return c * (1 - r / dist)
        r = float(p["radius"])
        if r > 1.0:
            raise InfeasibleError("radius exceeds the Bloch ball")
        return np.array([0.0, 0.0, max(r, 0.0)])
    # generic vectorised predicate: dense radial scan then bisection
    dirs = _fibonacci_sphere(4000)
    radii = np.linspace(0.0, 1.0, 401)
    best = None
    pts = (radii[None, :, None] * dirs[:, None, :]).reshape(-1, 3)
    hit = region.contains(pts).reshape(dirs.shape[0], radii.size)
    if not hit.any():
        raise InfeasibleError("predicate holds nowhere on the Bloch grid")
    first = np.where(hit.any(axis=1), hit.argmax(axis=1), radii.size)
    if first.min() == 0:
        return np.zeros(3)

    def first_hit(u: np.ndarray) -> float:
        u = u / np.linalg.norm(u)
        h = region.contains(radii[:, None] * u[None, :])
        if not h.any():
            return 2.0
        j = int(h.argmax())
        lo, hi = radii[max(j - 1, 0)], radii[j]
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if region.contains((mid * u)[None])[0]:
                hi = mid
            else:
                lo = mid
        return hi

    def angles(u):
        return np.array([math.acos(np.clip(u[2], -1, 1)), math.atan2(u[1], u[0])])

    def unit(a):
        return np.array([math.sin(a[0]) * math.cos(a[1]), math.sin(a[0]) * math.sin(a[1]), math.cos(a[0])])

    best_r, best_u = 2.0, None
    for i in np.argsort(first)[:8]:
        res = minimize(lambda a: first_hit(unit(a)), angles(dirs[i]), method="Nelder-Mead",
                       options={"xatol": 1e-9, "fatol": 1e-12})
        r = first_hit(unit(res.x))
        if r < best_r:
            best_r, best_u = r, unit(res.x)
    return best_r * best_u


def _solve_bloch(cs: ConstraintSet) -> RateResult:
    t = _min_norm_point(cs.bloch)
    nt = float(np.linalg.norm(t))
    if nt >= 1.0:
        rho = qubit_from_bloch(t / max(nt, 1.0))
        return RateResult(float("inf"), 2, rho, {"method": "bloch-min-norm", "bloch_radius": nt, "converged": True})
    rho = qubit_from_bloch(BlochVector(t))
    return RateResult(
        rel_entropy_vs_pi(rho), 2, rho, {"method": "bloch-min-norm", "bloch_radius": nt, "converged": True}
    )


# --------------------------------------------------------------------------


def min_rel_entropy(cs: ConstraintSet, cfg: SolverConfig | None = None) -> RateResult:
    """Infimum of ``D(pi || rho)`` over ``rho`` in ``cs``.

    Raises :class:`InfeasibleError` for empty sets. Non-convergence is
    reported through ``diagnostics['converged']`` with the best iterate.
    """
    cfg = cfg or SolverConfig()
    if cs.full or cs.m == 1:
        if cs.m == 1 and not cs.full and not cs.contains(np.eye(1)):
            raise InfeasibleError("the only state of dimension 1 is excluded")
        return RateResult(0.0, cs.m, DensityMatrix.maximally_mixed(cs.m), {"method": "trivial", "converged": True})
    if cs.linear:
        B, b, rels = _linear_blocks(cs)
        res = _solve_linear_system(B, b, rels, cs.m)
    elif cs.spectral is not None:
        res = _solve_spectral(cs, cfg)
    else:
        res = _solve_bloch(cs)
    if res.minimizer is not None and "residual" not in res.diagnostics:
        res.diagnostics["residual"] = float(np.max(cs.residuals(res.minimizer.entries), initial=0.0))
    return res


def kkt_fit_residual(rho, W) -> float:
    """How far ``rho^{-1}`` is from ``span{I, W}`` (relative Frobenius residual)."""
    a = np.linalg.inv(np.asarray(rho))
    basis = np.stack([np.eye(a.shape[0]).ravel(), np.asarray(W, dtype=complex).ravel()], axis=1)
    coef, *_ = np.linalg.lstsq(basis, a.ravel(), rcond=None)
    return float(np.linalg.norm(basis @ coef - a.ravel()) / np.linalg.norm(a))


__all__ = [
    "BlochRegion",
    "ConstraintSet",
    "InfeasibleError",
    "LinearConstraint",
    "SolverConfig",
    "SpectralConstraint",
    "kkt_fit_residual",
    "min_rel_entropy",
    "solve_entropy_root",
    "solve_nu",
    "spectral_distance",
    "trace_distance",
]
