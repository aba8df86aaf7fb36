"""Scalar root finders shared by the closed-form rates.

Both equations are solved by bisection on a bracket that pins down the
admissible root, followed by a few guarded Newton steps.
"""

from __future__ import annotations

import math

import numpy as np

from .qstate import HermitianObservable, ValidationError, binary_rel_entropy

RESIDUAL_TARGET = 1e-12


class BracketError(RuntimeError):
    """No sign change on the bracket that is supposed to contain the root."""


def bisect_newton(f, df, lo: float, hi: float, tol: float = RESIDUAL_TARGET, max_iter: int = 200):
    """Root of ``f`` on ``[lo, hi]`` given ``f(lo)`` and ``f(hi)`` of opposite sign.

    Returns ``(root, iterations)``.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo, 0
    if fhi == 0.0:
        return hi, 0
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(f"f({lo!r})={flo!r} and f({hi!r})={fhi!r} share a sign")
    x = 0.5 * (lo + hi)
    for it in range(1, max_iter + 1):
        fx = f(x)
        if abs(fx) <= tol * 1e-2 or hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            return x, it
        if np.sign(fx) == np.sign(flo):
            lo, flo = x, fx
        else:
            hi = x
        # Newton step, kept only when it stays strictly inside the bracket
        d = df(x) if df is not None else 0.0
        step = x - fx / d if d != 0.0 and np.isfinite(d) else None
        x = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
    return x, max_iter


def _centered_eigs(w: float, W) -> tuple[np.ndarray, float]:
    obs = W if isinstance(W, HermitianObservable) else HermitianObservable(W)
    ev = obs.eigvals()
    shift = float(np.sum(ev)) / ev.size
    return ev - shift, float(w) - shift


def nu_residual(nu: float, w: float, W) -> float:
    """``(1/m) Tr[{(1 - w nu) I + nu W}^{-1}] - 1`` for traceless ``W``."""
    ev, w = _centered_eigs(w, W)
    return float(np.mean(1.0 / (1.0 + nu * (ev - w))) - 1.0)


def solve_nu(w: float, W) -> float:
    """Nonzero multiplier of the expectation-value problem.

    Solves ``(1/m) Tr[{(1 - w nu) I + nu W}^{-1}] = 1`` with
    ``(1 - w nu) I + nu W`` positive definite. ``W`` is centered to zero
    trace first (``w`` shifted along with it).
    """
    ev, w = _centered_eigs(w, W)
    x = ev - w
    x_max, x_min = float(np.max(x)), float(np.min(x))
    if w == 0.0:
        raise ValidationError("w = 0 has only the trivial multiplier nu = 0")
    if not (x_max > 0.0 > x_min):
        raise ValidationError(
            f"no admissible multiplier: w={w!r} outside the open spectral range of W"
        )

    def f(nu):
        return float(np.mean(1.0 / (1.0 + nu * x)) - 1.0)

    def df(nu):
        return float(-np.mean(x / (1.0 + nu * x) ** 2))

    # admissible interval is (-1/x_max, -1/x_min); f is convex there with f(0) = 0, f'(0) = w
    if w > 0:
        edge, inner = -1.0 / x_max, 0.0
    else:
        edge, inner = -1.0 / x_min, 0.0
    # locate the minimiser of f between the edge and 0 (f' changes sign there)
    a, b = edge, inner
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        if (df(mid) > 0) == (w > 0):
            b = mid
        else:
            a = mid
    nu_min = 0.5 * (a + b)
    # f -> +inf at the edge; step inward until finite and positive
    lo = edge
    for k in range(1, 60):
        cand = edge + (nu_min - edge) * 2.0 ** (-k)
        if np.isfinite(f(cand)) and f(cand) > 0:
            lo = cand
            break
    else:
        raise BracketError("could not bracket the multiplier")
    root, _ = bisect_newton(f, df, min(lo, nu_min), max(lo, nu_min))
    return float(root)


def entropy_root_equation(r: float, mu: int, eta: float, m: int) -> float:
    return binary_rel_entropy(r, mu / m) - (1.0 - eta) * math.log(m)


def solve_entropy_root(mu: int, eta: float, m: int) -> float:
    """Smaller root ``r`` in ``(0, mu/m]`` of ``D(r || mu/m) = (1 - eta) ln m``.

    Raises :class:`BracketError` when the branch has no root in that range.
    """
    m = int(m)
    mu = int(mu)
    if not 1 <= mu <= m - 1:
        raise ValidationError(f"mu={mu} outside [1, m-1]")
    if not 0.0 < eta < 1.0:
        raise ValidationError(f"eta={eta!r} outside (0, 1)")
    alpha = mu / m
    target = (1.0 - eta) * math.log(m)

    def f(r):
        return binary_rel_entropy(r, alpha) - target

    def df(r):
        if r <= 0.0:
            return -np.inf
        return math.log(r / (1.0 - r) * (1.0 - alpha) / alpha)

    if f(0.0) <= 0.0:
        raise BracketError(f"branch mu={mu} has no root in (0, {alpha}] for eta={eta}")
    root, _ = bisect_newton(f, df, 0.0, alpha)
    return float(root)
