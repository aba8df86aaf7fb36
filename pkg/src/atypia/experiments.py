"""Monte Carlo estimates of rare-event probabilities and exponent fits.

Samples are produced in fixed-size blocks; block ``j`` of the estimate at
environment dimension ``n`` always uses the stream ``(seed, n).child(j)``,
so results do not depend on how many workers run the blocks. Blocks are
reduced in index order, and all probabilities stay in the log domain.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .qstate import DensityMatrix, ValidationError
from .rates import (
    coherence_rate_levy,
    coherence_rate_upper,
    levy_comparison_rates,
    rate_entropy,
    rate_expectation,
    rate_max_eigenvalue,
)
from .sampler import (
    SeededStream,
    coherence_tilted_batch,
    haar_pure_batch,
    induced_states,
    make_orbit_proposal,
    make_tilted_proposal,
    orbit_gram_eigs,
    orbit_log_ratio,
    tilted_batch,
)
from .solver import ConstraintSet, SolverConfig, min_rel_entropy

log = logging.getLogger("atypia")

METHODS = ("naive", "tilted")
BLOCK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class EstimatePoint:
    n: int
    p_hat: float
    stderr: float
    log_p: float
    N: int
    method: str
    ess: float
    seed: int
    upper95: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        if self.stderr < 0 or self.ess > self.N + 1e-9:
            raise ValidationError("inconsistent estimate")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in ("n", "p_hat", "stderr", "log_p", "N", "method", "ess", "seed")}


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    slope_stderr: float
    points_used: tuple
    excluded: tuple
    theory_rate: float
    relative_gap: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SweepResult:
    points: list
    fit: FitResult
    metadata: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# helpers


def _check_method(method: str) -> str:
    if method not in METHODS:
        raise ValidationError(f"method must be one of {METHODS}, got {method!r}")
    return method


def _blocks(N: int, per_sample: int) -> list[int]:
    size = int(max(500, min(20_000, BLOCK_ELEMENTS // max(per_sample, 1))))
    full, rest = divmod(N, size)
    return [size] * full + ([rest] if rest else [])


def _run_blocks(fn, sizes: list[int], base: SeededStream, workers: int) -> list:
    """Evaluate ``fn(size, stream)`` for every block; results come back in block order."""
    jobs = [(size, base.child(j)) for j, size in enumerate(sizes)]
    if workers <= 1 or len(jobs) == 1:
        return [fn(s, st) for s, st in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def _log_mean_estimate(log_w: np.ndarray, hit: np.ndarray, N: int) -> tuple[float, float, float, float]:
    """``(p_hat, stderr, log_p, ess)`` for the mean of ``exp(log_w) * hit`` over ``N`` draws."""
    lw = log_w[hit]
    if lw.size == 0:
        return 0.0, 0.0, -math.inf, 0.0
    s1 = logsumexp(lw)
    s2 = logsumexp(2.0 * lw)
    log_p = s1 - math.log(N)
    # relative second moment minus one, all in the log domain
    rel = math.exp(s2 - 2.0 * s1 + math.log(N)) - 1.0
    rel_se = math.sqrt(max(rel, 0.0) / max(N - 1, 1))
    p_hat = math.exp(log_p)
    ess = math.exp(2.0 * s1 - s2)
    return p_hat, p_hat * rel_se, log_p, ess


def _stream_for(seed: int, n: int, salt: int = 0) -> SeededStream:
    return SeededStream(int(seed), (int(n) << 8) + int(salt))


def _rate_minimizer(cs: ConstraintSet, cfg: SolverConfig | None = None):
    res = min_rel_entropy(cs, cfg)
    return res


# --------------------------------------------------------------------------
# probability estimates


def estimate_probability(
    cs: ConstraintSet,
    m: int,
    n: int,
    N: int,
    method: str = "naive",
    seed: int = 0,
    workers: int = 1,
    minimizer: DensityMatrix | None = None,
) -> EstimatePoint:
    """Estimate ``Pr{rho_Psi in cs}`` for induced states of dimension ``m`` at environment ``n``.

    ``naive`` counts hits among nominal draws (zero counts carry the rule of
    three bound ``3/N`` in ``upper95``). ``tilted`` weights draws from a
    proposal tilted toward the rate minimiser of ``cs``; for unitarily
    invariant sets the proposal is averaged over the unitary orbit.
    """
    _check_method(method)
    if m != cs.m:
        raise ValidationError(f"m={m} differs from the constraint set dimension {cs.m}")
    if N < 100:
        raise ValidationError("need N >= 100 samples")
    if n < 1:
        raise ValidationError("n must be positive")
    if cs.full:
        return EstimatePoint(n, 1.0, 0.0, 0.0, N, method, float(N), seed)
    if m == 1:
        hit = cs.contains(np.eye(1, dtype=complex))
        return EstimatePoint(n, float(hit), 0.0, 0.0 if hit else -math.inf, N, method, float(N) if hit else 0.0, seed)

    base = _stream_for(seed, n)
    if method == "tilted":
        if minimizer is None:
            res = _rate_minimizer(cs)
            minimizer = res.minimizer
        if minimizer is None or not np.all(np.isfinite(np.asarray(minimizer.entries))):
            warnings.warn("no usable rate minimiser; falling back to naive sampling", RuntimeWarning, stacklevel=2)
            return estimate_probability(cs, m, n, N, "naive", seed, workers)
        return _tilted_estimate(cs, m, n, N, seed, workers, minimizer, base)

    sizes = _blocks(N, m * m * n)
    invariant = cs.unitarily_invariant

    def block(size, stream):
        states = induced_states(m, n, size, stream)
        if invariant:
            return int(np.count_nonzero(cs.contains_spectra(np.linalg.eigvalsh(states))))
        return int(np.count_nonzero(cs.contains_states(states)))

    hits = sum(_run_blocks(block, sizes, base, workers))
    p = hits / N
    se = math.sqrt(p * (1 - p) / N)
    upper = 3.0 / N if hits == 0 else None
    return EstimatePoint(n, p, se, math.log(p) if hits else -math.inf, N, "naive", float(N), seed, upper)


def _tilted_estimate(cs, m, n, N, seed, workers, minimizer, base) -> EstimatePoint:
    sizes = _blocks(N, m * m * n)
    if cs.unitarily_invariant:
        prop = make_orbit_proposal(minimizer)

        def block(size, stream):
            b = orbit_gram_eigs(prop, n, size, stream)
            lw = orbit_log_ratio(prop, b, n)
            spectra = b / np.sum(b, axis=1)[:, None]
            return lw, cs.contains_spectra(spectra)

    else:
        prop = make_tilted_proposal(minimizer)

        def block(size, stream):
            W, lw = tilted_batch(prop, n, size, stream)
            tr = np.real(np.einsum("nii->n", W))
            return lw, cs.contains_states(W / tr[:, None, None])

    parts = _run_blocks(block, sizes, base, workers)
    log_w = np.concatenate([p[0] for p in parts])
    hit = np.concatenate([p[1] for p in parts])
    p_hat, se, log_p, ess = _log_mean_estimate(log_w, hit, N)
    return EstimatePoint(n, p_hat, se, log_p, N, "tilted", min(ess, float(N)), seed, 3.0 / N if p_hat == 0 else None)


# --------------------------------------------------------------------------
# exponent fits


def weighted_line_fit(x, y, sigma) -> tuple[float, float, float]:
    """Weighted least squares ``y = slope x + intercept`` with known errors ``sigma``.

    Returns ``(slope, intercept, slope_stderr)``; the stderr uses the
    unscaled covariance ``(X^T S^{-2} X)^{-1}``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    floor = 1e-12 * max(1.0, float(np.max(np.abs(y))))
    wts = 1.0 / np.maximum(sigma, floor) ** 2
    X = np.stack([x, np.ones_like(x)], axis=1)
    A = X.T @ (X * wts[:, None])
    coef = np.linalg.solve(A, X.T @ (wts * y))
    cov = np.linalg.inv(A)
    return float(coef[0]), float(coef[1]), float(math.sqrt(max(cov[0, 0], 0.0)))


def fit_exponent(points: list[EstimatePoint], theory_rate: float) -> FitResult:
    usable = [p for p in points if p.p_hat > 0 and np.isfinite(p.log_p)]
    excluded = tuple(p.n for p in points if p not in usable)
    if len(usable) < 4:
        raise ValidationError(f"only {len(usable)} points with p_hat > 0; need at least 4")
    x = [p.n for p in usable]
    y = [-p.log_p for p in usable]
    s = [p.stderr / p.p_hat for p in usable]
    slope, intercept, se = weighted_line_fit(x, y, s)
    gap = abs(slope - theory_rate) / theory_rate if theory_rate > 0 else math.inf
    return FitResult(slope, intercept, se, tuple(x), excluded, float(theory_rate), float(gap))


def sweep_exponent(
    cs: ConstraintSet,
    m: int,
    n_list,
    N: int,
    method: str = "tilted",
    seed: int = 0,
    workers: int = 1,
    theory_rate: float | None = None,
) -> SweepResult:
    """Estimate ``Pr{rho_Psi in cs}`` along ``n_list`` and fit ``-log p ~ slope n + intercept``.

    ``theory_rate`` defaults to ``m`` times the solver value.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 4 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValidationError("n_list needs at least 4 strictly increasing entries")
    res = _rate_minimizer(cs)
    if theory_rate is None:
        theory_rate = m * res.rate
    pts = [
        estimate_probability(cs, m, n, N, method, seed, workers, minimizer=res.minimizer if method == "tilted" else None)
        for n in n_list
    ]
    for p in pts:
        log.info("n=%d p_hat=%.6g stderr=%.3g ess=%.1f", p.n, p.p_hat, p.stderr, p.ess)
    fit = fit_exponent(pts, theory_rate)
    meta = {"m": m, "N": N, "method": method, "seed": seed, "workers": workers, "constraint_set": _cs_json(cs)}
    return SweepResult(pts, fit, meta)


def _cs_json(cs: ConstraintSet):
    try:
        return cs.to_dict()
    except ValidationError:
        return None


# --------------------------------------------------------------------------
# conditional concentration


@dataclass(frozen=True)
class ConcentrationRow:
    n: int
    conditional_mass_outside: float
    stderr: float
    ratio: float
    hits: int


@dataclass
class ConcentrationResult:
    rows: list
    delta_hat: float
    delta_stderr: float
    minimizer_spectrum: list
    metadata: dict = field(default_factory=dict)


def _outside_minimizer(cs: ConstraintSet, star: np.ndarray, eps: float, seed: int) -> np.ndarray | None:
    """Spectrum minimising ``D(pi || .)`` over ``cs`` at orbit distance ``>= eps`` from ``star``."""
    m = cs.m
    sc = cs.spectral
    ref = np.sort(star)[::-1]
    rng = np.random.default_rng(seed)

    def obj(p):
        return float(-np.sum(np.log(m * np.maximum(p, 1e-14))) / m)

    cons = [
        {"type": "eq", "fun": lambda p: np.sum(p) - 1.0},
        {"type": "ineq", "fun": lambda p: 0.5 * np.sum(np.abs(np.sort(p)[::-1] - ref)) - eps},
    ]
    if sc is not None:
        sign = {">=": 1.0, "<=": -1.0}.get(sc.rel)
        if sign is None:
            cons.append({"type": "eq", "fun": lambda p: float(sc.evaluate(p)) - sc.target})
        else:
            cons.append({"type": "ineq", "fun": lambda p: sign * (float(sc.evaluate(p)) - sc.target)})
    best, best_val = None, math.inf
    starts = [ref + eps * d for d in (np.eye(m)[0] - np.eye(m)[-1], np.eye(m)[-1] - np.eye(m)[0])]
    starts += [rng.dirichlet(np.ones(m)) for _ in range(4 * m)]
    for p0 in starts:
        p0 = np.clip(p0, 1e-6, None)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            r = minimize(obj, p0 / p0.sum(), method="SLSQP", bounds=[(1e-12, 1.0)] * m, constraints=cons,
                         options={"ftol": 1e-14, "maxiter": 1000})
        p = np.clip(r.x, 1e-12, None)
        p = p / p.sum()
        if cs.contains_spectra(p[None])[0] and 0.5 * np.sum(np.abs(np.sort(p)[::-1] - ref)) >= eps - 1e-9:
            if obj(p) < best_val:
                best, best_val = p, obj(p)
    return best


def conditional_concentration(
    cs: ConstraintSet,
    m: int,
    n_list,
    eps: float,
    N: int,
    seed: int = 0,
    workers: int = 1,
) -> ConcentrationResult:
    """Conditional mass of ``cs`` lying farther than ``eps`` from the rate minimiser.

    Draws are weighted by self-normalised importance sampling within ``cs``.
    For unitarily invariant sets the minimiser set is a whole unitary orbit,
    so distance is measured between spectra, and the proposal is an equal
    mixture of orbit tilts toward the minimiser and toward the cheapest
    point at distance ``eps``. ``ratio`` is the outside mass relative to the
    previous row; ``delta_hat`` is the fitted decay rate of the outside mass.
    """
    if not 0.0 < eps <= 1.0:
        raise ValidationError("eps must lie in (0, 1]")
    n_list = [int(n) for n in n_list]
    if cs.full or m == 1:
        rows = [ConcentrationRow(n, 0.0, 0.0, math.nan, N) for n in n_list]
        return ConcentrationResult(rows, math.nan, math.nan, [1.0 / m] * m, {"trivial": True})
    res = _rate_minimizer(cs)
    star = res.minimizer
    rows = []
    if cs.unitarily_invariant:
        star_spec = np.sort(star.eigvals())
        props = [make_orbit_proposal(star)]
        far = _outside_minimizer(cs, star_spec, eps, seed)
        if far is not None:
            props.append(make_orbit_proposal(DensityMatrix.trusted(np.diag(far).astype(complex))))
    else:
        tilt = make_tilted_proposal(star)
    prev = math.nan
    for n in n_list:
        base = _stream_for(seed, n, salt=1)
        if cs.unitarily_invariant:
            k = len(props)
            sizes = _blocks(N // k, m * m * n)

            def draw(size, stream, n=n):
                out = []
                for j, prop in enumerate(props):
                    b = orbit_gram_eigs(prop, n, size, stream.child(j))
                    ratios = np.stack([orbit_log_ratio(q, b, n) for q in props])
                    lw = -(logsumexp(-ratios, axis=0) - math.log(len(props)))
                    spec = b / np.sum(b, axis=1)[:, None]
                    inside = cs.contains_spectra(spec)
                    dist = 0.5 * np.sum(np.abs(spec - star_spec), axis=1)
                    out.append((lw, inside, dist))
                return out

            parts = [x for blk in _run_blocks(draw, sizes, base, workers) for x in blk]
        else:
            sizes = _blocks(N, m * m * n)

            def draw(size, stream, n=n):
                W, lw = tilted_batch(tilt, n, size, stream)
                tr = np.real(np.einsum("nii->n", W))
                states = W / tr[:, None, None]
                return lw, cs.contains_states(states), cs.distance(states, star)

            parts = _run_blocks(draw, sizes, base, workers)
        lw = np.concatenate([p[0] for p in parts])
        inside = np.concatenate([p[1] for p in parts])
        dist = np.concatenate([p[2] for p in parts])
        hits = int(np.count_nonzero(inside))
        if hits == 0:
            rows.append(ConcentrationRow(n, math.nan, math.nan, math.nan, 0))
            continue
        w = np.exp(lw[inside] - np.max(lw[inside]))
        out = dist[inside] > eps
        mass = float(np.sum(w[out]) / np.sum(w))
        se = float(math.sqrt(np.sum(w**2 * (out - mass) ** 2)) / np.sum(w))
        ratio = mass / prev if prev and math.isfinite(prev) and prev > 0 else math.nan
        rows.append(ConcentrationRow(n, mass, se, ratio, hits))
        prev = mass
    usable = [r for r in rows if r.conditional_mass_outside and r.conditional_mass_outside > 0]
    if len(usable) >= 2:
        x = [r.n for r in usable]
        y = [-math.log(r.conditional_mass_outside) for r in usable]
        s = [r.stderr / r.conditional_mass_outside for r in usable]
        delta, _, dse = weighted_line_fit(x, y, s)
    else:
        delta, dse = math.nan, math.nan
    return ConcentrationResult(
        rows, delta, dse, np.sort(star.eigvals())[::-1].tolist(), {"m": m, "eps": eps, "N": N, "seed": seed}
    )


# --------------------------------------------------------------------------
# coherence


def exceedance_single(kappa: float, n: int) -> float:
    """``Pr{|<e_1|psi>|^2 >= kappa}`` for Haar ``psi`` in dimension ``n``."""
    return (1.0 - kappa) ** (n - 1)


def exceedance_max(kappa: float, n: int) -> float:
    """``Pr{max_l |<e_l|psi>|^2 >= kappa}`` by inclusion-exclusion over coordinates."""
    import mpmath as mp

    with mp.workdps(60):
        total = mp.mpf(0)
        k = 1
        while k <= n and 1 - k * kappa > 0:
            total += (-1) ** (k + 1) * mp.binomial(n, k) * mp.mpf(1 - k * kappa) ** (n - 1)
            k += 1
        return float(total)


@dataclass(frozen=True)
class CoherencePoint:
    n: int
    p_hat: float
    stderr: float
    log_p: float
    N: int
    method: str
    ess: float
    seed: int
    p_exact: float
    p_lower: float
    p_upper: float
    sandwich_ok: bool

    def row(self) -> dict:
        return asdict(self)


@dataclass
class CoherenceResult:
    table: list
    points: list
    fit: FitResult
    metadata: dict = field(default_factory=dict)


def single_coordinate_mc(kappa: float, n: int, N: int, seed: int = 0, workers: int = 1) -> CoherencePoint:
    """Naive estimate of ``Pr{|<e_1|psi>|^2 >= kappa}`` against its exact law."""
    sizes = _blocks(N, n)

    def block(size, stream):
        psi = haar_pure_batch(n, size, stream)
        return int(np.count_nonzero(np.abs(psi[:, 0]) ** 2 >= kappa))

    hits = sum(_run_blocks(block, sizes, _stream_for(seed, n, salt=2), workers))
    p = hits / N
    se = math.sqrt(p * (1 - p) / N)
    exact = exceedance_single(kappa, n)
    return CoherencePoint(n, p, se, math.log(p) if hits else -math.inf, N, "naive", float(N), seed,
                          exact, exact, exact, abs(p - exact) <= 3 * se + 1e-300)


def coherence_experiment(
    kappa: float,
    n_list,
    N: int,
    seed: int = 0,
    workers: int = 1,
    table_n=(3, 5, 10, 20),
    table_N: int | None = None,
) -> CoherenceResult:
    """Exceedance of the largest squared amplitude of a Haar vector.

    (a) ``table``: naive MC of the single-coordinate exceedance against its
    exact law ``(1 - kappa)^(n-1)`` at the small dimensions ``table_n``.
    (b) ``points``: tilted estimates of ``Pr{p* >= kappa}`` along ``n_list``,
    each checked against the sandwich ``(1-kappa)^(n-1) <= p <= n (1-kappa)^(n-1)``
    and reported with the exact inclusion-exclusion value. The fit of
    ``-log p`` against ``n`` is compared with ``ln(1/(1 - kappa))``.
    """
    if not 0.0 < kappa < 1.0:
        raise ValidationError("kappa must lie in (0, 1)")
    table_N = table_N or N
    table = [single_coordinate_mc(kappa, n, table_N, seed, workers) for n in table_n]
    points = []
    for n in [int(v) for v in n_list]:
        sizes = _blocks(N, 2 * n)

        def block(size, stream, n=n):
            probs, lw = coherence_tilted_batch(n, kappa, size, stream)
            return lw, probs.max(axis=1) >= kappa

        parts = _run_blocks(block, sizes, _stream_for(seed, n, salt=3), workers)
        lw = np.concatenate([p[0] for p in parts])
        hit = np.concatenate([p[1] for p in parts])
        p_hat, se, log_p, ess = _log_mean_estimate(lw, hit, N)
        lower = exceedance_single(kappa, n)
        upper = n * lower
        ok = lower <= p_hat + 3 * se and p_hat - 3 * se <= upper
        points.append(
            CoherencePoint(n, p_hat, se, log_p, N, "tilted", min(ess, float(N)), seed,
                           exceedance_max(kappa, n), lower, upper, bool(ok))
        )
    pts = [EstimatePoint(p.n, p.p_hat, p.stderr, p.log_p, p.N, "tilted", p.ess, p.seed) for p in points]
    fit = fit_exponent(pts, coherence_rate_upper(kappa))
    return CoherenceResult(table, points, fit, {"kappa": kappa, "N": N, "seed": seed, "workers": workers})


# --------------------------------------------------------------------------
# comparison with concentration-of-measure exponents

COMPARE_KINDS = ("max_eig", "entropy", "expectation", "coherence")


def compare_bounds_report(kind: str, params: dict) -> list[dict]:
    """Exact exponents next to the exponents implied by Levy-lemma bounds.

    Every row carries ``exact`` (the exponent ``m * D``), ``levy``, their
    ``ratio`` and ``factor``, the small-parameter limit of the ratio
    evaluated independently. Parameters per kind:

    * ``max_eig``: ``m``, ``eps`` (list)
    * ``entropy``: ``m``, ``delta`` (list); adds ``factor_times_delta_inverse``
    * ``expectation``: ``W`` (matrix), ``w`` (list); two Levy variants
    * ``coherence``: ``omega`` (list)
    """
    rows = []
    if kind == "max_eig":
        m = int(params["m"])
        factor = 7.0 / (1.0 - 1.0 / m)
        for eps in params["eps"]:
            exact = m * rate_max_eigenvalue(eps, m).rate
            levy = levy_comparison_rates("max_eig", m=m, eps=eps)
            rows.append({"kind": kind, "m": m, "eps": eps, "exact": exact, "levy": levy,
                         "ratio": exact / levy, "factor": factor})
    elif kind == "entropy":
        m = int(params["m"])
        factor = 8.0 * math.pi**2 * math.log(m)
        for delta in params["delta"]:
            exact = m * rate_entropy(1.0 - delta, m).rate
            levy = levy_comparison_rates("entropy", m=m, delta=delta)
            rows.append({"kind": kind, "m": m, "delta": delta, "exact": exact, "levy": levy,
                         "ratio": exact / levy, "factor": factor, "factor_over_delta": factor / delta})
    elif kind == "expectation":
        W = np.asarray(params["W"], dtype=complex)
        W = W - np.trace(W).real / W.shape[0] * np.eye(W.shape[0])
        m = W.shape[0]
        ev = np.linalg.eigvalsh(W)
        tr2 = float(np.sum(ev**2))
        spread = float(ev[-1] - ev[0])
        opnorm = float(np.max(np.abs(ev)))
        factor = 9.0 * math.pi**3 * m * spread**2 / (4.0 * tr2)
        factor_opnorm = 9.0 * math.pi**3 * m * opnorm**2 / tr2
        for w in params["w"]:
            exact = m * rate_expectation(w, W).rate
            levy = levy_comparison_rates("expectation_spread", m=m, w=w, W=W)
            levy_p = levy_comparison_rates("expectation_opnorm", m=m, w=w, W=W)
            rows.append({"kind": kind, "m": m, "w": w, "exact": exact, "levy": levy, "ratio": exact / levy,
                         "factor": factor, "levy_opnorm": levy_p, "ratio_opnorm": exact / levy_p,
                         "factor_opnorm": factor_opnorm})
    elif kind == "coherence":
        for omega in params["omega"]:
            exact = coherence_rate_upper(omega)
            levy = coherence_rate_levy(omega)
            rows.append({"kind": kind, "omega": omega, "exact": exact, "levy": levy, "ratio": exact / levy,
                         "factor": 36.0 * math.pi**3 * math.log(2.0) / omega})
    else:
        raise ValidationError(f"unknown comparison kind {kind!r}; expected one of {COMPARE_KINDS}")
    return rows
