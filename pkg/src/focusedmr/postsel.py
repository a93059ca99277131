"""Post-selection inference for the focused estimator.

The focused estimator's error is approximated by a random mixture
``Lambda(b)``: draw ``U ~ N(0, Delta)`` over the slots (core estimate,
candidate estimates, candidate bias estimates), pick the candidate whose
simulated AMSE is smallest if it does not exceed the core variance, and
emit ``b_k + U_Fk`` for a selected candidate or ``U_C`` otherwise.

Slot order in ``Delta`` is ``[theta_C, theta_S1..theta_SK, b_1..b_K]``.
Intervals for Lambda map to the causal effect as
``[theta_hat - a_u, theta_hat - a_l]``.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import stats

from ._validation import check_count, check_level
from .exceptions import EstimationError, NumericError
from .liml import components

NAIVE, CORE, ONE_STEP, TWO_STEP, FOCUSED = "naive", "core", "one_step", "two_step", "focused"
METHODS = (NAIVE, CORE, ONE_STEP, TWO_STEP, FOCUSED)

MIN_DRAWS = 1000
PSD_TOL = 1e-8
DEFAULT_GRID = 41
DEFAULT_SPLITS = 21
MAX_GRID_POINTS = 1000


@dataclass(frozen=True)
class PartitionCell:
    """Additional variants that belong to exactly the candidates in ``membership``."""

    members: tuple
    membership: tuple
    comps: object


@dataclass(frozen=True)
class DeltaMatrix:
    matrix: np.ndarray
    K: int

    @property
    def dim(self):
        return 2 * self.K + 1

    @property
    def delta_c(self):
        return float(self.matrix[0, 0])

    @property
    def delta_f(self):
        return np.diag(self.matrix)[1:self.K + 1].copy()

    @property
    def delta_b(self):
        return np.diag(self.matrix)[self.K + 1:].copy()

    @property
    def b_block(self):
        return self.matrix[self.K + 1:, self.K + 1:].copy()

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def is_psd(self, tol=PSD_TOL):
        return self.min_eigenvalue() >= -tol * abs(float(np.trace(self.matrix)))

    def factor(self, tol=PSD_TOL):
        """Symmetric square root with tiny negative eigenvalues clamped to zero."""
        w, v = np.linalg.eigh(self.matrix)
        if w[0] < -tol * abs(float(np.trace(self.matrix))):
            raise NumericError(
                f"covariance matrix is not positive semidefinite (min eigenvalue {w[0]:.3g})"
            )
        return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class LambdaDraws:
    draws: np.ndarray
    b_used: np.ndarray
    seed: int
    shared_noise: bool
    selected: np.ndarray

    @property
    def selection_probability(self):
        """Share of draws in which some candidate (not the core) was selected."""
        return float(np.mean(self.selected > 0))


@dataclass(frozen=True)
class IntervalResult:
    lower: float
    upper: float
    method: str
    alpha: float
    gamma: float = None
    alpha1: float = None
    alpha2: float = None
    b_star: tuple = None
    degraded: bool = False

    @property
    def length(self):
        return self.upper - self.lower

    def contains(self, value):
        return self.lower <= value <= self.upper


def partition_cells(ds, candidates, theta_ref):
    """Split the additional variants of ``candidates`` into disjoint cells.

    Each cell collects the variants that belong to exactly the same
    candidates; only nonempty cells are returned (at most ``2**K - 1``).
    """
    core = set(ds.core_indices)
    groups = {}
    for j in sorted(set().union(*(set(c.indices) for c in candidates)) - core):
        key = tuple(j in c.indices for c in candidates)
        groups.setdefault(key, []).append(j)
    return [
        PartitionCell(tuple(members), key, components(ds, members, theta_ref))
        for key, members in sorted(groups.items(), reverse=True)
    ]


def assemble_delta(comp_core, cells, K=None):
    """Joint covariance of core, candidate and bias estimates from disjoint cells.

    Built as ``R + W``: ``R`` carries the core-instrument noise shared by
    every slot, ``W`` the independent contribution of each cell.
    """
    if K is None:
        K = len(cells[0].membership)
    eta_c = comp_core.eta
    if not eta_c > 0:
        raise EstimationError("core eta must be positive")
    member = np.array([c.membership for c in cells], dtype=float).reshape(len(cells), K)
    eta_cells = np.array([c.comps.eta for c in cells])
    eta_s = member.T @ eta_cells
    d = eta_c + eta_s
    if not np.all(d > 0):
        raise EstimationError("core plus candidate eta must be positive for every candidate")

    dim = 2 * K + 1
    pi_c = np.concatenate(([1.0 / eta_c], 1.0 / d, -eta_s / (eta_c * d)))
    R = (eta_c + comp_core.sigma_term) * np.outer(pi_c, pi_c)

    T = np.array([[1.0, 0.0], [1.0, -1.0]])
    W = np.zeros((dim, dim))
    for cell, ind in zip(cells, member):
        A = np.zeros((dim, 2))
        A[1:K + 1, 0] = ind / d
        A[K + 1:, 1] = ind / d
        P = A @ T
        cov = np.diag([cell.comps.eta + cell.comps.sigma_term, cell.comps.xi])
        W += P @ cov @ P.T
    M = R + W
    return DeltaMatrix(0.5 * (M + M.T), K)


def closed_form_delta(comp_core, comp_add):
    """Single-candidate covariance written out entry by entry."""
    eta_c, eta_s = comp_core.eta, comp_add.eta
    sig_c, sig_s, xi_s = comp_core.sigma_term, comp_add.sigma_term, comp_add.xi
    if not (eta_c > 0 and eta_c + eta_s > 0):
        raise EstimationError("core plus candidate eta must be positive")
    tot = eta_c + eta_s
    d_c = (eta_c + sig_c) / eta_c**2
    d_f = (tot + sig_c + sig_s) / tot**2
    d_b = (eta_s + sig_s + xi_s + eta_s**2 / eta_c**2 * (eta_c + sig_c)) / tot**2
    d_e = (eta_c + sig_c) / (eta_c * tot)
    d_a = -d_e * eta_s / eta_c
    d_d = eta_c * (eta_s + sig_s) / (eta_c * tot**2) - d_e * eta_s / tot
    return DeltaMatrix(
        np.array([[d_c, d_e, d_a], [d_e, d_f, d_d], [d_a, d_d, d_b]]), 1
    )


def delta_for_selection(ds, sel):
    """Plug-in covariance for the candidates that entered ``sel``."""
    if not sel.candidates:
        raise EstimationError("no candidate survived selection")
    cells = partition_cells(ds, sel.candidates, sel.core_fit.theta_hat)
    return assemble_delta(sel.comp_core, cells, K=len(sel.candidates))


def draw_noise(delta, M, seed):
    """``M`` draws of ``N(0, Delta)``, shape ``(M, 2K + 1)``."""
    L = delta.factor()
    z = np.random.default_rng(seed).standard_normal((M, delta.dim))
    return z @ L.T


def _lambda_rows(delta, noise, b_grid):
    """Lambda draws for every row of ``b_grid`` (shape ``(G, K)``) from shared noise.

    Returns ``(values, selected)``, each of shape ``(G, M)``; ``selected``
    is 0 for the core and ``k`` for candidate ``k``.
    """
    K = delta.K
    d_c, d_f, d_b = delta.delta_c, delta.delta_f, delta.delta_b
    b_grid = np.atleast_2d(np.asarray(b_grid, dtype=float))
    G, M = b_grid.shape[0], noise.shape[0]
    best = np.full((G, M), np.inf)
    arg = np.zeros((G, M), dtype=np.intp)
    cand_value = np.zeros((G, M))
    for k in range(K):
        shifted = b_grid[:, k:k + 1] + noise[None, :, K + 1 + k]
        crit = np.maximum(shifted * shifted - d_b[k], 0.0) + d_f[k]
        if k == 0:
            best, cand_value = crit, b_grid[:, :1] + noise[None, :, 1]
            continue
        better = crit < best
        best = np.where(better, crit, best)
        arg = np.where(better, k, arg)
        cand_value = np.where(better, b_grid[:, k:k + 1] + noise[None, :, 1 + k], cand_value)
    pick = best <= d_c
    values = np.where(pick, cand_value, noise[None, :, 0])
    selected = np.where(pick, arg + 1, 0)
    return values, selected


def simulate_lambda(delta, b, M=10_000, seed=0):
    """Draw ``M`` samples of ``Lambda(b)``; deterministic given ``seed``."""
    M = check_count(M, "M", minimum=MIN_DRAWS)
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if b.shape != (delta.K,):
        raise ValueError(f"b must have length {delta.K}")
    values, selected = _lambda_rows(delta, draw_noise(delta, M, seed), b[None, :])
    return LambdaDraws(values[0], b, seed, True, selected[0])


def sorted_quantiles(sorted_rows, probs):
    """Linear-interpolation quantiles (midpoint plotting positions) of sorted rows.

    Matches ``numpy.quantile(..., method="hazen")``. ``sorted_rows`` has
    shape ``(G, M)``; returns shape ``(G, len(probs))``.
    """
    rows = np.atleast_2d(sorted_rows)
    M = rows.shape[1]
    h = np.clip(M * np.asarray(probs, dtype=float) - 0.5, 0.0, M - 1.0)
    lo = np.floor(h).astype(np.intp)
    hi = np.minimum(lo + 1, M - 1)
    frac = h - lo
    return rows[:, lo] * (1.0 - frac) + rows[:, hi] * frac


def bias_region(b_hat, b_cov, alpha1, grid_size=DEFAULT_GRID, max_points=MAX_GRID_POINTS):
    """Grid over a ``1 - alpha1`` confidence region for the bias vector.

    One candidate: ``grid_size`` equally spaced points on the normal
    interval. Several: a product grid over the bounding box of the
    chi-square ellipsoid, keeping points inside it. The estimate itself is
    always included.
    """
    b_hat = np.atleast_1d(np.asarray(b_hat, dtype=float))
    K = b_hat.size
    b_cov = np.atleast_2d(np.asarray(b_cov, dtype=float))
    if K == 1:
        half = stats.norm.ppf(1.0 - alpha1 / 2.0) * np.sqrt(max(b_cov[0, 0], 0.0))
        return np.linspace(b_hat[0] - half, b_hat[0] + half, grid_size)[:, None]
    crit = stats.chi2.ppf(1.0 - alpha1, K)
    per_axis = max(3, min(grid_size, int(np.floor(max_points ** (1.0 / K)))))
    if per_axis % 2 == 0:
        per_axis -= 1
    half = np.sqrt(crit * np.clip(np.diag(b_cov), 0.0, None))
    axes = [np.linspace(-h, h, per_axis) for h in half]
    offsets = np.array(list(product(*axes)))
    inv = np.linalg.pinv(b_cov)
    inside = np.einsum("ij,jk,ik->i", offsets, inv, offsets) <= crit * (1 + 1e-12)
    return b_hat[None, :] + offsets[inside]


class _LambdaSampler:
    """Shares one noise sample across every bias value (common random numbers)."""

    def __init__(self, delta, M, seed):
        self.delta = delta
        self.M = check_count(M, "M", minimum=MIN_DRAWS)
        self.seed = seed
        self.noise = draw_noise(delta, self.M, seed)
        self._cache = {}

    def sorted_rows(self, b_grid):
        key = np.asarray(b_grid, dtype=float).tobytes()
        if key not in self._cache:
            values, _ = _lambda_rows(self.delta, self.noise, b_grid)
            values.sort(axis=1)
            self._cache[key] = values
        return self._cache[key]


def _bias_inputs(sel, delta):
    b_hat = sel.b_hat
    if b_hat.size != delta.K:
        raise ValueError("selection and covariance disagree on the number of candidates")
    return b_hat, delta.b_block


def _to_theta(theta_hat, a_l, a_u):
    return float(theta_hat - a_u), float(theta_hat - a_l)


def interval_naive(sel, alpha=0.05):
    """Normal interval of the selected fit, ignoring the selection step."""
    alpha = check_level(alpha)
    half = float(stats.norm.ppf(1.0 - alpha / 2.0) * np.sqrt(sel.variance))
    return IntervalResult(sel.theta_hat - half, sel.theta_hat + half, NAIVE, alpha)


def interval_core(fit_core, alpha=0.05):
    """Normal interval of the core fit."""
    alpha = check_level(alpha)
    half = float(stats.norm.ppf(1.0 - alpha / 2.0) * np.sqrt(fit_core.variance))
    return IntervalResult(fit_core.theta_hat - half, fit_core.theta_hat + half, CORE, alpha)


def interval_onestep(sel, delta, alpha=0.05, M=10_000, seed=0, _sampler=None):
    """Equal-tailed interval from ``Lambda`` evaluated at the estimated bias."""
    alpha = check_level(alpha)
    sampler = _sampler or _LambdaSampler(delta, M, seed)
    b_hat, _ = _bias_inputs(sel, delta)
    rows = sampler.sorted_rows(b_hat[None, :])
    a_l, a_u = sorted_quantiles(rows, [alpha / 2.0, 1.0 - alpha / 2.0])[0]
    lo, hi = _to_theta(sel.theta_hat, a_l, a_u)
    return IntervalResult(lo, hi, ONE_STEP, alpha)


def _envelope(rows, alpha2):
    q = sorted_quantiles(rows, [alpha2 / 2.0, 1.0 - alpha2 / 2.0])
    return float(q[:, 0].min()), float(q[:, 1].max())


def interval_twostep(sel, delta, alpha=0.05, M=10_000, seed=0, grid_size=DEFAULT_GRID,
                     alpha1=None, _sampler=None):
    """Outer envelope of equal-tailed intervals over a confidence region for the bias.

    ``alpha1`` (default ``alpha / 2``) is spent on the bias region and the
    rest on each ``Lambda`` interval.
    """
    alpha = check_level(alpha)
    alpha1 = alpha / 2.0 if alpha1 is None else float(alpha1)
    if not 0.0 < alpha1 < alpha:
        raise ValueError("alpha1 must lie strictly between 0 and alpha")
    alpha2 = alpha - alpha1
    sampler = _sampler or _LambdaSampler(delta, M, seed)
    b_hat, b_cov = _bias_inputs(sel, delta)
    rows = sampler.sorted_rows(bias_region(b_hat, b_cov, alpha1, grid_size))
    a_l, a_u = _envelope(rows, alpha2)
    lo, hi = _to_theta(sel.theta_hat, a_l, a_u)
    return IntervalResult(lo, hi, TWO_STEP, alpha, alpha1=alpha1, alpha2=alpha2)


def _focused_for_alpha1(rows, grid, alpha2, gamma, n_splits):
    """Shortest passing interval for one split of alpha; None if nothing passes."""
    G, M = rows.shape
    splits = np.linspace(0.0, alpha2, n_splits)
    lo = sorted_quantiles(rows, splits)
    hi = sorted_quantiles(rows, splits + 1.0 - alpha2)
    env_lo, env_hi = _envelope(rows, alpha2)
    scale = max(abs(env_lo), abs(env_hi), 1e-300)

    flat_lo, flat_hi = lo.ravel(), hi.ravel()
    worst = np.full(flat_lo.shape, M, dtype=np.int64)
    for row in rows:
        inside = np.searchsorted(row, flat_hi, side="right") - np.searchsorted(row, flat_lo, side="left")
        np.minimum(worst, inside, out=worst)
    passing = worst >= (1.0 - alpha2 - gamma) * M - 1e-9
    # Candidates must lie inside the two-step envelope built from the same draws.
    passing &= (flat_lo >= env_lo - 1e-12 * scale) & (flat_hi <= env_hi + 1e-12 * scale)
    if not passing.any():
        return None
    length = np.where(passing, flat_hi - flat_lo, np.inf)
    best = int(np.argmin(length))
    g = best // n_splits
    return float(flat_lo[best]), float(flat_hi[best]), tuple(grid[g].tolist())


def interval_focused(sel, delta, alpha=0.05, gamma=0.2, M=10_000, seed=0,
                     grid_size=DEFAULT_GRID, alpha1_grid=None, n_splits=DEFAULT_SPLITS,
                     _sampler=None):
    """Shortest interval whose worst-case coverage over the bias region is at least ``1 - alpha2 - gamma``.

    For each ``alpha1`` in ``alpha1_grid`` (default ``0.1 alpha, ..., 0.9 alpha``)
    the bias region is gridded; at each grid value the ``1 - alpha2``
    intervals of ``Lambda`` over ``n_splits`` tail splits are checked
    against every other grid value, and the shortest one that passes wins.
    If nothing passes for any ``alpha1`` the two-step interval is returned
    with ``degraded=True``.
    """
    alpha = check_level(alpha)
    gamma = check_level(gamma, "gamma")
    n_splits = check_count(n_splits, "n_splits", minimum=2)
    if alpha1_grid is None:
        alpha1_grid = alpha * np.arange(1, 10) / 10.0
    alpha1_grid = [float(a) for a in alpha1_grid]
    if any(not 0.0 < a < alpha for a in alpha1_grid):
        raise ValueError("alpha1_grid values must lie strictly between 0 and alpha")
    sampler = _sampler or _LambdaSampler(delta, M, seed)
    b_hat, b_cov = _bias_inputs(sel, delta)

    best = None
    for alpha1 in alpha1_grid:
        alpha2 = alpha - alpha1
        grid = bias_region(b_hat, b_cov, alpha1, grid_size)
        found = _focused_for_alpha1(sampler.sorted_rows(grid), grid, alpha2, gamma, n_splits)
        if found is None:
            continue
        a_l, a_u, b_star = found
        if best is None or a_u - a_l < best[1] - best[0]:
            best = (a_l, a_u, b_star, alpha1, alpha2)

    if best is None:
        two = interval_twostep(sel, delta, alpha, grid_size=grid_size, _sampler=sampler)
        return IntervalResult(two.lower, two.upper, FOCUSED, alpha, gamma=gamma,
                              alpha1=two.alpha1, alpha2=two.alpha2, degraded=True)
    a_l, a_u, b_star, alpha1, alpha2 = best
    lo, hi = _to_theta(sel.theta_hat, a_l, a_u)
    return IntervalResult(lo, hi, FOCUSED, alpha, gamma=gamma, alpha1=alpha1,
                          alpha2=alpha2, b_star=b_star)


def all_intervals(ds, sel, alpha=0.05, gamma=0.2, M=10_000, seed=0, grid_size=DEFAULT_GRID,
                  alpha1_grid=None, delta=None):
    """All five intervals, sharing one noise sample among the simulated ones."""
    out = {NAIVE: interval_naive(sel, alpha), CORE: interval_core(sel.core_fit, alpha)}
    if not sel.candidates:
        # Nothing to select between: every simulated interval reduces to the core one.
        core = out[CORE]
        for method in (ONE_STEP, TWO_STEP, FOCUSED):
            out[method] = IntervalResult(core.lower, core.upper, method, core.alpha,
                                         gamma=gamma if method == FOCUSED else None,
                                         degraded=True)
        return out
    if delta is None:
        delta = delta_for_selection(ds, sel)
    sampler = _LambdaSampler(delta, M, seed)
    out[ONE_STEP] = interval_onestep(sel, delta, alpha, _sampler=sampler)
    out[TWO_STEP] = interval_twostep(sel, delta, alpha, grid_size=grid_size, _sampler=sampler)
    out[FOCUSED] = interval_focused(sel, delta, alpha, gamma, grid_size=grid_size,
                                    alpha1_grid=alpha1_grid, _sampler=sampler)
    return out
