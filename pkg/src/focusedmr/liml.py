"""LIML estimation over an instrument set.

The estimator minimises the variance-weighted residual sum

    Q(theta) = sum_j (by_j - bx_j * theta)^2 / (sy_j^2 + sx_j^2 * theta^2)

over the variants of one instrument set. Variance components used by the
variance, bias and covariance formulas are always evaluated at a single
reference value of theta (the core estimate).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import EstimationError
from .summary_data import InstrumentSet

GRID_POINTS = 512
GOLDEN_TOL = 1e-10
FALLBACK_BOUND = 100.0
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class VarianceComponents:
    """Sums over one set of variants, with Omega evaluated at ``theta_ref``.

    ``eta`` uses the bias-corrected ``bx^2 - sx^2`` and may be negative for
    very weak sets.
    """

    eta: float
    sigma_term: float
    xi: float
    omega: tuple
    theta_ref: float

    def __add__(self, other):
        if other.theta_ref != self.theta_ref:
            raise ValueError("cannot add components evaluated at different theta_ref")
        return VarianceComponents(
            self.eta + other.eta,
            self.sigma_term + other.sigma_term,
            self.xi + other.xi,
            self.omega + other.omega,
            self.theta_ref,
        )


@dataclass(frozen=True)
class LimlFit:
    theta_hat: float
    objective_at_min: float
    set: InstrumentSet
    variance: float
    bound: float


def _columns(ds, iset):
    """Columns for an :class:`InstrumentSet` or a plain sequence of positions."""
    if isinstance(iset, InstrumentSet):
        ds.check_set(iset)
        idx = iset.as_array()
    else:
        idx = np.asarray(sorted(iset), dtype=np.intp)
        if idx.size == 0:
            raise ValueError("instrument set is empty")
        if idx[0] < 0 or idx[-1] >= ds.total_count:
            raise ValueError("instrument set index out of range")
    return ds.beta_x[idx], ds.se_x[idx], ds.beta_y[idx], ds.se_y[idx]


def _objective(bx, sx2, by, sy2, theta):
    r = by - bx * theta
    return float(np.sum(r * r / (sy2 + sx2 * (theta * theta))))


def _objective_grid(bx, sx2, by, sy2, thetas):
    t = thetas[:, None]
    r = by[None, :] - bx[None, :] * t
    return np.sum(r * r / (sy2[None, :] + sx2[None, :] * (t * t)), axis=1)


def objective(ds, iset, theta):
    """Value of the LIML objective for ``iset`` at ``theta``."""
    bx, sx, by, sy = _columns(ds, iset)
    return _objective(bx, sx * sx, by, sy * sy, float(theta))


def score(ds, iset, theta):
    """Sum of per-variant scores; equals ``-dQ/dtheta / 2``."""
    bx, sx, by, sy = _columns(ds, iset)
    theta = float(theta)
    return _score(bx, sx * sx, by, sy * sy, theta)


def search_bound(bx, sx, by):
    """Half-width of the symmetric search interval for the minimiser."""
    relevant = np.abs(bx) / sx > 1.0
    if not relevant.any():
        return FALLBACK_BOUND
    return 10.0 * float(np.max(np.abs(by[relevant] / bx[relevant])))


def _golden(f, lo, hi, tol):
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _score(bx, sx2, by, sy2, theta):
    omega = sy2 + theta * theta * sx2
    return float(np.sum((by - theta * bx) * (bx * sy2 + theta * by * sx2) / (omega * omega)))


def _polish(bx, sx2, by, sy2, lo, hi, theta, value):
    # Golden section stalls once Q differences drop below rounding; the score root does not.
    s_lo, s_hi = _score(bx, sx2, by, sy2, lo), _score(bx, sx2, by, sy2, hi)
    if not (s_lo > 0.0 > s_hi):
        return theta, value
    root = brentq(lambda t: _score(bx, sx2, by, sy2, t), lo, hi, xtol=1e-15, rtol=1e-15)
    q = _objective(bx, sx2, by, sy2, root)
    if q <= value + 1e-12 * max(1.0, abs(value)):
        return float(root), q
    return theta, value


def _minimize_arrays(bx, sx, by, sy):
    if not np.any(np.abs(bx) > 0):
        raise EstimationError("no relevant instruments")
    sx2, sy2 = sx * sx, sy * sy
    bound = search_bound(bx, sx, by)
    grid = np.linspace(-bound, bound, GRID_POINTS)
    values = _objective_grid(bx, sx2, by, sy2, grid)
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, GRID_POINTS - 1)]
    theta, value = _golden(lambda t: _objective(bx, sx2, by, sy2, t), lo, hi, GOLDEN_TOL)
    theta, value = _polish(bx, sx2, by, sy2, lo, hi, theta, value)
    if values[i] < value:
        theta, value = float(grid[i]), float(values[i])
    return float(theta), float(value), bound


def components_arrays(bx, sx, sy, theta_ref):
    sx2, sy2 = sx * sx, sy * sy
    omega = sy2 + theta_ref * theta_ref * sx2
    inv2 = 1.0 / (omega * omega)
    return VarianceComponents(
        eta=float(np.sum((bx * bx - sx2) / omega)),
        sigma_term=float(np.sum(inv2 * sx2 * sy2)),
        xi=float(2.0 * theta_ref * theta_ref * np.sum(inv2 * sx2 * sx2)),
        omega=tuple(omega.tolist()),
        theta_ref=float(theta_ref),
    )


def components(ds, iset, theta_ref):
    """Variance components of the variants in ``iset`` at ``theta_ref``.

    ``iset`` may also be a plain collection of positions, which is how the
    additional part of a candidate set is passed.
    """
    theta_ref = float(theta_ref)
    if not math.isfinite(theta_ref):
        raise ValueError("theta_ref must be finite")
    bx, sx, _, sy = _columns(ds, iset)
    return components_arrays(bx, sx, sy, theta_ref)


def variance_of_fit(comp_core, comp_add=None):
    """Many-weak-instrument variance of the core (or core-plus-additional) fit."""
    eta = comp_core.eta + (comp_add.eta if comp_add is not None else 0.0)
    sig = comp_core.sigma_term + (comp_add.sigma_term if comp_add is not None else 0.0)
    if not eta > 0:
        raise EstimationError("core instruments too weak for variance estimation")
    return (eta + sig) / (eta * eta)


def minimize(ds, iset, theta_ref=None):
    """Fit LIML on ``iset``.

    The minimiser is located on a 512-point grid over ``[-B, B]``,
    refined by golden-section search and polished by a root search on the
    score within the same bracket. ``theta_ref`` is where Omega is
    evaluated for the variance; it defaults to the core estimate (fitted
    here if ``iset`` is not the core set). The variance is NaN when the
    combined ``eta`` is not positive.
    """
    bx, sx, by, sy = _columns(ds, iset)
    theta, value, bound = _minimize_arrays(bx, sx, by, sy)
    core = set(ds.core_indices)
    members = set(iset.indices)
    if members == core or not core <= members:
        # Core fit, or an arbitrary set: variance from the set's own components.
        if theta_ref is None:
            theta_ref = theta
        comp = components(ds, iset, theta_ref)
        comp_add = None
    else:
        if theta_ref is None:
            theta_ref = minimize(ds, ds.core_set()).theta_hat
        comp = components(ds, ds.core_set(), theta_ref)
        comp_add = components(ds, members - core, theta_ref)
    try:
        var = variance_of_fit(comp, comp_add)
    except EstimationError:
        var = float("nan")
    return LimlFit(theta, value, iset, var, bound)
