"""Focused instrument selection.

Each candidate set is the core set joined with some additional variants.
A candidate's estimated asymptotic MSE is ``max(b^2 - var_b, 0) + var_f``
where ``b`` is the estimated asymptotic bias; the core estimator's is its
variance ``var_c``. The focused estimator takes the candidate with the
smallest AMSE provided it does not exceed ``var_c``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EstimationError
from .kmeans import kmeans_1d
from .liml import LimlFit, _minimize_arrays, components, variance_of_fit
from .summary_data import InstrumentSet

ALL_UNIONS = "all_unions"
SINGLE_FULL = "single_full"


@dataclass(frozen=True)
class BiasEstimate:
    b_hat: float
    b_s_hat: float
    var_b: float
    set: InstrumentSet


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of :func:`focused_estimate`.

    ``candidates`` holds only the candidates that entered the comparison;
    ones whose weak-set AMSE is undefined are listed in ``excluded``.
    Dictionaries are keyed by the candidate index ``k``.
    """

    w_stats: dict
    chosen: InstrumentSet
    theta_hat: float
    variance: float
    bias_estimates: list
    core_fit: LimlFit
    candidates: tuple
    candidate_fits: dict
    delta_c: float
    delta_f: dict
    comp_core: object
    comp_add: dict
    degraded: bool = False
    excluded: tuple = field(default=())

    @property
    def selected_core(self):
        return self.chosen.is_core

    @property
    def b_hat(self):
        return np.array([b.b_hat for b in self.bias_estimates])


def estimate_bias(ds, additional, theta_c, comp_core, comp_add, iset=None):
    """Asymptotic-bias estimate for the candidate ``core + additional``.

    All plug-ins (including Omega inside ``comp_core`` and ``comp_add``) are
    taken at the core estimate ``theta_c``.
    """
    idx = np.asarray(sorted(additional), dtype=np.intp)
    bx, by = ds.beta_x[idx], ds.beta_y[idx]
    omega = np.asarray(comp_add.omega)
    if iset is None:
        iset = ds.union_set(idx, k=1)
    return _bias(bx, by, omega, float(theta_c), comp_core, comp_add, iset)


def _bias(bx, by, omega, theta_c, comp_core, comp_add, iset):
    eta_c, eta_s = comp_core.eta, comp_add.eta
    total = eta_c + eta_s
    if not (eta_c > 0 and total > 0):
        raise EstimationError("weak-set AMSE undefined")
    b_s = float(np.sum(bx * by / omega)) - theta_c * eta_s
    var_b = (
        eta_s + comp_add.sigma_term + comp_add.xi
        + eta_s**2 / eta_c**2 * (eta_c + comp_core.sigma_term)
    ) / total**2
    if not var_b > 0:
        raise EstimationError("weak-set AMSE undefined")
    return BiasEstimate(b_s / total, b_s, var_b, iset)


def w_statistic(bias, delta_f, delta_c):
    """Estimated AMSE of the candidate minus that of the core estimator."""
    b_hat = bias.b_hat if isinstance(bias, BiasEstimate) else float(bias[0])
    var_b = bias.var_b if isinstance(bias, BiasEstimate) else float(bias[1])
    return max(b_hat * b_hat - var_b, 0.0) + delta_f - delta_c


def focused_estimate(ds, candidates=None):
    """Fit the core and every candidate, then pick the AMSE-minimising one.

    ``candidates`` defaults to the single full set. Ties go to a candidate
    over the core (selection event ``W <= 0``) and to the smaller ``k``
    among candidates.
    """
    ds.require_selection_ready()
    core = ds.core_set()
    if candidates is None:
        candidates = [ds.full_set(k=1)]
    if not candidates:
        raise ValueError("candidates must be nonempty")
    core_idx = set(core.indices)
    for c in candidates:
        ds.check_set(c)
        if c.is_core or not core_idx < set(c.indices):
            raise ValueError(f"candidate {c.name} must be a strict superset of the core")

    cidx = core.as_array()
    theta_c, q_c, bound_c = _minimize_arrays(
        ds.beta_x[cidx], ds.se_x[cidx], ds.beta_y[cidx], ds.se_y[cidx]
    )
    comp_core = components(ds, cidx, theta_c)
    if not comp_core.eta > 0:
        raise EstimationError("core instruments too weak for variance estimation")
    delta_c = variance_of_fit(comp_core)
    core_fit = LimlFit(theta_c, q_c, core, delta_c, bound_c)

    kept, fits, w_stats, delta_f, biases, comps, excluded = [], {}, {}, {}, [], {}, []
    for cand in candidates:
        add = np.asarray(sorted(set(cand.indices) - core_idx), dtype=np.intp)
        comp_add = components(ds, add, theta_c)
        try:
            bias = _bias(ds.beta_x[add], ds.beta_y[add], np.asarray(comp_add.omega),
                         theta_c, comp_core, comp_add, cand)
            d_f = variance_of_fit(comp_core, comp_add)
        except EstimationError as exc:
            warnings.warn(f"candidate {cand.name} excluded: {exc}", stacklevel=2)
            excluded.append((cand.k, str(exc)))
            continue
        idx = cand.as_array()
        theta, q, bound = _minimize_arrays(
            ds.beta_x[idx], ds.se_x[idx], ds.beta_y[idx], ds.se_y[idx]
        )
        kept.append(cand)
        fits[cand.k] = LimlFit(theta, q, cand, d_f, bound)
        comps[cand.k] = comp_add
        biases.append(bias)
        delta_f[cand.k] = d_f
        w_stats[cand.k] = w_statistic(bias, d_f, delta_c)

    degraded = not kept
    chosen_fit = core_fit
    if kept:
        best = min(kept, key=lambda c: (w_stats[c.k], c.k))
        if w_stats[best.k] <= 0:
            chosen_fit = fits[best.k]
    return SelectionResult(
        w_stats=w_stats,
        chosen=chosen_fit.set,
        theta_hat=chosen_fit.theta_hat,
        variance=chosen_fit.variance,
        bias_estimates=biases,
        core_fit=core_fit,
        candidates=tuple(kept),
        candidate_fits=fits,
        delta_c=delta_c,
        delta_f=delta_f,
        comp_core=comp_core,
        comp_add=comps,
        degraded=degraded,
        excluded=tuple(excluded),
    )


def kmeans_candidates(ds, k, mode=ALL_UNIONS, max_iter=100):
    """Candidate sets from clustering additional variants on their Wald ratios.

    ``mode=SINGLE_FULL`` returns only core plus every additional variant.
    ``mode=ALL_UNIONS`` splits the additional variants into ``k`` clusters
    and returns the ``2**k - 1`` nonempty unions of clusters, each joined
    with the core, ordered by bitmask (cluster 0 is the lowest bit).
    Additional variants with a zero exposure association are dropped.
    """
    ds.require_selection_ready()
    add = np.asarray(ds.additional_indices, dtype=np.intp)
    zero = ds.beta_x[add] == 0
    if zero.any():
        dropped = [ds.ids[i] for i in add[zero]]
        warnings.warn(
            f"dropping {len(dropped)} additional variant(s) with beta_exposure = 0: "
            + ", ".join(dropped),
            stacklevel=2,
        )
        add = add[~zero]
    if add.size == 0:
        raise ValueError("no additional variants with nonzero beta_exposure")
    if mode == SINGLE_FULL:
        return [ds.union_set(add, k=1)]
    if mode != ALL_UNIONS:
        raise ValueError(f"unknown mode {mode!r}")
    if add.size < k:
        raise ValueError(f"need at least k={k} additional variants, got {add.size}")
    ratios = ds.beta_y[add] / ds.beta_x[add]
    labels, _, _ = kmeans_1d(ratios, k, max_iter=max_iter)
    out, seen = [], set()
    for mask in range(1, 2**k):
        members = add[[bool(mask >> lab & 1) for lab in labels]]
        key = tuple(members.tolist())
        if not key or key in seen:
            continue
        seen.add(key)
        out.append(ds.union_set(members, k=len(out) + 1))
    if len(out) < 2**k - 1:
        warnings.warn(
            f"k-means produced empty clusters; {len(out)} distinct candidates instead of {2**k - 1}",
            stacklevel=2,
        )
    return out
