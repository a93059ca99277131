"""Estimator-style front end over selection and interval construction."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import postsel
from ._validation import check_count, check_level, check_mask, check_summary_array
from .focus import focused_estimate, kmeans_candidates
from .summary_data import Dataset


class FocusedMR(BaseEstimator):
    """Focused choice between the core estimator and core-plus-additional ones.

    Parameters
    ----------
    candidates : "full" or int, default="full"
        ``"full"`` compares the core set with core plus every additional
        variant. An integer ``k`` clusters the additional variants on their
        Wald ratios into ``k`` groups and uses all ``2**k - 1`` unions.
    alpha : float, default=0.05
    gamma : float, default=0.2
        Coverage slack traded for length by the focused interval.
    mc_draws : int, default=10000
    seed : int, default=0
    grid_size : int, default=41

    Attributes
    ----------
    dataset_ : Dataset
    selection_ : SelectionResult
    theta_ : float
        The focused estimate.
    chosen_ : str
        ``"core"`` or ``"S{k}"``.
    delta_ : DeltaMatrix or None
        Joint covariance used for the simulated intervals.
    intervals_ : dict
        :class:`IntervalResult` per method name.
    """

    def __init__(self, candidates="full", alpha=0.05, gamma=0.2, mc_draws=10_000, seed=0,
                 grid_size=postsel.DEFAULT_GRID):
        self.candidates = candidates
        self.alpha = alpha
        self.gamma = gamma
        self.mc_draws = mc_draws
        self.seed = seed
        self.grid_size = grid_size

    def _candidate_sets(self, ds):
        if self.candidates == "full":
            return None
        return kmeans_candidates(ds, check_count(self.candidates, "candidates"))

    def fit(self, X, core=None):
        """Fit on a :class:`Dataset`, or on a ``(p, 4)`` array plus a core mask.

        Array columns are ``beta_x, se_x, beta_y, se_y``.
        """
        check_level(self.alpha)
        check_level(self.gamma, "gamma")
        if isinstance(X, Dataset):
            if core is not None:
                raise ValueError("core must not be given together with a Dataset")
            ds = X
        else:
            X = check_summary_array(X)
            if core is None:
                raise ValueError("core mask is required for array input")
            mask = check_mask(core, X.shape[0])
            ds = Dataset.from_arrays(X[:, 0], X[:, 1], X[:, 2], X[:, 3], mask)
        sel = focused_estimate(ds, self._candidate_sets(ds))
        delta = postsel.delta_for_selection(ds, sel) if sel.candidates else None
        self.dataset_ = ds
        self.selection_ = sel
        self.delta_ = delta
        self.theta_ = sel.theta_hat
        self.variance_ = sel.variance
        self.chosen_ = sel.chosen.name
        self.intervals_ = postsel.all_intervals(
            ds, sel, self.alpha, self.gamma, self.mc_draws, self.seed, self.grid_size,
            delta=delta,
        )
        return self

    def conf_int(self, method=postsel.FOCUSED):
        """Return ``(lower, upper)`` of the interval named ``method``."""
        check_is_fitted(self, "intervals_")
        if method not in self.intervals_:
            raise ValueError(f"unknown method {method!r}; expected one of {postsel.METHODS}")
        iv = self.intervals_[method]
        return iv.lower, iv.upper

    @property
    def w_(self):
        check_is_fitted(self, "selection_")
        return np.array([self.selection_.w_stats[c.k] for c in self.selection_.candidates])
