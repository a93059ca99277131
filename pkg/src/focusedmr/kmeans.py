"""Deterministic one-dimensional k-means.

Centroids start at the (2i - 1) / (2k) quantiles of the data and Lloyd
iterations run until the assignment stops changing (at most ``max_iter``).
Clusters that become empty keep their previous centroid. Labels are
ordered by increasing centroid.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_count


def _assign(x, centers):
    # argmin picks the lower label on exact ties
    return np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)


def kmeans_1d(values, k, max_iter=100):
    """Cluster ``values`` into ``k`` groups.

    Returns
    -------
    labels : ndarray of int, shape (n,)
    centers : ndarray of float, shape (k,)
    n_iter : int
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    k = check_count(k, "k")
    if x.size < k:
        raise ValueError(f"need at least k={k} values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    centers = np.quantile(x, (2 * np.arange(1, k + 1) - 1) / (2 * k))
    labels = _assign(x, centers)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = x[members].mean()
        new = _assign(x, centers)
        if np.array_equal(new, labels):
            break
        labels = new
    order = np.argsort(centers, kind="stable")
    relabel = np.empty(k, dtype=np.intp)
    relabel[order] = np.arange(k)
    return relabel[labels], centers[order], n_iter


class KMeans1D(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`kmeans_1d`.

    Parameters
    ----------
    n_clusters : int, default=3
    max_iter : int, default=100

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
    cluster_centers_ : ndarray of shape (n_clusters,)
    n_iter_ : int
    """

    def __init__(self, n_clusters=3, max_iter=100):
        self.n_clusters = n_clusters
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        if X.ndim == 2 and X.shape[1] != 1:
            raise ValueError("KMeans1D expects a single feature")
        self.labels_, self.cluster_centers_, self.n_iter_ = kmeans_1d(
            X.ravel(), self.n_clusters, self.max_iter
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, ensure_2d=False, dtype=np.float64).ravel()
        return _assign(X, self.cluster_centers_)
