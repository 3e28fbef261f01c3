"""
    Per-sample loss weights: monotone functions of APE (softmax, step) and the
    ablation schemes (changepoint scores, action-frequency clusters, boosting)
"""

import os
import math
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy.special import softmax
from toolz import merge

from ..utils.errors import ConfigurationError, EmptyClusterError, ShapeError
from .bcpd import bcpd_scores

logger = logging.getLogger(os.path.basename(__name__))

# scheme kinds and their default parameters
UNIFORM = 'uniform'
SOFTMAX = 'softmax'
STEP = 'step'
BCPD = 'bcpd'
ACTFREQ = 'actfreq'
BOOSTING = 'boosting'

SCHEME_DEFAULTS = {
    UNIFORM: {},
    SOFTMAX: {'tau': 0.2},
    STEP: {'thr': 10.0, 'w': 5.0},
    BCPD: {'hazard_rate': 0.02, 'obs_noise_variance': 0.05, 'thr': 10.0, 'w': 5.0},
    ACTFREQ: {'k': 6, 'kmeans_seed': 0, 'max_iterations': 100},
    BOOSTING: {'rounds': 3, 'learning_rate_shrink': 1.0}
}

APE_SCHEMES = (SOFTMAX, STEP)


@dataclass
class WeightScheme:
    kind: str = UNIFORM
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind in SCHEME_DEFAULTS:
            self.params = merge(SCHEME_DEFAULTS[self.kind], self.params)

    def __getitem__(self, key):
        return self.params[key]

    @property
    def needs_ape(self):
        return self.kind in APE_SCHEMES

    @classmethod
    def uniform(cls):
        return cls(UNIFORM)

    @classmethod
    def softmax(cls, tau=0.2):
        return cls(SOFTMAX, {'tau': tau})

    @classmethod
    def step(cls, thr=10.0, w=5.0):
        return cls(STEP, {'thr': thr, 'w': w})

    @classmethod
    def bcpd(cls, hazard_rate=0.02, obs_noise_variance=0.05, thr=10.0, w=5.0):
        return cls(BCPD, {'hazard_rate': hazard_rate, 'obs_noise_variance': obs_noise_variance, 'thr': thr, 'w': w})

    @classmethod
    def actfreq(cls, k=6, kmeans_seed=0, max_iterations=100):
        return cls(ACTFREQ, {'k': k, 'kmeans_seed': kmeans_seed, 'max_iterations': max_iterations})

    @classmethod
    def boosting(cls, rounds=3, learning_rate_shrink=1.0):
        return cls(BOOSTING, {'rounds': rounds, 'learning_rate_shrink': learning_rate_shrink})

    def validate(self):

        if self.kind not in SCHEME_DEFAULTS:
            raise ConfigurationError(f'Unknown weight scheme {self.kind}, must be one of {list(SCHEME_DEFAULTS)}')

        unknown = set(self.params) - set(SCHEME_DEFAULTS[self.kind])
        if unknown:
            raise ConfigurationError(f'Unknown parameters {sorted(unknown)} for weight scheme {self.kind}')

        p = self.params
        if self.kind == SOFTMAX and not p['tau'] > 0:
            raise ConfigurationError(f'softmax tau must be > 0, got {p["tau"]}')

        if self.kind in (STEP, BCPD):
            if not 0 < p['thr'] <= 100:
                raise ConfigurationError(f'thr must be in (0, 100], got {p["thr"]}')
            if not p['w'] >= 1:
                raise ConfigurationError(f'w must be >= 1, got {p["w"]}')

        if self.kind == BCPD:
            if not 0 < p['hazard_rate'] < 1:
                raise ConfigurationError(f'hazard_rate must be in (0, 1), got {p["hazard_rate"]}')
            if not p['obs_noise_variance'] > 0:
                raise ConfigurationError(f'obs_noise_variance must be > 0, got {p["obs_noise_variance"]}')

        if self.kind == ACTFREQ:
            if int(p['k']) != p['k'] or p['k'] < 2:
                raise ConfigurationError(f'k must be an integer >= 2, got {p["k"]}')
            if p['max_iterations'] < 1:
                raise ConfigurationError(f'max_iterations must be >= 1, got {p["max_iterations"]}')

        if self.kind == BOOSTING:
            if int(p['rounds']) != p['rounds'] or p['rounds'] < 1:
                raise ConfigurationError(f'rounds must be an integer >= 1, got {p["rounds"]}')
            if not p['learning_rate_shrink'] > 0:
                raise ConfigurationError(f'learning_rate_shrink must be > 0, got {p["learning_rate_shrink"]}')

    def to_dict(self):
        return {'kind': self.kind, **self.params}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop('kind', UNIFORM)
        scheme = cls(kind, d)
        scheme.validate()
        return scheme


@dataclass
class WeightTable:
    """Per-sample loss weights aligned with a dataset

    Static tables are looked up per minibatch. The softmax table keeps the APE values and
    renormalizes within each minibatch; its `weights` hold the dataset-wide softmax scaled
    to mean 1, for export only.
    """
    weights: np.ndarray
    scheme: WeightScheme
    static: bool = True
    ape: Optional[np.ndarray] = None

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64)
        self.weights.setflags(write=False)

    def __len__(self):
        return int(self.weights.shape[0])

    def batch_weights(self, batch_indices):
        if self.static:
            return self.weights[batch_indices]
        return softmax_weights(self.ape[batch_indices], self.scheme['tau'])

    def to_frame(self, dataset, ape_table=None):
        frame = pd.DataFrame({
            'sample_id': np.arange(len(self)),
            'trajectory_id': dataset.trajectory_ids,
            'step': dataset.step_indices,
            'ape': ape_table.ape if ape_table is not None else np.nan,
            'weight': self.weights
        })
        return frame

    def save_csv(self, out_path, dataset, ape_table=None):
        self.to_frame(dataset, ape_table).to_csv(out_path, index=False, float_format='%.10g')


def softmax_weights(batch_apes, tau):
    """
        w_i = exp(tau * ape_i) / sum_j exp(tau * ape_j) within one minibatch
    """

    # validate input
    batch_apes = np.asarray(batch_apes, dtype=np.float64)
    if batch_apes.size == 0:
        raise ShapeError('Cannot compute softmax weights of an empty batch')

    if not tau > 0:
        raise ConfigurationError(f'tau must be > 0, got {tau}')

    return softmax(tau * batch_apes)


def top_count(n_samples, thr):
    """
        ceil(thr / 100 * n_samples), robust to float noise in thr * n / 100
    """
    return int(math.ceil(round(thr * n_samples / 100.0, 9)))


def step_weights(scores, thr, w):
    """Weight w for the top-thr percent scores, 1 for the rest

    Exactly ceil(thr / 100 * N) samples receive w; among equal scores the lower index wins.

    Arguments
    ---------
        scores : array-like
            Shape (N,), APE or any other keyframe score
        thr : float
            Percentile in (0, 100]
        w : float
            Weight >= 1

    Returns
    -------
        weights : np.ndarray
    """

    # validate input
    if not 0 < thr <= 100:
        raise ConfigurationError(f'thr must be in (0, 100], got {thr}')

    if not w >= 1:
        raise ConfigurationError(f'w must be >= 1, got {w}')

    scores = np.asarray(scores, dtype=np.float64)
    n_samples = scores.shape[0]

    # sort by descending score, then ascending index
    ranking = np.lexsort((np.arange(n_samples), -scores))

    weights = np.ones(n_samples)
    weights[ranking[:top_count(n_samples, thr)]] = w

    return weights


def _lloyd(points, centers, max_iterations):
    """
        Returns the labels after convergence (or the iteration cap); ties go to the lowest cluster index
    """

    labels = None
    for _ in range(max_iterations):

        distances = ((points[:, np.newaxis, :] - centers[np.newaxis, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(distances, axis=1)

        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels

        # empty clusters keep their previous center
        for c in range(centers.shape[0]):
            members = points[labels == c]
            if len(members) > 0:
                centers[c] = members.mean(axis=0)

    return labels


def kmeans(points, k, seed=0, max_iterations=100):
    """Lloyd's k-means initialized from k distinct random samples

    When a cluster ends up empty the algorithm restarts once from k distinct unique rows.

    Returns
    -------
        labels : np.ndarray
            Shape (N,), cluster index of every point
    """

    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, np.newaxis]

    n_samples = points.shape[0]
    if n_samples < k:
        raise ConfigurationError(f'k-means needs at least k={k} samples, got {n_samples}')

    rng = np.random.default_rng(seed)

    centers = points[rng.choice(n_samples, size=k, replace=False)].copy()
    labels = _lloyd(points, centers, max_iterations)
    if len(np.unique(labels)) == k:
        return labels

    logger.warning('k-means left an empty cluster, re-seeding once from unique rows')

    unique_rows = np.unique(points, axis=0)
    if len(unique_rows) >= k:
        centers = unique_rows[rng.choice(len(unique_rows), size=k, replace=False)].copy()
    else:
        centers = points[rng.choice(n_samples, size=k, replace=False)].copy()

    labels = _lloyd(points, centers, max_iterations)
    if len(np.unique(labels)) < k:
        raise EmptyClusterError(f'k-means with k={k} left an empty cluster after re-seeding ({len(unique_rows)} distinct actions)')

    return labels


def actfreq_weights(actions, k=6, seed=0, max_iterations=100):
    """Category-frequency weights: a sample in a cluster of n_i members gets N / n_i

    Arguments
    ---------
        actions : np.ndarray
            Shape (N, action_dim), clustered on the raw action vectors
        k : int
        seed : int

    Returns
    -------
        weights : np.ndarray
        labels : np.ndarray
    """

    # validate input
    if int(k) != k or k < 2:
        raise ConfigurationError(f'k must be an integer >= 2, got {k}')

    labels = kmeans(actions, int(k), seed=seed, max_iterations=max_iterations)
    counts = np.bincount(labels, minlength=int(k))

    return len(labels) / counts[labels], labels


def build_weight_table(scheme, dataset, ape_table=None):
    """Materializes the weights of a static or APE-based scheme for a dataset

    Arguments
    ---------
        scheme : WeightScheme
        dataset : Dataset
        ape_table : ApeTable
            Required by the softmax and step schemes

    Returns
    -------
        table : WeightTable
    """

    # validate input
    scheme.validate()

    if scheme.needs_ape:
        if ape_table is None:
            raise ConfigurationError(f'Weight scheme {scheme.kind} needs an APE table')
        ape_table.check_aligned(dataset)

    if scheme.kind == UNIFORM:
        return WeightTable(np.ones(len(dataset)), scheme)

    if scheme.kind == SOFTMAX:
        overall = softmax_weights(ape_table.ape, scheme['tau']) * len(dataset)
        return WeightTable(overall, scheme, static=False, ape=ape_table.ape.copy())

    if scheme.kind == STEP:
        return WeightTable(step_weights(ape_table.ape, scheme['thr'], scheme['w']), scheme)

    if scheme.kind == BCPD:
        scores = bcpd_scores(dataset, scheme['hazard_rate'], scheme['obs_noise_variance'])
        return WeightTable(step_weights(scores, scheme['thr'], scheme['w']), scheme)

    if scheme.kind == ACTFREQ:
        weights, labels = actfreq_weights(dataset.targets, scheme['k'], scheme['kmeans_seed'], scheme['max_iterations'])
        logger.info(f'action clusters: sizes {np.bincount(labels).tolist()}')
        return WeightTable(weights, scheme)

    raise ConfigurationError(f'Weight scheme {scheme.kind} is produced by training, use boosting_weights')
