"""
    Bayesian online changepoint detection with a constant hazard and a Gaussian
    observation model of known variance (conjugate Gaussian prior on each segment mean).

    score_t = P(x_t starts a new segment | x_1..x_t). A new segment's first point is
    scored under the prior predictive.
"""

import os
import itertools
import logging

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from ..utils.errors import ConfigurationError

logger = logging.getLogger(os.path.basename(__name__))

PRIOR_MEAN = 0.0
PRIOR_VARIANCE = 1.0


def _validate(hazard_rate, obs_noise_variance, prior_variance):

    if not 0 < hazard_rate < 1:
        raise ConfigurationError(f'hazard_rate must be in (0, 1), got {hazard_rate}')

    if not obs_noise_variance > 0:
        raise ConfigurationError(f'obs_noise_variance must be > 0, got {obs_noise_variance}')

    if not prior_variance > 0:
        raise ConfigurationError(f'prior_variance must be > 0, got {prior_variance}')


def _log_predictive(x, count, total, obs_noise_variance, prior_mean, prior_variance):
    """
        log p(x | `count` previous points of the segment summing to `total`); arrays broadcast
    """
    precision = 1.0 / prior_variance + count / obs_noise_variance
    mean = (prior_mean / prior_variance + total / obs_noise_variance) / precision
    return norm.logpdf(x, loc=mean, scale=np.sqrt(1.0 / precision + obs_noise_variance))


def changepoint_posterior(sequence, hazard_rate, obs_noise_variance, prior_mean=PRIOR_MEAN, prior_variance=PRIOR_VARIANCE):
    """Online run-length recursion on a scalar sequence

    Arguments
    ---------
        sequence : array-like
            Shape (T,)
        hazard_rate : float
            Prior probability that any step starts a new segment, in (0, 1)
        obs_noise_variance : float
            Known observation variance (> 0)

    Returns
    -------
        scores : np.ndarray
            Shape (T,), scores[0] = hazard_rate
    """

    # validate input
    _validate(hazard_rate, obs_noise_variance, prior_variance)

    x = np.asarray(sequence, dtype=np.float64).reshape(-1)
    length = x.shape[0]
    if length == 0:
        return np.zeros(0)

    log_h, log_1mh = np.log(hazard_rate), np.log1p(-hazard_rate)
    prefix = np.concatenate([[0.0], np.cumsum(x)])

    scores = np.zeros(length)
    scores[0] = hazard_rate

    # log_joint[s] = log P(x_t has s earlier points in its segment, x_1..x_t)
    log_joint = np.array([_log_predictive(x[0], 0, 0.0, obs_noise_variance, prior_mean, prior_variance)])

    for t in range(1, length):

        # growth: s_{t-1} = s  ->  s_t = s + 1, segment sums from the prefix table
        counts = np.arange(1, t + 1)
        totals = prefix[t] - prefix[t - counts]
        growth = log_joint + log_1mh + _log_predictive(x[t], counts, totals, obs_noise_variance, prior_mean, prior_variance)

        reset = log_h + logsumexp(log_joint) + _log_predictive(x[t], 0, 0.0, obs_noise_variance, prior_mean, prior_variance)

        log_joint = np.concatenate([[reset], growth])
        log_evidence = logsumexp(log_joint)
        scores[t] = np.exp(reset - log_evidence)

        # renormalize to keep the recursion in range
        log_joint = log_joint - log_evidence

    return scores


def bcpd_brute_force(sequence, hazard_rate, obs_noise_variance, prior_mean=PRIOR_MEAN, prior_variance=PRIOR_VARIANCE):
    """Reference for changepoint_posterior: enumerates every changepoint configuration of each prefix

    Exponential in the sequence length, meant for sequences of a dozen steps.
    """

    # validate input
    _validate(hazard_rate, obs_noise_variance, prior_variance)

    x = np.asarray(sequence, dtype=np.float64).reshape(-1)
    length = x.shape[0]
    if length == 0:
        return np.zeros(0)

    log_h, log_1mh = np.log(hazard_rate), np.log1p(-hazard_rate)

    scores = np.zeros(length)
    scores[0] = hazard_rate

    for t in range(1, length):

        log_with, log_without = [], []
        for flags in itertools.product((0, 1), repeat=t):

            # flags[i - 1] = 1 when x_i (0-based, i >= 1) starts a new segment
            log_p = 0.0
            start = 0
            for i in range(t + 1):
                if i > 0:
                    if flags[i - 1]:
                        start = i
                        log_p += log_h
                    else:
                        log_p += log_1mh
                count = i - start
                total = float(np.sum(x[start:i]))
                log_p += _log_predictive(x[i], count, total, obs_noise_variance, prior_mean, prior_variance)

            (log_with if flags[-1] else log_without).append(log_p)

        log_w, log_wo = logsumexp(log_with), logsumexp(log_without)
        scores[t] = np.exp(log_w - np.logaddexp(log_w, log_wo))

    return scores


def bcpd_scores(dataset, hazard_rate, obs_noise_variance):
    """Changepoint scores of every sample, per trajectory, max over action dimensions

    Arguments
    ---------
        dataset : Dataset
            Scores the regression targets of each trajectory in step order
        hazard_rate : float
        obs_noise_variance : float

    Returns
    -------
        scores : np.ndarray
            Shape (N,), aligned with the dataset
    """

    # validate input
    _validate(hazard_rate, obs_noise_variance, PRIOR_VARIANCE)

    scores = np.zeros(len(dataset))
    for trajectory_id in np.unique(dataset.trajectory_ids):

        idx = np.flatnonzero(dataset.trajectory_ids == trajectory_id)
        idx = idx[np.argsort(dataset.step_indices[idx], kind='stable')]

        per_dim = [
            changepoint_posterior(dataset.targets[idx, d], hazard_rate, obs_noise_variance)
            for d in range(dataset.action_dim)
        ]
        scores[idx] = np.max(np.vstack(per_dim), axis=0)

    logger.debug(f'changepoint scores: mean {scores.mean():.4f}, max {scores.max():.4f}')

    return scores
