"""
    AdaBoost.R2-style reweighting of a single history-conditioned policy
"""

import os
import logging

import numpy as np

from ..neuralnet import per_sample_errors
from ..utils.errors import BoostingError, ConfigurationError
from .weighting import WeightScheme, WeightTable, BOOSTING

logger = logging.getLogger(os.path.basename(__name__))


def boosting_update(weights, losses, shrink=1.0):
    """One reweighting step

    L_i = loss_i / max(loss), Lbar = weighted mean of L, beta = Lbar / (1 - Lbar),
    w_i <- w_i * beta ** ((1 - L_i) * shrink), renormalized to mean 1.

    Arguments
    ---------
        weights : np.ndarray
            Current weights, shape (N,)
        losses : np.ndarray
            Per-sample losses of the policy trained on `weights`
        shrink : float

    Returns
    -------
        weights : np.ndarray
            Updated weights, or the input unchanged when every loss is 0 or Lbar >= 0.5
        beta : float
            None when no update was applied (the caller stops boosting)
    """

    weights = np.asarray(weights, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64)

    max_loss = float(np.max(losses))
    if max_loss <= 0:
        logger.warning('boosting: every sample has zero loss, weights left unchanged')
        return weights.copy(), None

    normalized = losses / max_loss
    mean_loss = float(np.sum(weights * normalized) / np.sum(weights))
    if mean_loss >= 1:
        raise BoostingError(f'Weighted mean normalized loss is {mean_loss:.6f}: every sample sits at the max loss, beta is undefined')

    if mean_loss >= 0.5:
        logger.warning(f'boosting: weighted mean normalized loss {mean_loss:.4f} >= 0.5, weights left unchanged')
        return weights.copy(), None

    beta = mean_loss / (1.0 - mean_loss)
    updated = weights * np.power(beta, (1.0 - normalized) * shrink)
    updated = updated * len(updated) / np.sum(updated)

    return updated, beta


def boosting_weights(dataset, policy_spec, train_config, rounds=3, learning_rate_shrink=1.0, progress=False):
    """Trains `rounds` policies, upweighting high-error samples between rounds

    Arguments
    ---------
        dataset : Dataset
        policy_spec : PolicySpec
        train_config : TrainConfig
        rounds : int
            >= 1; rounds - 1 weight updates happen between trainings
        learning_rate_shrink : float
            Exponent multiplier on the beta update

    Returns
    -------
        table : WeightTable
            Weights the final policy was trained on
        policy : TrainedPolicy
            Last-round policy
    """

    # deferred, imitation builds on keyframes
    from ..imitation.policy import train_bc, policy_inputs

    # validate input
    if int(rounds) != rounds or rounds < 1:
        raise ConfigurationError(f'rounds must be an integer >= 1, got {rounds}')

    scheme = WeightScheme(BOOSTING, {'rounds': int(rounds), 'learning_rate_shrink': learning_rate_shrink})
    scheme.validate()

    inputs = policy_inputs(dataset, policy_spec)
    weights = np.ones(len(dataset))

    policy = None
    for round_index in range(int(rounds)):

        table = WeightTable(weights, scheme)
        policy = train_bc(dataset, policy_spec, WeightScheme.uniform(), train_config, weight_table=table, progress=progress)

        if round_index == rounds - 1:
            break

        losses = per_sample_errors(policy.model, inputs, dataset.targets)
        weights, beta = boosting_update(weights, losses, learning_rate_shrink)
        if beta is None:
            break

        logger.debug(f'boosting round {round_index + 1}: beta {beta:.4f}, max weight {weights.max():.3f}')

    policy.provenance['scheme'] = scheme.to_dict()

    return WeightTable(weights, scheme), policy
