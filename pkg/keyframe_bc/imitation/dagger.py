"""
    DAGGER: aggregates expert labels on the states the learner visits
"""

import os
import logging

import numpy as np

from ..demos import build_history_dataset
from ..envs import make_env
from ..keyframes.weighting import WeightScheme
from ..utils.errors import ConfigurationError
from .episode import ExpertPolicy, run_episode
from .policy import train_bc

logger = logging.getLogger(os.path.basename(__name__))


def round_quotas(query_budget, n_rounds):
    """
        Labeled states per round: an even split, the remainder goes to the last round
    """
    base = query_budget // n_rounds
    quotas = [base] * n_rounds
    quotas[-1] += query_budget - base * n_rounds
    return quotas


def dagger(env_config, policy_spec, query_budget, n_rounds, train_config, seed=0, progress=False):
    """Interactive imitation with a queryable expert

    Round 1 executes the expert; later rounds execute the current policy. Every visited state
    is labeled with the expert action, and the policy is retrained from scratch on everything
    aggregated so far. The last episode of a round is cut so each round consumes exactly its quota.

    Arguments
    ---------
        env_config : ToyCarConfig or ScriptConfig
        policy_spec : PolicySpec
        query_budget : int
            Total number of expert-labeled states
        n_rounds : int
            1 <= n_rounds <= query_budget
        train_config : TrainConfig
        seed : int
            Seed of the episode seeds

    Returns
    -------
        policy : TrainedPolicy
            provenance holds the per-round query counts
    """

    # validate input
    if int(n_rounds) != n_rounds or n_rounds < 1:
        raise ConfigurationError(f'n_rounds must be a positive integer, got {n_rounds}')

    if int(query_budget) != query_budget or query_budget < n_rounds:
        raise ConfigurationError(f'query_budget must be an integer >= n_rounds = {n_rounds}, got {query_budget}')

    policy_spec.validate()

    env = make_env(env_config)
    seed_sequence = np.random.SeedSequence(int(seed))

    trajectories = []
    policy = None
    round_sizes = []
    for round_index, quota in enumerate(round_quotas(int(query_budget), int(n_rounds))):

        actor = ExpertPolicy() if round_index == 0 else policy

        collected = 0
        while collected < quota:
            episode_seed = int(seed_sequence.spawn(1)[0].generate_state(1)[0])
            trajectory = run_episode(env, actor, episode_seed, trajectory_id=len(trajectories), max_steps=quota - collected)
            trajectories.append(trajectory)
            collected += len(trajectory)

        round_sizes.append(collected)

        dataset = build_history_dataset(trajectories, policy_spec.history, 1)
        policy = train_bc(dataset, policy_spec, WeightScheme.uniform(), train_config, progress=progress)

        logger.debug(f'dagger round {round_index + 1}/{n_rounds}: {collected} new labels, {len(dataset)} aggregated')

    policy.provenance['method'] = 'dagger'
    policy.provenance['round_sizes'] = round_sizes
    policy.provenance['queries'] = int(sum(round_sizes))

    return policy
