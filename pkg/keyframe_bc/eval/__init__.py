"""
    Rollout evaluation and diagnostics: success, violations, progress, speed, inertia stalls,
    rollout imitation error, avgAPE of a policy and the changepoint loss breakdown
"""

import os
import logging
from dataclasses import dataclass, field, asdict, replace
from typing import List

import numpy as np
from scipy.stats import pearsonr
from tqdm import tqdm

from ..demos import build_history_dataset, split_by_trajectory
from ..envs import make_env, expert_action_from_snapshot, GREEN
from ..imitation.episode import run_episode
from ..imitation.policy import policy_inputs
from ..keyframes.copycat import train_copycat, compute_ape
from ..keyframes.weighting import top_count
from ..neuralnet import per_sample_errors
from ..utils.basic import derive_seeds
from ..utils.errors import ConfigurationError, DataError

logger = logging.getLogger(os.path.basename(__name__))

STALL_SPEED_FRACTION = 0.05
STALL_STEPS = 30
AVG_APE_HOLDOUT_FRACTION = 0.25
AVG_APE_MIN_EPISODES = 4


@dataclass
class EpisodeRecord:
    episode_seed: int
    steps: int
    reached_goal: bool
    red_violation: bool
    timeout: bool
    progress: float
    avg_speed: float
    inertia_stall: bool


@dataclass
class EvalReport:
    n_episodes: int
    success_rate: float
    violations: int
    progress: float
    avg_speed: float
    inertia_stalls: int
    episodes: List[EpisodeRecord] = field(default_factory=list)

    def metrics(self):
        """
            Scalar metrics, without the per-episode records
        """
        return {
            'n_episodes': self.n_episodes,
            'success_rate': self.success_rate,
            'violations': self.violations,
            'progress': self.progress,
            'avg_speed': self.avg_speed,
            'inertia_stalls': self.inertia_stalls
        }

    def to_dict(self):
        return {**self.metrics(), 'episodes': [asdict(e) for e in self.episodes]}


@dataclass
class AvgApeReport:
    avg_ape: float
    n_train_episodes: int
    n_heldout_episodes: int
    n_heldout_samples: int
    copycat: dict
    seed: int

    def to_dict(self):
        return asdict(self)


def count_inertia_stalls(trajectory, v_max, speed_fraction=STALL_SPEED_FRACTION, stall_steps=STALL_STEPS):
    """True if the car sat below speed_fraction * v_max for stall_steps green-light steps without moving off

    The counter grows on slow green steps, resets once the speed reaches the threshold and is
    left unchanged on red steps. Trajectories without velocity in their states never stall.
    """

    threshold = speed_fraction * v_max
    counter = 0
    for state in trajectory.full_states:

        if 'velocity' not in state:
            return False

        if state['velocity'] >= threshold:
            counter = 0
        elif state['light_status'] == GREEN:
            counter += 1
            if counter >= stall_steps:
                return True

    return False


def rollout(env_config, policy, n_episodes, seed=0, stall_speed_fraction=STALL_SPEED_FRACTION, stall_steps=STALL_STEPS, repeats=1, progress=False):
    """Runs the policy on seeded episodes

    Arguments
    ---------
        env_config : ToyCarConfig or ScriptConfig
        policy : object
            TrainedPolicy, ExpertPolicy, ConstantPolicy
        n_episodes : int
            Episodes per repeat
        seed : int
        stall_speed_fraction : float
        stall_steps : int
        repeats : int
            Evaluations with fresh environment seeds, merged into one report

    Returns
    -------
        trajectories : list
        report : EvalReport
    """

    # validate input
    if n_episodes < 1 or repeats < 1:
        raise ConfigurationError(f'n_episodes and repeats must be >= 1, got {n_episodes} and {repeats}')

    env = make_env(env_config)
    v_max = getattr(env_config, 'v_max', 1.0)

    trajectories, records = [], []
    for i, episode_seed in enumerate(tqdm(derive_seeds(seed, n_episodes * repeats), desc='rollout', disable=not progress)):

        trajectory = run_episode(env, policy, episode_seed, trajectory_id=i)
        trajectories.append(trajectory)

        elapsed = env.elapsed_time()
        outcome = trajectory.outcome
        records.append(EpisodeRecord(
            episode_seed=int(episode_seed),
            steps=len(trajectory),
            reached_goal=bool(outcome.get('reached_goal', False)),
            red_violation=bool(outcome.get('red_violation', False)),
            timeout=bool(outcome.get('timeout', False)),
            progress=env.progress(),
            avg_speed=float(env.distance_travelled() / elapsed) if elapsed > 0 else 0.0,
            inertia_stall=count_inertia_stalls(trajectory, v_max, stall_speed_fraction, stall_steps)
        ))

    report = EvalReport(
        n_episodes=len(records),
        success_rate=float(np.mean([r.reached_goal for r in records])),
        violations=int(sum(r.red_violation for r in records)),
        progress=float(np.mean([r.progress for r in records])),
        avg_speed=float(np.mean([r.avg_speed for r in records])),
        inertia_stalls=int(sum(r.inertia_stall for r in records)),
        episodes=records
    )

    logger.info(f'rollout: success {report.success_rate:.3f}, violations {report.violations}, stalls {report.inertia_stalls}')

    return trajectories, report


def rollout_imitation_error(trajectories, env_config):
    """Mean squared error between executed actions and the expert's action on the same visited states

    Returns
    -------
        error : float
    """

    errors = []
    for trajectory in trajectories:

        if len(trajectory.full_states) != len(trajectory):
            raise DataError(f'Trajectory {trajectory.trajectory_id} carries {len(trajectory.full_states)} states for {len(trajectory)} steps')

        for state, executed in zip(trajectory.full_states, trajectory.executed_actions):
            expert = expert_action_from_snapshot(env_config, state)
            errors.append(np.mean((np.asarray(executed) - expert) ** 2))

    if len(errors) == 0:
        raise DataError('No visited states to score')

    return float(np.mean(errors))


def avg_ape_of_trajectories(trajectories, copycat_spec, seed=0, holdout_fraction=AVG_APE_HOLDOUT_FRACTION):
    """Held-out error of a copycat trained on the executed actions of the given episodes

    Trajectories are canonicalized by id so the result only depends on the set of episodes.
    """

    # validate input
    if len(trajectories) < AVG_APE_MIN_EPISODES:
        raise ConfigurationError(f'avgAPE needs at least {AVG_APE_MIN_EPISODES} episodes, got {len(trajectories)}')

    trajectories = sorted(trajectories, key=lambda t: t.trajectory_id)
    dataset = build_history_dataset(
        trajectories, 0, copycat_spec.context_length,
        context_source='executed', target_source='executed'
    )
    train, heldout = split_by_trajectory(dataset, holdout_fraction, seed=seed)

    fit = train_copycat(train, replace(copycat_spec, folds=1))
    table = compute_ape(fit, heldout)

    return AvgApeReport(
        avg_ape=float(np.mean(table.ape)),
        n_train_episodes=train.n_trajectories,
        n_heldout_episodes=heldout.n_trajectories,
        n_heldout_samples=len(heldout),
        copycat=copycat_spec.to_dict(),
        seed=int(seed)
    )


def avg_ape(policy, env_config, n_episodes, copycat_spec, seed=0):
    """avgAPE of a policy: rolls it out, trains a copycat on its own actions and reports the held-out mean APE

    Returns
    -------
        report : AvgApeReport
    """

    # validate input
    if n_episodes < AVG_APE_MIN_EPISODES:
        raise ConfigurationError(f'avgAPE needs at least {AVG_APE_MIN_EPISODES} episodes, got {n_episodes}')

    trajectories, _ = rollout(env_config, policy, n_episodes, seed=seed)

    return avg_ape_of_trajectories(trajectories, copycat_spec, seed=seed)


def changepoint_mask(ape, percentile):
    """
        True for the top `percentile` percent APE samples, ties broken by lower index
    """
    n_samples = len(ape)
    ranking = np.lexsort((np.arange(n_samples), -np.asarray(ape)))
    mask = np.zeros(n_samples, dtype=bool)
    mask[ranking[:top_count(n_samples, percentile)]] = True
    return mask


def loss_breakdown(policy, splits, percentile=10.0):
    """Unweighted imitation MSE on changepoint frames (top APE) and on the other frames

    Arguments
    ---------
        policy : TrainedPolicy
        splits : dict
            {split name: (dataset, ape_table)}
        percentile : float
            Size of the changepoint set in percent, in (0, 100]

    Returns
    -------
        breakdown : dict
            {split name: {changepoint_mse, other_mse, overall_mse, n_changepoint, n_other}};
            other_mse is NaN when every frame is a changepoint
    """

    # validate input
    if not 0 < percentile <= 100:
        raise ConfigurationError(f'percentile must be in (0, 100], got {percentile}')

    breakdown = {}
    for name, (dataset, ape_table) in splits.items():

        ape_table.check_aligned(dataset)

        errors = per_sample_errors(policy.model, policy_inputs(dataset, policy.spec), dataset.targets)
        mask = changepoint_mask(ape_table.ape, percentile)

        breakdown[name] = {
            'changepoint_mse': float(np.mean(errors[mask])),
            'other_mse': float(np.mean(errors[~mask])) if np.any(~mask) else float('nan'),
            'overall_mse': float(np.mean(errors)),
            'n_changepoint': int(np.sum(mask)),
            'n_other': int(np.sum(~mask))
        }

    return breakdown


def ape_error_correlation(ape, errors):
    """
        Pearson correlation between per-sample APE and a policy's per-sample error, NaN for constant inputs
    """
    ape, errors = np.asarray(ape, dtype=np.float64), np.asarray(errors, dtype=np.float64)
    if len(ape) < 2 or np.ptp(ape) == 0 or np.ptp(errors) == 0:
        return float('nan')
    return float(pearsonr(ape, errors)[0])
