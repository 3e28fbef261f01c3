"""
    Demonstration collection, history-window datasets, trajectory-level splits and persistence
"""

import os
import json
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..envs import make_env
from ..utils.basic import derive_seeds, to_float_list
from ..utils.errors import ConfigurationError, DataError, ParseError

logger = logging.getLogger(os.path.basename(__name__))

# file format
TRAJECTORY_FORMAT = 'keyframe-bc-trajectories'
TRAJECTORY_FORMAT_VERSION = 1
TRAJECTORY_FIELDS = [
    'trajectory_id', 'episode_seed', 'observations', 'expert_actions',
    'executed_actions', 'perturbed', 'full_states', 'events', 'final_state'
]

ACTION_SOURCES = ('label', 'executed')


@dataclass
class Trajectory:
    """One episode

    Row t of every array describes step t: the observation shown, the expert's intended
    action (the label) and the action actually executed. events[t] are the flags raised by
    the step, full_states[t] the state before acting.
    """
    trajectory_id: int
    episode_seed: int
    observations: np.ndarray
    expert_actions: np.ndarray
    executed_actions: np.ndarray
    perturbed: np.ndarray
    full_states: List[dict] = field(default_factory=list)
    events: List[dict] = field(default_factory=list)
    final_state: Optional[dict] = None

    def __len__(self):
        return int(self.observations.shape[0])

    @property
    def obs_dim(self):
        return int(self.observations.shape[1])

    @property
    def action_dim(self):
        return int(self.expert_actions.shape[1])

    @property
    def outcome(self):
        """
            Events of the last step
        """
        if len(self.events) == 0:
            return {}
        return self.events[-1]

    def to_dict(self):
        return {
            'trajectory_id': int(self.trajectory_id),
            'episode_seed': int(self.episode_seed),
            'observations': to_float_list(self.observations),
            'expert_actions': to_float_list(self.expert_actions),
            'executed_actions': to_float_list(self.executed_actions),
            'perturbed': [bool(p) for p in self.perturbed],
            'full_states': self.full_states,
            'events': self.events,
            'final_state': self.final_state
        }

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in TRAJECTORY_FIELDS if k not in d]
        if missing:
            raise DataError(f'Trajectory record is missing fields {missing}')
        return cls(
            trajectory_id=int(d['trajectory_id']),
            episode_seed=int(d['episode_seed']),
            observations=np.asarray(d['observations'], dtype=np.float64),
            expert_actions=np.asarray(d['expert_actions'], dtype=np.float64),
            executed_actions=np.asarray(d['executed_actions'], dtype=np.float64),
            perturbed=np.asarray(d['perturbed'], dtype=bool),
            full_states=list(d['full_states']),
            events=list(d['events']),
            final_state=d['final_state']
        )

    def equals(self, other):
        return (
            self.trajectory_id == other.trajectory_id
            and self.episode_seed == other.episode_seed
            and np.array_equal(self.observations, other.observations)
            and np.array_equal(self.expert_actions, other.expert_actions)
            and np.array_equal(self.executed_actions, other.executed_actions)
            and np.array_equal(self.perturbed, other.perturbed)
            and self.full_states == other.full_states
            and self.events == other.events
            and self.final_state == other.final_state
        )


@dataclass(frozen=True)
class HistorySample:
    observation_window: np.ndarray
    target: np.ndarray
    action_context: np.ndarray
    trajectory_id: int
    step_index: int
    fold: int
    window_padded: bool
    context_padded: bool


@dataclass
class Dataset:
    """History-window samples, one per trajectory step, trajectory-major order

    windows[i] = [o_{t-H}, ..., o_t] flattened (oldest first),
    contexts[i] = [a_{t-1}, ..., a_{t-K}] flattened (most recent first)
    """
    trajectories: Tuple[Trajectory, ...]
    windows: np.ndarray
    targets: np.ndarray
    contexts: np.ndarray
    trajectory_ids: np.ndarray
    step_indices: np.ndarray
    window_padded: np.ndarray
    context_padded: np.ndarray
    folds: np.ndarray
    obs_dim: int
    action_dim: int
    history: int
    context_length: int
    split: str = 'all'
    context_source: str = 'label'
    target_source: str = 'label'

    def __len__(self):
        return int(self.windows.shape[0])

    def __getitem__(self, i):
        return HistorySample(
            observation_window=self.windows[i],
            target=self.targets[i],
            action_context=self.contexts[i],
            trajectory_id=int(self.trajectory_ids[i]),
            step_index=int(self.step_indices[i]),
            fold=int(self.folds[i]),
            window_padded=bool(self.window_padded[i]),
            context_padded=bool(self.context_padded[i])
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def n_trajectories(self):
        return len(self.trajectories)

    def unique_trajectory_ids(self):
        return sorted(int(t.trajectory_id) for t in self.trajectories)

    def select_trajectories(self, trajectory_ids, split=None):
        """
            Returns the dataset restricted to the given trajectories, original order kept
        """

        keep = set(int(i) for i in trajectory_ids)
        mask = np.isin(self.trajectory_ids, list(keep))

        return replace(
            self,
            trajectories=tuple(t for t in self.trajectories if t.trajectory_id in keep),
            windows=self.windows[mask],
            targets=self.targets[mask],
            contexts=self.contexts[mask],
            trajectory_ids=self.trajectory_ids[mask],
            step_indices=self.step_indices[mask],
            window_padded=self.window_padded[mask],
            context_padded=self.context_padded[mask],
            folds=self.folds[mask],
            split=split if split is not None else self.split
        )

    def with_history(self, history):
        """
            Rebuilds the same samples with a different observation window length; folds and split are kept
        """

        if history == self.history:
            return self

        rebuilt = build_history_dataset(
            list(self.trajectories), history, self.context_length,
            context_source=self.context_source, target_source=self.target_source
        )

        return replace(rebuilt, folds=self.folds.copy(), split=self.split)

    def equals(self, other):
        arrays = ('windows', 'targets', 'contexts', 'trajectory_ids', 'step_indices', 'window_padded', 'context_padded', 'folds')
        scalars = ('obs_dim', 'action_dim', 'history', 'context_length', 'context_source', 'target_source')
        return (
            all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and all(getattr(self, s) == getattr(other, s) for s in scalars)
            and len(self.trajectories) == len(other.trajectories)
            and all(a.equals(b) for a, b in zip(self.trajectories, other.trajectories))
        )


def collect_demonstrations(env_config, n_episodes, noise_rate=0.0, seed=0, progress=False):
    """Runs the expert in the environment with DART-style noise injection

    On every step, with probability noise_rate the executed action is resampled uniformly
    from [-1, 1]; the recorded label stays the expert's intended action.

    Arguments
    ---------
        env_config : ToyCarConfig or ScriptConfig
        n_episodes : int
            Number of episodes (>= 1)
        noise_rate : float
            Perturbation probability in [0, 1)
        seed : int
            Seed of the episode seeds and of the noise stream
        progress : bool
            Shows a tqdm bar

    Returns
    -------
        trajectories : list
            List of Trajectory
    """

    # validate input
    if n_episodes < 1:
        raise ConfigurationError(f'n_episodes must be >= 1, got {n_episodes}')

    if not 0 <= noise_rate < 1:
        raise ConfigurationError(f'noise_rate must be in [0, 1), got {noise_rate}')

    env = make_env(env_config)
    episode_seeds = derive_seeds(seed, n_episodes)

    trajectories = []
    for i in tqdm(range(n_episodes), desc='demonstrations', disable=not progress):

        noise_rng = np.random.default_rng([int(seed), i])
        observation = env.reset(episode_seed=episode_seeds[i])

        observations, labels, executed, perturbed, states, events = [], [], [], [], [], []
        done = False
        while not done:

            label = np.asarray(env.expert_action(), dtype=np.float64)

            # perturb
            is_perturbed = noise_rate > 0 and noise_rng.random() < noise_rate
            if is_perturbed:
                action = noise_rng.uniform(-1.0, 1.0, size=label.shape)
            else:
                action = label.copy()

            observations.append(observation)
            labels.append(label)
            executed.append(action)
            perturbed.append(is_perturbed)
            states.append(env.snapshot())

            outcome = env.step(action)
            events.append(outcome.events)
            observation = outcome.observation
            done = outcome.done

        trajectories.append(Trajectory(
            trajectory_id=i,
            episode_seed=episode_seeds[i],
            observations=np.asarray(observations),
            expert_actions=np.asarray(labels),
            executed_actions=np.asarray(executed),
            perturbed=np.asarray(perturbed, dtype=bool),
            full_states=states,
            events=events,
            final_state=env.snapshot()
        ))

    logger.info(f'collected {n_episodes} episodes, {sum(len(t) for t in trajectories)} steps, perturbed fraction {perturbed_fraction(trajectories):.4f}')

    return trajectories


def perturbed_fraction(trajectories):
    """
        Fraction of steps whose executed action was noise-injected
    """
    steps = sum(len(t) for t in trajectories)
    if steps == 0:
        return 0.0
    return float(sum(int(np.sum(t.perturbed)) for t in trajectories) / steps)


def action_changepoints(trajectory):
    """
        Steps t >= 1 whose expert label differs from the label at t - 1
    """
    labels = trajectory.expert_actions
    if len(labels) < 2:
        return []
    changed = np.any(labels[1:] != labels[:-1], axis=1)
    return [int(t) + 1 for t in np.flatnonzero(changed)]


def _window_indices(length, history):
    """
        idx[t, j] = max(t - history + j, 0), so early steps repeat the first observation
    """
    steps = np.arange(length)[:, np.newaxis]
    offsets = np.arange(-history, 1)[np.newaxis, :]
    return np.maximum(steps + offsets, 0)


def _action_context(actions, context_length):
    """
        [a_{t-1}, ..., a_{t-K}] with zero actions before the start of the trajectory
    """
    length, action_dim = actions.shape
    padded = np.vstack([np.zeros((context_length, action_dim)), actions])
    columns = []
    for lag in range(1, context_length + 1):
        columns.append(padded[context_length - lag:context_length - lag + length])
    return np.hstack(columns)


def build_history_dataset(trajectories, history, context_length, context_source='label', target_source='label'):
    """Builds history-window samples from trajectories

    Arguments
    ---------
        trajectories : list
            List of Trajectory
        history : int
            H >= 0, number of past observations in each window
        context_length : int
            K >= 1, number of past actions given to the copycat
        context_source : str
            'label' (expert actions) or 'executed' actions for the copycat context
        target_source : str
            'label' or 'executed' actions as regression targets

    Returns
    -------
        dataset : Dataset
    """

    # validate input
    if trajectories is None or len(trajectories) == 0:
        raise ConfigurationError('Cannot build a dataset from an empty trajectory list')

    if int(history) != history or history < 0:
        raise ConfigurationError(f'history must be a non-negative integer, got {history}')

    if int(context_length) != context_length or context_length < 1:
        raise ConfigurationError(f'context_length must be a positive integer, got {context_length}')

    for source in (context_source, target_source):
        if source not in ACTION_SOURCES:
            raise ConfigurationError(f'Action source must be one of {ACTION_SOURCES}, got {source}')

    obs_dims = set(t.obs_dim for t in trajectories)
    action_dims = set(t.action_dim for t in trajectories)
    if len(obs_dims) != 1 or len(action_dims) != 1:
        raise DataError(f'Inconsistent dimensions across trajectories: obs {obs_dims}, actions {action_dims}')

    ids = [t.trajectory_id for t in trajectories]
    if len(set(ids)) != len(ids):
        raise DataError('Trajectory ids must be unique')

    windows, targets, contexts, traj_ids, steps, w_pad, c_pad = [], [], [], [], [], [], []
    for trajectory in trajectories:

        length = len(trajectory)
        if length == 0:
            continue

        idx = _window_indices(length, history)
        windows.append(trajectory.observations[idx].reshape(length, -1))

        source = trajectory.expert_actions if target_source == 'label' else trajectory.executed_actions
        targets.append(source)

        source = trajectory.expert_actions if context_source == 'label' else trajectory.executed_actions
        contexts.append(_action_context(source, context_length))

        traj_ids.append(np.full(length, trajectory.trajectory_id, dtype=np.int64))
        steps.append(np.arange(length, dtype=np.int64))
        w_pad.append(np.arange(length) < history)
        c_pad.append(np.arange(length) < context_length)

    if len(windows) == 0:
        raise DataError('All trajectories are empty')

    n = sum(len(w) for w in windows)

    return Dataset(
        trajectories=tuple(trajectories),
        windows=np.vstack(windows),
        targets=np.vstack(targets),
        contexts=np.vstack(contexts),
        trajectory_ids=np.concatenate(traj_ids),
        step_indices=np.concatenate(steps),
        window_padded=np.concatenate(w_pad),
        context_padded=np.concatenate(c_pad),
        folds=np.zeros(n, dtype=np.int64),
        obs_dim=obs_dims.pop(),
        action_dim=action_dims.pop(),
        history=int(history),
        context_length=int(context_length),
        context_source=context_source,
        target_source=target_source
    )


def split_by_trajectory(dataset, val_fraction, seed=0):
    """Splits whole trajectories between a training and a validation set

    Arguments
    ---------
        dataset : Dataset
        val_fraction : float
            Fraction of trajectories in the validation set, in (0, 1)
        seed : int

    Returns
    -------
        train : Dataset
        val : Dataset
    """

    # validate input
    if not 0 < val_fraction < 1:
        raise ConfigurationError(f'val_fraction must be in (0, 1), got {val_fraction}')

    ids = dataset.unique_trajectory_ids()
    if len(ids) < 2:
        raise ConfigurationError(f'Need at least 2 trajectories to split, got {len(ids)}')

    n_val = int(round(val_fraction * len(ids)))
    n_val = min(max(n_val, 1), len(ids) - 1)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    val_ids = [ids[i] for i in order[:n_val]]
    train_ids = [ids[i] for i in order[n_val:]]

    return dataset.select_trajectories(train_ids, split='train'), dataset.select_trajectories(val_ids, split='val')


def assign_folds(dataset, n_folds, seed=0):
    """Assigns every trajectory to one of n_folds cross-validation folds

    Returns
    -------
        dataset : Dataset
            Copy with the folds array filled, constant within a trajectory
    """

    # validate input
    if int(n_folds) != n_folds or n_folds < 1:
        raise ConfigurationError(f'folds must be a positive integer, got {n_folds}')

    ids = dataset.unique_trajectory_ids()
    if n_folds > 1 and n_folds > len(ids):
        raise ConfigurationError(f'{n_folds} folds requested but only {len(ids)} trajectories')

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    fold_of = {ids[i]: rank % n_folds for rank, i in enumerate(order)}

    folds = np.array([fold_of[int(t)] for t in dataset.trajectory_ids], dtype=np.int64)

    return replace(dataset, folds=folds)


def truncate_to_samples(dataset, max_samples):
    """
        Keeps leading whole trajectories while the sample count stays within max_samples (at least one trajectory)
    """

    if max_samples is None or len(dataset) <= max_samples:
        return dataset

    kept, total = [], 0
    for trajectory in dataset.trajectories:
        if kept and total + len(trajectory) > max_samples:
            break
        kept.append(trajectory.trajectory_id)
        total += len(trajectory)

    return dataset.select_trajectories(kept)


def save_trajectories(trajectories, out_path, meta=None):
    """Writes trajectories as JSON lines: a versioned header line, then one trajectory per line

    Arguments
    ---------
        trajectories : list
        out_path : str
        meta : dict
            Extra header fields
    """

    header = {'format': TRAJECTORY_FORMAT, 'version': TRAJECTORY_FORMAT_VERSION, 'fields': TRAJECTORY_FIELDS}
    if meta:
        header['meta'] = meta

    with open(out_path, 'w') as fh:
        fh.write(json.dumps(header) + '\n')
        for trajectory in trajectories:
            fh.write(json.dumps(trajectory.to_dict()) + '\n')


def load_trajectories(src_path):
    """Reads a file written by save_trajectories

    Returns
    -------
        trajectories : list
        meta : dict
    """

    if not os.path.exists(src_path):
        raise DataError(f'File not found at {src_path}')

    trajectories = []
    header = None
    with open(src_path, 'r') as fh:
        for line_number, line in enumerate(fh, start=1):

            if line.strip() == '':
                continue

            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f'invalid JSON in {src_path} ({e.msg})', line_number=line_number)

            if header is None:
                if record.get('format') != TRAJECTORY_FORMAT:
                    raise ParseError(f'{src_path} is not a trajectory file', line_number=line_number)
                if record.get('version') != TRAJECTORY_FORMAT_VERSION:
                    raise ParseError(f'unsupported version {record.get("version")}', line_number=line_number)
                header = record
                continue

            try:
                trajectories.append(Trajectory.from_dict(record))
            except (DataError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f'malformed trajectory in {src_path} ({e})', line_number=line_number)

    if len(trajectories) == 0:
        raise DataError(f'Empty dataset file {src_path}')

    return trajectories, header.get('meta', {})


def save_dataset(dataset, out_path):
    """
        Persists the trajectories behind a dataset together with its window parameters
    """
    meta = {
        'history': dataset.history,
        'context_length': dataset.context_length,
        'context_source': dataset.context_source,
        'target_source': dataset.target_source
    }
    save_trajectories(list(dataset.trajectories), out_path, meta=meta)


def load_dataset(src_path, history=None, context_length=None):
    """
        Loads a file written by save_dataset (or save_trajectories with explicit window parameters)
    """

    trajectories, meta = load_trajectories(src_path)

    history = meta.get('history') if history is None else history
    context_length = meta.get('context_length') if context_length is None else context_length
    if history is None or context_length is None:
        raise DataError(f'{src_path} does not record history/context_length, pass them explicitly')

    return build_history_dataset(
        trajectories, history, context_length,
        context_source=meta.get('context_source', 'label'),
        target_source=meta.get('target_source', 'label')
    )


def dataset_frame(dataset):
    """
        Flattens a dataset into a pandas DataFrame, one row per sample
    """

    frame = pd.DataFrame({
        'sample_id': np.arange(len(dataset)),
        'trajectory_id': dataset.trajectory_ids,
        'step': dataset.step_indices,
        'fold': dataset.folds,
        'window_padded': dataset.window_padded,
        'context_padded': dataset.context_padded
    })

    blocks = [frame]
    for prefix, array in (('window', dataset.windows), ('target', dataset.targets), ('context', dataset.contexts)):
        blocks.append(pd.DataFrame(array, columns=[f'{prefix}_{j}' for j in range(array.shape[1])]))

    return pd.concat(blocks, axis=1)


def export_samples_csv(dataset, out_path):
    """
        CSV export of the flattened samples for external inspection
    """
    dataset_frame(dataset).to_csv(out_path, index=False, float_format='%.17g')
