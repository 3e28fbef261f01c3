"""
    Imitation policies: single-observation and observation-history BC, keyframe-weighted BC
    and history dropout
"""

import os
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..keyframes.boosting import boosting_weights
from ..keyframes.weighting import WeightScheme, build_weight_table, BOOSTING
from ..neuralnet import MlpSpec, train_supervised, forward, model_to_dict, model_from_dict
from ..utils.errors import ConfigurationError, ParseError, ShapeError

logger = logging.getLogger(os.path.basename(__name__))

# policy file format
POLICY_FORMAT = 'keyframe-bc-policy'
POLICY_FORMAT_VERSION = 1

SINGLE_OBSERVATION = 'single_observation'
OBSERVATION_HISTORY = 'observation_history'
INPUT_MODES = (SINGLE_OBSERVATION, OBSERVATION_HISTORY)

ACTION_LOW = -1.0
ACTION_HIGH = 1.0


@dataclass(frozen=True)
class PolicySpec:
    """
        Network input is the window [o_{t-H}, ..., o_t] flattened, oldest first
    """
    input_mode: str
    history: int
    mlp: MlpSpec
    history_dropout_rate: float = 0.0

    @classmethod
    def build(cls, obs_dim, action_dim, history, hidden_dims=(64, 64), activation='relu', history_dropout_rate=0.0, init_seed=0):
        mlp = MlpSpec(
            input_dim=(history + 1) * obs_dim,
            hidden_dims=tuple(hidden_dims),
            output_dim=action_dim,
            activation=activation,
            init_seed=init_seed
        )
        mode = SINGLE_OBSERVATION if history == 0 else OBSERVATION_HISTORY
        return cls(input_mode=mode, history=history, mlp=mlp, history_dropout_rate=history_dropout_rate)

    @property
    def obs_dim(self):
        return self.mlp.input_dim // (self.history + 1)

    @property
    def action_dim(self):
        return self.mlp.output_dim

    def validate(self, dataset=None):

        if self.input_mode not in INPUT_MODES:
            raise ConfigurationError(f'input_mode must be one of {INPUT_MODES}, got {self.input_mode}')

        if int(self.history) != self.history or self.history < 0:
            raise ConfigurationError(f'history must be a non-negative integer, got {self.history}')

        if self.input_mode == SINGLE_OBSERVATION and self.history != 0:
            raise ConfigurationError(f'single_observation policies have history 0, got {self.history}')

        if self.input_mode == OBSERVATION_HISTORY and self.history == 0:
            raise ConfigurationError('observation_history policies need history > 0')

        if not 0 <= self.history_dropout_rate < 1:
            raise ConfigurationError(f'history_dropout_rate must be in [0, 1), got {self.history_dropout_rate}')

        if self.history_dropout_rate > 0 and self.history == 0:
            raise ConfigurationError('history dropout needs history > 0')

        self.mlp.validate()

        if self.mlp.input_dim % (self.history + 1) != 0:
            raise ConfigurationError(f'input_dim {self.mlp.input_dim} is not a multiple of history + 1 = {self.history + 1}')

        if dataset is None:
            return

        if dataset.history < self.history:
            raise ConfigurationError(f'Dataset windows hold {dataset.history} past frames, policy needs {self.history}')

        if self.mlp.input_dim != (self.history + 1) * dataset.obs_dim or self.mlp.output_dim != dataset.action_dim:
            raise ConfigurationError(f'Policy network {self.mlp.input_dim}->{self.mlp.output_dim} does not fit observations of {dataset.obs_dim} and actions of {dataset.action_dim}')

    def to_dict(self):
        return {
            'input_mode': self.input_mode,
            'history': self.history,
            'mlp': self.mlp.to_dict(),
            'history_dropout_rate': self.history_dropout_rate
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_mode=d['input_mode'],
            history=int(d['history']),
            mlp=MlpSpec.from_dict(d['mlp']),
            history_dropout_rate=float(d.get('history_dropout_rate', 0.0))
        )


@dataclass
class TrainedPolicy:
    model: object
    spec: PolicySpec
    provenance: dict = field(default_factory=dict)

    @property
    def history(self):
        return self.spec.history

    def act(self, window, env=None):
        return predict(self, window)

    def to_dict(self):
        return {
            'format': POLICY_FORMAT,
            'version': POLICY_FORMAT_VERSION,
            'spec': self.spec.to_dict(),
            'model': model_to_dict(self.model),
            'provenance': self.provenance
        }

    @classmethod
    def from_dict(cls, d):
        if d.get('format') != POLICY_FORMAT:
            raise ParseError(f'Not a policy document (format={d.get("format")})')
        if d.get('version') != POLICY_FORMAT_VERSION:
            raise ParseError(f'Unsupported policy version {d.get("version")}')
        return cls(model=model_from_dict(d['model']), spec=PolicySpec.from_dict(d['spec']), provenance=d.get('provenance', {}))

    def save(self, out_path):
        with open(out_path, 'w') as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, src_path):

        if not os.path.exists(src_path):
            raise ParseError(f'File not found at {src_path}')

        with open(src_path, 'r') as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as e:
                raise ParseError(f'Invalid JSON in {src_path}: {e.msg}', line_number=e.lineno)

        return cls.from_dict(d)


def policy_inputs(dataset, policy_spec):
    """
        The last history + 1 frames of every dataset window
    """
    width = (policy_spec.history + 1) * dataset.obs_dim
    return dataset.windows[:, dataset.windows.shape[1] - width:]


def history_dropout_mask(batch_size, history, obs_dim, rate, rng):
    """Input mask blanking each past frame independently with probability `rate`

    Returns
    -------
        mask : np.ndarray
            Shape (batch_size, (history + 1) * obs_dim), the current frame (last block) is always kept
    """

    keep_past = rng.random((batch_size, history)) >= rate
    keep = np.hstack([keep_past, np.ones((batch_size, 1), dtype=bool)])

    return np.repeat(keep, obs_dim, axis=1).astype(np.float64)


def train_bc(dataset, policy_spec, weight_scheme, train_config, ape_table=None, weight_table=None, progress=False):
    """Weighted behavioral cloning

    Uniform weights with history 0 give BC-SO, with history > 0 BC-OH. The softmax scheme
    renormalizes APE-based weights inside every minibatch; static schemes are looked up.

    Arguments
    ---------
        dataset : Dataset
        policy_spec : PolicySpec
        weight_scheme : WeightScheme
        train_config : TrainConfig
        ape_table : ApeTable
            Required by the softmax and step schemes
        weight_table : WeightTable
            Precomputed weights, bypasses the scheme
        progress : bool

    Returns
    -------
        policy : TrainedPolicy
    """

    # validate input
    policy_spec.validate(dataset)
    train_config.validate()

    if weight_table is None:

        if weight_scheme.kind == BOOSTING:
            _, policy = boosting_weights(
                dataset, policy_spec, train_config,
                rounds=weight_scheme['rounds'], learning_rate_shrink=weight_scheme['learning_rate_shrink'], progress=progress
            )
            return policy

        weight_table = build_weight_table(weight_scheme, dataset, ape_table)

    if len(weight_table) != len(dataset):
        raise ShapeError(f'Weight table has {len(weight_table)} rows, dataset has {len(dataset)} samples')

    batch_transform = None
    if policy_spec.history_dropout_rate > 0:
        rate, history, obs_dim = policy_spec.history_dropout_rate, policy_spec.history, dataset.obs_dim
        batch_transform = lambda x, rng: x * history_dropout_mask(x.shape[0], history, obs_dim, rate, rng)

    result = train_supervised(
        policy_inputs(dataset, policy_spec), dataset.targets, policy_spec.mlp, train_config,
        weights=weight_table.weights if weight_table.static else None,
        weight_fn=None if weight_table.static else weight_table.batch_weights,
        batch_transform=batch_transform,
        progress=progress
    )

    logger.debug(f'trained H={policy_spec.history} {weight_table.scheme.kind}: final loss {result.loss_trace[-1]:.6f}')

    provenance = {
        'scheme': weight_table.scheme.to_dict(),
        'seed': train_config.rng_seed,
        'train': train_config.to_dict(),
        'n_samples': len(dataset),
        'loss_trace': [float(v) for v in result.loss_trace],
        'final_learning_rate': result.final_learning_rate
    }

    return TrainedPolicy(result.model, policy_spec, provenance)


def train_history_dropout(dataset, policy_spec, train_config, rate=None, progress=False):
    """
        Uniform-weight BC-OH where past frames are blanked with probability rate during training
    """

    rate = policy_spec.history_dropout_rate if rate is None else rate

    # validate input
    if not 0 < rate < 1:
        raise ConfigurationError(f'History dropout rate must be in (0, 1), got {rate}')

    if policy_spec.history == 0:
        raise ConfigurationError('History dropout needs a policy with history > 0')

    spec = replace(policy_spec, history_dropout_rate=float(rate))

    return train_bc(dataset, spec, WeightScheme.uniform(), train_config, progress=progress)


def predict(policy, observation_window):
    """Deterministic forward pass, output clamped to the action range

    Arguments
    ---------
        policy : TrainedPolicy
        observation_window : np.ndarray
            Frames oldest first, either (n_frames, obs_dim) or flattened; when more than
            history + 1 frames are given only the most recent ones are used

    Returns
    -------
        action : np.ndarray
    """

    window = np.asarray(observation_window, dtype=np.float64).reshape(-1)
    obs_dim = policy.spec.obs_dim
    width = (policy.spec.history + 1) * obs_dim

    # validate input
    if window.size < width or window.size % obs_dim != 0:
        raise ShapeError(f'Expected a window of {policy.spec.history + 1} frames of {obs_dim} values, got {window.size} values')

    raw = forward(policy.model, window[window.size - width:])

    return np.clip(raw, ACTION_LOW, ACTION_HIGH)