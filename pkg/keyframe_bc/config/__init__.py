"""
    Class to give access to the experiment config file
"""

import os
import json
import logging
from dataclasses import dataclass, field, replace

from toolz import merge

from ..envs import env_config_from_dict
from ..imitation.policy import PolicySpec
from ..keyframes.copycat import CopycatSpec
from ..keyframes.weighting import WeightScheme
from ..neuralnet import TrainConfig
from ..utils.basic import hash_dict
from ..utils.errors import ConfigurationError

logger = logging.getLogger(os.path.basename(__name__))

# Path to config file
DEFAULT_CONFIG_FILE = os.path.join(os.path.expanduser('~'), '.config', 'keyframe_bc.json')

# Config keys
ENV_KEY = 'env'
DATA_KEY = 'data'
COPYCAT_KEY = 'copycat'
POLICY_KEY = 'policy'
TRAIN_KEY = 'train'
METHODS_KEY = 'methods'
SEEDS_KEY = 'seeds'
EVAL_KEY = 'eval'
GRID_KEY = 'grid'
OUTPUT_DIR_KEY = 'output_dir'

ALLOWED_KEYS = set([
    ENV_KEY,
    DATA_KEY,
    COPYCAT_KEY,
    POLICY_KEY,
    TRAIN_KEY,
    METHODS_KEY,
    SEEDS_KEY,
    EVAL_KEY,
    GRID_KEY,
    OUTPUT_DIR_KEY
])

# trainers
BC_TRAINER = 'bc'
HISTORY_DROPOUT_TRAINER = 'history_dropout'
DAGGER_TRAINER = 'dagger'
TRAINERS = (BC_TRAINER, HISTORY_DROPOUT_TRAINER, DAGGER_TRAINER)

DEFAULT_SECTIONS = {
    ENV_KEY: {},
    DATA_KEY: {
        'episodes': 200,
        'noise_rate': 0.1,
        'context_length': 3,
        'val_fraction': 0.2,
        'seed': 0,
        'max_train_samples': None,
        'context_source': 'label'
    },
    COPYCAT_KEY: {
        'hidden_dims': [64, 64],
        'activation': 'relu',
        'folds': 5,
        'train': {'learning_rate': 1e-3, 'batch_size': 128, 'iterations': 2000}
    },
    POLICY_KEY: {
        'hidden_dims': [64, 64],
        'activation': 'relu'
    },
    TRAIN_KEY: {
        'learning_rate': 1e-3,
        'batch_size': 128,
        'iterations': 3000,
        'lr_decay': None
    },
    SEEDS_KEY: [0, 1, 2, 3, 4],
    EVAL_KEY: {
        'episodes': 100,
        'seed': 10000,
        'repeats': 1,
        'avg_ape': True,
        'avg_ape_episodes': 20,
        'breakdown_percentile': 10.0,
        'stall_speed_fraction': 0.05,
        'stall_steps': 30
    },
    GRID_KEY: {
        'history': 3,
        'taus': [0.1, 0.2, 0.5, 1.0, 5.0, 10.0],
        'thrs': [10.0, 20.0],
        'ws': [3.0, 5.0, 10.0],
        'seeds': [0]
    },
    OUTPUT_DIR_KEY: 'out'
}

TEMPLATE_METHODS = [
    {'name': 'BC-SO', 'trainer': BC_TRAINER, 'history': 0, 'scheme': {'kind': 'uniform'}},
    {'name': 'BC-OH', 'trainer': BC_TRAINER, 'history': 3, 'scheme': {'kind': 'uniform'}},
    {'name': 'Ours-step', 'trainer': BC_TRAINER, 'history': 3, 'scheme': {'kind': 'step', 'thr': 10.0, 'w': 5.0}},
    {'name': 'Ours-softmax', 'trainer': BC_TRAINER, 'history': 3, 'scheme': {'kind': 'softmax', 'tau': 0.2}},
    {'name': 'HistoryDropout', 'trainer': HISTORY_DROPOUT_TRAINER, 'history': 3, 'history_dropout_rate': 0.5},
    {'name': 'BCPD', 'trainer': BC_TRAINER, 'history': 3, 'scheme': {'kind': 'bcpd'}},
    {'name': 'ActFreq', 'trainer': BC_TRAINER, 'history': 3, 'scheme': {'kind': 'actfreq', 'k': 2}},
    {'name': 'Boosting', 'trainer': BC_TRAINER, 'history': 3, 'scheme': {'kind': 'boosting', 'rounds': 3}},
    {'name': 'DAGGER-100', 'trainer': DAGGER_TRAINER, 'history': 3, 'query_budget': 100, 'dagger_rounds': 5},
    {'name': 'DAGGER-1k', 'trainer': DAGGER_TRAINER, 'history': 3, 'query_budget': 1000, 'dagger_rounds': 5}
]


@dataclass(frozen=True)
class MethodConfig:
    name: str
    trainer: str = BC_TRAINER
    history: int = 0
    scheme: WeightScheme = field(default_factory=WeightScheme.uniform)
    history_dropout_rate: float = 0.0
    query_budget: int = 0
    dagger_rounds: int = 1

    def validate(self):

        if not isinstance(self.name, str) or self.name == '':
            raise ConfigurationError(f'Method name must be a non-empty string, got {self.name!r}')

        if self.trainer not in TRAINERS:
            raise ConfigurationError(f'{self.name}: trainer must be one of {TRAINERS}, got {self.trainer}')

        if int(self.history) != self.history or self.history < 0:
            raise ConfigurationError(f'{self.name}: history must be a non-negative integer, got {self.history}')

        self.scheme.validate()

        if self.trainer == HISTORY_DROPOUT_TRAINER and not 0 < self.history_dropout_rate < 1:
            raise ConfigurationError(f'{self.name}: history_dropout_rate must be in (0, 1), got {self.history_dropout_rate}')

        if self.trainer == DAGGER_TRAINER:
            if self.dagger_rounds < 1 or self.query_budget < self.dagger_rounds:
                raise ConfigurationError(f'{self.name}: need query_budget >= dagger_rounds >= 1, got {self.query_budget} and {self.dagger_rounds}')

    def policy_spec(self, obs_dim, action_dim, policy_section, seed=0):
        return PolicySpec.build(
            obs_dim, action_dim, self.history,
            hidden_dims=tuple(policy_section['hidden_dims']),
            activation=policy_section['activation'],
            history_dropout_rate=self.history_dropout_rate if self.trainer == HISTORY_DROPOUT_TRAINER else 0.0,
            init_seed=seed
        )

    def shared_knobs(self):
        """
            Every knob except history and weight scheme
        """
        return {
            'trainer': self.trainer,
            'history_dropout_rate': self.history_dropout_rate,
            'query_budget': self.query_budget,
            'dagger_rounds': self.dagger_rounds
        }

    def to_dict(self):
        return {
            'name': self.name,
            'trainer': self.trainer,
            'history': self.history,
            'scheme': self.scheme.to_dict(),
            'history_dropout_rate': self.history_dropout_rate,
            'query_budget': self.query_budget,
            'dagger_rounds': self.dagger_rounds
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f'Unknown method keys {sorted(unknown)} in {d.get("name")}')
        return cls(
            name=d.get('name', ''),
            trainer=d.get('trainer', BC_TRAINER),
            history=int(d.get('history', 0)),
            scheme=WeightScheme.from_dict(d.get('scheme', {'kind': 'uniform'})),
            history_dropout_rate=float(d.get('history_dropout_rate', 0.0)),
            query_budget=int(d.get('query_budget', 0)),
            dagger_rounds=int(d.get('dagger_rounds', 1))
        )


__config = None
def load_config(config_file_path=None):
    global __config

    if __config is not None:
        logger.debug(f'replacing config loaded from {__config.config_file_path}')

    if config_file_path is None:
        # read from default location
        __config = ExperimentConfig(DEFAULT_CONFIG_FILE)

    else:
        # read from user provided location
        __config = ExperimentConfig(config_file_path)

    return __config


def get_config():
    global __config

    if __config is None:
        __config = load_config()

    return __config


def template_dict():
    return merge(DEFAULT_SECTIONS, {ENV_KEY: env_config_from_dict({}).to_dict(), METHODS_KEY: TEMPLATE_METHODS})


def create_template_config_file(config_file_path=None):
    """
        Init config template and save to disk at user provided path
    """
    d = json.dumps(template_dict(), indent=2)

    if config_file_path is None:
        config_file_path = DEFAULT_CONFIG_FILE

    os.makedirs(os.path.dirname(os.path.abspath(config_file_path)), exist_ok=True)
    with open(config_file_path, 'w') as fh:
        fh.write(d)

    return config_file_path


class ExperimentConfig:

    def __init__(self, config_file_path=None, d=None):

        self.config_file_path = config_file_path

        if d is None:
            if config_file_path is None or not os.path.exists(config_file_path):
                raise ConfigurationError(f'Config file not found at {config_file_path}')
            with open(config_file_path, 'r') as fh:
                try:
                    d = json.load(fh)
                except json.JSONDecodeError as e:
                    raise ConfigurationError(f'Invalid JSON in {config_file_path} at line {e.lineno}: {e.msg}')

        unknown = set(d) - ALLOWED_KEYS
        if unknown:
            raise ConfigurationError(f'Unknown config keys {sorted(unknown)}, allowed keys are {sorted(ALLOWED_KEYS)}')

        # missing keys fall back to the defaults, section by section
        self._config = {}
        for k in ALLOWED_KEYS:
            default = DEFAULT_SECTIONS.get(k, [])
            value = d.get(k, default)
            if isinstance(default, dict) and isinstance(value, dict):
                value = merge(default, value)
            self._config[k] = value

        if METHODS_KEY not in d:
            self._config[METHODS_KEY] = TEMPLATE_METHODS

    def __getitem__(self, key):
        if key not in self._config:
            raise ConfigurationError(f'{key} not in config file')
        return self._config[key]

    def __setitem__(self, key, value):
        if key not in ALLOWED_KEYS:
            raise ConfigurationError(f'{key} is not a config key')

        if value is None:
            raise ConfigurationError('value is none')

        self._config[key] = value

    def list_keys(self):
        return sorted(ALLOWED_KEYS)

    def is_on_disk(self):
        return self.config_file_path is not None and os.path.exists(self.config_file_path)

    def save(self, out_path=None):
        out_path = out_path or self.config_file_path
        with open(out_path, 'w') as fh:
            json.dump(self._config, fh, indent=2, sort_keys=True)

    def to_dict(self):
        return json.loads(json.dumps(self._config))

    def validate(self):
        """
            Builds every typed section, raises a ConfigurationError on the first invalid value
        """

        self.env_config().validate()

        data = self[DATA_KEY]
        if int(data['episodes']) != data['episodes'] or data['episodes'] < 2:
            raise ConfigurationError(f'data.episodes must be an integer >= 2, got {data["episodes"]}')
        if not 0 <= data['noise_rate'] < 1:
            raise ConfigurationError(f'data.noise_rate must be in [0, 1), got {data["noise_rate"]}')
        if not 0 < data['val_fraction'] < 1:
            raise ConfigurationError(f'data.val_fraction must be in (0, 1), got {data["val_fraction"]}')
        if data['context_source'] not in ('label', 'executed'):
            raise ConfigurationError(f'data.context_source must be label or executed, got {data["context_source"]}')

        self.copycat_spec(1).validate()
        self.train_config(0).validate()

        methods = self.methods()
        if len(methods) == 0:
            raise ConfigurationError('At least one method is required')
        names = [m.name for m in methods]
        duplicates = sorted(set(n for n in names if names.count(n) > 1))
        if duplicates:
            raise ConfigurationError(f'Method names must be unique, duplicated: {duplicates}')
        for method in methods:
            method.validate()

        if len(self.seeds()) == 0:
            raise ConfigurationError('At least one seed is required')

        if self[EVAL_KEY]['episodes'] < 1:
            raise ConfigurationError(f'eval.episodes must be >= 1, got {self[EVAL_KEY]["episodes"]}')

        if not 0 < self[EVAL_KEY]['breakdown_percentile'] <= 100:
            raise ConfigurationError(f'eval.breakdown_percentile must be in (0, 100], got {self[EVAL_KEY]["breakdown_percentile"]}')

    def is_valid(self):
        """
            Makes sure every section builds
        """
        try:
            self.validate()
        except ConfigurationError:
            return False

        return True

    def env_config(self):
        return env_config_from_dict(self[ENV_KEY])

    def history(self):
        """
            Longest observation history over the methods, the window length of the stored dataset
        """
        return max([m.history for m in self.methods()] + [self[GRID_KEY]['history']])

    def train_config(self, seed):
        return replace(TrainConfig.from_dict(self[TRAIN_KEY]), rng_seed=int(seed))

    def copycat_spec(self, action_dim, seed=0):
        section = self[COPYCAT_KEY]
        train = replace(TrainConfig.from_dict(section['train']), rng_seed=int(seed))
        return CopycatSpec.build(
            action_dim,
            context_length=self[DATA_KEY]['context_length'],
            hidden_dims=tuple(section['hidden_dims']),
            activation=section['activation'],
            train=train,
            folds=int(section['folds']),
            init_seed=int(seed)
        )

    def methods(self):
        return [MethodConfig.from_dict(m) for m in self[METHODS_KEY]]

    def method(self, name):
        for method in self.methods():
            if method.name == name:
                return method
        raise ConfigurationError(f'No method named {name}, available: {[m.name for m in self.methods()]}')

    def seeds(self):
        return [int(s) for s in self[SEEDS_KEY]]

    def config_hash(self):
        """
            sha256 over every section that influences results
        """
        d = self.to_dict()
        d.pop(OUTPUT_DIR_KEY, None)
        return hash_dict(d)

    def shared_hash(self, method_name):
        """
            sha256 over the knobs a method shares with the other methods of the roster: everything but history and weight scheme
        """
        return hash_dict({
            ENV_KEY: self[ENV_KEY],
            DATA_KEY: self[DATA_KEY],
            COPYCAT_KEY: self[COPYCAT_KEY],
            POLICY_KEY: self[POLICY_KEY],
            TRAIN_KEY: self[TRAIN_KEY],
            SEEDS_KEY: self[SEEDS_KEY],
            'method': self.method(method_name).shared_knobs()
        })
