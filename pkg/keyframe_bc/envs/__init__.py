"""
    Partially observed control environments
"""

from .toycar import (
    RED, GREEN,
    ToyCarConfig, ToyCarState, StepOutcome, ToyCarEnv,
    toycar_reset, toycar_step, toycar_expert,
    partial_observation, braking_distance, sample_light_duration
)
from .scripted import (
    ScriptConfig, ScriptState, ScriptedEnv,
    scripted_reset, scripted_step, scripted_expert,
    script_from_actions, constant_script, single_switch_script, alternating_script
)
from ..utils.errors import ConfigurationError


def make_env(env_config):
    """
        Returns the stateful environment matching the config type
    """

    if isinstance(env_config, ToyCarConfig):
        return ToyCarEnv(env_config)

    if isinstance(env_config, ScriptConfig):
        return ScriptedEnv(env_config)

    raise ConfigurationError(f'Unknown environment config type {type(env_config).__name__}')


def expert_action_from_snapshot(env_config, snapshot):
    """
        Queries the expert on a recorded full-state snapshot
    """

    if isinstance(env_config, ToyCarConfig):
        return toycar_expert(ToyCarState.from_dict(snapshot), env_config)

    if isinstance(env_config, ScriptConfig):
        return scripted_expert(ScriptState(snapshot['step_index'], snapshot['terminal']), env_config)

    raise ConfigurationError(f'Unknown environment config type {type(env_config).__name__}')


def env_config_from_dict(d):
    """
        Builds an environment config from its JSON form; a 'script' key selects the scripted environment
    """
    if 'script' in d:
        return ScriptConfig.from_dict(d['script'])
    return ToyCarConfig.from_dict(d)


def env_config_to_dict(env_config):
    if isinstance(env_config, ScriptConfig):
        return {'script': env_config.to_dict()}
    return env_config.to_dict()
