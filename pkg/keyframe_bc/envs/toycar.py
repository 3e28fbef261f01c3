"""
    ToyCar: a point mass on a straight road with one traffic light.

    The imitator only sees position, light status and light position; velocity and
    the light countdown are withheld, so a single frame does not tell how fast the
    car is going.
"""

import os
import math
import logging
from dataclasses import dataclass, asdict, replace

import numpy as np

from ..utils.errors import ConfigurationError, UsageError

logger = logging.getLogger(os.path.basename(__name__))

RED = 'red'
GREEN = 'green'

OBS_DIM = 3
ACTION_DIM = 1


@dataclass(frozen=True)
class ToyCarConfig:
    road_length: float = 100.0
    dt: float = 0.1
    accel_throttle: float = 2.0
    accel_brake: float = 4.0
    v_max: float = 10.0
    light_position: float = 50.0
    light_duration_min: int = 20
    light_duration_max: int = 80
    horizon: int = 400
    stop_margin: float = 2.0
    episode_seed: int = 0

    def validate(self):

        if not self.road_length > 0:
            raise ConfigurationError(f'road_length must be > 0, got {self.road_length}')

        if not 0 < self.light_position < self.road_length:
            raise ConfigurationError(f'light_position must be in (0, {self.road_length}), got {self.light_position}')

        for name in ('dt', 'v_max', 'accel_throttle', 'accel_brake'):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f'{name} must be > 0, got {getattr(self, name)}')

        if self.light_duration_min < 1 or self.light_duration_min > self.light_duration_max:
            raise ConfigurationError(f'Invalid light durations [{self.light_duration_min}, {self.light_duration_max}]')

        if self.horizon < 1:
            raise ConfigurationError(f'horizon must be >= 1, got {self.horizon}')

        if self.stop_margin < 0 or self.stop_margin >= self.light_position:
            raise ConfigurationError(f'stop_margin must be in [0, light_position), got {self.stop_margin}')

        if self.episode_seed < 0 or self.episode_seed >= 2**64:
            raise ConfigurationError(f'episode_seed must be a 64-bit unsigned integer, got {self.episode_seed}')

    @property
    def stop_line(self):
        return self.light_position - self.stop_margin

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        fields = cls.__dataclass_fields__
        unknown = set(d) - set(fields)
        if unknown:
            raise ConfigurationError(f'Unknown ToyCar config keys {sorted(unknown)}')
        return cls(**{k: fields[k].type(v) if fields[k].type in (int, float) else v for k, v in d.items()})


@dataclass(frozen=True)
class ToyCarState:
    position: float
    velocity: float
    light_status: str
    light_time_remaining: int
    step_index: int = 0
    crossed_on_red: bool = False
    phase_index: int = 0
    terminal: bool = False

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    reached_goal: bool = False
    red_violation: bool = False
    timeout: bool = False

    @property
    def events(self):
        return {'reached_goal': self.reached_goal, 'red_violation': self.red_violation, 'timeout': self.timeout}


def sample_light_duration(config, phase_index):
    """
        Duration (in steps) of light phase number `phase_index`, uniform in [min, max].
        Drawn from a generator keyed on (episode_seed, phase_index) so that stepping stays a pure function.
    """
    rng = np.random.default_rng([int(config.episode_seed), int(phase_index)])
    return int(rng.integers(config.light_duration_min, config.light_duration_max + 1))


def partial_observation(state, config):
    """
        [position / road_length, 1 if green else 0, light_position / road_length]
    """
    return np.array([
        state.position / config.road_length,
        1.0 if state.light_status == GREEN else 0.0,
        config.light_position / config.road_length
    ])


def toycar_reset(config):
    """Starts an episode

    Arguments
    ---------
        config : ToyCarConfig

    Returns
    -------
        state : ToyCarState
        observation : np.ndarray
    """

    # validate input
    config.validate()

    # initial phase from the phase-0 stream
    rng = np.random.default_rng([int(config.episode_seed), 2**32])
    status = GREEN if rng.random() < 0.5 else RED

    state = ToyCarState(
        position=0.0,
        velocity=0.0,
        light_status=status,
        light_time_remaining=sample_light_duration(config, 0),
        step_index=0,
        crossed_on_red=False,
        phase_index=0,
        terminal=False
    )

    return state, partial_observation(state, config)


def effective_acceleration(action, config):
    """
        action >= 0 blends towards full throttle, action < 0 towards full brake
    """
    if action >= 0:
        return action * config.accel_throttle
    return action * config.accel_brake


def toycar_step(state, action, config):
    """Advances the car one step with semi-implicit Euler (velocity first, then position)

    Arguments
    ---------
        state : ToyCarState
        action : float or array of one float in [-1, 1] (clamped)
        config : ToyCarConfig

    Returns
    -------
        state : ToyCarState
        outcome : StepOutcome
    """

    # validate input
    if state.terminal:
        raise UsageError('Cannot step a terminal ToyCar state, call toycar_reset')

    action = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0], -1.0, 1.0))

    # dynamics
    velocity = min(max(state.velocity + effective_acceleration(action, config) * config.dt, 0.0), config.v_max)
    position = state.position + velocity * config.dt

    # the light status in force during this step is the one at its start
    crossed = state.position < config.light_position <= position
    red_violation = crossed and state.light_status == RED

    # light countdown
    status = state.light_status
    remaining = state.light_time_remaining - 1
    phase_index = state.phase_index
    if remaining <= 0:
        phase_index += 1
        status = GREEN if status == RED else RED
        remaining = sample_light_duration(config, phase_index)

    step_index = state.step_index + 1
    reached_goal = (not red_violation) and position >= config.road_length
    timeout = (not red_violation) and (not reached_goal) and step_index >= config.horizon
    done = red_violation or reached_goal or timeout

    if red_violation:
        reward = -1.0
    elif reached_goal:
        reward = 1.0
    else:
        reward = 0.0

    new_state = ToyCarState(
        position=position,
        velocity=velocity,
        light_status=status,
        light_time_remaining=remaining,
        step_index=step_index,
        crossed_on_red=state.crossed_on_red or red_violation,
        phase_index=phase_index,
        terminal=done
    )

    outcome = StepOutcome(
        observation=partial_observation(new_state, config),
        reward=reward,
        done=done,
        reached_goal=reached_goal,
        red_violation=red_violation,
        timeout=timeout
    )

    return new_state, outcome


def braking_distance(velocity, config):
    """
        Distance covered under full brake from `velocity` until the car is at rest, with the
        same discretization as toycar_step: sum_k max(v - k*b*dt, 0) * dt
    """
    decrement = config.accel_brake * config.dt
    n = math.floor(velocity / decrement)
    return config.dt * (n * velocity - decrement * n * (n + 1) / 2.0)


def can_clear_light(state, config):
    """
        True if full throttle carries the car past the light while it is still green
    """

    if state.light_status != GREEN:
        return False

    position, velocity = state.position, state.velocity
    for _ in range(state.light_time_remaining):
        velocity = min(velocity + config.accel_throttle * config.dt, config.v_max)
        position += velocity * config.dt
        if position >= config.light_position:
            return True

    return False


def toycar_expert(state, config):
    """Rule-based expert acting on the full state, emits exactly -1 (brake) or +1 (throttle)

    Throttle when the light is behind the car or the car can clear it before it turns red.
    Otherwise throttle only if, after one more throttle step, full braking still stops the car
    at or before the stop line (light_position - stop_margin). This brakes whenever the
    continuous rule v^2 / (2 * accel_brake) >= light_position - stop_margin - position does.

    Arguments
    ---------
        state : ToyCarState
        config : ToyCarConfig

    Returns
    -------
        action : np.ndarray
            Shape (1,)
    """

    # light behind the car
    if state.position >= config.light_position:
        return np.array([1.0])

    if can_clear_light(state, config):
        return np.array([1.0])

    # one-step lookahead under throttle
    velocity = min(state.velocity + config.accel_throttle * config.dt, config.v_max)
    position = state.position + velocity * config.dt
    if position + braking_distance(velocity, config) <= config.stop_line:
        return np.array([1.0])

    return np.array([-1.0])


class ToyCarEnv:
    """
        Stateful wrapper around toycar_reset / toycar_step
    """

    obs_dim = OBS_DIM
    action_dim = ACTION_DIM

    def __init__(self, config):
        config.validate()
        self.config = config
        self.state = None

    def reset(self, episode_seed=None):
        if episode_seed is not None:
            self.config = replace(self.config, episode_seed=int(episode_seed))
        self.state, observation = toycar_reset(self.config)
        return observation

    def step(self, action):
        if self.state is None:
            raise UsageError('Call reset before step')
        self.state, outcome = toycar_step(self.state, action, self.config)
        return outcome

    def expert_action(self):
        return toycar_expert(self.state, self.config)

    def snapshot(self):
        return self.state.to_dict()

    def progress(self):
        """
            1 - final distance to goal / initial distance, clamped to [0, 1]
        """
        remaining = max(self.config.road_length - self.state.position, 0.0)
        return float(min(max(1.0 - remaining / self.config.road_length, 0.0), 1.0))

    def distance_travelled(self):
        return float(self.state.position)

    def elapsed_time(self):
        return float(self.state.step_index * self.config.dt)
