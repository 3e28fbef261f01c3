"""
    Episode runner shared by DAGGER and evaluation
"""

from collections import deque

import numpy as np

from ..demos import Trajectory
from ..utils.errors import UsageError


class HistoryBuffer:
    """
        Last history + 1 observations; starts filled with copies of the first observation
    """

    def __init__(self, history, first_observation):
        first = np.asarray(first_observation, dtype=np.float64)
        self.frames = deque([first.copy() for _ in range(history + 1)], maxlen=history + 1)

    def push(self, observation):
        self.frames.append(np.asarray(observation, dtype=np.float64))

    def window(self):
        return np.concatenate(list(self.frames))


class ExpertPolicy:
    """
        Executes the environment's queryable expert
    """
    history = 0

    def act(self, window, env=None):
        if env is None:
            raise UsageError('The expert policy needs the environment')
        return env.expert_action()


class ConstantPolicy:

    history = 0

    def __init__(self, value, action_dim=1):
        self.action = np.full(action_dim, float(value))

    def act(self, window, env=None):
        return self.action.copy()


def run_episode(env, policy, episode_seed, trajectory_id=0, max_steps=None):
    """Runs one episode, executing the policy and recording the expert label on every visited state

    Arguments
    ---------
        env : ToyCarEnv or ScriptedEnv
        policy : object
            Anything with `history` and `act(window, env)`
        episode_seed : int
        trajectory_id : int
        max_steps : int
            Stops early after this many steps

    Returns
    -------
        trajectory : Trajectory
            executed_actions are the policy's, expert_actions the expert labels
    """

    observation = env.reset(episode_seed=episode_seed)
    buffer = HistoryBuffer(policy.history, observation)

    observations, labels, executed, states, events = [], [], [], [], []
    done = False
    while not done and (max_steps is None or len(observations) < max_steps):

        action = np.asarray(policy.act(buffer.window(), env), dtype=np.float64).reshape(-1)

        observations.append(observation)
        labels.append(np.asarray(env.expert_action(), dtype=np.float64))
        executed.append(action)
        states.append(env.snapshot())

        outcome = env.step(action)
        events.append(outcome.events)
        observation = outcome.observation
        buffer.push(observation)
        done = outcome.done

    return Trajectory(
        trajectory_id=trajectory_id,
        episode_seed=int(episode_seed),
        observations=np.asarray(observations),
        expert_actions=np.asarray(labels),
        executed_actions=np.asarray(executed),
        perturbed=np.zeros(len(observations), dtype=bool),
        full_states=states,
        events=events,
        final_state=env.snapshot()
    )
