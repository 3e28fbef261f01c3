import unittest

import numpy as np

from keyframe_bc.envs import ToyCarConfig, make_env, single_switch_script
from keyframe_bc.demos import build_history_dataset
from keyframe_bc.keyframes import WeightScheme
from keyframe_bc.imitation import (
    PolicySpec, HistoryBuffer, ExpertPolicy, ConstantPolicy, run_episode, round_quotas, dagger, train_bc
)
from keyframe_bc.neuralnet import TrainConfig
from keyframe_bc.utils.errors import ConfigurationError, UsageError


class TestEpisode(unittest.TestCase):

    def test_history_buffer(self):
        buffer = HistoryBuffer(2, [1.0, 2.0])
        assert buffer.window().tolist() == [1.0, 2.0, 1.0, 2.0, 1.0, 2.0]
        buffer.push([3.0, 4.0])
        assert buffer.window().tolist() == [1.0, 2.0, 1.0, 2.0, 3.0, 4.0]

    def test_expert_episode(self):
        env = make_env(ToyCarConfig())
        trajectory = run_episode(env, ExpertPolicy(), episode_seed=5)
        assert np.array_equal(trajectory.expert_actions, trajectory.executed_actions)
        assert trajectory.outcome['reached_goal']

        with self.assertRaises(UsageError):
            ExpertPolicy().act(np.zeros(3))

    def test_labels_on_visited_states(self):
        env = make_env(single_switch_script(10, 4))
        trajectory = run_episode(env, ConstantPolicy(0.3), episode_seed=0)
        assert len(trajectory) == 10
        assert np.all(trajectory.executed_actions == 0.3)
        assert trajectory.expert_actions[:, 0].tolist() == [-1.0] * 4 + [1.0] * 6

    def test_max_steps(self):
        env = make_env(ToyCarConfig())
        trajectory = run_episode(env, ConstantPolicy(1.0), episode_seed=1, max_steps=7)
        assert len(trajectory) == 7


class TestDagger(unittest.TestCase):

    def setUp(self):
        self.env_config = ToyCarConfig()
        self.spec = PolicySpec.build(3, 1, 1, hidden_dims=(8,))
        self.config = TrainConfig(learning_rate=1e-3, batch_size=32, iterations=20)

    def test_round_quotas(self):
        assert round_quotas(10, 3) == [3, 3, 4]
        assert round_quotas(100, 4) == [25] * 4
        assert sum(round_quotas(1000, 7)) == 1000

    def test_accounting(self):
        policy = dagger(self.env_config, self.spec, 100, 4, self.config, seed=2)
        assert policy.provenance['round_sizes'] == [25, 25, 25, 25]
        assert policy.provenance['queries'] == 100
        assert policy.provenance['n_samples'] == 100

    def test_single_round_is_bc(self):
        policy = dagger(self.env_config, self.spec, 60, 1, self.config, seed=4)

        episode_seed = int(np.random.SeedSequence(4).spawn(1)[0].generate_state(1)[0])
        trajectory = run_episode(make_env(self.env_config), ExpertPolicy(), episode_seed, max_steps=60)
        dataset = build_history_dataset([trajectory], 1, 1)
        plain = train_bc(dataset, self.spec, WeightScheme.uniform(), self.config)

        assert np.array_equal(policy.model.flat_parameters(), plain.model.flat_parameters())

    def test_determinism(self):
        a = dagger(self.env_config, self.spec, 60, 3, self.config, seed=1)
        b = dagger(self.env_config, self.spec, 60, 3, self.config, seed=1)
        assert np.array_equal(a.model.flat_parameters(), b.model.flat_parameters())

    def test_invalid_budget(self):
        with self.assertRaises(ConfigurationError):
            dagger(self.env_config, self.spec, 0, 1, self.config)
        with self.assertRaises(ConfigurationError):
            dagger(self.env_config, self.spec, 3, 5, self.config)
        with self.assertRaises(ConfigurationError):
            dagger(self.env_config, self.spec, 10, 0, self.config)


if __name__ == '__main__':
    unittest.main()
