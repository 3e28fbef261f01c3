import unittest

import os
import tempfile
from dataclasses import replace

import numpy as np

from keyframe_bc.envs import single_switch_script
from keyframe_bc.demos import collect_demonstrations, build_history_dataset
from keyframe_bc.keyframes import WeightScheme, ApeTable, step_weights, softmax_weights
from keyframe_bc.imitation import (
    PolicySpec, TrainedPolicy, policy_inputs, history_dropout_mask, train_bc, train_history_dropout, predict
)
from keyframe_bc.neuralnet import TrainConfig, init_mlp, train_supervised, per_sample_errors
from keyframe_bc.utils.errors import ConfigurationError, ShapeError, ParseError


def switch_dataset(history=2, n_episodes=4):
    trajectories = collect_demonstrations(single_switch_script(20, 8), n_episodes, noise_rate=0.2, seed=1)
    return build_history_dataset(trajectories, history, 2)


def ape_table_for(dataset, ape):
    return ApeTable(
        ape=np.asarray(ape, dtype=np.float64),
        folds=np.zeros(len(dataset), dtype=np.int64),
        trajectory_ids=dataset.trajectory_ids.copy(),
        step_indices=dataset.step_indices.copy(),
        context_padded=dataset.context_padded.copy()
    )


def constant_policy(value, history=0, obs_dim=2):
    spec = PolicySpec.build(obs_dim, 1, history, hidden_dims=(3,))
    model = init_mlp(spec.mlp)
    model.weights = [np.zeros_like(w) for w in model.weights]
    model.biases = [np.zeros_like(b) for b in model.biases]
    model.biases[-1][:] = value
    return TrainedPolicy(model, spec)


class TestTrainBc(unittest.TestCase):

    def setUp(self):
        self.dataset = switch_dataset()
        self.spec = PolicySpec.build(self.dataset.obs_dim, 1, 2, hidden_dims=(8,))
        self.config = TrainConfig(learning_rate=1e-3, batch_size=16, iterations=40, rng_seed=3)

    def test_uniform_is_plain_mse(self):
        policy = train_bc(self.dataset, self.spec, WeightScheme.uniform(), self.config)
        direct = train_supervised(policy_inputs(self.dataset, self.spec), self.dataset.targets, self.spec.mlp, self.config)

        assert policy.provenance['loss_trace'] == direct.loss_trace
        assert np.array_equal(policy.model.flat_parameters(), direct.model.flat_parameters())

    def test_single_observation(self):
        spec = PolicySpec.build(self.dataset.obs_dim, 1, 0, hidden_dims=(8,))
        policy = train_bc(self.dataset, spec, WeightScheme.uniform(), self.config)
        assert policy.spec.input_mode == 'single_observation'
        assert policy_inputs(self.dataset, spec).shape == (len(self.dataset), self.dataset.obs_dim)

    def test_step_loss_by_hand(self):
        n = len(self.dataset)
        ape = np.random.default_rng(0).uniform(size=n)
        config = TrainConfig(batch_size=n, iterations=1)

        policy = train_bc(self.dataset, self.spec, WeightScheme.step(thr=10, w=5), config, ape_table=ape_table_for(self.dataset, ape))

        errors = per_sample_errors(init_mlp(self.spec.mlp), policy_inputs(self.dataset, self.spec), self.dataset.targets)
        expected = np.dot(step_weights(ape, 10, 5), errors) / n
        assert np.isclose(policy.provenance['loss_trace'][0], expected, rtol=1e-12)

    def test_softmax_loss_by_hand(self):
        n = len(self.dataset)
        ape = np.random.default_rng(1).uniform(size=n)
        config = TrainConfig(batch_size=n, iterations=1)

        policy = train_bc(self.dataset, self.spec, WeightScheme.softmax(tau=1.0), config, ape_table=ape_table_for(self.dataset, ape))

        errors = per_sample_errors(init_mlp(self.spec.mlp), policy_inputs(self.dataset, self.spec), self.dataset.targets)
        expected = np.dot(softmax_weights(ape, 1.0), errors) / n
        assert np.isclose(policy.provenance['loss_trace'][0], expected, rtol=1e-12)

    def test_missing_ape(self):
        with self.assertRaises(ConfigurationError):
            train_bc(self.dataset, self.spec, WeightScheme.softmax(), self.config)

    def test_determinism(self):
        ape = ape_table_for(self.dataset, np.linspace(0, 1, len(self.dataset)))
        a = train_bc(self.dataset, self.spec, WeightScheme.step(), self.config, ape_table=ape)
        b = train_bc(self.dataset, self.spec, WeightScheme.step(), self.config, ape_table=ape)
        assert np.array_equal(a.model.flat_parameters(), b.model.flat_parameters())
        assert a.provenance == b.provenance

    def test_spec_mismatch(self):
        with self.assertRaises(ConfigurationError):
            train_bc(self.dataset, PolicySpec.build(self.dataset.obs_dim, 1, 3), WeightScheme.uniform(), self.config)
        with self.assertRaises(ConfigurationError):
            replace(self.spec, input_mode='single_observation').validate()

    def test_boosting_scheme(self):
        policy = train_bc(self.dataset, self.spec, WeightScheme.boosting(rounds=2), self.config)
        assert policy.provenance['scheme']['kind'] == 'boosting'


class TestHistoryDropout(unittest.TestCase):

    def test_mask_frequency(self):
        rng = np.random.default_rng(0)
        mask = history_dropout_mask(10000, 3, 2, 0.5, rng)
        assert mask.shape == (10000, 8)
        # current frame is the last block
        assert np.all(mask[:, 6:] == 1)
        for frame in range(3):
            frequency = 1.0 - mask[:, 2 * frame].mean()
            assert 0.48 <= frequency <= 0.52
            assert np.array_equal(mask[:, 2 * frame], mask[:, 2 * frame + 1])

    def test_zero_rate_keeps_everything(self):
        mask = history_dropout_mask(50, 2, 3, 0.0, np.random.default_rng(1))
        assert np.all(mask == 1)

    def test_masked_history(self):
        window = np.arange(1.0, 7.0)[np.newaxis, :]
        mask = history_dropout_mask(1, 2, 2, 1.0 - 1e-12, np.random.default_rng(2))
        assert np.array_equal(window * mask, [[0.0, 0.0, 0.0, 0.0, 5.0, 6.0]])

    def test_train(self):
        dataset = switch_dataset()
        spec = PolicySpec.build(dataset.obs_dim, 1, 2, hidden_dims=(8,))
        config = TrainConfig(batch_size=16, iterations=20)

        policy = train_history_dropout(dataset, spec, config, rate=0.5)
        assert policy.spec.history_dropout_rate == 0.5
        uniform = train_bc(dataset, spec, WeightScheme.uniform(), config)
        assert not np.array_equal(policy.model.flat_parameters(), uniform.model.flat_parameters())

    def test_invalid_rate(self):
        dataset = switch_dataset()
        spec = PolicySpec.build(dataset.obs_dim, 1, 2)
        for rate in (0.0, 1.0, 1.5):
            with self.assertRaises(ConfigurationError):
                train_history_dropout(dataset, spec, TrainConfig(), rate=rate)
        with self.assertRaises(ConfigurationError):
            train_history_dropout(dataset, PolicySpec.build(dataset.obs_dim, 1, 0), TrainConfig(), rate=0.5)


class TestPredict(unittest.TestCase):

    def test_clamp(self):
        assert predict(constant_policy(1.7), [0.3, 0.4])[0] == 1.0
        assert predict(constant_policy(-3.0), [0.3, 0.4])[0] == -1.0
        assert predict(constant_policy(0.25), [0.3, 0.4])[0] == 0.25

    def test_single_observation_ignores_history(self):
        policy = TrainedPolicy(init_mlp(PolicySpec.build(2, 1, 0, hidden_dims=(4,)).mlp), PolicySpec.build(2, 1, 0, hidden_dims=(4,)))
        a = predict(policy, [[9.0, 9.0], [-4.0, 2.0], [0.1, 0.2]])
        b = predict(policy, [0.1, 0.2])
        assert np.array_equal(a, b)
        assert np.array_equal(predict(policy, [0.1, 0.2]), b)

    def test_shape(self):
        policy = constant_policy(0.0, history=2)
        with self.assertRaises(ShapeError):
            predict(policy, [0.1, 0.2])
        with self.assertRaises(ShapeError):
            predict(policy, np.zeros(7))

    def test_save_and_load(self):
        dataset = switch_dataset()
        spec = PolicySpec.build(dataset.obs_dim, 1, 2, hidden_dims=(8,))
        policy = train_bc(dataset, spec, WeightScheme.uniform(), TrainConfig(iterations=5))

        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, 'policy.json')
            policy.save(path)
            loaded = TrainedPolicy.load(path)

            with open(path, 'w') as fh:
                fh.write('{"format": ')
            with self.assertRaises(ParseError):
                TrainedPolicy.load(path)

        assert loaded.spec == policy.spec
        assert np.array_equal(loaded.model.flat_parameters(), policy.model.flat_parameters())
        assert loaded.provenance == policy.provenance


if __name__ == '__main__':
    unittest.main()
