import unittest

import os
import tempfile

import numpy as np

from keyframe_bc.envs import constant_script, alternating_script, single_switch_script
from keyframe_bc.demos import collect_demonstrations, build_history_dataset, split_by_trajectory
from keyframe_bc.keyframes import (
    CopycatSpec, CopycatFit, ApeTable, train_copycat, compute_ape, copycat_condition, copycat_inputs
)
from keyframe_bc.neuralnet import TrainConfig, init_mlp, forward_batch
from keyframe_bc.utils.errors import ConfigurationError, ShapeError


def scripted_dataset(script, n_episodes, context_length):
    return build_history_dataset(collect_demonstrations(script, n_episodes), 0, context_length)


def constant_output_fit(value, context_length=1):
    spec = CopycatSpec.build(1, context_length=context_length, hidden_dims=(4,))
    model = init_mlp(spec.mlp)
    model.weights = [np.zeros_like(w) for w in model.weights]
    model.biases = [np.zeros_like(b) for b in model.biases]
    model.biases[-1][:] = value
    return CopycatFit(models=[model], spec=spec, fold_of_trajectory={})


class TestCopycat(unittest.TestCase):

    def test_constant_actions(self):
        dataset = scripted_dataset(constant_script(20, value=0.5), 6, 1)
        train, val = split_by_trajectory(dataset, 0.34, seed=0)
        spec = CopycatSpec.build(1, context_length=1, hidden_dims=(16,), activation='tanh',
                                 train=TrainConfig(learning_rate=5e-3, batch_size=64, iterations=1500))

        table = compute_ape(train_copycat(train, spec), val)
        assert table.ape.mean() < 1e-4

    def test_alternating_actions(self):
        dataset = scripted_dataset(alternating_script(20), 6, 2)
        train, val = split_by_trajectory(dataset, 0.34, seed=0)
        spec = CopycatSpec.build(1, context_length=1, hidden_dims=(16,), activation='tanh',
                                 train=TrainConfig(learning_rate=1e-2, batch_size=64, iterations=2000))

        table = compute_ape(train_copycat(train, spec), val)
        assert table.ape[~table.context_padded].mean() < 1e-3

    def test_context_is_truncated_to_spec(self):
        dataset = scripted_dataset(alternating_script(6), 2, 4)
        assert copycat_inputs(dataset, 2).shape == (12, 2)
        assert np.array_equal(copycat_inputs(dataset, 4), dataset.contexts)

    def test_default_context_length(self):
        spec = CopycatSpec.build(2)
        assert spec.context_length == 3
        assert spec.mlp.input_dim == 6

    def test_ape_definition(self):
        dataset = scripted_dataset(constant_script(5, value=1.0), 2, 1)

        table = compute_ape(constant_output_fit(0.0), dataset)
        assert np.allclose(table.ape, 1.0)
        assert np.all(table.folds == -1)

        table = compute_ape(constant_output_fit(1.0), dataset)
        assert np.allclose(table.ape, 0.0)
        assert table.context_padded.tolist() == [True, False, False, False, False] * 2

    def test_cross_validated_scoring(self):
        dataset = scripted_dataset(single_switch_script(12, 5), 6, 2)
        spec = CopycatSpec.build(1, context_length=2, hidden_dims=(8,), folds=3,
                                 train=TrainConfig(learning_rate=1e-2, batch_size=16, iterations=50))
        fit = train_copycat(dataset, spec)
        assert fit.n_folds == 3
        assert sorted(set(fit.fold_of_trajectory.values())) == [0, 1, 2]

        table = compute_ape(fit, dataset)
        inputs = copycat_inputs(dataset, 2)
        for i in range(len(dataset)):
            fold = table.folds[i]
            assert fold == fit.fold_of_trajectory[int(dataset.trajectory_ids[i])]
            # scored by the model that did not train on this fold
            prediction = forward_batch(fit.models[fold], inputs[i:i + 1])[0]
            assert np.isclose(table.ape[i], np.mean((prediction - dataset.targets[i]) ** 2))

    def test_missing_fold_model(self):
        dataset = scripted_dataset(constant_script(4), 2, 1)
        fit = constant_output_fit(0.0)
        fit.fold_of_trajectory = {0: 2}
        with self.assertRaises(ConfigurationError):
            compute_ape(fit, dataset)

    def test_too_many_folds(self):
        dataset = scripted_dataset(constant_script(4), 2, 1)
        spec = CopycatSpec.build(1, context_length=1, folds=3)
        with self.assertRaises(ConfigurationError):
            train_copycat(dataset, spec)

    def test_switch_is_the_ape_peak(self):
        switch = 15
        dataset = scripted_dataset(single_switch_script(30, switch), 4, 2)
        spec = CopycatSpec.build(1, context_length=2, hidden_dims=(32, 32), folds=2,
                                 train=TrainConfig(learning_rate=5e-3, batch_size=32, iterations=600))
        table = compute_ape(train_copycat(dataset, spec), dataset)

        for trajectory_id in dataset.unique_trajectory_ids():
            mask = table.trajectory_ids == trajectory_id
            assert table.step_indices[mask][np.argmax(table.ape[mask])] == switch

    def test_table_alignment_and_csv(self):
        dataset = scripted_dataset(constant_script(5), 2, 1)
        table = compute_ape(constant_output_fit(0.25), dataset)
        table.check_aligned(dataset)

        with self.assertRaises(ShapeError):
            table.check_aligned(dataset.select_trajectories([0]))

        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, 'ape.csv')
            table.save_csv(path)
            loaded = ApeTable.load_csv(path)

        assert np.allclose(loaded.ape, table.ape)
        assert np.array_equal(loaded.step_indices, table.step_indices)
        assert table.summary()['n'] == 10


class TestCopycatCondition(unittest.TestCase):

    def test_preferred(self):
        verdict = copycat_condition(0.1, 0.2)
        assert verdict.copycat_preferred
        assert abs(verdict.margin - 0.1) < 1e-12

    def test_boundary(self):
        assert not copycat_condition(0.2, 0.2).copycat_preferred

    def test_perfect_copycat(self):
        assert copycat_condition(0.0, 1e-9).copycat_preferred

    def test_negative(self):
        with self.assertRaises(ConfigurationError):
            copycat_condition(-0.1, 0.2)


if __name__ == '__main__':
    unittest.main()
