import unittest

import os
import json
import filecmp
import tempfile

import pandas as pd
from click.testing import CliRunner

from keyframe_bc.config import ExperimentConfig, ENV_KEY, DATA_KEY, COPYCAT_KEY, POLICY_KEY, TRAIN_KEY, METHODS_KEY, SEEDS_KEY, EVAL_KEY, GRID_KEY
from keyframe_bc.envs import single_switch_script
from keyframe_bc.cli.__main__ import cli
from keyframe_bc.cli.api import (
    gen_data, run, evaluate, diag, load_artifacts, aggregate, autotest,
    MANIFEST_FILE, DEMOS_FILE, APE_TRAIN_FILE, APE_VAL_FILE, AGGREGATE_FILE, RUNS_DIR, RECORD_FILE, POLICY_FILE, DIAG_DIR
)
from keyframe_bc.utils.errors import ConfigurationError, MissingArtifactError


TINY_METHODS = [
    {'name': 'BC-SO', 'trainer': 'bc', 'history': 0, 'scheme': {'kind': 'uniform'}},
    {'name': 'BC-OH', 'trainer': 'bc', 'history': 2, 'scheme': {'kind': 'uniform'}},
    {'name': 'Ours-step', 'trainer': 'bc', 'history': 2, 'scheme': {'kind': 'step', 'thr': 10.0, 'w': 5.0}}
]


def tiny_config_dict():
    return {
        ENV_KEY: {'script': single_switch_script(12, 5).to_dict()},
        DATA_KEY: {'episodes': 10, 'context_length': 2, 'noise_rate': 0.1, 'seed': 3},
        COPYCAT_KEY: {'hidden_dims': [4], 'folds': 2, 'train': {'learning_rate': 1e-2, 'batch_size': 16, 'iterations': 20}},
        POLICY_KEY: {'hidden_dims': [4], 'activation': 'tanh'},
        TRAIN_KEY: {'learning_rate': 1e-2, 'batch_size': 16, 'iterations': 20},
        METHODS_KEY: TINY_METHODS,
        SEEDS_KEY: [0, 1],
        EVAL_KEY: {'episodes': 2, 'avg_ape': False},
        GRID_KEY: {'history': 2}
    }


class TestFuncs(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.out_dir = os.path.join(self.temp_dir.name, 'out')
        self.config = ExperimentConfig(d=tiny_config_dict())

    def tearDown(self):
        self.temp_dir.cleanup()

    def test_gen_data(self):
        manifest = gen_data(self.config, self.out_dir, progress=False)

        for name in (MANIFEST_FILE, DEMOS_FILE, APE_TRAIN_FILE, APE_VAL_FILE):
            assert os.path.exists(os.path.join(self.out_dir, name))

        assert manifest['n_trajectories'] == 10
        assert manifest['n_samples'] == 120
        assert manifest['n_train_samples'] + manifest['n_val_samples'] == 120
        assert not set(manifest['train_ids']) & set(manifest['val_ids'])
        assert manifest['history'] == 2

        artifacts = load_artifacts(self.config, self.out_dir)
        assert len(artifacts.train) == manifest['n_train_samples']
        assert len(artifacts.ape_val.ape) == manifest['n_val_samples']

    def test_missing_artifacts(self):
        with self.assertRaises(MissingArtifactError):
            load_artifacts(self.config, self.out_dir)

        gen_data(self.config, self.out_dir, progress=False)
        os.remove(os.path.join(self.out_dir, APE_VAL_FILE))
        with self.assertRaises(MissingArtifactError):
            load_artifacts(self.config, self.out_dir)

    def test_config_mismatch(self):
        gen_data(self.config, self.out_dir, progress=False)
        other = ExperimentConfig(d={**tiny_config_dict(), SEEDS_KEY: [5]})
        with self.assertRaises(ConfigurationError):
            load_artifacts(other, self.out_dir)

    def test_run(self):
        n_failed = run(self.config, self.out_dir)
        assert n_failed == 0

        for method in TINY_METHODS:
            for seed in (0, 1):
                run_dir = os.path.join(self.out_dir, RUNS_DIR, method['name'], f'seed_{seed}')
                assert os.path.exists(os.path.join(run_dir, POLICY_FILE))
                with open(os.path.join(run_dir, RECORD_FILE), 'r') as fh:
                    record = json.load(fh)
                assert record['status'] == 'ok'
                assert record['config_hash'] == self.config.config_hash()
                assert len(record['episodes']) == 2

        frame = pd.read_csv(os.path.join(self.out_dir, AGGREGATE_FILE))
        assert frame['method'].tolist() == sorted(m['name'] for m in TINY_METHODS)
        assert frame['n_runs'].tolist() == [2, 2, 2]
        assert frame['n_failed'].tolist() == [0, 0, 0]
        for column in ('success_mean', 'success_std', 'stalls_mean', 'cp_val_mse_mean', 'avg_ape_mean'):
            assert column in frame.columns
        assert list(frame.columns[:3]) == ['method', 'success_mean', 'success_std']
        assert list(frame.columns[-2:]) == ['n_runs', 'n_failed']

    def test_run_is_reproducible(self):
        other_dir = os.path.join(self.temp_dir.name, 'other')
        run(self.config, self.out_dir, methods=['BC-OH'])
        run(self.config, other_dir, methods=['BC-OH'])

        assert filecmp.cmp(os.path.join(self.out_dir, AGGREGATE_FILE), os.path.join(other_dir, AGGREGATE_FILE), shallow=False)
        assert filecmp.cmp(os.path.join(self.out_dir, DEMOS_FILE), os.path.join(other_dir, DEMOS_FILE), shallow=False)

    def test_evaluate_and_diag(self):
        run(self.config, self.out_dir, methods=['BC-SO', 'BC-OH'])
        assert evaluate(self.config, self.out_dir, methods=['BC-SO', 'BC-OH']) == 0

        # no stored policy for this method
        assert evaluate(self.config, self.out_dir, methods=['Ours-step']) == 2

        verdict = diag(self.config, self.out_dir)
        assert verdict['reference_source'] == 'BC-SO'
        assert isinstance(verdict['copycat_preferred'], bool)
        for name in ('verdict.json', 'ape_histogram.csv', 'trace.csv'):
            assert os.path.exists(os.path.join(self.out_dir, DIAG_DIR, name))

    def test_failed_scheme_does_not_stop_the_run(self):
        # two distinct expert actions cannot fill six clusters
        methods = [TINY_METHODS[0], {'name': 'ActFreq', 'trainer': 'bc', 'history': 2, 'scheme': {'kind': 'actfreq', 'k': 6}}]
        config = ExperimentConfig(d={**tiny_config_dict(), METHODS_KEY: methods})

        assert run(config, self.out_dir) == 2

        for seed in (0, 1):
            with open(os.path.join(self.out_dir, RUNS_DIR, 'ActFreq', f'seed_{seed}', RECORD_FILE), 'r') as fh:
                record = json.load(fh)
            assert record['status'] == 'failed'
            assert 'EmptyClusterError' in record['error']

        frame = pd.read_csv(os.path.join(self.out_dir, AGGREGATE_FILE))
        assert frame['method'].tolist() == ['ActFreq', 'BC-SO']
        assert frame['n_failed'].tolist() == [2, 0]
        assert not os.path.exists(os.path.join(self.out_dir, 'weights', 'ActFreq.csv'))
        assert os.path.exists(os.path.join(self.out_dir, 'weights', 'BC-SO.csv'))

    def test_unknown_method(self):
        with self.assertRaises(ConfigurationError):
            run(self.config, self.out_dir, methods=['nope'])

    def test_aggregate_refuses_other_configs(self):
        record = {'method': 'A', 'seed': 0, 'config_hash': 'b' * 64, 'status': 'failed'}
        with self.assertRaises(ConfigurationError):
            aggregate([record], 'a' * 64)

        frame = aggregate([record], 'b' * 64)
        assert frame['n_failed'].tolist() == [1]
        assert frame['success_mean'].isna().all()

    def test_autotest_name(self):
        with self.assertRaises(ConfigurationError):
            autotest('database')
        with self.assertRaises(ConfigurationError):
            autotest(3)

    def test_command_line(self):
        runner = CliRunner()
        config_path = os.path.join(self.temp_dir.name, 'config.json')

        result = runner.invoke(cli, ['template', '--out-path', config_path])
        assert result.exit_code == 0, result.output
        assert os.path.exists(config_path)
        assert len(ExperimentConfig(config_path).methods()) == 10

        self.config.save(config_path)
        result = runner.invoke(cli, ['run', '--config', config_path, '--out', self.out_dir, '--method', 'BC-SO'])
        assert result.exit_code == 0, result.output
        assert os.path.exists(os.path.join(self.out_dir, AGGREGATE_FILE))


if __name__ == '__main__':
    unittest.main()
