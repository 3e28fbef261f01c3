"""
    Directional reproductions on ToyCar, slow; enabled with KEYFRAME_BC_SLOW=1
"""
import unittest

import os
import json
import tempfile

import numpy as np

from keyframe_bc.config import ExperimentConfig, METHODS_KEY, SEEDS_KEY, EVAL_KEY
from keyframe_bc.envs import ToyCarConfig, single_switch_script
from keyframe_bc.demos import collect_demonstrations, build_history_dataset, split_by_trajectory
from keyframe_bc.keyframes import CopycatSpec, train_copycat, compute_ape, constant_mean_mse, copycat_condition
from keyframe_bc.imitation import ExpertPolicy
from keyframe_bc.eval import rollout, avg_ape
from keyframe_bc.neuralnet import TrainConfig
from keyframe_bc.cli.api import run, diag, RUNS_DIR, RECORD_FILE


SLOW = os.environ.get('KEYFRAME_BC_SLOW') == '1'


def load_records(out_dir, method, seeds):
    records = []
    for seed in seeds:
        with open(os.path.join(out_dir, RUNS_DIR, method, f'seed_{seed}', RECORD_FILE), 'r') as fh:
            records.append(json.load(fh))
    return records


def seed_mean(records, key):
    return float(np.mean([r['metrics'][key] for r in records]))


@unittest.skipUnless(SLOW, 'set KEYFRAME_BC_SLOW=1 to run the ToyCar reproductions')
class TestExperiments(unittest.TestCase):

    def test_ape_oracle_over_seeds(self):
        switch = 15
        dataset = build_history_dataset(collect_demonstrations(single_switch_script(30, switch), 4), 0, 2)

        for seed in range(5):
            spec = CopycatSpec.build(1, context_length=2, hidden_dims=(32, 32), folds=2, init_seed=seed,
                                     train=TrainConfig(learning_rate=5e-3, batch_size=32, iterations=600, rng_seed=seed))
            table = compute_ape(train_copycat(dataset, spec), dataset)

            for trajectory_id in dataset.unique_trajectory_ids():
                mask = table.trajectory_ids == trajectory_id
                assert table.step_indices[mask][np.argmax(table.ape[mask])] == switch

    def test_temporal_correlation(self):
        trajectories = collect_demonstrations(ToyCarConfig(), 200, noise_rate=0.1, seed=0)
        dataset = build_history_dataset(trajectories, 0, 3)
        train, val = split_by_trajectory(dataset, 0.2, seed=0)

        spec = CopycatSpec.build(1, context_length=3, hidden_dims=(64, 64), folds=1,
                                 train=TrainConfig(learning_rate=1e-3, batch_size=128, iterations=2000))
        eps_cp = float(np.mean(compute_ape(train_copycat(train, spec), val).ape))
        reference = constant_mean_mse(val.targets)

        assert eps_cp < 0.5 * reference
        assert copycat_condition(eps_cp, reference).copycat_preferred

    def test_expert_is_safe(self):
        _, report = rollout(ToyCarConfig(), ExpertPolicy(), 2000, seed=123)
        assert report.violations == 0
        assert report.success_rate == 1.0

    def test_toycar_ordering(self):
        seeds = [0, 1, 2, 3, 4]
        methods = ['BC-SO', 'BC-OH', 'Ours-step']
        template = ExperimentConfig(d={})
        config = ExperimentConfig(d={
            METHODS_KEY: [m.to_dict() for m in template.methods() if m.name in methods],
            SEEDS_KEY: seeds
        })

        with tempfile.TemporaryDirectory() as out_dir:
            assert run(config, out_dir) == 0

            bc_so = load_records(out_dir, 'BC-SO', seeds)
            bc_oh = load_records(out_dir, 'BC-OH', seeds)
            ours = load_records(out_dir, 'Ours-step', seeds)

            assert seed_mean(ours, 'success_rate') >= seed_mean(bc_oh, 'success_rate')
            assert seed_mean(ours, 'cp_val_mse') < seed_mean(bc_oh, 'cp_val_mse')
            assert seed_mean(bc_oh, 'other_val_mse') < seed_mean(bc_so, 'other_val_mse')

            stalls = sum(r['metrics']['inertia_stalls'] for r in bc_oh)
            if stalls >= 4:
                assert sum(r['metrics']['inertia_stalls'] for r in ours) <= 0.5 * stalls

            assert seed_mean(ours, 'rollout_imitation_error') < seed_mean(bc_oh, 'rollout_imitation_error')

            # expert avgAPE under the same copycat
            n_episodes = int(config[EVAL_KEY]['avg_ape_episodes'])
            expert = float(np.mean([
                avg_ape(ExpertPolicy(), config.env_config(), n_episodes, config.copycat_spec(1, seed=seed), seed=seed).avg_ape
                for seed in seeds
            ]))
            assert seed_mean(bc_oh, 'avg_ape') < seed_mean(ours, 'avg_ape') <= 1.2 * expert

            verdict = diag(config, out_dir)
            assert verdict['ape_error_correlation'] > 0.3


if __name__ == '__main__':
    unittest.main()
