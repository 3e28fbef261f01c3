import os
import sys
import json
import logging
from dataclasses import dataclass

import dask
import humanize
import numpy as np
import pandas as pd
from dask import delayed

# config file interface
from ..config import (
    ExperimentConfig, MethodConfig, create_template_config_file,
    DATA_KEY, EVAL_KEY, GRID_KEY, POLICY_KEY,
    BC_TRAINER, HISTORY_DROPOUT_TRAINER, DAGGER_TRAINER
)

# pipeline
from ..demos import (
    collect_demonstrations, build_history_dataset, split_by_trajectory, truncate_to_samples,
    save_dataset, load_dataset, perturbed_fraction
)
from ..keyframes import (
    ApeTable, WeightScheme, BOOSTING,
    train_copycat, compute_ape, copycat_condition, constant_mean_mse, build_weight_table
)
from ..imitation import TrainedPolicy, train_bc, train_history_dropout, dagger, policy_inputs
from ..eval import rollout, rollout_imitation_error, avg_ape_of_trajectories, loss_breakdown, ape_error_correlation
from ..neuralnet import per_sample_errors
from ..utils.errors import KeyframeError, ConfigurationError, MissingArtifactError

logger = logging.getLogger(os.path.basename(__name__))

# artifact names
MANIFEST_FILE = 'manifest.json'
DEMOS_FILE = 'demos.jsonl'
APE_TRAIN_FILE = 'ape_train.csv'
APE_VAL_FILE = 'ape_val.csv'
WEIGHTS_DIR = 'weights'
RUNS_DIR = 'runs'
AGGREGATE_FILE = 'aggregate.csv'
DIAG_DIR = 'diag'
GRID_DIR = 'grid'
POLICY_FILE = 'policy.json'
RECORD_FILE = 'record.json'

AGGREGATE_METRICS = [
    ('success', 'success_rate'),
    ('violations', 'violations'),
    ('progress', 'progress'),
    ('avg_speed', 'avg_speed'),
    ('stalls', 'inertia_stalls'),
    ('rollout_imitation_error', 'rollout_imitation_error'),
    ('cp_val_mse', 'cp_val_mse'),
    ('other_val_mse', 'other_val_mse'),
    ('avg_ape', 'avg_ape')
]


@dataclass
class Artifacts:
    manifest: dict
    train: object
    val: object
    ape_train: ApeTable
    ape_val: ApeTable


def _write_json(d, out_path):
    with open(out_path, 'w') as fh:
        json.dump(d, fh, indent=2, sort_keys=True)


def _file_size(path):
    return humanize.naturalsize(os.path.getsize(path))


def template(out_path=None):
    """Writes a template experiment config

    Arguments
    ---------
        out_path : str
            Path of the JSON file, defaults to the user config location
    """

    path = create_template_config_file(out_path)

    # inform user
    print(f'Template config written at {path}')


def gen_data(config, out_dir, seed_offset=0, progress=True):
    """Collects demonstrations, splits them, trains the copycat and scores every sample

    Arguments
    ---------
        config : ExperimentConfig
        out_dir : str
            Created if missing
        seed_offset : int
            Added to the data seed

    Returns
    -------
        manifest : dict
    """

    # validate input
    config.validate()
    os.makedirs(out_dir, exist_ok=True)

    data = config[DATA_KEY]
    seed = int(data['seed']) + int(seed_offset)
    env_config = config.env_config()

    # collect
    trajectories = collect_demonstrations(env_config, int(data['episodes']), float(data['noise_rate']), seed=seed, progress=progress)
    dataset = build_history_dataset(trajectories, config.history(), int(data['context_length']), context_source=data['context_source'])

    demos_path = os.path.join(out_dir, DEMOS_FILE)
    save_dataset(dataset, demos_path)

    # split
    train, val = split_by_trajectory(dataset, float(data['val_fraction']), seed=seed)
    train = truncate_to_samples(train, data['max_train_samples'])

    # copycat and APE
    spec = config.copycat_spec(dataset.action_dim, seed=seed)
    fit = train_copycat(train, spec, progress=progress)
    ape_train = compute_ape(fit, train)
    ape_val = compute_ape(fit, val)

    ape_train.save_csv(os.path.join(out_dir, APE_TRAIN_FILE))
    ape_val.save_csv(os.path.join(out_dir, APE_VAL_FILE))

    # cross-validated scores are held out, otherwise fall back on the validation split
    eps_cp = float(np.mean(ape_train.ape)) if spec.folds > 1 else float(np.mean(ape_val.ape))
    reference = constant_mean_mse(train.targets)

    manifest = {
        'config_hash': config.config_hash(),
        'seed': seed,
        'history': dataset.history,
        'context_length': dataset.context_length,
        'n_trajectories': dataset.n_trajectories,
        'n_samples': len(dataset),
        'train_ids': train.unique_trajectory_ids(),
        'val_ids': val.unique_trajectory_ids(),
        'n_train_samples': len(train),
        'n_val_samples': len(val),
        'perturbed_fraction': perturbed_fraction(trajectories),
        'eps_cp': eps_cp,
        'constant_mean_mse': reference,
        'copycat': spec.to_dict(),
        'ape_train': ape_train.summary(),
        'ape_val': ape_val.summary()
    }
    _write_json(manifest, os.path.join(out_dir, MANIFEST_FILE))

    logger.info(f'perturbed fraction {manifest["perturbed_fraction"]:.4f}, copycat eps_cp {eps_cp:.6f} vs constant-mean {reference:.6f}')

    # inform user
    print(f'{dataset.n_trajectories} demonstrations ({len(dataset)} samples, {_file_size(demos_path)}) written to {demos_path}')
    print(f'train {len(train)} / val {len(val)} samples, copycat held-out MSE {eps_cp:.6f}')

    return manifest


def load_artifacts(config, out_dir):
    """
        Reloads the demonstrations, the split and the APE tables written by gen_data
    """

    manifest_path = os.path.join(out_dir, MANIFEST_FILE)
    if not os.path.exists(manifest_path):
        raise MissingArtifactError(manifest_path, hint='run gen-data first')

    with open(manifest_path, 'r') as fh:
        manifest = json.load(fh)

    if manifest['config_hash'] != config.config_hash():
        raise ConfigurationError(f'{manifest_path} was generated with config {manifest["config_hash"][:12]}, current config is {config.config_hash()[:12]}')

    for name in (DEMOS_FILE, APE_TRAIN_FILE, APE_VAL_FILE):
        path = os.path.join(out_dir, name)
        if not os.path.exists(path):
            raise MissingArtifactError(path, hint='run gen-data again')

    dataset = load_dataset(os.path.join(out_dir, DEMOS_FILE))
    train = dataset.select_trajectories(manifest['train_ids'], split='train')
    val = dataset.select_trajectories(manifest['val_ids'], split='val')

    ape_train = ApeTable.load_csv(os.path.join(out_dir, APE_TRAIN_FILE))
    ape_val = ApeTable.load_csv(os.path.join(out_dir, APE_VAL_FILE))
    ape_train.check_aligned(train)
    ape_val.check_aligned(val)

    return Artifacts(manifest, train, val, ape_train, ape_val)


def train_method(config, artifacts, method, seed):
    """
        Trains one method for one seed on the training split
    """

    train = artifacts.train
    spec = method.policy_spec(train.obs_dim, train.action_dim, config[POLICY_KEY], seed=seed)
    train_config = config.train_config(seed)

    if method.trainer == BC_TRAINER:
        return train_bc(train, spec, method.scheme, train_config, ape_table=artifacts.ape_train)

    if method.trainer == HISTORY_DROPOUT_TRAINER:
        return train_history_dropout(train, spec, train_config)

    if method.trainer == DAGGER_TRAINER:
        return dagger(config.env_config(), spec, method.query_budget, method.dagger_rounds, train_config, seed=seed)

    raise ConfigurationError(f'Unknown trainer {method.trainer}')


def evaluate_policy(config, artifacts, policy, seed):
    """
        Rollout metrics, rollout imitation error, changepoint loss breakdown and avgAPE of one policy
    """

    section = config[EVAL_KEY]
    env_config = config.env_config()

    trajectories, report = rollout(
        env_config, policy, int(section['episodes']), seed=int(section['seed']) + seed,
        stall_speed_fraction=section['stall_speed_fraction'], stall_steps=int(section['stall_steps']),
        repeats=int(section['repeats'])
    )

    breakdown = loss_breakdown(
        policy,
        {'train': (artifacts.train, artifacts.ape_train), 'val': (artifacts.val, artifacts.ape_val)},
        percentile=section['breakdown_percentile']
    )

    metrics = report.metrics()
    metrics['rollout_imitation_error'] = rollout_imitation_error(trajectories, env_config)
    metrics['cp_val_mse'] = breakdown['val']['changepoint_mse']
    metrics['other_val_mse'] = breakdown['val']['other_mse']
    metrics['avg_ape'] = float('nan')

    if section['avg_ape']:
        copycat = config.copycat_spec(artifacts.train.action_dim, seed=seed)
        metrics['avg_ape'] = avg_ape_of_trajectories(trajectories[:int(section['avg_ape_episodes'])], copycat, seed=seed).avg_ape

    return metrics, breakdown, report


def run_job(config_dict, out_dir, runs_dir, method_dict, seed, train=True):
    """Trains (or reloads) and evaluates one (method, seed) pair, writing its policy and record

    Top level so the process scheduler can pickle it. Failures are recorded, never raised.

    Returns
    -------
        record : dict
    """

    config = ExperimentConfig(d=config_dict)
    method = MethodConfig.from_dict(method_dict)

    run_dir = os.path.join(runs_dir, method.name, f'seed_{seed}')
    os.makedirs(run_dir, exist_ok=True)
    policy_path = os.path.join(run_dir, POLICY_FILE)

    record = {
        'method': method.name,
        'seed': int(seed),
        'config_hash': config.config_hash(),
        'method_config': method.to_dict(),
        'status': 'ok'
    }

    try:
        artifacts = load_artifacts(config, out_dir)

        if train:
            policy = train_method(config, artifacts, method, seed)
            policy.provenance['config_hash'] = config.config_hash()
            policy.save(policy_path)
        else:
            if not os.path.exists(policy_path):
                raise MissingArtifactError(policy_path, hint='run the run verb first')
            policy = TrainedPolicy.load(policy_path)

        metrics, breakdown, report = evaluate_policy(config, artifacts, policy, seed)
        record['metrics'] = metrics
        record['loss_breakdown'] = breakdown
        record['episodes'] = report.to_dict()['episodes']

    except Exception as e:
        logger.warning(f'{method.name} seed {seed} failed: {e}')
        record['status'] = 'failed'
        record['error'] = f'{type(e).__name__}: {e}'

    _write_json(record, os.path.join(run_dir, RECORD_FILE))

    return record


def aggregate(records, config_hash):
    """Mean and standard deviation of every metric per method

    Arguments
    ---------
        records : list
            Run records
        config_hash : str
            Records generated under another config are refused

    Returns
    -------
        frame : pd.DataFrame
            One row per method, sorted by method name
    """

    # validate input
    mismatched = sorted(set(r['config_hash'] for r in records) - {config_hash})
    if mismatched:
        raise ConfigurationError(f'Refusing to aggregate records from other configs: {[h[:12] for h in mismatched]}')

    rows = []
    for r in records:
        row = {'method': r['method'], 'seed': r['seed'], 'failed': int(r['status'] != 'ok')}
        for column, key in AGGREGATE_METRICS:
            row[column] = r['metrics'][key] if r['status'] == 'ok' else np.nan
        rows.append(row)

    frame = pd.DataFrame(rows)
    grouped = frame.groupby('method', sort=True)

    out = pd.DataFrame(index=grouped.size().index)
    for column, _ in AGGREGATE_METRICS:
        out[f'{column}_mean'] = grouped[column].mean()
        out[f'{column}_std'] = grouped[column].std(ddof=0)
    out['n_runs'] = grouped['seed'].count()
    out['n_failed'] = grouped['failed'].sum()

    return out.reset_index()


def _run_jobs(config, out_dir, runs_dir, methods, seeds, jobs, train=True):
    """
        Executes every (method, seed) job on a bounded dask worker pool
    """

    config_dict = config.to_dict()
    tasks = [
        delayed(run_job)(config_dict, out_dir, runs_dir, method.to_dict(), seed, train)
        for method in methods
        for seed in seeds
    ]

    scheduler = 'processes' if jobs > 1 else 'synchronous'
    records = dask.compute(*tasks, scheduler=scheduler, num_workers=jobs)

    return sorted(records, key=lambda r: (r['method'], r['seed']))


def _report(records, frame, aggregate_path):

    failed = [r for r in records if r['status'] != 'ok']

    # inform user
    print(frame[['method', 'n_runs', 'n_failed', 'success_mean', 'success_std', 'stalls_mean', 'cp_val_mse_mean']].to_string(index=False))
    print(f'{len(records)} runs, {len(failed)} failed, aggregate written to {aggregate_path}')
    for r in failed:
        print(f'  {r["method"]} seed {r["seed"]}: {r["error"]}')

    return len(failed)


def run(config, out_dir, jobs=1, seed_offset=0, methods=None):
    """Trains every method for every seed, evaluates them and writes the aggregate table

    Arguments
    ---------
        config : ExperimentConfig
        out_dir : str
        jobs : int
            Worker processes
        seed_offset : int
            Added to every seed
        methods : list
            Restricts the roster to these method names

    Returns
    -------
        n_failed : int
    """

    # validate input
    config.validate()
    if jobs < 1:
        raise ConfigurationError(f'jobs must be >= 1, got {jobs}')

    if not os.path.exists(os.path.join(out_dir, MANIFEST_FILE)):
        gen_data(config, out_dir)

    roster = config.methods() if not methods else [config.method(name) for name in methods]
    seeds = [s + int(seed_offset) for s in config.seeds()]

    # weight tables of the static schemes
    artifacts = load_artifacts(config, out_dir)
    os.makedirs(os.path.join(out_dir, WEIGHTS_DIR), exist_ok=True)
    for method in roster:
        if method.trainer != BC_TRAINER or method.scheme.kind == BOOSTING:
            continue
        try:
            table = build_weight_table(method.scheme, artifacts.train, artifacts.ape_train)
        except KeyframeError as e:
            # its runs are recorded as failed
            logger.warning(f'no weight table for {method.name}: {e}')
            continue
        table.save_csv(os.path.join(out_dir, WEIGHTS_DIR, f'{method.name}.csv'), artifacts.train, artifacts.ape_train)

    records = _run_jobs(config, out_dir, os.path.join(out_dir, RUNS_DIR), roster, seeds, jobs)

    aggregate_path = os.path.join(out_dir, AGGREGATE_FILE)
    frame = aggregate(records, config.config_hash())
    frame.to_csv(aggregate_path, index=False, float_format='%.6f')

    return _report(records, frame, aggregate_path)


def evaluate(config, out_dir, jobs=1, seed_offset=0, methods=None):
    """
        Re-evaluates the stored policies of a previous run and rewrites the records and the aggregate table
    """

    # validate input
    config.validate()
    load_artifacts(config, out_dir)

    roster = config.methods() if not methods else [config.method(name) for name in methods]
    seeds = [s + int(seed_offset) for s in config.seeds()]

    records = _run_jobs(config, out_dir, os.path.join(out_dir, RUNS_DIR), roster, seeds, jobs, train=False)

    aggregate_path = os.path.join(out_dir, AGGREGATE_FILE)
    frame = aggregate(records, config.config_hash())
    frame.to_csv(aggregate_path, index=False, float_format='%.6f')

    return _report(records, frame, aggregate_path)


def diag(config, out_dir, method_name='BC-OH', reference_method='BC-SO', seed_offset=0, bins=20):
    """Copycat-condition verdict, APE histogram and a per-step APE / loss trace of one validation trajectory

    Uses the policies of the first seed when they exist.

    Returns
    -------
        verdict : dict
    """

    # validate input
    artifacts = load_artifacts(config, out_dir)
    diag_dir = os.path.join(out_dir, DIAG_DIR)
    os.makedirs(diag_dir, exist_ok=True)

    seed = config.seeds()[0] + int(seed_offset)

    def stored_policy(name):
        path = os.path.join(out_dir, RUNS_DIR, name, f'seed_{seed}', POLICY_FILE)
        if not os.path.exists(path):
            logger.warning(f'no stored policy at {path}')
            return None
        return TrainedPolicy.load(path)

    def val_errors(policy):
        return per_sample_errors(policy.model, policy_inputs(artifacts.val, policy.spec), artifacts.val.targets)

    # copycat condition against the observation-only solution when it was trained
    reference_policy = stored_policy(reference_method)
    if reference_policy is not None:
        reference_mse, reference_source = float(np.mean(val_errors(reference_policy))), reference_method
    else:
        reference_mse, reference_source = artifacts.manifest['constant_mean_mse'], 'constant_mean'

    verdict = copycat_condition(artifacts.manifest['eps_cp'], reference_mse).to_dict()
    verdict['reference_source'] = reference_source

    # APE vs policy error
    policy = stored_policy(method_name)
    errors = val_errors(policy) if policy is not None else np.full(len(artifacts.val), np.nan)
    verdict['ape_error_correlation'] = ape_error_correlation(artifacts.ape_val.ape, errors) if policy is not None else float('nan')
    verdict['correlated_method'] = method_name

    # histogram
    counts, edges = np.histogram(artifacts.ape_train.ape, bins=bins)
    pd.DataFrame({'bin_left': edges[:-1], 'bin_right': edges[1:], 'count': counts}).to_csv(
        os.path.join(diag_dir, 'ape_histogram.csv'), index=False, float_format='%.10g'
    )

    # trace along the first validation trajectory
    trajectory_id = artifacts.val.unique_trajectory_ids()[0]
    mask = artifacts.val.trajectory_ids == trajectory_id
    trace = pd.DataFrame({
        'trajectory_id': trajectory_id,
        'step': artifacts.val.step_indices[mask],
        'ape': artifacts.ape_val.ape[mask],
        'policy_error': errors[mask]
    })
    for d in range(artifacts.val.action_dim):
        trace[f'target_{d}'] = artifacts.val.targets[mask, d]
    trace.to_csv(os.path.join(diag_dir, 'trace.csv'), index=False, float_format='%.10g')

    _write_json(verdict, os.path.join(diag_dir, 'verdict.json'))

    # inform user
    print(f'eps_cp {verdict["eps_cp"]:.6f} vs {reference_source} MSE {verdict["reference_mse"]:.6f}: copycat preferred = {verdict["copycat_preferred"]}')
    print(f'APE / {method_name} error correlation {verdict["ape_error_correlation"]:.3f}, trace of trajectory {trajectory_id} ({int(mask.sum())} steps)')

    return verdict


def grid_methods(config):
    """
        Softmax temperatures and step (thr, w) pairs at the grid history
    """
    section = config[GRID_KEY]
    history = int(section['history'])

    methods = [
        MethodConfig(f'softmax-tau{tau:g}', BC_TRAINER, history, WeightScheme.softmax(float(tau)))
        for tau in section['taus']
    ]
    methods += [
        MethodConfig(f'step-thr{thr:g}-w{w:g}', BC_TRAINER, history, WeightScheme.step(float(thr), float(w)))
        for thr in section['thrs']
        for w in section['ws']
    ]

    return methods


def grid(config, out_dir, jobs=1, seed_offset=0):
    """
        Hyperparameter sweep over the weighting schemes, written under grid/
    """

    # validate input
    config.validate()
    if jobs < 1:
        raise ConfigurationError(f'jobs must be >= 1, got {jobs}')

    if not os.path.exists(os.path.join(out_dir, MANIFEST_FILE)):
        gen_data(config, out_dir)

    grid_dir = os.path.join(out_dir, GRID_DIR)
    seeds = [int(s) + int(seed_offset) for s in config[GRID_KEY]['seeds']]

    records = _run_jobs(config, out_dir, os.path.join(grid_dir, RUNS_DIR), grid_methods(config), seeds, jobs)

    aggregate_path = os.path.join(grid_dir, AGGREGATE_FILE)
    frame = aggregate(records, config.config_hash())
    frame.to_csv(aggregate_path, index=False, float_format='%.6f')

    return _report(records, frame, aggregate_path)


def autotest(module_name=None):
    """Runs the unit tests on the modules

    Arguments
    ---------
    module_name : str
        If you want to run the unit tests of a single module, specify the name here

    Returns
    -------
        n_failed : int
            Number of test modules that failed
    """

    # validate input
    valid_module_names = ['neuralnet', 'envs', 'demos', 'keyframes', 'imitation', 'eval', 'config', 'cli', 'experiments']
    if module_name is not None:
        if not isinstance(module_name, str):
            raise ConfigurationError('Module Name must be a string')
        elif module_name not in valid_module_names:
            raise ConfigurationError(f'Module Name must be one of : {valid_module_names}')

    names = valid_module_names if module_name is None else [module_name]

    failed = 0
    for name in names:
        status = os.system(f'{sys.executable} -m tests.{name}')
        if status != 0:
            failed += 1

    return failed
