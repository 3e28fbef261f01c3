"""
    Copycat predictor: regresses the current expert action on past actions only.
    Its per-sample error (APE) scores how surprising each action is given the action history.
"""

import os
import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import pandas as pd

from ..demos import assign_folds
from ..neuralnet import MlpSpec, TrainConfig, train_supervised, forward_batch
from ..utils.errors import ConfigurationError, DataError, ShapeError

logger = logging.getLogger(os.path.basename(__name__))


@dataclass(frozen=True)
class CopycatSpec:
    """
        context_length past actions in, one action out; folds > 1 enables cross-validated APE
    """
    context_length: int
    mlp: MlpSpec
    train: TrainConfig = TrainConfig()
    folds: int = 1

    @classmethod
    def build(cls, action_dim, context_length=3, hidden_dims=(64, 64), activation='relu', train=None, folds=1, init_seed=0):
        mlp = MlpSpec(
            input_dim=context_length * action_dim,
            hidden_dims=tuple(hidden_dims),
            output_dim=action_dim,
            activation=activation,
            init_seed=init_seed
        )
        return cls(context_length=context_length, mlp=mlp, train=train or TrainConfig(), folds=folds)

    def validate(self, dataset=None):

        if int(self.context_length) != self.context_length or self.context_length < 1:
            raise ConfigurationError(f'Copycat context_length must be a positive integer, got {self.context_length}')

        if int(self.folds) != self.folds or self.folds < 1:
            raise ConfigurationError(f'Copycat folds must be a positive integer, got {self.folds}')

        self.mlp.validate()
        self.train.validate()

        if dataset is None:
            return

        if dataset.context_length < self.context_length:
            raise ConfigurationError(f'Dataset carries {dataset.context_length} past actions, copycat needs {self.context_length}')

        if self.mlp.input_dim != self.context_length * dataset.action_dim:
            raise ConfigurationError(f'Copycat input_dim {self.mlp.input_dim} != {self.context_length} x {dataset.action_dim}')

        if self.mlp.output_dim != dataset.action_dim:
            raise ConfigurationError(f'Copycat output_dim {self.mlp.output_dim} != action_dim {dataset.action_dim}')

        if self.folds > 1 and self.folds > dataset.n_trajectories:
            raise ConfigurationError(f'{self.folds} copycat folds but only {dataset.n_trajectories} trajectories')

    def to_dict(self):
        return {
            'context_length': self.context_length,
            'mlp': self.mlp.to_dict(),
            'train': self.train.to_dict(),
            'folds': self.folds
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            context_length=int(d['context_length']),
            mlp=MlpSpec.from_dict(d['mlp']),
            train=TrainConfig.from_dict(d.get('train', {})),
            folds=int(d.get('folds', 1))
        )


@dataclass
class CopycatFit:
    """
        One model per fold; fold_of_trajectory maps every training trajectory to its fold
    """
    models: List
    spec: CopycatSpec
    fold_of_trajectory: Dict[int, int]
    loss_traces: List[List[float]] = field(default_factory=list)

    @property
    def n_folds(self):
        return len(self.models)


@dataclass
class ApeTable:
    ape: np.ndarray
    folds: np.ndarray
    trajectory_ids: np.ndarray
    step_indices: np.ndarray
    context_padded: np.ndarray

    def __len__(self):
        return int(self.ape.shape[0])

    def summary(self):
        if len(self) == 0:
            return {'n': 0}
        return {
            'n': len(self),
            'mean': float(np.mean(self.ape)),
            'median': float(np.median(self.ape)),
            'p90': float(np.percentile(self.ape, 90)),
            'max': float(np.max(self.ape)),
            'padded_fraction': float(np.mean(self.context_padded))
        }

    def to_frame(self):
        return pd.DataFrame({
            'sample_id': np.arange(len(self)),
            'trajectory_id': self.trajectory_ids,
            'step': self.step_indices,
            'fold': self.folds,
            'context_padded': self.context_padded,
            'ape': self.ape
        })

    def save_csv(self, out_path):
        self.to_frame().to_csv(out_path, index=False, float_format='%.10g')

    @classmethod
    def load_csv(cls, src_path):
        if not os.path.exists(src_path):
            raise DataError(f'APE table not found at {src_path}')
        frame = pd.read_csv(src_path)
        return cls(
            ape=frame['ape'].to_numpy(dtype=np.float64),
            folds=frame['fold'].to_numpy(dtype=np.int64),
            trajectory_ids=frame['trajectory_id'].to_numpy(dtype=np.int64),
            step_indices=frame['step'].to_numpy(dtype=np.int64),
            context_padded=frame['context_padded'].to_numpy(dtype=bool)
        )

    def check_aligned(self, dataset):
        """
            Raises a ShapeError unless the table scores exactly the samples of dataset, in order
        """
        if len(self) != len(dataset):
            raise ShapeError(f'APE table has {len(self)} rows, dataset has {len(dataset)} samples')
        if not (np.array_equal(self.trajectory_ids, dataset.trajectory_ids) and np.array_equal(self.step_indices, dataset.step_indices)):
            raise ShapeError('APE table is not aligned with the dataset sample order')


def copycat_inputs(dataset, context_length):
    """
        The most recent context_length actions of every sample
    """
    return dataset.contexts[:, :context_length * dataset.action_dim]


def train_copycat(dataset, spec, progress=False):
    """Trains the copycat predictor, one model per cross-validation fold

    Arguments
    ---------
        dataset : Dataset
            Training samples (usually the training split)
        spec : CopycatSpec
        progress : bool

    Returns
    -------
        fit : CopycatFit
    """

    # validate input
    spec.validate(dataset)

    inputs = copycat_inputs(dataset, spec.context_length)
    targets = dataset.targets

    if spec.folds > 1:
        folds = assign_folds(dataset, spec.folds, seed=spec.train.rng_seed).folds
    else:
        folds = np.zeros(len(dataset), dtype=np.int64)

    fold_of_trajectory = {int(t): int(f) for t, f in zip(dataset.trajectory_ids, folds)}

    models, traces = [], []
    for fold in range(spec.folds):

        mask = folds != fold if spec.folds > 1 else np.ones(len(dataset), dtype=bool)
        result = train_supervised(inputs[mask], targets[mask], spec.mlp, spec.train, progress=progress)

        models.append(result.model)
        traces.append(result.loss_trace)
        logger.debug(f'copycat fold {fold}: {int(np.sum(mask))} samples, final loss {result.loss_trace[-1]:.6f}')

    return CopycatFit(models=models, spec=spec, fold_of_trajectory=fold_of_trajectory, loss_traces=traces)


def compute_ape(fit, dataset):
    """Scores every sample of dataset with the copycat: APE = mean over action dimensions of the squared error

    Samples of a training trajectory are scored by the model that did not see its fold.
    Trajectories the fit never saw carry fold -1 and are scored by model 0.

    Returns
    -------
        table : ApeTable
    """

    # validate input
    fit.spec.validate()
    if dataset.context_length < fit.spec.context_length:
        raise ConfigurationError(f'Dataset carries {dataset.context_length} past actions, copycat needs {fit.spec.context_length}')

    folds = np.array([fit.fold_of_trajectory.get(int(t), -1) for t in dataset.trajectory_ids], dtype=np.int64)

    if np.any(folds >= fit.n_folds):
        raise ConfigurationError(f'Dataset references fold {int(folds.max())} but only {fit.n_folds} copycat models')

    inputs = copycat_inputs(dataset, fit.spec.context_length)
    ape = np.zeros(len(dataset))
    model_index = np.where(folds < 0, 0, folds) if fit.n_folds > 1 else np.zeros(len(dataset), dtype=np.int64)

    for m in np.unique(model_index):
        mask = model_index == m
        predictions = forward_batch(fit.models[m], inputs[mask])
        ape[mask] = np.mean((predictions - dataset.targets[mask]) ** 2, axis=1)

    return ApeTable(
        ape=ape,
        folds=folds,
        trajectory_ids=dataset.trajectory_ids.copy(),
        step_indices=dataset.step_indices.copy(),
        context_padded=dataset.context_padded.copy()
    )


def constant_mean_mse(targets):
    """
        MSE of the predictor that always outputs the mean target
    """
    targets = np.asarray(targets, dtype=np.float64)
    return float(np.mean((targets - targets.mean(axis=0)) ** 2))


@dataclass(frozen=True)
class CopycatVerdict:
    eps_cp: float
    reference_mse: float
    copycat_preferred: bool
    margin: float

    def to_dict(self):
        return {
            'eps_cp': self.eps_cp,
            'reference_mse': self.reference_mse,
            'copycat_preferred': self.copycat_preferred,
            'margin': self.margin
        }


def copycat_condition(eps_cp, reference_mse):
    """The copycat solution is preferred by plain BC when the reference MSE strictly exceeds eps_cp

    Arguments
    ---------
        eps_cp : float
            Held-out copycat MSE
        reference_mse : float
            MSE of the solution to compare with

    Returns
    -------
        verdict : CopycatVerdict
    """

    # validate input
    if eps_cp < 0 or reference_mse < 0:
        raise ConfigurationError(f'MSE values must be >= 0, got eps_cp={eps_cp}, reference_mse={reference_mse}')

    return CopycatVerdict(
        eps_cp=float(eps_cp),
        reference_mse=float(reference_mse),
        copycat_preferred=bool(reference_mse > eps_cp),
        margin=float(reference_mse - eps_cp)
    )
