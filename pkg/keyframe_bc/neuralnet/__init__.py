"""
    Small dense feed-forward networks with analytic gradients, Adam and a
    per-sample weighted MSE loss. Used for imitation policies and copycat predictors.
"""

import os
import json
import logging
from collections import namedtuple
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple

import numpy as np
from toolz import partition_all
from tqdm import tqdm

from ..utils.errors import ConfigurationError, ShapeError, NumericError, ParseError

logger = logging.getLogger(os.path.basename(__name__))

# model file format
MODEL_FORMAT = 'keyframe-bc-mlp'
MODEL_FORMAT_VERSION = 1

ACTIVATIONS = ('relu', 'tanh')


Gradients = namedtuple('Gradients', ['weights', 'biases'])


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a dense network

    Hidden layers use `activation`, the output layer is linear.
    """
    input_dim: int
    hidden_dims: Tuple[int, ...]
    output_dim: int
    activation: str = 'relu'
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'hidden_dims', tuple(int(h) for h in self.hidden_dims))

    @property
    def layer_dims(self):
        return (self.input_dim,) + self.hidden_dims + (self.output_dim,)

    def validate(self):

        # dimensions
        for dim in self.layer_dims:
            if int(dim) != dim or dim <= 0:
                raise ConfigurationError(f'Invalid layer dimensions {self.layer_dims}, all must be positive integers')

        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f'Activation must be one of {ACTIVATIONS}, got {self.activation}')

        if self.init_seed < 0 or self.init_seed >= 2**64:
            raise ConfigurationError(f'init_seed must be a 64-bit unsigned integer, got {self.init_seed}')

    def to_dict(self):
        d = asdict(self)
        d['hidden_dims'] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_dim=int(d['input_dim']),
            hidden_dims=tuple(d['hidden_dims']),
            output_dim=int(d['output_dim']),
            activation=d.get('activation', 'relu'),
            init_seed=int(d.get('init_seed', 0))
        )


@dataclass
class MlpModel:
    """Parameters of a dense network

    weights[l] has shape (fan_out, fan_in), biases[l] has shape (fan_out,)
    """
    spec: MlpSpec
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @property
    def n_parameters(self):
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def copy(self):
        return MlpModel(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat_parameters(self):
        """
            Returns all parameters as one vector, layer by layer, weights (row-major) then biases
        """
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            chunks.append(b.ravel())
        return np.concatenate(chunks)

    def with_flat_parameters(self, flat):
        """
            Returns a new model whose parameters are read from a flat vector (inverse of flat_parameters)
        """
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_parameters:
            raise ShapeError(f'Expected {self.n_parameters} parameters, got {flat.size}')

        weights, biases = [], []
        offset = 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[offset:offset + w.size].reshape(w.shape).copy())
            offset += w.size
            biases.append(flat[offset:offset + b.size].copy())
            offset += b.size

        return MlpModel(self.spec, weights, biases)

    def is_finite(self):
        return all(np.all(np.isfinite(w)) and np.all(np.isfinite(b)) for w, b in zip(self.weights, self.biases))


@dataclass
class AdamState:
    first_moment: Gradients
    second_moment: Gradients
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass(frozen=True)
class LrDecay:
    """
        Multiply the learning rate by `factor` when the loss has not reached a new minimum for `patience_iterations`
    """
    factor: float = 0.1
    patience_iterations: int = 1000


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 128
    iterations: int = 3000
    lr_decay: Optional[LrDecay] = None
    rng_seed: int = 0

    def validate(self):

        if not self.learning_rate > 0:
            raise ConfigurationError(f'learning_rate must be > 0, got {self.learning_rate}')

        if int(self.batch_size) != self.batch_size or self.batch_size <= 0:
            raise ConfigurationError(f'batch_size must be a positive integer, got {self.batch_size}')

        if int(self.iterations) != self.iterations or self.iterations <= 0:
            raise ConfigurationError(f'iterations must be a positive integer, got {self.iterations}')

        if self.lr_decay is not None:
            if not 0 < self.lr_decay.factor < 1:
                raise ConfigurationError(f'lr_decay.factor must be in (0,1), got {self.lr_decay.factor}')
            if self.lr_decay.patience_iterations <= 0:
                raise ConfigurationError('lr_decay.patience_iterations must be positive')

        if self.rng_seed < 0 or self.rng_seed >= 2**64:
            raise ConfigurationError(f'rng_seed must be a 64-bit unsigned integer, got {self.rng_seed}')

    def to_dict(self):
        d = asdict(self)
        if self.lr_decay is None:
            d['lr_decay'] = None
        return d

    @classmethod
    def from_dict(cls, d):
        decay = d.get('lr_decay')
        if decay is not None:
            decay = LrDecay(factor=float(decay.get('factor', 0.1)), patience_iterations=int(decay.get('patience_iterations', 1000)))
        return cls(
            learning_rate=float(d.get('learning_rate', 2e-4)),
            batch_size=int(d.get('batch_size', 128)),
            iterations=int(d.get('iterations', 3000)),
            lr_decay=decay,
            rng_seed=int(d.get('rng_seed', 0))
        )


@dataclass
class TrainResult:
    model: MlpModel
    loss_trace: List[float] = field(default_factory=list)
    final_learning_rate: float = 0.0


def init_mlp(spec):
    """Initializes the parameters of a network

    Every weight and bias of a layer with fan-in n is drawn from U(-1/sqrt(n), 1/sqrt(n))
    using a generator seeded with spec.init_seed, so equal specs give equal models.

    Arguments
    ---------
        spec : MlpSpec
            Architecture

    Returns
    -------
        model : MlpModel
    """

    # validate input
    spec.validate()

    rng = np.random.default_rng(spec.init_seed)

    weights, biases = [], []
    dims = spec.layer_dims
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=(fan_out,)))

    return MlpModel(spec, weights, biases)


def _activate(z, activation):
    if activation == 'relu':
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_derivative(z, a, activation):
    if activation == 'relu':
        return (z > 0).astype(np.float64)
    return 1.0 - a * a


def _check_inputs(model, inputs):

    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != model.spec.input_dim:
        raise ShapeError(f'Expected inputs of shape (N, {model.spec.input_dim}), got {inputs.shape}')

    if not np.all(np.isfinite(inputs)):
        raise NumericError('Inputs contain non-finite values')

    return inputs


def _forward_cache(model, inputs):
    """
        Forward pass keeping pre-activations and activations of every layer
    """

    activations = [inputs]
    pre_activations = []

    a = inputs
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        pre_activations.append(z)
        if i < n_layers - 1:
            a = _activate(z, model.spec.activation)
        else:
            a = z
        activations.append(a)

    return pre_activations, activations


def forward_batch(model, inputs):
    """Forward pass on a batch

    Arguments
    ---------
        model : MlpModel
        inputs : np.ndarray
            Shape (N, input_dim)

    Returns
    -------
        outputs : np.ndarray
            Shape (N, output_dim)
    """
    inputs = _check_inputs(model, inputs)
    _, activations = _forward_cache(model, inputs)
    return activations[-1]


def forward(model, input):
    """Forward pass on a single input vector

    Arguments
    ---------
        model : MlpModel
        input : np.ndarray
            Shape (input_dim,)

    Returns
    -------
        output : np.ndarray
            Shape (output_dim,)
    """

    x = np.asarray(input, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.spec.input_dim:
        raise ShapeError(f'Expected input of length {model.spec.input_dim}, got shape {x.shape}')

    return forward_batch(model, x[np.newaxis, :])[0]


def per_sample_errors(model, inputs, targets):
    """
        Returns ||forward(x_i) - y_i||^2 / output_dim for every sample
    """
    outputs = forward_batch(model, inputs)
    targets = np.asarray(targets, dtype=np.float64).reshape(outputs.shape)
    return np.mean((outputs - targets) ** 2, axis=1)


def weighted_mse_backward(model, inputs, targets, weights):
    """Weighted MSE loss and its exact gradients

    loss = sum_i w_i * ||forward(x_i) - y_i||^2 / output_dim, divided by the batch size.

    Arguments
    ---------
        model : MlpModel
        inputs : np.ndarray
            Shape (B, input_dim)
        targets : np.ndarray
            Shape (B, output_dim)
        weights : np.ndarray
            Shape (B,), non-negative

    Returns
    -------
        loss : float
        gradients : Gradients
            Same shapes as model.weights / model.biases
    """

    # validate input
    inputs = _check_inputs(model, inputs)
    batch_size = inputs.shape[0]

    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1 and model.spec.output_dim == 1:
        targets = targets[:, np.newaxis]
    if targets.shape != (batch_size, model.spec.output_dim):
        raise ShapeError(f'Expected targets of shape ({batch_size}, {model.spec.output_dim}), got {targets.shape}')

    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (batch_size,):
        raise ShapeError(f'Expected weights of shape ({batch_size},), got {weights.shape}')

    if not np.all(np.isfinite(targets)):
        raise NumericError('Targets contain non-finite values')
    if not np.all(np.isfinite(weights)):
        raise NumericError('Weights contain non-finite values')
    if np.any(weights < 0):
        raise NumericError('Weights must be non-negative')

    # forward
    pre_activations, activations = _forward_cache(model, inputs)
    residual = activations[-1] - targets
    out_dim = model.spec.output_dim

    errors = np.sum(residual * residual, axis=1) / out_dim
    loss = float(np.dot(weights, errors) / batch_size)

    # backward
    delta = residual * (2.0 * weights / (out_dim * batch_size))[:, np.newaxis]

    n_layers = len(model.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        grad_w[layer] = delta.T @ activations[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer]) * _activation_derivative(
                pre_activations[layer - 1], activations[layer], model.spec.activation
            )

    return loss, Gradients(grad_w, grad_b)


def init_adam(model, beta1=0.9, beta2=0.999, epsilon=1e-8):
    """
        Returns a zeroed Adam state for the model
    """
    zeros = Gradients([np.zeros_like(w) for w in model.weights], [np.zeros_like(b) for b in model.biases])
    zeros2 = Gradients([np.zeros_like(w) for w in model.weights], [np.zeros_like(b) for b in model.biases])
    return AdamState(zeros, zeros2, 0, beta1, beta2, epsilon)


def adam_step(model, gradients, state, learning_rate):
    """Applies one bias-corrected Adam update

    Arguments
    ---------
        model : MlpModel
        gradients : Gradients
        state : AdamState
        learning_rate : float

    Returns
    -------
        model : MlpModel
            New model, the input model is not modified
        state : AdamState
            New state with step_count + 1
    """

    # validate input
    for g, p in zip(gradients.weights + gradients.biases, model.weights + model.biases):
        if g.shape != p.shape:
            raise ShapeError(f'Gradient shape {g.shape} does not match parameter shape {p.shape}')
        if not np.all(np.isfinite(g)):
            raise NumericError('Gradients contain non-finite values')

    t = state.step_count + 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t

    def update(params, grads, m_prev, v_prev):
        new_params, new_m, new_v = [], [], []
        for p, g, m, v in zip(params, grads, m_prev, v_prev):
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            m_hat = m / correction1
            v_hat = v / correction2
            new_params.append(p - learning_rate * m_hat / (np.sqrt(v_hat) + eps))
            new_m.append(m)
            new_v.append(v)
        return new_params, new_m, new_v

    weights, m_w, v_w = update(model.weights, gradients.weights, state.first_moment.weights, state.second_moment.weights)
    biases, m_b, v_b = update(model.biases, gradients.biases, state.first_moment.biases, state.second_moment.biases)

    new_state = AdamState(Gradients(m_w, m_b), Gradients(v_w, v_b), t, b1, b2, eps)

    return MlpModel(model.spec, weights, biases), new_state


def minibatch_indices(n_samples, batch_size, iterations, rng):
    """Yields `iterations` index batches walking through seeded shuffles of range(n_samples)

    The last chunk of a shuffle can be smaller than batch_size; a new shuffle starts after it.
    """

    produced = 0
    while produced < iterations:
        order = rng.permutation(n_samples)
        for batch in partition_all(batch_size, order):
            yield np.asarray(batch, dtype=np.int64)
            produced += 1
            if produced >= iterations:
                return


def train_supervised(inputs, targets, spec, config, weights=None, weight_fn=None, batch_transform=None, init_model=None, progress=False):
    """Minibatch Adam training of a network on a (weighted) MSE objective

    Arguments
    ---------
        inputs : np.ndarray
            Shape (N, input_dim)
        targets : np.ndarray
            Shape (N, output_dim)
        spec : MlpSpec
        config : TrainConfig
        weights : np.ndarray
            Optional fixed per-sample weight table, shape (N,)
        weight_fn : callable
            Optional hook weight_fn(batch_indices) -> batch weights, called for every minibatch.
            Takes precedence over `weights`.
        batch_transform : callable
            Optional hook batch_transform(batch_inputs, rng) -> batch_inputs applied before each step
        init_model : MlpModel
            Starting parameters, defaults to init_mlp(spec)
        progress : bool
            Shows a tqdm bar

    Returns
    -------
        result : TrainResult
            Final model and the per-iteration loss trace
    """

    # validate input
    config.validate()
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, np.newaxis]

    n_samples = inputs.shape[0] if inputs.ndim == 2 else 0
    if n_samples == 0:
        raise ConfigurationError('Cannot train on an empty dataset')

    if targets.shape[0] != n_samples:
        raise ShapeError(f'{n_samples} inputs but {targets.shape[0]} targets')

    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (n_samples,):
            raise ShapeError(f'Expected a weight table of shape ({n_samples},), got {weights.shape}')

    model = init_model.copy() if init_model is not None else init_mlp(spec)
    state = init_adam(model)

    # separate streams for shuffling and for input augmentation
    shuffle_rng = np.random.default_rng([config.rng_seed, 0])
    transform_rng = np.random.default_rng([config.rng_seed, 1])

    learning_rate = config.learning_rate
    best_loss = np.inf
    since_best = 0

    loss_trace = []
    batches = minibatch_indices(n_samples, min(config.batch_size, n_samples), config.iterations, shuffle_rng)
    for batch in tqdm(batches, total=config.iterations, desc='train', disable=not progress, leave=False):

        x = inputs[batch]
        if batch_transform is not None:
            x = batch_transform(x, transform_rng)

        if weight_fn is not None:
            w = np.asarray(weight_fn(batch), dtype=np.float64)
        elif weights is not None:
            w = weights[batch]
        else:
            w = np.ones(len(batch))

        loss, grads = weighted_mse_backward(model, x, targets[batch], w)
        model, state = adam_step(model, grads, state, learning_rate)
        loss_trace.append(loss)

        # plateau decay
        if config.lr_decay is not None:
            if loss < best_loss:
                best_loss = loss
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.lr_decay.patience_iterations:
                    learning_rate *= config.lr_decay.factor
                    since_best = 0
                    logger.debug(f'learning rate decayed to {learning_rate:g} at iteration {len(loss_trace)}')

    if not model.is_finite():
        raise NumericError('Training diverged, parameters are not finite')

    return TrainResult(model, loss_trace, learning_rate)


def model_to_dict(model):
    """
        Serializes a model to the versioned JSON document {format, version, spec, parameters}
    """
    return {
        'format': MODEL_FORMAT,
        'version': MODEL_FORMAT_VERSION,
        'spec': model.spec.to_dict(),
        'parameters': model.flat_parameters().tolist()
    }


def model_from_dict(d):
    """
        Inverse of model_to_dict
    """

    if d.get('format') != MODEL_FORMAT:
        raise ParseError(f'Not a model document (format={d.get("format")})')
    if d.get('version') != MODEL_FORMAT_VERSION:
        raise ParseError(f'Unsupported model version {d.get("version")}')

    spec = MlpSpec.from_dict(d['spec'])
    template = init_mlp(spec)

    return template.with_flat_parameters(np.asarray(d['parameters'], dtype=np.float64))


def save_model(model, out_path):
    """Writes a model as JSON

    Arguments
    ---------
        model : MlpModel
        out_path : str
            Path to the output .json file
    """
    with open(out_path, 'w') as fh:
        json.dump(model_to_dict(model), fh)


def load_model(src_path):
    """
        Loads a model written by save_model
    """

    if not os.path.exists(src_path):
        raise ParseError(f'File not found at {src_path}')

    with open(src_path, 'r') as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f'Invalid JSON in {src_path}: {e}', line_number=e.lineno)

    return model_from_dict(d)
