"""Fully-connected regression network written directly in numpy, plus an
ordinary-least-squares baseline and regression metrics.

The network standardises its inputs and targets with statistics stored on
the model, so callers always pass raw features and receive rotations in
radians.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .datagen import N_FEATURES, N_TARGETS, Dataset, Sample
from .errors import DivergenceError, SingularFitError, UndefinedR2Error

ACTIVATIONS = ("linear", "relu")
F32 = np.float32
# Targets are standardised, so predicting zero already scores 1.0.
DIVERGENCE_LOSS = 1e8


@dataclass
class Layer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "relu"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class MlpModel:
    layers: list[Layer]
    in_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES, F32))
    in_std: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES, F32))
    out_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_TARGETS, F32))
    out_std: np.ndarray = field(default_factory=lambda: np.ones(N_TARGETS, F32))

    def __post_init__(self):
        for layer in self.layers:
            layer.weight = np.ascontiguousarray(layer.weight, dtype=F32)
            layer.bias = np.ascontiguousarray(layer.bias, dtype=F32)
        for name in ("in_mean", "in_std", "out_mean", "out_std"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=F32))
        self.validate()

    def validate(self) -> None:
        if not self.layers:
            raise ValueError("model has no layers")
        if self.layers[0].in_dim != N_FEATURES or self.layers[-1].out_dim != N_TARGETS:
            raise ValueError(f"model must map {N_FEATURES} features to {N_TARGETS} outputs")
        for k, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer {k} emits {a.out_dim} values but layer {k + 1} "
                                 f"expects {b.in_dim}")
        for k, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {k}: unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.out_dim,):
                raise ValueError(f"layer {k}: bias shape {layer.bias.shape}")
        if self.layers[-1].activation != "linear":
            raise ValueError("output layer must be linear")
        if self.in_mean.shape != (N_FEATURES,) or self.in_std.shape != (N_FEATURES,):
            raise ValueError("input normalisation must have one entry per feature")
        if self.out_mean.shape != (N_TARGETS,) or self.out_std.shape != (N_TARGETS,):
            raise ValueError("output normalisation must have one entry per target")
        if (self.in_std <= 0).any() or (self.out_std <= 0).any():
            raise ValueError("normalisation stddevs must be positive")

    @property
    def hidden_dims(self) -> list[int]:
        return [layer.out_dim for layer in self.layers[:-1]]

    def n_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0
    hidden_dims: tuple[int, ...] = (64, 64, 64)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)


def init_mlp(hidden_dims=(64, 64, 64), seed: int = 0) -> MlpModel:
    """Glorot-uniform weights, zero biases, identity normalisation."""
    hidden_dims = list(hidden_dims)
    if not hidden_dims or any(h < 1 for h in hidden_dims):
        raise ValueError(f"hidden_dims must be a non-empty list of positive sizes, got {hidden_dims}")
    rng = np.random.default_rng(seed)
    dims = [N_FEATURES, *hidden_dims, N_TARGETS]
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        a = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-a, a, size=(fan_out, fan_in)).astype(F32)
        act = "linear" if k == len(dims) - 2 else "relu"
        layers.append(Layer(w, np.zeros(fan_out, F32), act))
    return MlpModel(layers)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    return np.maximum(z, 0) if activation == "relu" else z


def run_layers(layers: list[Layer], h: np.ndarray) -> np.ndarray:
    for layer in layers:
        h = _activate(h @ layer.weight.T + layer.bias, layer.activation)
    return h


def forward(m: MlpModel, features) -> np.ndarray:
    """Predict rotations for one feature vector ``(7,)`` or a batch ``(n, 7)``."""
    x = np.asarray(features, dtype=F32)
    single = x.ndim == 1
    h = (x.reshape(-1, N_FEATURES) - m.in_mean) / m.in_std
    y = run_layers(m.layers, h) * m.out_std + m.out_mean
    return y[0] if single else y


def _loss_and_grads(layers, h0, target):
    """Mean squared error over every element of ``target`` and its parameter gradients.

    Works in whatever dtype the inputs carry.
    """
    acts = [h0]
    for layer in layers:
        acts.append(_activate(acts[-1] @ layer.weight.T + layer.bias, layer.activation))
    diff = acts[-1] - target
    loss = float(np.mean(diff * diff))
    delta = (2.0 / diff.size) * diff
    grads = [None] * len(layers)
    for k in range(len(layers) - 1, -1, -1):
        layer = layers[k]
        if layer.activation == "relu":
            delta = delta * (acts[k + 1] > 0)
        grads[k] = (delta.T @ acts[k], delta.sum(axis=0))
        if k:
            delta = delta @ layer.weight
    return loss, grads


def _zscore_stats(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    # a constant column carries no information; leave it unscaled
    std = np.where(std > 0, std, 1.0)
    return mean.astype(F32), std.astype(F32)


def standardize(m: MlpModel, targets) -> np.ndarray:
    return (np.asarray(targets, dtype=F32) - m.out_mean) / m.out_std


def destandardize(m: MlpModel, z) -> np.ndarray:
    return np.asarray(z, dtype=F32) * m.out_std + m.out_mean


def train(m: MlpModel, train_set: Dataset, cfg: TrainConfig,
          history: list[float] | None = None) -> MlpModel:
    """Fit a copy of ``m`` by Adam on standardised MSE and return it.

    Epoch-mean losses are appended to ``history`` when given.
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    m = m.copy()
    m.in_mean, m.in_std = _zscore_stats(train_set.features)
    m.out_mean, m.out_std = _zscore_stats(train_set.targets)
    X = ((train_set.features.astype(F32) - m.in_mean) / m.in_std).astype(F32)
    Y = standardize(m, train_set.targets)

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = cfg.learning_rate
    params = [p for layer in m.layers for p in (layer.weight, layer.bias)]
    mom = [np.zeros_like(p) for p in params]
    vel = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(cfg.seed)
    n = len(X)
    step = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, cfg.epochs + 1):
            perm = rng.permutation(n)
            total = 0.0
            for lo in range(0, n, cfg.batch_size):
                idx = perm[lo:lo + cfg.batch_size]
                loss, grads = _loss_and_grads(m.layers, X[idx], Y[idx])
                if not loss < DIVERGENCE_LOSS:
                    raise DivergenceError(epoch, loss)
                total += loss * len(idx)
                step += 1
                corr1 = 1 - beta1 ** step
                corr2 = 1 - beta2 ** step
                flat = [g for pair in grads for g in pair]
                for p, g, mo, ve in zip(params, flat, mom, vel):
                    mo *= beta1
                    mo += (1 - beta1) * g
                    ve *= beta2
                    ve += (1 - beta2) * (g * g)
                    p -= (lr * (mo / corr1) / (np.sqrt(ve / corr2) + eps)).astype(F32)
            epoch_loss = total / n
            if not epoch_loss < DIVERGENCE_LOSS:
                raise DivergenceError(epoch, epoch_loss)
            if history is not None:
                history.append(epoch_loss)
    if not all(np.isfinite(p).all() for p in params):
        raise DivergenceError(cfg.epochs, float("nan"))
    return m


def gradient_check(m: MlpModel, sample: Sample, eps: float = 1e-4) -> float:
    """Largest relative gap between backprop and central differences.

    Both sides run in float64 on the per-sample standardised MSE.
    """
    if not 1e-5 <= eps <= 1e-2:
        raise ValueError(f"eps must lie in [1e-5, 1e-2], got {eps}")
    feats, targs = sample
    x = ((np.asarray(feats, np.float64) - m.in_mean.astype(np.float64))
         / m.in_std.astype(np.float64)).reshape(1, -1)
    y = ((np.asarray(targs, np.float64) - m.out_mean.astype(np.float64))
         / m.out_std.astype(np.float64)).reshape(1, -1)
    layers = [Layer(layer.weight.astype(np.float64), layer.bias.astype(np.float64),
                    layer.activation) for layer in m.layers]
    _, grads = _loss_and_grads(layers, x, y)

    worst = 0.0
    for layer, pair in zip(layers, grads):
        for p, g in zip((layer.weight, layer.bias), pair):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up, _ = _loss_only(layers, x, y)
                flat[i] = orig - eps
                down, _ = _loss_only(layers, x, y)
                flat[i] = orig
                num = (up - down) / (2 * eps)
                denom = max(abs(num) + abs(gflat[i]), 1e-8)
                worst = max(worst, abs(num - gflat[i]) / denom)
    return worst


def _loss_only(layers, x, y):
    h = run_layers(layers, x)
    d = h - y
    return float(np.mean(d * d)), h


# --- linear baseline -------------------------------------------------------

@dataclass
class LinearModel:
    coef: np.ndarray  # (n_outputs, n_features)
    intercept: np.ndarray  # (n_outputs,)

    def predict(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        return x @ self.coef.T + self.intercept


def _merge_duplicate_columns(X: np.ndarray) -> list[list[int]]:
    groups: list[list[int]] = []
    for j in range(X.shape[1]):
        for g in groups:
            if np.array_equal(X[:, g[0]], X[:, j]):
                g.append(j)
                break
        else:
            groups.append([j])
    return groups


def fit_linear(features, targets=None) -> LinearModel:
    """Ordinary least squares per output through the normal equations.

    Accepts a :class:`Dataset` or a pair of arrays.  Feature columns that are
    exact copies of one another (``B = D = H`` on cubic rigs) are fitted as one
    column and their coefficient is shared equally, which is the minimum-norm
    least-squares solution.  Any other rank deficiency raises
    :class:`SingularFitError`.
    """
    if isinstance(features, Dataset):
        X, Y = features.features, features.targets
    else:
        X = np.asarray(features, dtype=np.float64)
        Y = np.asarray(targets, dtype=np.float64)
    X = X.reshape(len(X), -1)
    Y = Y.reshape(len(Y), -1)
    n, p = X.shape
    groups = _merge_duplicate_columns(X)
    Xr = np.column_stack([X[:, g[0]] for g in groups])
    if n <= Xr.shape[1]:
        raise SingularFitError(f"{n} rows cannot determine {Xr.shape[1]} coefficients plus intercept")

    mu = Xr.mean(axis=0)
    sd = Xr.std(axis=0)
    if (sd == 0).any():
        raise SingularFitError("a feature column is constant; it is collinear with the intercept")
    Z = (Xr - mu) / sd
    ybar = Y.mean(axis=0)
    gram = Z.T @ Z
    if np.linalg.cond(gram) > 1e12:
        raise SingularFitError("design matrix is rank deficient")
    try:
        chol = scipy.linalg.cho_factor(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularFitError(f"normal equations are not positive definite: {exc}") from None
    beta = scipy.linalg.cho_solve(chol, Z.T @ (Y - ybar))  # (k, outputs)

    coef_r = (beta / sd[:, None]).T  # (outputs, k)
    intercept = ybar - coef_r @ mu
    coef = np.zeros((Y.shape[1], p))
    for g, c in zip(groups, coef_r.T):
        coef[:, g] = (c / len(g))[:, None]
    return LinearModel(coef, intercept)


# --- metrics ---------------------------------------------------------------

@dataclass
class Metrics:
    r2: np.ndarray
    mse: np.ndarray
    y_true: np.ndarray  # (n, outputs)
    error: np.ndarray  # y_true - y_pred

    def residual_csv(self, output: int) -> str:
        rows = ["y_true,error"]
        rows.extend(f"{t:.17g},{e:.17g}" for t, e in
                    zip(self.y_true[:, output].tolist(), self.error[:, output].tolist()))
        return "\n".join(rows) + "\n"


def r2_scores(y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.float64).reshape(len(y_true), -1)
    y_pred = np.asarray(y_pred, dtype=np.float64).reshape(y_true.shape)
    ss_res = ((y_true - y_pred) ** 2).sum(axis=0)
    ss_tot = ((y_true - y_true.mean(axis=0)) ** 2).sum(axis=0)
    for j, s in enumerate(ss_tot):
        if s == 0:
            raise UndefinedR2Error(j)
    return 1.0 - ss_res / ss_tot


def evaluate(predict_fn: Callable[[np.ndarray], np.ndarray], test: Dataset) -> Metrics:
    """Score ``predict_fn`` (batch of raw features -> rotations) on ``test``."""
    if len(test) == 0:
        raise ValueError("test set is empty")
    y = test.targets
    pred = np.asarray(predict_fn(test.features), dtype=np.float64).reshape(y.shape)
    err = y - pred
    return Metrics(r2_scores(y, pred), (err ** 2).mean(axis=0), y.copy(), err)
