"""End-to-end optimization of the decomposed classifier.

The loss is mean cross-entropy over dot-product logits.  Gradients are
analytic and flow through the bind -> bundle -> score pipeline back to
the latents and the bundling head; the frozen projectors and encoder are
never touched.

Writing ``u = h*h`` and ``basis_m`` for the bound-path factor of path m,
the logits are ``s_c = sum_m head[c,m] * <basis_m, u>``.  With softmax
residual ``g_c = p_c - 1{c==y}`` (batch-averaged):

* d head[c,m]   = g_c * <basis_m, u>
* d basis_m     = (sum_c g_c head[c,m]) * u
* d channel[i,l] = sum over paths with m_i == l of
                   d basis_m * (product of the other layers' channels)
* d latent[i,l] = d channel[i,l] @ projector_i^T

Gradient accumulation happens at the channel level, so the projector
matmuls run once per optimizer step rather than once per microbatch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ChannelBank,
    ModelConfig,
    ModelParams,
    check_param_shapes,
    init_params,
    layer_index_arrays,
    materialize_channels,
    materialize_projectors,
)
from .ops import derive_seed, rng_from_seed


class TrainingError(RuntimeError):
    """Non-finite intermediate encountered during training."""


class TrainingDiverged(TrainingError):
    """Loss went non-finite; carries the last finite checkpoint."""

    def __init__(self, message: str, last_good: ModelParams | None, history: list):
        super().__init__(message)
        self.last_good = last_good
        self.history = history


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 5e-5
    epochs: int = 1000
    batch_size: int = 1024
    microbatch_size: int = 128
    sigma_init: float = 1.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    shuffle_seed: int | None = None
    dtype: str = "float32"
    decay_latents: bool = True
    decay_head: bool = True
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1 or self.microbatch_size < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class Gradients:
    d_latents: list[np.ndarray]
    d_head: np.ndarray


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """-log softmax at *label*, via max-shifted log-sum-exp."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    shifted = logits - logits.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def softmax_batch(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def batch_cross_entropy(scores: np.ndarray, labels: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - scores.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(lse - shifted[np.arange(len(labels)), labels]))


def _layer_complements(gathered: list[np.ndarray]) -> list[np.ndarray]:
    """For each layer, the product over all *other* layers' gathered
    channels, per path (prefix*suffix products)."""
    n = len(gathered)
    if n == 1:
        return [np.ones_like(gathered[0])]
    prefix = [None] * n
    suffix = [None] * n
    prefix[0] = np.ones_like(gathered[0])
    for i in range(1, n):
        prefix[i] = prefix[i - 1] * gathered[i - 1]
    suffix[n - 1] = np.ones_like(gathered[0])
    for i in range(n - 2, -1, -1):
        suffix[i] = suffix[i + 1] * gathered[i + 1]
    return [prefix[i] * suffix[i] for i in range(n)]


def _microbatch_stats(h: np.ndarray, labels: np.ndarray, basis: np.ndarray, head: np.ndarray):
    """Forward + residuals for one microbatch.

    Returns (loss, num_correct, d_head_sum, d_basis_sum) where the grad
    terms are sums over samples (caller divides by the batch size).
    """
    u = h * h
    t = u @ basis.T  # (b, num_paths)
    scores = t @ head.T  # (b, num_classes)
    if not np.isfinite(scores).all():
        raise TrainingError(
            f"non-finite logits in microbatch (|h|max={np.abs(h).max():.3g}, "
            f"|head|max={np.abs(head).max():.3g})"
        )
    probs = softmax_batch(scores)
    loss_sum = batch_cross_entropy(scores, labels) * len(labels)
    correct = int((np.argmax(scores, axis=1) == labels).sum())
    resid = probs
    resid[np.arange(len(labels)), labels] -= 1.0
    resid = resid.astype(h.dtype, copy=False)
    d_head_sum = resid.T @ t
    d_basis_sum = (resid @ head).T @ u
    return loss_sum, correct, d_head_sum, d_basis_sum


def _channel_grads_from_basis(
    d_basis: np.ndarray, bank: ChannelBank, idx: list[np.ndarray]
) -> list[np.ndarray]:
    gathered = [bank.channels[i][idx[i]] for i in range(len(bank.channels))]
    complements = _layer_complements(gathered)
    d_channels = []
    for i, ch in enumerate(bank.channels):
        d_ch = np.zeros_like(ch)
        np.add.at(d_ch, idx[i], d_basis * complements[i])
        d_channels.append(d_ch)
    return d_channels


def backward(
    h_batch: np.ndarray,
    labels: np.ndarray,
    params: ModelParams,
    projectors: list[np.ndarray],
) -> Gradients:
    """Analytic gradient of the mean cross-entropy over the batch."""
    h_batch = np.asarray(h_batch)
    labels = np.asarray(labels)
    bank = materialize_channels(params, projectors)
    idx = layer_index_arrays(bank.channels_per_layer)
    from .model import path_basis

    basis = path_basis(bank)
    _, _, d_head_sum, d_basis_sum = _microbatch_stats(h_batch, labels, basis, params.head)
    b = len(labels)
    d_head = d_head_sum / b
    d_channels = _channel_grads_from_basis(d_basis_sum / b, bank, idx)
    d_latents = [d_ch @ proj.T for d_ch, proj in zip(d_channels, projectors)]
    return Gradients(d_latents=d_latents, d_head=d_head)


def batch_loss(
    h_batch: np.ndarray,
    labels: np.ndarray,
    params: ModelParams,
    projectors: list[np.ndarray],
) -> float:
    """Mean cross-entropy of the batch; the finite-difference oracle
    pairs this with :func:`backward`."""
    from .model import path_basis

    bank = materialize_channels(params, projectors)
    u = np.asarray(h_batch) * np.asarray(h_batch)
    t = u @ path_basis(bank).T
    scores = t @ params.head.T
    return batch_cross_entropy(scores, np.asarray(labels))


class AdamW:
    """Decoupled weight-decay Adam over a ModelParams pytree.

    Update: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p), with
    bias-corrected moments.  Decay can be switched off per group.
    """

    def __init__(
        self,
        learning_rate: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        decay_latents: bool = True,
        decay_head: bool = True,
    ):
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.decay_latents = decay_latents
        self.decay_head = decay_head
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def _flat(self, params: ModelParams) -> list[np.ndarray]:
        return list(params.latents) + [params.head]

    def step(self, params: ModelParams, grads: Gradients) -> None:
        """One in-place update of latents and head."""
        arrays = self._flat(params)
        g_arrays = list(grads.d_latents) + [grads.d_head]
        if self._m is None:
            self._m = [np.zeros_like(a) for a in arrays]
            self._v = [np.zeros_like(a) for a in arrays]
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        n_latents = len(params.latents)
        for k, (p, g) in enumerate(zip(arrays, g_arrays)):
            m = self._m[k]
            v = self._v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            decay = self.decay_latents if k < n_latents else self.decay_head
            if decay and self.weight_decay > 0.0:
                update = update + self.weight_decay * p
            p -= self.learning_rate * update


def adamw_step(params: ModelParams, grads: Gradients, optimizer: AdamW) -> ModelParams:
    """Functional wrapper: returns updated params, leaves input intact."""
    out = params.copy()
    optimizer.step(out, grads)
    return out


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    train_accuracy: float
    test_accuracy: float
    wall_seconds: float


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochStats] = field(default_factory=list)


def train(
    config: ModelConfig,
    train_config: TrainConfig,
    h_train: np.ndarray,
    y_train: np.ndarray,
    h_test: np.ndarray | None = None,
    y_test: np.ndarray | None = None,
    init: ModelParams | None = None,
) -> TrainResult:
    """Run the full optimization loop over pre-encoded hypervectors.

    Each epoch shuffles the data, walks it in batches, and accumulates
    gradients over microbatches before a single optimizer step; the
    accumulated gradient is the exact batch mean regardless of the
    microbatch split.  ``train_accuracy`` in the history is the running
    accuracy of the pre-update forward passes.  A non-finite epoch loss
    aborts with the last finite checkpoint attached to the exception.
    """
    dtype = np.dtype(train_config.dtype)
    h_train = np.asarray(h_train)
    y_train = np.asarray(y_train, dtype=np.int64)
    n = h_train.shape[0]
    if n == 0:
        raise ValueError("empty training set")

    params = init.copy() if init is not None else init_params(config, train_config.sigma_init, dtype=dtype)
    params = params if init is None else params.astype(dtype)
    check_param_shapes(params, config)
    projectors = materialize_projectors(config, dtype=dtype)
    idx = layer_index_arrays(config.channels_per_layer)
    from .model import path_basis

    optimizer = AdamW(
        learning_rate=train_config.learning_rate,
        betas=train_config.betas,
        eps=train_config.eps,
        weight_decay=train_config.weight_decay,
        decay_latents=train_config.decay_latents,
        decay_head=train_config.decay_head,
    )
    shuffle_root = train_config.shuffle_seed if train_config.shuffle_seed is not None else config.seed
    history: list[EpochStats] = []
    last_good = params.copy()
    start = time.perf_counter()

    for epoch in range(train_config.epochs):
        order = rng_from_seed(derive_seed(shuffle_root, "shuffle", epoch)).permutation(n)
        loss_sum = 0.0
        correct = 0
        try:
            for b_start in range(0, n, train_config.batch_size):
                b_idx = order[b_start : b_start + train_config.batch_size]
                b_n = len(b_idx)
                bank = materialize_channels(params, projectors)
                basis = path_basis(bank)
                d_head = np.zeros_like(params.head)
                d_basis = np.zeros_like(basis)
                for m_start in range(0, b_n, train_config.microbatch_size):
                    mb = b_idx[m_start : m_start + train_config.microbatch_size]
                    h = h_train[mb].astype(dtype, copy=False)
                    l_sum, c, dh_sum, db_sum = _microbatch_stats(h, y_train[mb], basis, params.head)
                    loss_sum += l_sum
                    correct += c
                    d_head += dh_sum / b_n
                    d_basis += db_sum / b_n
                d_channels = _channel_grads_from_basis(d_basis, bank, idx)
                d_latents = [d_ch @ proj.T for d_ch, proj in zip(d_channels, projectors)]
                optimizer.step(params, Gradients(d_latents=d_latents, d_head=d_head))
        except TrainingDiverged:
            raise
        except TrainingError as exc:
            raise TrainingDiverged(
                f"training diverged at epoch {epoch}: {exc}", last_good, history
            ) from exc

        mean_loss = loss_sum / n
        if not np.isfinite(mean_loss):
            raise TrainingDiverged(
                f"loss became non-finite at epoch {epoch}", last_good, history
            )
        test_acc = float("nan")
        if h_test is not None and y_test is not None and (epoch + 1) % train_config.eval_every == 0:
            test_acc = evaluate(params, projectors, h_test, y_test, dtype=dtype)
        history.append(
            EpochStats(
                epoch=epoch,
                mean_loss=mean_loss,
                train_accuracy=correct / n,
                test_accuracy=test_acc,
                wall_seconds=time.perf_counter() - start,
            )
        )
        last_good = params.copy()

    return TrainResult(params=params, history=history)


def evaluate(
    params: ModelParams,
    projectors: list[np.ndarray],
    h: np.ndarray,
    labels: np.ndarray,
    dtype=None,
) -> float:
    """Classification accuracy of *params* on pre-encoded data."""
    from .inference import score_batch

    if dtype is not None:
        params = params.astype(dtype)
        h = np.asarray(h).astype(dtype, copy=False)
    bank = materialize_channels(params, projectors)
    scores = score_batch(h, bank, params.head)
    scores = np.where(np.isnan(scores), -np.inf, scores)
    return float((np.argmax(scores, axis=1) == np.asarray(labels)).mean())
