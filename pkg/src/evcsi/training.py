"""Losses, learning-rate schedule, and the training loop.

The base losses compare reconstructed and target eigenvectors through their
stacked real/imag token form.  An optional quantization-compensation term
pulls pre-quantizer symbols toward their bin centers; the dequantized side is
held constant there because the straight-through identity would otherwise
cancel the penalty's gradient exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics, ndiff
from .augment import AugmentConfig, apply_augmentation
from .channelgen import Dataset
from .errors import ConfigurationError, ContractError, NumericError, TrainingError
from .model import (
    ModelConfig,
    ModelWeights,
    autoencode,
    init_model,
    reconstruct_batch,
    resize_bottleneck,
    sample_to_real,
    stack_to_real,
)

LOSS_KINDS = ("cosine", "scoring", "mse")
METRIC_CSV_HEADER = "epoch,lr,train_loss,val_sgcs"


@dataclass(frozen=True)
class StageConfig:
    """One stage of decreasing-bit-width training."""

    bits_total: int
    epochs: int
    loss_kind: str | None = None
    quant_comp_weight: float | None = None

    def __post_init__(self):
        if self.bits_total < 1 or self.epochs < 1:
            raise ConfigurationError("stage bits_total and epochs must be positive")
        if self.loss_kind is not None and self.loss_kind not in LOSS_KINDS:
            raise ConfigurationError(f"loss_kind must be one of {LOSS_KINDS}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    seed: int
    batch_size: int = 64
    lr_max: float = 1e-3
    lr_min: float | None = None  # defaults to lr_max / 100
    warmup_epochs: int = 10
    decay_epochs: int | None = None  # defaults to epochs - warmup_epochs
    loss_kind: str = "cosine"
    quant_comp_weight: float = 0.0
    train_fraction: float = 0.8
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    stages: tuple[StageConfig, ...] = ()

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be positive")
        if self.lr_max <= 0:
            raise ConfigurationError("lr_max must be positive")
        if self.lr_min is not None and not 0 <= self.lr_min <= self.lr_max:
            raise ConfigurationError("lr_min must lie in [0, lr_max]")
        if self.warmup_epochs < 0:
            raise ConfigurationError("warmup_epochs must be nonnegative")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigurationError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.quant_comp_weight < 0:
            raise ConfigurationError("quant_comp_weight must be nonnegative")
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError("train_fraction must lie strictly in (0, 1)")
        if self.stages:
            widths = [s.bits_total for s in self.stages]
            if any(widths[i + 1] >= widths[i] for i in range(len(widths) - 1)):
                raise ConfigurationError("stage bit widths must strictly decrease")

    @property
    def effective_lr_min(self) -> float:
        return self.lr_max / 100.0 if self.lr_min is None else self.lr_min

    def effective_decay(self, epochs: int | None = None) -> int:
        total = self.epochs if epochs is None else epochs
        if self.decay_epochs is not None:
            return self.decay_epochs
        return max(total - self.warmup_epochs, 1)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_sgcs: float

    def to_csv_row(self) -> str:
        return f"{self.epoch},{self.lr:.10g},{self.train_loss:.10g},{self.val_sgcs:.10g}"


# ---------------------------------------------------------------------------
# learning-rate schedule

def lr_at_epoch(epoch: int, cfg: TrainConfig, total_epochs: int | None = None) -> float:
    """Linear warm-up to lr_max, then half-cosine decay to lr_min."""
    total = cfg.epochs if total_epochs is None else total_epochs
    if not 1 <= epoch <= total:
        raise ContractError(f"epoch {epoch} outside [1, {total}]")
    warm = cfg.warmup_epochs
    if warm > 0 and epoch <= warm:
        return (epoch / warm) * cfg.lr_max
    decay = cfg.effective_decay(total)
    t = min(epoch - warm, decay)
    lo = cfg.effective_lr_min
    return lo + 0.5 * (cfg.lr_max - lo) * (1.0 + math.cos(t * math.pi / decay))


# ---------------------------------------------------------------------------
# losses; predictions are graph tensors shaped (batch, n_subband, 2*n_tx)

def _split_complex(pred: ndiff.Tensor, n_tx: int):
    re = ndiff.narrow(pred, pred.ndim - 1, 0, n_tx)
    im = ndiff.narrow(pred, pred.ndim - 1, n_tx, n_tx)
    return re, im


def _inner_products(pred: ndiff.Tensor, target: np.ndarray, n_tx: int):
    """Real/imag parts of w^H w' and both squared norms, per (batch, subband)."""
    t_re = target[..., :n_tx]
    t_im = target[..., n_tx:]
    p_re, p_im = _split_complex(pred, n_tx)
    num_re = ndiff.tensor_sum(ndiff.add(ndiff.mul(p_re, t_re), ndiff.mul(p_im, t_im)), axis=-1)
    num_im = ndiff.tensor_sum(ndiff.sub(ndiff.mul(p_im, t_re), ndiff.mul(p_re, t_im)), axis=-1)
    p_sq = ndiff.tensor_sum(ndiff.add(ndiff.square(p_re), ndiff.square(p_im)), axis=-1)
    t_sq = np.sum(t_re ** 2 + t_im ** 2, axis=-1)
    if np.any(t_sq == 0.0):
        raise ContractError("zero-norm target column in loss")
    return num_re, num_im, p_sq, t_sq


def loss_cosine(pred: ndiff.Tensor, target: np.ndarray) -> ndiff.Tensor:
    """1 - mean |w^H w'| / (||w|| ||w'||); zero iff aligned up to phase."""
    n_tx = target.shape[-1] // 2
    num_re, num_im, p_sq, t_sq = _inner_products(pred, target, n_tx)
    mag = ndiff.sqrt(ndiff.add_scalar(ndiff.add(ndiff.square(num_re), ndiff.square(num_im)), 1e-24))
    denom = ndiff.sqrt(ndiff.mul(p_sq, ndiff.Tensor(t_sq)))
    return ndiff.add_scalar(ndiff.scale(ndiff.mean(ndiff.div(mag, denom)), -1.0), 1.0)


def loss_scoring(pred: ndiff.Tensor, target: np.ndarray) -> ndiff.Tensor:
    """Negative mean squared cosine similarity, i.e. -sgcs of the batch."""
    n_tx = target.shape[-1] // 2
    num_re, num_im, p_sq, t_sq = _inner_products(pred, target, n_tx)
    num_sq = ndiff.add(ndiff.square(num_re), ndiff.square(num_im))
    return ndiff.scale(ndiff.mean(ndiff.div(num_sq, ndiff.mul(p_sq, ndiff.Tensor(t_sq)))), -1.0)


def loss_mse(pred: ndiff.Tensor, target: np.ndarray) -> ndiff.Tensor:
    return ndiff.mean(ndiff.square(ndiff.sub(pred, ndiff.Tensor(target))))


_BASE_LOSSES = {"cosine": loss_cosine, "scoring": loss_scoring, "mse": loss_mse}


def loss_quant_comp(v_pre: ndiff.Tensor, v_post: ndiff.Tensor | np.ndarray,
                    base_kind: str = "mse") -> ndiff.Tensor:
    """Penalty between pre-quantizer symbols and their (detached) bin centers."""
    post = v_post.values if isinstance(v_post, ndiff.Tensor) else np.asarray(v_post)
    if base_kind == "mse":
        return ndiff.mean(ndiff.square(ndiff.sub(v_pre, ndiff.Tensor(post))))
    if base_kind == "nmse":
        err = ndiff.tensor_sum(ndiff.square(ndiff.sub(v_pre, ndiff.Tensor(post))))
        ref = ndiff.tensor_sum(ndiff.square(v_pre))
        return ndiff.div(err, ref)
    raise ConfigurationError(f"unsupported quant compensation base {base_kind!r}")


# ---------------------------------------------------------------------------
# evaluation shared by the epoch log and the eval command

def evaluate(weights: ModelWeights, samples: np.ndarray) -> metrics.EvalReport:
    """Quantized round-trip metrics over a complex sample stack."""
    pred = reconstruct_batch(weights, samples, quantize=True)
    return metrics.eval_report(samples, pred)


# ---------------------------------------------------------------------------
# training loop

def _batch_arrays(dataset: Dataset, indices: np.ndarray, aug: AugmentConfig,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if aug.is_identity:
        stacked = stack_to_real(dataset.samples[indices])
        return stacked, stacked
    inputs = np.empty((len(indices), dataset.n_subband, 2 * dataset.n_tx))
    targets = np.empty_like(inputs)
    for row, i in enumerate(indices):
        sample_in, sample_tgt = apply_augmentation(dataset.sample(int(i)), aug, rng)
        inputs[row] = sample_to_real(sample_in.columns)
        targets[row] = sample_to_real(sample_tgt.columns)
    return inputs, targets


def train_run(dataset: Dataset, train_cfg: TrainConfig, model_cfg: ModelConfig,
              weights: ModelWeights | None = None, epochs: int | None = None,
              loss_kind: str | None = None, quant_weight: float | None = None,
              log_offset: int = 0) -> tuple[ModelWeights, list[EpochLog]]:
    """Train a model (fresh by default) and log one row per epoch."""
    if dataset.n_tx != model_cfg.n_tx or dataset.n_subband != model_cfg.n_subband:
        raise ContractError(
            f"dataset dims ({dataset.n_tx}, {dataset.n_subband}) do not match model config")
    if weights is None:
        weights = init_model(model_cfg, seed=train_cfg.seed)
    total_epochs = train_cfg.epochs if epochs is None else epochs
    kind = train_cfg.loss_kind if loss_kind is None else loss_kind
    lam = train_cfg.quant_comp_weight if quant_weight is None else quant_weight
    base_loss = _BASE_LOSSES[kind]

    split = Dataset(samples=dataset.samples, split_seed=dataset.split_seed,
                    train_fraction=train_cfg.train_fraction)
    train_idx = split.train_indices()
    val_stack = split.val_samples()

    rng = np.random.default_rng(np.random.SeedSequence(train_cfg.seed, spawn_key=(1,)))
    state = ndiff.AdamState()
    logs: list[EpochLog] = []

    for epoch in range(1, total_epochs + 1):
        lr = lr_at_epoch(epoch, train_cfg, total_epochs)
        order = rng.permutation(train_idx)
        losses = []
        for start in range(0, len(order), train_cfg.batch_size):
            batch = order[start:start + train_cfg.batch_size]
            x_in, x_tgt = _batch_arrays(split, batch, train_cfg.augment, rng)
            try:
                out, v_pre, v_post = autoencode(weights, ndiff.Tensor(x_in), quantize=True)
                loss = base_loss(out, x_tgt)
                if lam > 0.0:
                    loss = ndiff.add(loss, ndiff.scale(loss_quant_comp(v_pre, v_post), lam))
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericError("non-finite loss value")
                weights.zero_grads()
                loss.backward()
                ndiff.adam_step(weights.params, weights.grads(), state, lr)
            except NumericError as exc:
                raise TrainingError(f"epoch {epoch + log_offset}: {exc}",
                                    epoch=epoch + log_offset) from exc
            losses.append(value)
        val = evaluate(weights, val_stack).sgcs if len(val_stack) else float("nan")
        logs.append(EpochLog(epoch=epoch + log_offset, lr=lr,
                             train_loss=float(np.mean(losses)), val_sgcs=val))
    return weights, logs


def staged_train(dataset: Dataset, train_cfg: TrainConfig, model_cfg: ModelConfig
                 ) -> tuple[ModelWeights, list[EpochLog]]:
    """Train through stages of strictly decreasing bit width.

    Between stages only the bottleneck-adjacent layers are re-initialized;
    everything else carries over bit-exactly.
    """
    stages = train_cfg.stages
    if not stages:
        raise ConfigurationError("staged_train requires at least one stage")
    weights: ModelWeights | None = None
    logs: list[EpochLog] = []
    offset = 0
    for idx, stage in enumerate(stages):
        cfg = replace(model_cfg, bits_total=stage.bits_total)
        if weights is None:
            weights = init_model(cfg, seed=train_cfg.seed)
        else:
            weights = resize_bottleneck(weights, stage.bits_total,
                                        seed=train_cfg.seed + idx)
        weights, stage_logs = train_run(
            dataset, train_cfg, cfg, weights=weights, epochs=stage.epochs,
            loss_kind=stage.loss_kind, quant_weight=stage.quant_comp_weight,
            log_offset=offset)
        logs.extend(stage_logs)
        offset += stage.epochs
    return weights, logs


def save_metric_log(logs: list[EpochLog], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(METRIC_CSV_HEADER + "\n")
        for row in logs:
            fh.write(row.to_csv_row() + "\n")
