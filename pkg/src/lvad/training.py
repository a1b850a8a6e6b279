"""Weakly supervised training loop, evaluation, and checkpointing.

Supervision is video-level only: each bag contributes the binary cross
entropy between its top-k mean snippet score and its label.  Batch gradients
are accumulated one bag at a time (sequences have ragged lengths), each bag
backward pass carrying a 1/batch scale so the accumulated gradient equals
the gradient of the batch mean loss.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward
from .data import FRAMES_PER_SNIPPET, VideoFeatureBag
from .errors import ConfigurationError, ContractError, EvaluationError, NumericError, ParseError
from .metrics import average_precision, threshold_metrics
from .model import ModelParams, init_model_params, model_forward, named_model_params, set_requires_grad
from .scoring import mil_loss, topk_mean

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Everything that determines a training run, seeds included."""

    learning_rate: float = 5e-4
    batch_size: int = 128
    epochs: int = 50
    lr_floor: float = 1e-6
    seed: int = 0
    heads: int = 4
    prefix_dim: int = 64
    adapter_width: int = 256
    dropout: float = 0.1
    curvature: float = -1.0
    layers: int = 2
    slope: float = -2.0
    epsilon: float = 1e-6
    gamma_init: float = 0.0
    gate_off: bool = False
    k: int | None = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0.0 or self.lr_floor < 0.0:
            raise ConfigurationError("TrainConfig: learning rates must be positive")
        if self.lr_floor > self.learning_rate:
            raise ConfigurationError("TrainConfig: lr_floor exceeds the base learning rate")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("TrainConfig: batch_size and epochs must be >= 1")
        if self.k is not None and self.k < 1:
            raise ConfigurationError("TrainConfig: k must be >= 1 when given")


def cosine_lr(epoch: int, config: TrainConfig) -> float:
    """Cosine annealing from the base rate at epoch 0 to the floor at the
    final epoch (a single half period, no restarts)."""
    if epoch < 0 or epoch >= config.epochs:
        raise ContractError(f"cosine_lr: epoch {epoch} outside [0, {config.epochs})")
    if config.epochs == 1:
        return config.learning_rate
    span = config.learning_rate - config.lr_floor
    phase = math.pi * epoch / (config.epochs - 1)
    return config.lr_floor + 0.5 * span * (1.0 + math.cos(phase))


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(named: dict[str, Tensor], state: AdamState, lr: float) -> None:
    state.step += 1
    t = state.step
    for name, tensor in named.items():
        g = tensor.grad
        if g is None:
            continue
        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def init_from_config(d_v: int, d_a: int, config: TrainConfig, rng: np.random.Generator) -> ModelParams:
    return init_model_params(
        d_v,
        d_a,
        heads=config.heads,
        prefix_dim=config.prefix_dim,
        adapter_width=config.adapter_width,
        dropout=config.dropout,
        layers=config.layers,
        epsilon=config.epsilon,
        slope=config.slope,
        gamma_init=config.gamma_init,
        curvature=config.curvature,
        rng=rng,
    )


def bag_loss(params: ModelParams, bag: VideoFeatureBag, config: TrainConfig,
             *, training: bool, rng: np.random.Generator | None) -> Tensor:
    scores = model_forward(
        Tensor(bag.visual), Tensor(bag.audio), params,
        training=training, rng=rng, gate_off=config.gate_off,
    )
    video_score = topk_mean(scores, k=config.k)
    label = Tensor(np.array([[float(bag.label)]]))
    return mil_loss(video_score, label)


def _zero_grads(named: dict[str, Tensor]) -> None:
    for tensor in named.values():
        tensor.grad = None


def train(
    train_bags: list[VideoFeatureBag],
    config: TrainConfig,
    *,
    params: ModelParams | None = None,
    log_path: str | Path | None = None,
) -> tuple[ModelParams, list[dict]]:
    """Train from scratch (or continue ``params``); returns the final
    parameters plus one history row per epoch.

    A single seeded generator drives initialization, epoch shuffles, and
    dropout masks in a fixed consumption order, so a given (corpus, config)
    pair always produces bitwise identical parameters and history.
    """
    if not train_bags:
        raise ContractError("train: empty training split")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_from_config(train_bags[0].visual.shape[1], train_bags[0].audio.shape[1],
                                  config, rng)
    set_requires_grad(params, True)
    named = named_model_params(params)
    adam = AdamState()
    history: list[dict] = []

    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config)
        order = rng.permutation(len(train_bags))
        epoch_losses: list[float] = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            _zero_grads(named)
            for idx in batch:
                loss = bag_loss(params, train_bags[idx], config, training=True, rng=rng)
                value = loss.item()
                if not math.isfinite(value):
                    # rerun with per-op checks on to name the culprit
                    with ad.finite_checks():
                        bag_loss(params, train_bags[idx], config, training=False, rng=None)
                    raise NumericError(f"train: non-finite loss {value} on bag {train_bags[idx].bag_id}")
                epoch_losses.append(value)
                backward(ad.scale(loss, 1.0 / len(batch)))
            adam_step(named, adam, lr)
        history.append({"epoch": epoch, "lr": lr, "loss": float(np.mean(epoch_losses))})

    if log_path is not None:
        write_history(history, log_path)
    return params, history


def write_history(history: list[dict], path: str | Path) -> None:
    """CSV with full-precision (repr) floats, for bitwise comparisons."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "lr"])
        for row in history:
            writer.writerow([row["epoch"], repr(row["loss"]), repr(row["lr"])])


def score_bag(params: ModelParams, bag: VideoFeatureBag, config: TrainConfig) -> np.ndarray:
    """Evaluation-mode snippet scores for one bag, shape (T,)."""
    with ad.no_grad():
        scores = model_forward(Tensor(bag.visual), Tensor(bag.audio), params,
                               gate_off=config.gate_off)
    return scores.data[:, 0].copy()


def frame_scores(snippet_scores: np.ndarray) -> np.ndarray:
    """Broadcast each snippet score onto its frames."""
    return np.repeat(snippet_scores, FRAMES_PER_SNIPPET)


def evaluate(params: ModelParams, bags: list[VideoFeatureBag], config: TrainConfig) -> dict:
    """Frame-level metrics pooled over every bag in the split."""
    if not bags:
        raise EvaluationError("evaluate: empty split")
    all_scores = []
    all_truth = []
    for bag in bags:
        if bag.frame_truth is None:
            raise EvaluationError(f"evaluate: bag {bag.bag_id} has no frame truth")
        all_scores.append(frame_scores(score_bag(params, bag, config)))
        all_truth.append(bag.frame_truth)
    scores = np.concatenate(all_scores)
    truth = np.concatenate(all_truth)
    result = {"average_precision": average_precision(scores, truth), "frames": int(truth.size)}
    result.update(threshold_metrics(scores, truth))
    return result


def write_score_table(params: ModelParams, bags: list[VideoFeatureBag], config: TrainConfig,
                      path: str | Path) -> None:
    """Per-frame score/truth rows for every bag (repr floats)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bag_id", "frame", "score", "truth"])
        for bag in bags:
            frames = frame_scores(score_bag(params, bag, config))
            truth = bag.frame_truth if bag.frame_truth is not None else np.zeros(frames.size, np.uint8)
            for i, (s, y) in enumerate(zip(frames, truth)):
                writer.writerow([bag.bag_id, i, repr(float(s)), int(y)])


def save_checkpoint(path: str | Path, params: ModelParams, config: TrainConfig, epoch: int) -> None:
    arrays = {f"param:{name}": tensor.data for name, tensor in named_model_params(params).items()}
    meta = {
        "version": CHECKPOINT_VERSION,
        "epoch": epoch,
        "config": asdict(config),
        "d_v": params.cfa.w_q.shape[0],
        "d_a": params.cfa.w_k.shape[0],
    }
    np.savez(path, meta=json.dumps(meta, sort_keys=True), **arrays)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, TrainConfig, int]:
    try:
        with np.load(path, allow_pickle=False) as bundle:
            meta = json.loads(str(bundle["meta"]))
            arrays = {key[len("param:"):]: bundle[key] for key in bundle.files if key.startswith("param:")}
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ParseError(f"load_checkpoint: cannot read {path}: {exc}") from None
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"load_checkpoint: unsupported checkpoint version {meta.get('version')}")
    config = TrainConfig(**meta["config"])
    params = init_from_config(meta["d_v"], meta["d_a"], config, np.random.default_rng(config.seed))
    named = named_model_params(params)
    if set(named) != set(arrays):
        raise ParseError("load_checkpoint: parameter names do not match this configuration")
    for name, tensor in named.items():
        if tensor.data.shape != arrays[name].shape:
            raise ParseError(f"load_checkpoint: shape mismatch for {name}")
        tensor.data = arrays[name].astype(np.float64)
    return params, config, meta["epoch"]
