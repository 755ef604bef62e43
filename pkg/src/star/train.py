"""Loss, Adam with the warmup / inverse-square-root schedule, and the
training and evaluation loops."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import ClipRecord, RaggedBatch, collate
from .errors import ConfigError, DataFormatError, NumericError
from .model import StarModel, forward, save_checkpoint
from .tensor import Tape, Tensor


@dataclass
class TrainConfig:
    max_epochs: int = 100
    batch_clips: int = 16
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    warmup_steps: int = 4000
    seed: int = 0
    eval_every: int = 1
    grad_clip: float = 0.0    # 0 disables

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be >= 1")
        if self.batch_clips < 1:
            raise ConfigError("batch_clips must be >= 1")


@dataclass
class TrainState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    best_metric: float = -1.0
    rng: np.random.Generator | None = None


def lr_schedule(d_model: int, step: int, warmup_steps: int) -> float:
    """d^-0.5 * min(step^-0.5, step * warmup^-1.5): linear ramp for the
    first `warmup_steps` steps, inverse-square-root decay after."""
    if step < 1:
        raise ConfigError("lr_schedule is defined for step >= 1")
    return d_model ** -0.5 * min(step ** -0.5, step * warmup_steps ** -1.5)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over clips (one clip = one sample)."""
    b, c = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (b,) or (labels.size and (labels.min() < 0 or labels.max() >= c)):
        raise DataFormatError("labels must be one class id per logit row")
    shift = Tensor(np.max(logits.data, axis=-1, keepdims=True))  # detached
    z = T.sub(logits, shift)
    lse = T.log(T.reduce_sum(T.exp(z), axis=-1))
    onehot = np.zeros((b, c))
    onehot[np.arange(b), labels] = 1.0
    picked = T.reduce_sum(T.mul(z, Tensor(onehot)), axis=-1)
    return T.reduce_mean(T.sub(lse, picked))


def adam_update(model: StarModel, grads: dict[str, np.ndarray],
                state: TrainState, lr: float, cfg: TrainConfig) -> None:
    """One Adam step; replaces the model's parameter tensors."""
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    if cfg.grad_clip > 0.0:
        norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if norm > cfg.grad_clip:
            grads = {k: g * (cfg.grad_clip / norm) for k, g in grads.items()}
    new_params = {}
    for name, p in model.params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / (1.0 - b1 ** t)
        vhat = v / (1.0 - b2 ** t)
        new_params[name] = Tensor(p.data - lr * mhat / (np.sqrt(vhat) + cfg.eps),
                                  requires_grad=True)
    model.params = new_params


def train_step(model: StarModel, state: TrainState, batch: RaggedBatch,
               cfg: TrainConfig) -> float:
    """Forward, backward, Adam update at the scheduled rate.  Returns the
    batch loss; aborts with diagnostics if it is not finite."""
    if state.rng is None:
        state.rng = np.random.Generator(np.random.Philox(cfg.seed))
    with Tape() as tape:
        logits = forward(model, batch, training=True, rng=state.rng)
        loss = cross_entropy(logits, batch.labels)
    loss_val = loss.item()
    if not np.isfinite(loss_val):
        raise NumericError(
            f"non-finite training loss (max logit {np.max(np.abs(logits.data)):.3e})")
    tape.backward(loss)
    grads = {name: tape.grad(p) for name, p in model.params.items()}
    bad = [n for n, g in grads.items() if not np.isfinite(g).all()]
    if bad:
        norms = {n: float(np.abs(grads[n]).max()) for n in bad}
        raise NumericError(f"non-finite gradients in {norms}")
    lr = lr_schedule(model.config.d_model, state.step + 1, cfg.warmup_steps)
    adam_update(model, grads, state, lr, cfg)
    return loss_val


@dataclass
class EvalResult:
    top1: float
    loss: float
    confusion: np.ndarray  # rows = true label, cols = predicted


def evaluate(model: StarModel, clips: list[ClipRecord],
             batch_clips: int = 16) -> EvalResult:
    """Deterministic eval-mode metrics over a clip list."""
    if not clips:
        raise DataFormatError("empty dataset")
    c = model.config.num_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    total_loss = 0.0
    for lo in range(0, len(clips), batch_clips):
        batch = collate(clips[lo:lo + batch_clips],
                        segment_per=model.config.segment_per)
        logits = forward(model, batch, training=False)
        total_loss += cross_entropy(logits, batch.labels).item() * batch.num_clips
        pred = np.argmax(logits.data, axis=-1)
        for truth, guess in zip(batch.labels, pred):
            confusion[truth, guess] += 1
    top1 = float(np.trace(confusion)) / len(clips)
    return EvalResult(top1=top1, loss=total_loss / len(clips), confusion=confusion)


METRICS_HEADER = ["epoch", "step", "lr", "train_loss", "eval_acc"]


def run_training(model: StarModel, clips: list[ClipRecord], cfg: TrainConfig,
                 run_dir: str, eval_clips: list[ClipRecord] | None = None,
                 log=None) -> list[dict]:
    """Train for cfg.max_epochs, logging one metrics row per epoch to
    `<run_dir>/metrics.csv` and keeping best/final checkpoints."""
    if not clips:
        raise DataFormatError("empty dataset")
    os.makedirs(run_dir, exist_ok=True)
    eval_set = eval_clips if eval_clips is not None else clips
    state = TrainState(rng=np.random.Generator(np.random.Philox(cfg.seed)))
    shuffle_rng = np.random.Generator(np.random.Philox([cfg.seed, 1]))
    rows = []
    eval_acc = float("nan")
    with open(os.path.join(run_dir, "metrics.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for epoch in range(1, cfg.max_epochs + 1):
            order = shuffle_rng.permutation(len(clips))
            losses = []
            for lo in range(0, len(order), cfg.batch_clips):
                chunk = [clips[i] for i in order[lo:lo + cfg.batch_clips]]
                batch = collate(chunk, segment_per=model.config.segment_per)
                losses.append(train_step(model, state, batch, cfg))
            train_loss = float(np.mean(losses))
            if epoch % cfg.eval_every == 0 or epoch == cfg.max_epochs:
                result = evaluate(model, eval_set, cfg.batch_clips)
                eval_acc = result.top1
                if eval_acc > state.best_metric:
                    state.best_metric = eval_acc
                    save_checkpoint(model, os.path.join(run_dir, "best.json"))
            lr = lr_schedule(model.config.d_model, state.step, cfg.warmup_steps)
            row = {"epoch": epoch, "step": state.step, "lr": lr,
                   "train_loss": train_loss, "eval_acc": eval_acc}
            rows.append(row)
            writer.writerow([epoch, state.step, repr(lr), repr(train_loss),
                             repr(eval_acc)])
            if log:
                log(f"epoch {epoch:4d}  step {state.step:6d}  "
                    f"loss {train_loss:.4f}  acc {eval_acc:.3f}")
    save_checkpoint(model, os.path.join(run_dir, "final.json"))
    return rows
