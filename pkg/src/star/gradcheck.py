"""Central finite-difference auditing of the taped gradients.

The relative error of an analytic/numeric gradient pair is
|a - n| / max(|a|, |n|, 1): relative where gradients are large, absolute
below magnitude one so near-zero components do not divide by noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import collate, synth_dataset
from .model import StarConfig, forward, init_model
from .tensor import Tape, Tensor
from .train import cross_entropy

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(loss_fn, tensors: dict[str, Tensor], name: str,
                     step: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences of loss_fn(tensors) w.r.t. tensors[name].

    loss_fn receives the tensor dict and returns a float; the entry under
    `name` is replaced by perturbed copies, one coordinate at a time.
    """
    base = tensors[name].data
    grad = np.zeros_like(base)
    flat_grad = grad.ravel()
    for i in range(base.size):
        probes = []
        for sign in (1.0, -1.0):
            bumped = base.copy()
            bumped.ravel()[i] += sign * step
            probes.append(loss_fn({**tensors, name: Tensor(bumped, requires_grad=True)}))
        flat_grad[i] = (probes[0] - probes[1]) / (2.0 * step)
    return grad


@dataclass
class GradCheckReport:
    tol: float
    worst: float = 0.0
    checked: int = 0
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.worst < self.tol

    def format_table(self, top: int = 10) -> str:
        rows = sorted(self.per_param.items(), key=lambda kv: kv[1], reverse=True)
        lines = [f"{'parameter':<36}{'max rel err':>14}"]
        for name, err in rows[:top]:
            flag = "  FAIL" if err >= self.tol else ""
            lines.append(f"{name:<36}{err:>14.3e}{flag}")
        return "\n".join(lines)


def run_gradcheck(config: StarConfig, seed: int = 0, step: float = DEFAULT_STEP,
                  tol: float = DEFAULT_TOL) -> GradCheckReport:
    """End-to-end check: every model parameter's taped gradient against
    central differences of the eval-mode loss on a 2-clip micro-batch."""
    model = init_model(config)
    clips = synth_dataset(classes=min(2, config.num_classes), clips_per_class=1,
                          len_range=(8, 10), noise_sigma=0.05, seed=seed,
                          two_person_every=2)
    # trim to 3-5 frames so the probe stays fast but keeps a 2-person clip
    for i, clip in enumerate(clips):
        clip.persons = [p[: 3 + i] for p in clip.persons]
    batch = collate(clips, segment_per=config.segment_per)

    def loss_fn(params: dict[str, Tensor]) -> float:
        saved = model.params
        model.params = params
        try:
            return cross_entropy(forward(model, batch, training=False),
                                 batch.labels).item()
        finally:
            model.params = saved

    with Tape() as tape:
        loss = cross_entropy(forward(model, batch, training=False), batch.labels)
    tape.backward(loss)

    report = GradCheckReport(tol=tol)
    for name, p in sorted(model.params.items()):
        analytic = tape.grad(p)
        numeric = numeric_gradient(loss_fn, model.params, name, step=step)
        err = float(relative_error(analytic, numeric).max())
        report.per_param[name] = err
        report.worst = max(report.worst, err)
        report.checked += p.size
    return report
