"""Adam with bias correction and the linear learning-rate decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from recordgraph.nn.gat import GatModel


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: GatModel) -> "AdamState":
        return cls(model.zeros_like(), model.zeros_like())


def adam_step(model: GatModel, grads: dict[str, np.ndarray], state: AdamState, lr: float) -> tuple[GatModel, AdamState]:
    """Apply one bias-corrected Adam update in place.

    Raises before touching any state if a gradient is missing, mis-shaped or
    non-finite.
    """
    for name, p in model.params.items():
        g = grads.get(name)
        if g is None or g.shape != p.shape:
            raise ValueError(f"gradient for {name} missing or mis-shaped")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in model.params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        buf = np.multiply(g, 1.0 - b1)
        m *= b1
        m += buf
        np.multiply(g, g, out=buf)
        buf *= 1.0 - b2
        v *= b2
        v += buf
        # p -= lr * (m / c1) / (sqrt(v / c2) + eps), without temporaries
        np.divide(v, c2, out=buf)
        np.sqrt(buf, out=buf)
        buf += state.eps
        np.divide(m, buf, out=buf)
        buf *= lr / c1
        p -= buf
        if not np.isfinite(p).all():
            raise FloatingPointError(f"parameter {name} became non-finite")
    model.version += 1
    return model, state


def lr_at(epoch: int, total_epochs: int = 150, base_lr: float = 1e-3) -> float:
    """Linear decay from ``base_lr`` at epoch 0 to 0 at ``total_epochs``."""
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    return base_lr * (1.0 - epoch / total_epochs)
