"""Adam with the max-of-second-moments modification, plus global-norm clipping.

The second-moment denominator uses the running elementwise maximum of the
estimates, so effective step sizes never grow back after a large gradient.
Weight decay is added to the gradient before the moment updates. Bias
correction is applied to the maxed estimate.
"""

from __future__ import annotations

import numpy as np

from .tensor import DimensionError

__all__ = ["NumericFault", "global_norm", "clip_global_norm", "AmsGrad"]


class NumericFault(RuntimeError):
    """Gradients contained NaN or Inf; the update step was aborted."""


def global_norm(grads):
    total = 0.0
    for g in grads:
        if g is not None:
            total += float(np.sum(np.square(g)))
    return float(np.sqrt(total))


def clip_global_norm(grads, max_norm=1.0):
    """Scale all gradients in place so their joint L2 norm is at most max_norm.

    Zero gradients pass through untouched. Scaling is computed as
    g * max_norm / norm so ratios of small integers stay exact.
    """
    for g in grads:
        if g is not None and not np.isfinite(g).all():
            raise NumericFault("non-finite gradient; step aborted")
    total = global_norm(grads)
    if total > max_norm:
        for g in grads:
            if g is not None:
                g *= max_norm
                g /= total
    return grads


class AmsGrad:
    """Optimizer over a {name: Tensor} parameter dict.

    Reads each parameter's ``.grad`` (missing gradients count as zero, so
    weight decay still applies) and updates ``.data`` in place.
    """

    def __init__(self, params, alpha=0.0003, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.00003, clip_norm=1.0):
        self.params = dict(params)
        self.alpha = alpha
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.step_count = 0
        self.first_moment = {k: np.zeros(p.shape) for k, p in self.params.items()}
        self.second_moment = {k: np.zeros(p.shape) for k, p in self.params.items()}
        self.second_moment_max = {k: np.zeros(p.shape) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def gradients(self):
        """Live gradient buffers in parameter order (None when absent)."""
        return [self.params[k].grad for k in self.params]

    def clip(self):
        clip_global_norm(self.gradients(), self.clip_norm)

    def step(self):
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros(p.shape)
            elif g.shape != p.data.shape:
                raise DimensionError(f"gradient shape {g.shape} for parameter {name} of shape {p.data.shape}")
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m = self.first_moment[name]
            v = self.second_moment[name]
            vmax = self.second_moment_max[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            np.maximum(vmax, v, out=vmax)
            p.data -= self.alpha * (m / bias1) / (np.sqrt(vmax / bias2) + self.eps)

    # -- serialization, for exact training resumption -------------------------

    def state_to_json(self):
        return {
            "alpha": self.alpha,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "clip_norm": self.clip_norm,
            "step_count": self.step_count,
            "first_moment": {k: v.reshape(-1).tolist() for k, v in self.first_moment.items()},
            "second_moment": {k: v.reshape(-1).tolist() for k, v in self.second_moment.items()},
            "second_moment_max": {k: v.reshape(-1).tolist() for k, v in self.second_moment_max.items()},
        }

    def state_from_json(self, payload):
        for key in ("alpha", "beta1", "beta2", "eps", "weight_decay", "clip_norm", "step_count"):
            setattr(self, key, payload[key])
        for attr in ("first_moment", "second_moment", "second_moment_max"):
            stored = payload[attr]
            buffers = getattr(self, attr)
            for name, buf in buffers.items():
                if name not in stored:
                    raise DimensionError(f"optimizer state is missing moments for {name}")
                buf[...] = np.asarray(stored[name], dtype=np.float64).reshape(buf.shape)
