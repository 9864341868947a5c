"""Parameter containers and the Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Tensor


class Module:
    """Tracks parameters and sub-modules in assignment order."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register(self, name, value):
        setattr(self, name, value)
        return value

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        own = dict(self.named_parameters())
        if strict and set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise KeyError(f"state dict mismatch: missing={missing} unexpected={extra}")
        for name, value in state.items():
            if name not in own:
                continue
            p = own[name]
            if tuple(value.shape) != p.shape:
                raise DimensionError(f"{name}: checkpoint shape {tuple(value.shape)} != parameter shape {p.shape}")
            p.data[...] = value


def uniform_param(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, in_features, out_features, rng, bias=True, dtype=np.float32, zero_init=False):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        if zero_init:
            self.weight = Tensor(np.zeros((in_features, out_features), dtype=dtype), requires_grad=True)
        else:
            self.weight = uniform_param(rng, (in_features, out_features), in_features, dtype)
        if bias:
            if zero_init:
                self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)
            else:
                self.bias = uniform_param(rng, (out_features,), in_features, dtype)
        else:
            self.bias = None

    def __call__(self, x):
        y = T.matmul(x, self.weight) if x.ndim >= 2 else T.matmul(x.reshape(1, -1), self.weight).reshape(-1)
        if self.bias is not None:
            y = y + self.bias
        return y


@dataclass
class AdamState:
    lr: float = 5e-5
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update, in place on ``params`` (NumPy arrays).

    ``None`` gradients are treated as zero.
    """
    if len(params) != len(grads):
        raise DimensionError(f"adam_step: {len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or m.shape != p.shape:
            raise DimensionError(f"adam_step: grad shape {g.shape} != param shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    return params, state


class Adam:
    def __init__(self, params, lr=5e-5, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, betas=tuple(betas), eps=eps)

    def step(self):
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
