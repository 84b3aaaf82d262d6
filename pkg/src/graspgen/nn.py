"""Layers, initialization and the Adam update for the tape engine.

Parameters live in a flat dict name -> Tensor(requires_grad=True). MLPs are
addressed by a prefix; widths are recoverable from the weight shapes, which
is how the architecture report is produced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, matmul, max_along, relu, reshape


def init_linear(rng, fan_in, fan_out):
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias."""
    bound = 1.0 / np.sqrt(fan_in)
    W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = np.zeros(fan_out)
    return W, b


def mlp_init(rng, widths, prefix, params=None):
    """Append linear layers widths[0]->...->widths[-1] to a param dict."""
    if params is None:
        params = {}
    for i in range(len(widths) - 1):
        W, b = init_linear(rng, widths[i], widths[i + 1])
        params[f"{prefix}.W{i}"] = Tensor(W, requires_grad=True)
        params[f"{prefix}.b{i}"] = Tensor(b, requires_grad=True)
    return params


def mlp_layers(params, prefix):
    n = 0
    while f"{prefix}.W{n}" in params:
        n += 1
    return n


def mlp_widths(params, prefix):
    """Layer widths as stored, e.g. (3, 64, 128, 1024)."""
    n = mlp_layers(params, prefix)
    if n == 0:
        return ()
    widths = [params[f"{prefix}.W0"].data.shape[0]]
    for i in range(n):
        widths.append(params[f"{prefix}.W{i}"].data.shape[1])
    return tuple(widths)


def mlp_apply(params, prefix, x, final_relu=False):
    """x @ W + b stacks with ReLU between layers (and after the last if asked)."""
    n = mlp_layers(params, prefix)
    for i in range(n):
        x = matmul(x, params[f"{prefix}.W{i}"]) + params[f"{prefix}.b{i}"]
        if i < n - 1 or final_relu:
            x = relu(x)
    return x


def pointnet_encode(params, prefix, cloud):
    """Shared per-point MLP then max-pool over points: (B, N, 3) -> (B, F).

    Ties in the pool resolve to the lowest point index.
    """
    B, N, C = cloud.shape
    x = reshape(cloud, (B * N, C))
    x = mlp_apply(params, prefix, x, final_relu=True)
    F = x.shape[-1]
    x = reshape(x, (B, N, F))
    return max_along(x, axis=1)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update in place from the stored .grad fields."""
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        mhat = m / (1.0 - beta1**t)
        vhat = v / (1.0 - beta2**t)
        p.data = p.data - lr * mhat / (np.sqrt(vhat) + eps)


def zero_grads(params):
    for p in params.values():
        p.zero_grad()


def adam_state_arrays(state):
    """Flatten an AdamState into checkpoint arrays."""
    out = {}
    for name, a in state.m.items():
        out[f"adam_m.{name}"] = a
    for name, a in state.v.items():
        out[f"adam_v.{name}"] = a
    return out


def adam_state_from_arrays(arrays, t):
    state = AdamState(t=t)
    for key, a in arrays.items():
        if key.startswith("adam_m."):
            state.m[key[len("adam_m.") :]] = a.copy()
        elif key.startswith("adam_v."):
            state.v[key[len("adam_v.") :]] = a.copy()
    return state
