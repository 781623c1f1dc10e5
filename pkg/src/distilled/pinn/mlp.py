"""Dense tanh network with exact input derivatives up to second order.

Each input direction (r, theta) carries a univariate Taylor jet
(value, first, second) through the layers. For a hidden unit
``h = tanh(z)`` with ``s = 1 - h^2`` the jet rules are

    h1 = s * z1
    h2 = s * z2 + q * z1^2,     q = ds/dz = -2 h s

The reverse pass below differentiates these rules with respect to the
weights, so a loss built from values, slopes and curvatures can be
trained with plain gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_DIRS = 2  # input directions: 0 -> r, 1 -> theta


@dataclass(frozen=True, eq=False)
class Mlp:
    layer_widths: tuple[int, ...]
    weights: tuple[np.ndarray, ...]  # weights[l] has shape (out, in)
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        ws = tuple(np.asarray(w, dtype=float) for w in self.weights)
        bs = tuple(np.asarray(b, dtype=float) for b in self.biases)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        if len(ws) != len(self.layer_widths) - 1 or len(bs) != len(ws):
            raise ValueError("one weight matrix and bias vector per layer transition")
        for l, (w, b) in enumerate(zip(ws, bs)):
            shape = (self.layer_widths[l + 1], self.layer_widths[l])
            if w.shape != shape or b.shape != (shape[0],):
                raise ValueError(f"layer {l}: expected weight {shape}, got {w.shape}")

    @classmethod
    def init(cls, layer_widths=(2, 32, 32, 32, 1), seed: int = 0) -> "Mlp":
        """Glorot-normal weights, zero biases."""
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for fan_in, fan_out in zip(layer_widths[:-1], layer_widths[1:]):
            std = np.sqrt(2.0 / (fan_in + fan_out))
            ws.append(std * rng.standard_normal((fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return cls(tuple(layer_widths), tuple(ws), tuple(bs))

    @classmethod
    def zeros_like(cls, net: "Mlp") -> "Mlp":
        return cls(net.layer_widths, tuple(np.zeros_like(w) for w in net.weights),
                   tuple(np.zeros_like(b) for b in net.biases))

    @property
    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def with_params(self, params: list[np.ndarray]) -> "Mlp":
        k = len(self.weights)
        return Mlp(self.layer_widths, tuple(params[:k]), tuple(params[k:]))

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def from_flat(self, vec: np.ndarray) -> "Mlp":
        out, i = [], 0
        for p in self.params:
            out.append(np.asarray(vec[i:i + p.size], dtype=float).reshape(p.shape))
            i += p.size
        return self.with_params(out)

    def __call__(self, r, theta) -> np.ndarray:
        a = np.stack([np.asarray(r, float).ravel(), np.asarray(theta, float).ravel()], axis=1)
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w.T + b
            if l < last:
                a = np.tanh(a)
        return a[:, 0]

    def jets(self, r, theta) -> "Jets":
        return forward_jets(self, r, theta)[0]

    def to_dict(self) -> dict:
        return {
            "layer_widths": list(self.layer_widths),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        return cls(tuple(d["layer_widths"]), tuple(d["weights"]), tuple(d["biases"]))


@dataclass(frozen=True)
class Jets:
    """Network output and pure input derivatives at a batch of points."""

    value: np.ndarray
    d1: np.ndarray  # (2, N): dy/dr, dy/dtheta
    d2: np.ndarray  # (2, N): d2y/dr2, d2y/dtheta2


@dataclass
class _Tape:
    inputs: list = field(default_factory=list)  # per layer: (a0, a1, a2) fed into it
    hidden: list = field(default_factory=list)  # per hidden layer: (h0, s, q, z1, z2)


def forward_jets(net: Mlp, r, theta) -> tuple[Jets, _Tape]:
    r = np.asarray(r, dtype=float).ravel()
    theta = np.asarray(theta, dtype=float).ravel()
    n = r.size
    a0 = np.stack([r, theta], axis=1)  # (N, in)
    a1 = np.zeros((N_DIRS, n, 2))
    a1[0, :, 0] = 1.0
    a1[1, :, 1] = 1.0
    a2 = np.zeros((N_DIRS, n, 2))
    tape = _Tape()
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        tape.inputs.append((a0, a1, a2))
        z0 = a0 @ w.T + b
        z1 = a1 @ w.T
        z2 = a2 @ w.T
        if l == last:
            a0, a1, a2 = z0, z1, z2
            break
        h0 = np.tanh(z0)
        s = 1.0 - h0 * h0
        q = -2.0 * h0 * s
        tape.hidden.append((h0, s, q, z1, z2))
        a0 = h0
        a1 = s * z1
        a2 = s * z2 + q * z1 * z1
    return Jets(a0[:, 0], a1[:, :, 0], a2[:, :, 0]), tape


def backward_jets(net: Mlp, tape: _Tape, g0, g1, g2) -> list[np.ndarray]:
    """Parameter gradients given adjoints of the output value (N,), slopes (2, N)
    and curvatures (2, N). Returned in ``net.params`` order."""
    n_layers = len(net.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    # adjoints of the current layer's output jets
    A0 = np.asarray(g0, float)[:, None]
    A1 = np.asarray(g1, float)[:, :, None]
    A2 = np.asarray(g2, float)[:, :, None]
    for l in range(n_layers - 1, -1, -1):
        if l < n_layers - 1:
            h0, s, q, z1, z2 = tape.hidden[l]
            dq = -2.0 * s * s - 2.0 * h0 * q  # d q / d z0
            Z1 = A1 * s + 2.0 * A2 * q * z1
            Z2 = A2 * s
            Z0 = A0 * s + np.sum(A1 * z1 * q + A2 * (z2 * q + z1 * z1 * dq), axis=0)
        else:
            Z0, Z1, Z2 = A0, A1, A2
        a0, a1, a2 = tape.inputs[l]
        w = net.weights[l]
        gw[l] = Z0.T @ a0 + np.einsum("dno,dni->oi", Z1, a1) + np.einsum("dno,dni->oi", Z2, a2)
        gb[l] = Z0.sum(axis=0)
        A0 = Z0 @ w
        A1 = Z1 @ w
        A2 = Z2 @ w
    return [*gw, *gb]


@dataclass
class AdamState:
    params: list[np.ndarray]
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def fresh(cls, params) -> "AdamState":
        params = [np.array(p, dtype=float) for p in params]
        return cls(params, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(state: AdamState, grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    """One bias-corrected Adam update; returns a new state."""
    if len(grads) != len(state.params):
        raise ValueError("gradient list does not match parameters")
    t = state.t + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    params, ms, vs = [], [], []
    for p, m, v, g in zip(state.params, state.m, state.v, grads):
        g = np.asarray(g, dtype=float)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        params.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps))
        ms.append(m)
        vs.append(v)
    return AdamState(params, ms, vs, t)
