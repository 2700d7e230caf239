"""Numeric building blocks: LSTM forward/backward, linear layer, Adam.

Everything runs in float64 numpy on a single thread, so training and
gradient checks are deterministic and finite differences stay clean.
Gate order throughout is [input, forget, output, candidate].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmCache:
    X: np.ndarray          # (B, L, d) inputs
    gates: np.ndarray      # (L, B, 4H) activated gates
    cells: np.ndarray      # (L+1, B, H) cell states, index 0 is the initial state
    hiddens: np.ndarray    # (L+1, B, H) hidden states
    tanh_cells: np.ndarray # (L, B, H)


def lstm_forward(
    X: np.ndarray, Wx: np.ndarray, Wh: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, LstmCache]:
    """Run one LSTM direction over a batch, returning the final hidden state.

    Padded steps are processed like any other step (no masking of the
    recurrence); hidden outputs are tanh-gated and therefore in (-1, 1).
    """
    B, L, _ = X.shape
    H = Wh.shape[0]
    gates = np.empty((L, B, 4 * H))
    cells = np.zeros((L + 1, B, H))
    hiddens = np.zeros((L + 1, B, H))
    tanh_cells = np.empty((L, B, H))
    for t in range(L):
        z = X[:, t] @ Wx + hiddens[t] @ Wh + b
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H : 2 * H])
        o = sigmoid(z[:, 2 * H : 3 * H])
        g = np.tanh(z[:, 3 * H :])
        cells[t + 1] = f * cells[t] + i * g
        tanh_cells[t] = np.tanh(cells[t + 1])
        hiddens[t + 1] = o * tanh_cells[t]
        gates[t, :, :H] = i
        gates[t, :, H : 2 * H] = f
        gates[t, :, 2 * H : 3 * H] = o
        gates[t, :, 3 * H :] = g
    return hiddens[L], LstmCache(X, gates, cells, hiddens, tanh_cells)


def lstm_backward(
    dh_last: np.ndarray, cache: LstmCache, Wx: np.ndarray, Wh: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagation through time for one direction.

    Takes the gradient w.r.t. the final hidden state only and returns
    (dX, dWx, dWh, db).
    """
    B, L, _ = cache.X.shape
    H = Wh.shape[0]
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(4 * H)
    dX = np.empty_like(cache.X)
    dh = dh_last.copy()
    dc = np.zeros((B, H))
    for t in reversed(range(L)):
        i = cache.gates[t, :, :H]
        f = cache.gates[t, :, H : 2 * H]
        o = cache.gates[t, :, 2 * H : 3 * H]
        g = cache.gates[t, :, 3 * H :]
        tanh_c = cache.tanh_cells[t]
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c**2)
        di = dc * g
        dg = dc * i
        df = dc * cache.cells[t]
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                do * o * (1.0 - o),
                dg * (1.0 - g**2),
            ],
            axis=1,
        )
        dWx += cache.X[:, t].T @ dz
        dWh += cache.hiddens[t].T @ dz
        db += dz.sum(axis=0)
        dX[:, t] = dz @ Wx.T
        dh = dz @ Wh.T
        dc = dc * f
    return dX, dWx, dWh, db


def init_lstm_params(
    d_in: int, hidden: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniform(-k, k) weights with k = 1/sqrt(hidden); zero biases.

    Zero biases make a zero-input sequence propagate to a zero final
    hidden state in a freshly initialized network.
    """
    k = 1.0 / np.sqrt(hidden)
    Wx = rng.uniform(-k, k, size=(d_in, 4 * hidden))
    Wh = rng.uniform(-k, k, size=(hidden, 4 * hidden))
    b = np.zeros(4 * hidden)
    return Wx, Wh, b


def global_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so the global norm is at most max_norm."""
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    """Adam over a dict of named parameter arrays, updated in place."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float = 0.002,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, grad in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            self.params[name] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
