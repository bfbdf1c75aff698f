"""Neural-network layers over (batch, time, channels) tensors.

Every layer implements forward(x, training) and backward(dy) with gradients
accumulated on the layer; backward returns the gradient w.r.t. the input.
All math is float64 so finite-difference checks are meaningful.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


class Layer:
    def params(self) -> list[tuple[str, np.ndarray]]:
        return []

    def grads(self) -> list[tuple[str, np.ndarray]]:
        return []

    def zero_grads(self) -> None:
        for _, g in self.grads():
            g[...] = 0.0


class Conv1D(Layer):
    """Cross-correlation along time.  weight is (kernel, c_in, c_out)."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1,
                 padding: int = 0, rng: np.random.Generator | None = None):
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.padding = kernel, stride, padding
        scale = 1.0 / np.sqrt(kernel * c_in)
        rng = rng or np.random.default_rng(0)
        self.weight = rng.uniform(-scale, scale, size=(kernel, c_in, c_out))
        self.bias = np.zeros(c_out)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self._cache = None

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def grads(self):
        return [("weight", self.dweight), ("bias", self.dbias)]

    def out_length(self, t: int) -> int:
        return (t + 2 * self.padding - self.kernel) // self.stride + 1

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.c_in:
            raise ShapeError(f"conv expects (b, t, {self.c_in}), got {x.shape}")
        b, t, _ = x.shape
        t_out = self.out_length(t)
        if t_out < 1:
            raise ShapeError(f"time length {t} too short for kernel {self.kernel}")
        xp = np.pad(x, ((0, 0), (self.padding, self.padding), (0, 0)))
        # (b, t_out, kernel, c_in) via one slice per kernel tap
        cols = np.empty((b, t_out, self.kernel, self.c_in))
        for ki in range(self.kernel):
            cols[:, :, ki, :] = xp[:, ki : ki + (t_out - 1) * self.stride + 1 : self.stride, :]
        flat = cols.reshape(b * t_out, self.kernel * self.c_in)
        y = flat @ self.weight.reshape(self.kernel * self.c_in, self.c_out) + self.bias
        self._cache = (flat, x.shape)
        return y.reshape(b, t_out, self.c_out)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        flat, x_shape = self._cache
        b, t, _ = x_shape
        t_out = dy.shape[1]
        dy_flat = dy.reshape(b * t_out, self.c_out)
        self.dweight += (flat.T @ dy_flat).reshape(self.weight.shape)
        self.dbias += dy_flat.sum(axis=0)
        dcols = (dy_flat @ self.weight.reshape(-1, self.c_out).T).reshape(
            b, t_out, self.kernel, self.c_in
        )
        dxp = np.zeros((b, t + 2 * self.padding, self.c_in))
        for ki in range(self.kernel):
            dxp[:, ki : ki + (t_out - 1) * self.stride + 1 : self.stride, :] += dcols[:, :, ki, :]
        if self.padding:
            return dxp[:, self.padding : self.padding + t, :]
        return dxp


class BatchNorm1D(Layer):
    """Per-channel normalization over batch and time."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._cache = None

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def grads(self):
        return [("gamma", self.dgamma), ("beta", self.dbeta)]

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[-1] != self.channels:
            raise ShapeError(f"batchnorm over {self.channels} channels, got {x.shape}")
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, axes, training)
        return self.gamma * xhat + self.beta

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std, axes, training = self._cache
        self.dgamma += (dy * xhat).sum(axis=axes)
        self.dbeta += dy.sum(axis=axes)
        if not training:
            return dy * self.gamma * inv_std
        n = np.prod([xhat.shape[a] for a in axes])
        dxhat = dy * self.gamma
        return (
            inv_std
            / n
            * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        )


class Relu(Layer):
    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, 0.0)


class GlobalAvgPool(Layer):
    """(b, t, c) -> (b, c), mean over time."""

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._t = x.shape[1]
        return x.mean(axis=1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.repeat(dy[:, None, :], self._t, axis=1) / self._t


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        self.n_in, self.n_out = n_in, n_out
        scale = 1.0 / np.sqrt(n_in)
        rng = rng or np.random.default_rng(0)
        self.weight = rng.uniform(-scale, scale, size=(n_in, n_out))
        self.bias = np.zeros(n_out)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self._cache = None

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def grads(self):
        return [("weight", self.dweight), ("bias", self.dbias)]

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"dense expects {self.n_in} inputs, got {x.shape}")
        self._cache = x
        return x @ self.weight + self.bias

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._cache
        self.dweight += x.T @ dy
        self.dbias += dy.sum(axis=0)
        return dy @ self.weight.T
