"""Residual 1D CNN for windowed moment regression."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import BatchNorm1D, Conv1D, Dense, GlobalAvgPool, Layer, Relu


@dataclass
class ArchConfig:
    in_channels: int
    n_out: int
    window_len: int = 10
    initial_kernel: int = 3
    initial_channels: int = 32
    block_channels: tuple = (32, 64, 64, 128)
    dense_width: int = 64

    def as_meta(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "n_out": self.n_out,
            "window_len": self.window_len,
            "initial_kernel": self.initial_kernel,
            "initial_channels": self.initial_channels,
            "block_channels": list(self.block_channels),
            "dense_width": self.dense_width,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "ArchConfig":
        return cls(
            in_channels=meta["in_channels"],
            n_out=meta["n_out"],
            window_len=meta["window_len"],
            initial_kernel=meta["initial_kernel"],
            initial_channels=meta["initial_channels"],
            block_channels=tuple(meta["block_channels"]),
            dense_width=meta["dense_width"],
        )


class ResidualBlock(Layer):
    """conv-BN-ReLU, conv-BN, shortcut (identity or 1x1 projection), post-add ReLU."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.conv1 = Conv1D(c_in, c_out, kernel=3, padding=1, rng=rng)
        self.bn1 = BatchNorm1D(c_out)
        self.relu1 = Relu()
        self.conv2 = Conv1D(c_out, c_out, kernel=3, padding=1, rng=rng)
        self.bn2 = BatchNorm1D(c_out)
        self.project = Conv1D(c_in, c_out, kernel=1, rng=rng) if c_in != c_out else None
        self.relu_out = Relu()

    def sublayers(self):
        layers = [self.conv1, self.bn1, self.conv2, self.bn2]
        if self.project is not None:
            layers.append(self.project)
        return layers

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        y = self.conv1.forward(x, training)
        y = self.bn1.forward(y, training)
        y = self.relu1.forward(y, training)
        y = self.conv2.forward(y, training)
        y = self.bn2.forward(y, training)
        shortcut = x if self.project is None else self.project.forward(x, training)
        return self.relu_out.forward(y + shortcut, training)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        d = self.relu_out.backward(dy)
        dx_short = d if self.project is None else self.project.backward(d)
        dmain = self.bn2.backward(d)
        dmain = self.conv2.backward(dmain)
        dmain = self.relu1.backward(dmain)
        dmain = self.bn1.backward(dmain)
        dmain = self.conv1.backward(dmain)
        return dmain + dx_short


class MomentNet:
    """Initial conv block, residual blocks, global average pool, dense head."""

    def __init__(self, arch: ArchConfig, seed: int = 0):
        self.arch = arch
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.init_conv = Conv1D(
            arch.in_channels, arch.initial_channels,
            kernel=arch.initial_kernel, padding=arch.initial_kernel // 2, rng=rng,
        )
        self.init_bn = BatchNorm1D(arch.initial_channels)
        self.init_relu = Relu()
        self.blocks = []
        c_prev = arch.initial_channels
        for c in arch.block_channels:
            self.blocks.append(ResidualBlock(c_prev, c, rng))
            c_prev = c
        self.pool = GlobalAvgPool()
        self.dense = Dense(c_prev, arch.dense_width, rng=rng)
        self.dense_relu = Relu()
        self.out = Dense(arch.dense_width, arch.n_out, rng=rng)

    def _param_layers(self) -> list[tuple[str, Layer]]:
        named = [("init_conv", self.init_conv), ("init_bn", self.init_bn)]
        for i, blk in enumerate(self.blocks):
            named += [
                (f"block{i}.conv1", blk.conv1),
                (f"block{i}.bn1", blk.bn1),
                (f"block{i}.conv2", blk.conv2),
                (f"block{i}.bn2", blk.bn2),
            ]
            if blk.project is not None:
                named.append((f"block{i}.project", blk.project))
        named += [("dense", self.dense), ("out", self.out)]
        return named

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layer in self._param_layers():
            for name, arr in layer.params():
                out[f"{prefix}.{name}"] = arr
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layer in self._param_layers():
            for name, arr in layer.grads():
                out[f"{prefix}.{name}"] = arr
        return out

    def running_stats(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layer in self._param_layers():
            if isinstance(layer, BatchNorm1D):
                out[f"{prefix}.running_mean"] = layer.running_mean
                out[f"{prefix}.running_var"] = layer.running_var
        return out

    def zero_grads(self) -> None:
        for _, layer in self._param_layers():
            layer.zero_grads()

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All learnable parameters plus batch-norm running statistics."""
        return {**self.params(), **self.running_stats()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_arrays().items()}

    def load_snapshot(self, snap: dict[str, np.ndarray]) -> None:
        state = self.state_arrays()
        for k, v in snap.items():
            state[k][...] = v

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        y = self.init_conv.forward(x, training)
        y = self.init_bn.forward(y, training)
        y = self.init_relu.forward(y, training)
        for blk in self.blocks:
            y = blk.forward(y, training)
        y = self.pool.forward(y, training)
        y = self.dense.forward(y, training)
        y = self.dense_relu.forward(y, training)
        return self.out.forward(y, training)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        d = self.out.backward(dy)
        d = self.dense_relu.backward(d)
        d = self.dense.backward(d)
        d = self.pool.backward(d)
        for blk in reversed(self.blocks):
            d = blk.backward(d)
        d = self.init_relu.backward(d)
        d = self.init_bn.backward(d)
        return self.init_conv.backward(d)
