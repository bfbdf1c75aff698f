"""Windowing, training loop with early stopping, and model persistence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergedError, EmptyInput, InsufficientData, ShapeError
from ..serialize import load_container, save_container
from ..signal import StandardScaler, scaler_fit
from .model import ArchConfig, MomentNet
from .optim import AdamState, adam_step


def windowize(data: np.ndarray, length: int = 10, stride: int = 1
              ) -> tuple[np.ndarray, np.ndarray]:
    """Sliding windows over (t, channels); the prediction target for window i
    is the sample at its last index (causal alignment).

    Returns (windows (n, length, channels), target_idx (n,)).
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeError(f"windowize expects (t, channels), got {data.shape}")
    t = data.shape[0]
    if t < length:
        raise InsufficientData(f"series length {t} < window length {length}")
    n = (t - length) // stride + 1
    starts = np.arange(n) * stride
    windows = np.stack([data[s : s + length] for s in starts])
    return windows, starts + length - 1


@dataclass
class TrainConfig:
    max_epochs: int = 500
    patience: int = 10
    restore_best: bool = True
    batch_size: int = 64
    val_fraction: float = 0.1
    window_len: int = 10
    window_stride: int = 1
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def as_meta(self) -> dict:
        return {
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "restore_best": self.restore_best,
            "batch_size": self.batch_size,
            "val_fraction": self.val_fraction,
            "window_len": self.window_len,
            "window_stride": self.window_stride,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }


@dataclass
class MomentModel:
    """Trained network plus its input scaler and training record."""

    net: MomentNet
    scaler: StandardScaler
    config: TrainConfig
    seed: int
    history: dict = field(default_factory=dict)

    @property
    def arch(self) -> ArchConfig:
        return self.net.arch

    @property
    def n_outputs(self) -> int:
        return self.net.arch.n_out

    def predict(self, windows: np.ndarray) -> np.ndarray:
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim != 3 or windows.shape[2] != self.arch.in_channels:
            raise ShapeError(
                f"expected (n, t, {self.arch.in_channels}) windows, got {windows.shape}"
            )
        scaled = self.scaler.transform(windows.reshape(-1, windows.shape[2]))
        scaled = scaled.reshape(windows.shape)
        return self.net.forward(scaled, training=False)


def _mse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((pred - target) ** 2))


def _val_mse(net: MomentNet, x: np.ndarray, y: np.ndarray, batch: int) -> float:
    total = 0.0
    for lo in range(0, x.shape[0], batch):
        hi = min(lo + batch, x.shape[0])
        pred = net.forward(x[lo:hi], training=False)
        total += float(np.sum((pred - y[lo:hi]) ** 2))
    return total / (x.shape[0] * y.shape[1])


def train_moments(windows: np.ndarray, targets: np.ndarray, cycle_ids: np.ndarray,
                  config: TrainConfig, seed: int,
                  arch: ArchConfig | None = None) -> tuple[MomentModel, dict]:
    """Train with MSE + ADAM, early stopping on a cycle-held-out validation set.

    The validation split is by whole gait cycles so no cycle straddles the
    train/validation boundary.
    """
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    cycle_ids = np.asarray(cycle_ids)
    if windows.ndim != 3 or windows.shape[0] == 0:
        raise EmptyInput("no training windows")
    if windows.shape[0] != targets.shape[0] or windows.shape[0] != cycle_ids.shape[0]:
        raise ShapeError("windows, targets and cycle_ids must align")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7261696E]))
    unique_cycles = np.unique(cycle_ids)
    if unique_cycles.size < 2:
        raise EmptyInput("need at least 2 gait cycles to hold out validation")
    shuffled = unique_cycles.copy()
    rng.shuffle(shuffled)
    n_val = max(1, int(round(config.val_fraction * unique_cycles.size)))
    val_cycles = set(shuffled[:n_val].tolist())
    val_mask = np.array([c in val_cycles for c in cycle_ids])
    if not val_mask.any() or val_mask.all():
        raise EmptyInput("validation split left train or validation empty")

    if arch is None:
        arch = ArchConfig(in_channels=windows.shape[2], n_out=targets.shape[1],
                          window_len=windows.shape[1])
    net = MomentNet(arch, seed=seed)

    scaler = scaler_fit(windows[~val_mask].reshape(-1, windows.shape[2]))
    flat = scaler.transform(windows.reshape(-1, windows.shape[2]))
    scaled = flat.reshape(windows.shape)
    x_train, y_train = scaled[~val_mask], targets[~val_mask]
    x_val, y_val = scaled[val_mask], targets[val_mask]

    adam = AdamState(learning_rate=config.learning_rate, beta1=config.beta1,
                     beta2=config.beta2, eps=config.eps)
    params = net.params()

    train_losses: list[float] = []
    val_curve: list[float] = []
    best_val = np.inf
    best_epoch = -1
    best_snap = None
    n_train = x_train.shape[0]

    for epoch in range(config.max_epochs):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        for lo in range(0, n_train, config.batch_size):
            sel = order[lo : lo + config.batch_size]
            xb, yb = x_train[sel], y_train[sel]
            pred = net.forward(xb, training=True)
            diff = pred - yb
            loss = float(np.mean(diff**2))
            if not np.isfinite(loss):
                raise DivergedError(f"non-finite training loss at epoch {epoch}")
            epoch_loss += loss * sel.size
            net.zero_grads()
            net.backward(2.0 * diff / diff.size)
            adam_step(params, net.grads(), adam)
        train_losses.append(epoch_loss / n_train)

        v = _val_mse(net, x_val, y_val, config.batch_size)
        if not np.isfinite(v):
            raise DivergedError(f"non-finite validation loss at epoch {epoch}")
        val_curve.append(v)
        if v < best_val:
            best_val = v
            best_epoch = epoch
            if config.restore_best:
                best_snap = net.snapshot()
        elif epoch - best_epoch >= config.patience:
            break

    if config.restore_best and best_snap is not None:
        net.load_snapshot(best_snap)

    history = {
        "train_loss": train_losses,
        "val_mse": val_curve,
        "best_epoch": best_epoch,
        "best_val_mse": best_val,
    }
    model = MomentModel(net=net, scaler=scaler, config=config, seed=int(seed),
                        history=history)
    return model, history


def save_resnet(model: MomentModel, path) -> None:
    meta = {
        "arch": model.arch.as_meta(),
        "train": model.config.as_meta(),
        "seed": model.seed,
        "best_epoch": model.history.get("best_epoch", -1),
        "grf_input_normalization": "mass_normalized_nkg",
    }
    arrays = dict(model.net.state_arrays())
    arrays["scaler_mean"] = model.scaler.mean
    arrays["scaler_std"] = model.scaler.std
    save_container(path, "resnet", meta, arrays)


def load_resnet(path) -> MomentModel:
    kind, meta, arrays = load_container(path)
    if kind != "resnet":
        raise ShapeError(f"{path} holds a {kind} model, expected resnet")
    arch = ArchConfig.from_meta(meta["arch"])
    t = meta["train"]
    config = TrainConfig(
        max_epochs=t["max_epochs"], patience=t["patience"],
        restore_best=t["restore_best"], batch_size=t["batch_size"],
        val_fraction=t["val_fraction"], window_len=t["window_len"],
        window_stride=t["window_stride"], learning_rate=t["learning_rate"],
        beta1=t["beta1"], beta2=t["beta2"], eps=t["eps"],
    )
    net = MomentNet(arch, seed=int(meta["seed"]))
    state = net.state_arrays()
    for name in state:
        state[name][...] = arrays[name]
    scaler = StandardScaler(mean=arrays["scaler_mean"], std=arrays["scaler_std"])
    return MomentModel(net=net, scaler=scaler, config=config,
                       seed=int(meta["seed"]),
                       history={"best_epoch": meta.get("best_epoch", -1)})
