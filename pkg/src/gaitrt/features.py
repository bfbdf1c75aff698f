"""Feature assembly for every model configuration, model chaining, and the
intra-/inter-subject evaluation protocols.

Feature row layout (fixed order): IMU channels (9 per IMU: accel xyz, gyro
xyz, mag xyz; shank before foot; right leg before left), optional
mass-normalized vGRF, GC%, lead flag.  The GRF model takes the 8 insole
channels plus GC% (no flag).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import (
    GRAVITY,
    JOINTS,
    Dataset,
    SubjectMeta,
    Trial,
)
from .errors import AlignmentError, InsufficientData, MissingChannel, ShapeError
from .forest import ForestModel, ForestParams, fit_forest
from .metrics import MetricReport, compute_report, fold_aggregate
from .resnet import ArchConfig, TrainConfig, train_moments, windowize
from .series import SampleSeries
from .signal import design_butterworth, filter_stream, resample_linear, scaler_fit


@dataclass(frozen=True)
class ModelConfig:
    name: str
    family: str  # "forest" | "resnet"
    n_inputs: int
    n_outputs: int
    window_len: int  # 1 for per-sample forest models
    bilateral: bool
    use_grf: bool
    output_names: tuple


def _w(name, n_in, n_out, bilateral, use_grf, outputs):
    return ModelConfig(name, "forest", n_in, n_out, 1, bilateral, use_grf, tuple(outputs))


MODEL_CONFIGS: dict[str, ModelConfig] = {
    "GRF": ModelConfig("GRF", "forest", 9, 1, 1, False, False, ("vgrf_bw",)),
    "W1": _w("W1", 20, 1, False, False, ["ankleflex"]),
    "W2": _w("W2", 21, 1, False, True, ["ankleflex"]),
    "W3": _w("W3", 40, 2, True, True, ["ankleflex_r", "ankleflex_l"]),
    "W4": _w("W4", 20, 5, False, False, JOINTS),
    "W5": _w("W5", 21, 5, False, True, JOINTS),
    "W6": _w("W6", 40, 10, True, True,
             [f"{j}_r" for j in JOINTS] + [f"{j}_l" for j in JOINTS]),
    "M_5JOINT": ModelConfig("M_5JOINT", "resnet", 8, 5, 10, False, True,
                            tuple(f"moment_{j}" for j in JOINTS)),
    "M_ANKLE": ModelConfig("M_ANKLE", "resnet", 6, 2, 10, True, True,
                           ("moment_ankleflex_r", "moment_ankleflex_l")),
}


@dataclass
class PreprocessConfig:
    target_rate: float = 1000.0
    imu_band: tuple = (0.2, 10.0)
    imu_order: int = 5
    fsr_cutoff: float = 3.0
    fsr_order: int = 5
    settle_ms: float = 3000.0  # causal-filter transient excluded from cycles


@dataclass
class PreprocessedTrial:
    subject_id: str
    trial_id: str
    mass_kg: float
    weight_n: float
    signals: SampleSeries  # 52 filtered sensor channels at 1 kHz
    gt: SampleSeries  # 24 ground-truth channels at 1 kHz
    strikes: dict[str, np.ndarray]
    settle_ms: float

    @property
    def n(self) -> int:
        return self.signals.n_samples

    def sig(self, name: str) -> int:
        try:
            return self.signals.channels.index(name)
        except ValueError:
            raise MissingChannel(name) from None

    def gtc(self, name: str) -> int:
        try:
            return self.gt.channels.index(name)
        except ValueError:
            raise MissingChannel(name) from None


def preprocess_trial(trial: Trial, meta: SubjectMeta,
                     cfg: PreprocessConfig | None = None) -> PreprocessedTrial:
    """Up-sample all streams to 1 kHz and run the causal filters.

    IMU streams get the band-pass, insole streams the low-pass; ground truth
    is linearly up-sampled untouched.
    """
    cfg = cfg or PreprocessConfig()
    fs = cfg.target_rate
    pieces = []
    channels = []
    for name, series in trial.sensor_series().items():
        up = resample_linear(series, fs)
        if name.startswith("insole"):
            filt = design_butterworth(cfg.fsr_order, "lowpass", [cfg.fsr_cutoff], fs)
        else:
            filt = design_butterworth(cfg.imu_order, "bandpass", list(cfg.imu_band), fs)
        filtered = filter_stream(filt, up)
        pieces.append(filtered)
        channels.extend(series.channels)
    gt_up = resample_linear(trial.gt, fs)
    n = min(min(p.n_samples for p in pieces), gt_up.n_samples)
    if abs(pieces[0].start_time - gt_up.start_time) > 1e-6:
        raise AlignmentError("sensor and ground-truth streams start at different times")
    data = np.concatenate([p.data[:n] for p in pieces], axis=1)
    signals = SampleSeries(pieces[0].start_time, fs, channels, data)
    gt = SampleSeries(gt_up.start_time, fs, list(gt_up.channels), gt_up.data[:n])
    return PreprocessedTrial(
        subject_id=meta.subject_id, trial_id=trial.trial_id,
        mass_kg=meta.mass_kg, weight_n=meta.weight_n,
        signals=signals, gt=gt, strikes=trial.heel_strikes,
        settle_ms=cfg.settle_ms,
    )


@dataclass
class CycleSpan:
    """Row window [start, end) of one stride at 1 kHz, with per-row GC%."""

    uid: str
    subject_id: str
    foot: str
    start: int
    end: int
    gc: np.ndarray


def trial_cycles(pre: PreprocessedTrial) -> list[CycleSpan]:
    """Complete strides that begin after the filter settle window."""
    out = []
    ms_per_row = 1000.0 / pre.signals.rate
    for foot in ("right", "left"):
        strikes = np.asarray(pre.strikes[foot], dtype=np.float64)
        for k, (s0, s1) in enumerate(zip(strikes[:-1], strikes[1:])):
            if s0 < pre.settle_ms:
                continue
            start = int(np.ceil((s0 - pre.signals.start_time) / ms_per_row - 1e-9))
            end = int(np.ceil((s1 - pre.signals.start_time) / ms_per_row - 1e-9))
            if end > pre.n or end <= start:
                continue
            t = pre.signals.start_time + np.arange(start, end) * ms_per_row
            gc = 100.0 * (t - s0) / (s1 - s0)
            out.append(CycleSpan(
                uid=f"{pre.subject_id}:{pre.trial_id}:{foot}:{k}",
                subject_id=pre.subject_id, foot=foot, start=start, end=end, gc=gc,
            ))
    return out


@dataclass
class CycleData:
    """Feature rows (or resnet channel rows) of one stride for one config."""

    uid: str
    subject_id: str
    X: np.ndarray
    Y: np.ndarray


def _imu_block(pre: PreprocessedTrial, rows: slice, leg: str) -> np.ndarray:
    cols = [pre.sig(f"imu_{leg}s_{a}") for a in
            ("ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz")]
    cols += [pre.sig(f"imu_{leg}f_{a}") for a in
             ("ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz")]
    return pre.signals.data[rows, :][:, cols]


def _fsr_block(pre: PreprocessedTrial, rows: slice, leg: str) -> np.ndarray:
    cols = [pre.sig(f"fsr_{leg}{i}") for i in range(1, 9)]
    return pre.signals.data[rows, :][:, cols]


def _vgrf_masskg(pre: PreprocessedTrial, rows: slice, leg: str) -> np.ndarray:
    bw = pre.gt.data[rows, pre.gtc(f"gt_vgrf_bw_{leg}")]
    return bw * (pre.weight_n / pre.mass_kg)


def _angles(pre: PreprocessedTrial, rows: slice, leg: str) -> np.ndarray:
    cols = [pre.gtc(f"gt_angle_{j}_{leg}_deg") for j in JOINTS]
    return pre.gt.data[rows, :][:, cols]


def _moments(pre: PreprocessedTrial, rows: slice, leg: str) -> np.ndarray:
    cols = [pre.gtc(f"gt_moment_{j}_{leg}_nm") for j in JOINTS]
    return pre.gt.data[rows, :][:, cols]


def assemble_features(config: ModelConfig, pre: PreprocessedTrial,
                      cycles: list[CycleSpan]) -> list[CycleData]:
    """Deterministic feature/target rows per gait cycle.

    Unilateral configs emit two row streams per cycle (lead leg with flag 1,
    opposite leg with flag 0) sharing the cycle id, so fold splits keep them
    together.  Bilateral configs emit one stream with flag = lead-is-right.
    """
    if pre.signals.n_samples != pre.gt.n_samples:
        raise AlignmentError("signal and ground-truth matrices are misaligned")
    out: list[CycleData] = []
    for span in cycles:
        rows = slice(span.start, span.end)
        gc = span.gc[:, None]
        lead = span.foot[0]  # 'r' | 'l'
        trail = "l" if lead == "r" else "r"
        if config.name == "GRF":
            X = np.hstack([_fsr_block(pre, rows, lead), gc])
            Y = pre.gt.data[rows, pre.gtc(f"gt_vgrf_bw_{lead}")][:, None]
            out.append(CycleData(span.uid, pre.subject_id, X, Y))
        elif config.family == "forest" and not config.bilateral:
            for leg, flag in ((lead, 1.0), (trail, 0.0)):
                parts = [_imu_block(pre, rows, leg)]
                if config.use_grf:
                    parts.append(_vgrf_masskg(pre, rows, leg)[:, None])
                parts += [gc, np.full_like(gc, flag)]
                X = np.hstack(parts)
                angles = _angles(pre, rows, leg)
                Y = angles if config.n_outputs == 5 else angles[:, [JOINTS.index("ankleflex")]]
                out.append(CycleData(f"{span.uid}:{leg}", pre.subject_id, X, Y))
        elif config.family == "forest":
            flag = 1.0 if lead == "r" else 0.0
            parts = [_imu_block(pre, rows, "r"), _imu_block(pre, rows, "l")]
            if config.use_grf:
                parts.append(_vgrf_masskg(pre, rows, "r")[:, None])
                parts.append(_vgrf_masskg(pre, rows, "l")[:, None])
            parts += [gc, np.full_like(gc, flag)]
            X = np.hstack(parts)
            if config.n_outputs == 2:
                Y = np.hstack([_angles(pre, rows, "r")[:, [JOINTS.index("ankleflex")]],
                               _angles(pre, rows, "l")[:, [JOINTS.index("ankleflex")]]])
            else:
                Y = np.hstack([_angles(pre, rows, "r"), _angles(pre, rows, "l")])
            out.append(CycleData(span.uid, pre.subject_id, X, Y))
        elif config.name == "M_5JOINT":
            for leg, flag in ((lead, 1.0), (trail, 0.0)):
                X = np.hstack([
                    _angles(pre, rows, leg),
                    _vgrf_masskg(pre, rows, leg)[:, None],
                    gc, np.full_like(gc, flag),
                ])
                Y = _moments(pre, rows, leg)
                out.append(CycleData(f"{span.uid}:{leg}", pre.subject_id, X, Y))
        elif config.name == "M_ANKLE":
            flag = 1.0 if lead == "r" else 0.0
            ank = JOINTS.index("ankleflex")
            X = np.hstack([
                _angles(pre, rows, "r")[:, [ank]], _angles(pre, rows, "l")[:, [ank]],
                _vgrf_masskg(pre, rows, "r")[:, None], _vgrf_masskg(pre, rows, "l")[:, None],
                gc, np.full_like(gc, flag),
            ])
            Y = np.hstack([_moments(pre, rows, "r")[:, [ank]],
                           _moments(pre, rows, "l")[:, [ank]]])
            out.append(CycleData(span.uid, pre.subject_id, X, Y))
        else:
            raise ValueError(f"unknown config {config.name}")
        if out[-1].X.shape[1] != config.n_inputs:
            raise ShapeError(
                f"{config.name}: assembled {out[-1].X.shape[1]} features, "
                f"declared {config.n_inputs}"
            )
    return out


@dataclass
class EvalProtocol:
    mode: str  # "intra" | "inter"
    k: int = 5
    seed: int = 0


@dataclass
class ProtocolOptions:
    """Runtime knobs; defaults reproduce the published model settings."""

    forest_params: ForestParams | None = None
    train_config: TrainConfig | None = None
    arch: ArchConfig | None = None  # network override, e.g. compact builds
    row_stride: int = 1  # training-row decimation for forest configs
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)


def default_forest_params(config: ModelConfig) -> ForestParams:
    n_trees = 100 if config.name == "GRF" else 200
    return ForestParams(n_trees=n_trees, max_depth=None, min_samples_split=2,
                        min_samples_leaf=1, max_features="third", bootstrap=True)


@dataclass
class FoldResult:
    fold: int
    reports: dict[str, MetricReport]


@dataclass
class ProtocolResult:
    config: str
    mode: str
    k: int
    folds: list[FoldResult]
    aggregate: dict[str, dict[str, tuple[float, float]]]

    def format_lines(self) -> list[str]:
        lines = [f"[{self.config}] mode={self.mode} k={self.k}"]
        for fr in self.folds:
            for name, rep in fr.reports.items():
                lines.append(f"  fold {fr.fold} {name}: {rep.format_line()}")
        for name, metrics in self.aggregate.items():
            span = " ".join(
                f"{m}={mean:.4g}+/-{std:.4g}" for m, (mean, std) in metrics.items()
            )
            lines.append(f"  aggregate {name}: {span}")
        return lines


def dataset_cycles(dataset: Dataset, config: ModelConfig,
                   options: ProtocolOptions) -> list[CycleData]:
    all_cycles: list[CycleData] = []
    for subj in dataset.subjects:
        for trial in subj.trials:
            pre = preprocess_trial(trial, subj.meta, options.preprocess)
            spans = trial_cycles(pre)
            all_cycles.extend(assemble_features(config, pre, spans))
    return all_cycles


def _fit_fold_model(config: ModelConfig, train: list[CycleData], seed: int,
                    options: ProtocolOptions):
    if config.family == "forest":
        stride = max(1, options.row_stride)
        X = np.vstack([c.X[::stride] for c in train])
        Y = np.vstack([c.Y[::stride] for c in train])
        scaler = scaler_fit(X)
        params = options.forest_params or default_forest_params(config)
        return fit_forest(scaler.transform(X), Y, params, seed, scaler=scaler)
    tc = options.train_config or TrainConfig()
    windows, targets, ids = [], [], []
    for ci, c in enumerate(train):
        if c.X.shape[0] < tc.window_len:
            continue
        w, tgt_idx = windowize(c.X, tc.window_len, tc.window_stride)
        windows.append(w)
        targets.append(c.Y[tgt_idx])
        ids.append(np.full(w.shape[0], ci))
    if not windows:
        raise InsufficientData("no training cycle long enough to windowize")
    model, _ = train_moments(np.concatenate(windows), np.concatenate(targets),
                             np.concatenate(ids), tc, seed, arch=options.arch)
    return model


def _eval_fold_model(config: ModelConfig, model, test: list[CycleData],
                     options: ProtocolOptions) -> dict[str, MetricReport]:
    preds, truths = [], []
    if config.family == "forest":
        for c in test:
            preds.append(model.predict(c.X))
            truths.append(c.Y)
    else:
        tc = options.train_config or TrainConfig()
        for c in test:
            if c.X.shape[0] < tc.window_len:
                continue
            w, tgt_idx = windowize(c.X, tc.window_len, stride=1)
            preds.append(model.predict(w))
            truths.append(c.Y[tgt_idx])
    if not preds:
        raise InsufficientData("no evaluable test cycles")
    pred = np.vstack(preds)
    truth = np.vstack(truths)
    return {
        name: compute_report(truth[:, j], pred[:, j])
        for j, name in enumerate(config.output_names)
    }


def run_protocol(protocol: EvalProtocol, dataset: Dataset, config_name: str,
                 options: ProtocolOptions | None = None) -> ProtocolResult:
    """k-fold by gait cycle (intra) or leave-one-subject-out (inter).

    Scalers and models only ever see training folds.
    """
    config = MODEL_CONFIGS[config_name]
    options = options or ProtocolOptions()
    cycles = dataset_cycles(dataset, config, options)
    if not cycles:
        raise InsufficientData("dataset produced no usable gait cycles")

    if protocol.mode == "intra":
        if len(cycles) < protocol.k:
            raise InsufficientData(
                f"{len(cycles)} cycles < k={protocol.k}")
        rng = np.random.default_rng(np.random.SeedSequence([protocol.seed, 0xF01D]))
        order = rng.permutation(len(cycles))
        fold_indices = [list(part) for part in np.array_split(order, protocol.k)]
    elif protocol.mode == "inter":
        subjects = sorted({c.subject_id for c in cycles})
        if len(subjects) < 2:
            raise InsufficientData("LOSOCV needs at least 2 subjects")
        fold_indices = [
            [i for i, c in enumerate(cycles) if c.subject_id == s] for s in subjects
        ]
    else:
        raise ValueError(f"unknown protocol mode {protocol.mode!r}")

    folds: list[FoldResult] = []
    for fi, test_idx in enumerate(fold_indices):
        test_set = set(test_idx)
        train = [c for i, c in enumerate(cycles) if i not in test_set]
        test = [cycles[i] for i in test_idx]
        fold_seed = int(np.random.default_rng(
            np.random.SeedSequence([protocol.seed, 0x5EED, fi])).integers(0, 2**62))
        model = _fit_fold_model(config, train, fold_seed, options)
        folds.append(FoldResult(fold=fi,
                                reports=_eval_fold_model(config, model, test, options)))

    aggregate = {}
    for j, name in enumerate(config.output_names):
        aggregate[name] = fold_aggregate([f.reports[name] for f in folds])
    return ProtocolResult(config=config.name, mode=protocol.mode,
                          k=len(fold_indices), folds=folds, aggregate=aggregate)


def train_full_model(dataset: Dataset, config_name: str, seed: int,
                     options: ProtocolOptions | None = None):
    """Fit one model on every usable cycle (for deployment in the pipeline)."""
    config = MODEL_CONFIGS[config_name]
    options = options or ProtocolOptions()
    cycles = dataset_cycles(dataset, config, options)
    if not cycles:
        raise InsufficientData("dataset produced no usable gait cycles")
    return _fit_fold_model(config, cycles, seed, options)


def chain_predict(grf_model, angle_model, moment_model,
                  fsr: np.ndarray, imu_shank: np.ndarray, imu_foot: np.ndarray,
                  gc: np.ndarray, flag: np.ndarray,
                  mass_kg: float, weight_n: float,
                  window_len: int = 10,
                  override_vgrf: np.ndarray | None = None,
                  override_angles: np.ndarray | None = None) -> dict:
    """Per-sample chained inference: insole -> vGRF, IMU -> angles, then both
    (plus GC% and flag) windowed into the moment model.

    Moment outputs are stamped at window end; the first window_len - 1
    entries are NaN.  Overrides let ground truth stand in for a stage.
    """
    n = gc.shape[0]
    gc2 = gc[:, None]
    flag2 = flag[:, None]
    grf_rows = np.hstack([fsr, gc2])
    vgrf = (override_vgrf if override_vgrf is not None
            else grf_model.predict(grf_rows)[:, 0])
    angle_rows = np.hstack([imu_shank, imu_foot, gc2, flag2])
    angles = (override_angles if override_angles is not None
              else angle_model.predict(angle_rows))
    if angles.shape[1] != 5:
        raise ShapeError("chaining expects a 5-output angle model (W4 layout)")
    vgrf_masskg = vgrf * (weight_n / mass_kg)
    channels = np.hstack([angles, vgrf_masskg[:, None], gc2, flag2])
    moments = np.full((n, moment_model.n_outputs), np.nan)
    if n >= window_len:
        w, tgt_idx = windowize(channels, window_len, stride=1)
        moments[tgt_idx] = moment_model.predict(w)
    return {"vgrf_bw": vgrf, "angles": angles, "moments": moments}
