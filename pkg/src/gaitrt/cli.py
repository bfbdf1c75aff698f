"""Command-line interface.

Subcommands: generate, train, eval, run, replay, dump, report.  A plain-text
key=value config file can supply any long-flag default; explicit flags win.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import configure_logging
from .dataset import read_dataset, write_dataset
from .errors import GaitrtError
from .features import (
    MODEL_CONFIGS,
    EvalProtocol,
    ProtocolOptions,
    dataset_cycles,
    run_protocol,
    train_full_model,
)
from .forest import ForestParams, load_forest, save_forest
from .metrics import compute_report
from .pipeline.compare import compare_to_reference
from .pipeline.ingest import ReplaySource, UdpSource
from .pipeline.packets import read_dump, write_dump
from .pipeline.realtime import ChainModels, SessionConfig, run_realtime
from .resnet import ArchConfig, TrainConfig, load_resnet, save_resnet, windowize
from .serialize import load_container
from .synth import generate_cohort


def _load_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GaitrtError(f"{path}: line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _opt(args, cfg: dict, name: str, cast, default):
    val = getattr(args, name.replace("-", "_"), None)
    if val is not None:
        return val
    if name in cfg:
        return cast(cfg[name])
    return default


def _protocol_options(args, cfg) -> ProtocolOptions:
    options = ProtocolOptions()
    trees = _opt(args, cfg, "trees", int, None)
    min_leaf = _opt(args, cfg, "min-samples-leaf", int, None)
    if trees is not None or min_leaf is not None:
        base = ForestParams()
        options.forest_params = ForestParams(
            n_trees=trees if trees is not None else base.n_trees,
            min_samples_leaf=min_leaf if min_leaf is not None else base.min_samples_leaf,
        )
    options.row_stride = _opt(args, cfg, "row-stride", int, 1)
    max_epochs = _opt(args, cfg, "max-epochs", int, None)
    window_stride = _opt(args, cfg, "window-stride", int, None)
    lr = _opt(args, cfg, "learning-rate", float, None)
    if max_epochs is not None or window_stride is not None or lr is not None:
        tc = TrainConfig()
        if max_epochs is not None:
            tc.max_epochs = max_epochs
        if window_stride is not None:
            tc.window_stride = window_stride
        if lr is not None:
            tc.learning_rate = lr
        options.train_config = tc
    blocks = _opt(args, cfg, "arch-blocks", str, None)
    if blocks is not None:
        name = args.model_config
        config = MODEL_CONFIGS[name]
        channels = tuple(int(c) for c in str(blocks).split(","))
        options.arch = ArchConfig(
            in_channels=config.n_inputs, n_out=config.n_outputs,
            window_len=config.window_len,
            initial_channels=channels[0], block_channels=channels,
            dense_width=_opt(args, cfg, "arch-dense", int, 16),
        )
    return options


def _cmd_generate(args) -> int:
    cfg = _load_config_file(args.config)
    n_subjects = _opt(args, cfg, "subjects", int, 8)
    trials = _opt(args, cfg, "trials", int, 3)
    duration = _opt(args, cfg, "duration", float, 20.0)
    noise = _opt(args, cfg, "noise-scale", float, 1.0)
    dataset = generate_cohort(n_subjects, args.seed, trials_per_subject=trials,
                              trial_duration_s=duration, noise_scale=noise)
    write_dataset(dataset, args.out)
    n_trials = sum(len(s.trials) for s in dataset.subjects)
    print(f"wrote {n_subjects} subjects, {n_trials} trials to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config_file(args.config)
    dataset = read_dataset(args.dataset)
    options = _protocol_options(args, cfg)
    name = args.model_config
    if name not in MODEL_CONFIGS:
        raise GaitrtError(f"unknown model config {name!r}; "
                          f"choose from {sorted(MODEL_CONFIGS)}")
    if not args.skip_protocol:
        protocol = EvalProtocol(mode=args.mode, k=args.k, seed=args.seed)
        result = run_protocol(protocol, dataset, name, options)
        for line in result.format_lines():
            print(line)
    model = train_full_model(dataset, name, args.seed, options)
    if MODEL_CONFIGS[name].family == "forest":
        save_forest(model, args.out)
    else:
        save_resnet(model, args.out)
    print(f"model written to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_config_file(args.config)
    dataset = read_dataset(args.dataset)
    options = _protocol_options(args, cfg)
    name = args.model_config
    if args.model:
        kind, _, _ = load_container(args.model)
        model = load_forest(args.model) if kind == "forest" else load_resnet(args.model)
        config = MODEL_CONFIGS[name]
        cycles = dataset_cycles(dataset, config, options)
        preds, truths = [], []
        for c in cycles:
            if config.family == "forest":
                preds.append(model.predict(c.X))
                truths.append(c.Y)
            else:
                w, tgt = windowize(c.X, config.window_len, stride=1)
                preds.append(model.predict(w))
                truths.append(c.Y[tgt])
        pred, truth = np.vstack(preds), np.vstack(truths)
        for j, out_name in enumerate(config.output_names):
            print(f"{out_name}: {compute_report(truth[:, j], pred[:, j]).format_line()}")
        return 0
    protocol = EvalProtocol(mode=args.mode, k=args.k, seed=args.seed)
    result = run_protocol(protocol, dataset, name, options)
    for line in result.format_lines():
        print(line)
    return 0


def _session_config(args, cfg) -> SessionConfig:
    mass = _opt(args, cfg, "mass-kg", float, None)
    weight = _opt(args, cfg, "weight-n", float, None)
    if mass is None:
        raise GaitrtError("mass-kg is required (flag or config file)")
    if weight is None:
        weight = mass * 9.80665
    return SessionConfig(
        mass_kg=mass, weight_n=weight, out_dir=args.out,
        batch_at_end=bool(getattr(args, "batch_at_end", False)),
    )


def _chain_models(args) -> ChainModels:
    return ChainModels(
        grf=load_forest(args.grf_model),
        angle=load_forest(args.angle_model),
        moment=load_resnet(args.moment_model),
    )


def _cmd_replay(args) -> int:
    cfg = _load_config_file(args.config)
    config = _session_config(args, cfg)
    models = _chain_models(args)
    records = read_dump(args.dump)
    afap = args.as_fast_as_possible
    source = ReplaySource(records, timed=not afap)
    logs, latency = run_realtime(source, config, models, synchronous=afap)
    print(f"logs in {logs.directory}")
    print(f"stage offsets ms: grf={latency.grf_done_ms:.1f} "
          f"angles={latency.angles_done_ms:.1f} moments={latency.moments_done_ms:.1f}")
    print(f"ticks processed={latency.ticks_processed} skipped={latency.ticks_skipped}")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_config_file(args.config)
    config = _session_config(args, cfg)
    models = _chain_models(args)
    source = UdpSource(args.listen, duration_s=args.duration)
    logs, latency = run_realtime(source, config, models, synchronous=False)
    print(f"logs in {logs.directory}")
    print(f"stage offsets ms: grf={latency.grf_done_ms:.1f} "
          f"angles={latency.angles_done_ms:.1f} moments={latency.moments_done_ms:.1f}")
    return 0


def _cmd_dump(args) -> int:
    source = UdpSource(args.listen, duration_s=args.duration)
    records = [(arrival, payload) for arrival, payload in source]
    write_dump(records, args.out)
    print(f"recorded {len(records)} packets to {args.out}")
    return 0


def _cmd_report(args) -> int:
    dataset = read_dataset(args.dataset)
    report = compare_to_reference(args.logs, dataset)
    for line in report.format_lines():
        print(line)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report.write_profiles_csv(out / "mean_profiles.csv")
        print(f"profiles written to {out / 'mean_profiles.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gaitrt",
                                description="real-time gait estimation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dataset=False, models=False, protocol=False):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, default=0)
        if dataset:
            sp.add_argument("--dataset", required=True, help="dataset directory")
        if models:
            sp.add_argument("--grf-model", required=True)
            sp.add_argument("--angle-model", required=True)
            sp.add_argument("--moment-model", required=True)
            sp.add_argument("--mass-kg", type=float)
            sp.add_argument("--weight-n", type=float)
        if protocol:
            sp.add_argument("--model-config", required=True,
                            choices=sorted(MODEL_CONFIGS))
            sp.add_argument("--mode", choices=["intra", "inter"], default="intra")
            sp.add_argument("-k", type=int, default=5)
            sp.add_argument("--trees", type=int)
            sp.add_argument("--min-samples-leaf", type=int)
            sp.add_argument("--row-stride", type=int)
            sp.add_argument("--max-epochs", type=int)
            sp.add_argument("--window-stride", type=int)
            sp.add_argument("--learning-rate", type=float)
            sp.add_argument("--arch-blocks",
                            help="comma-separated residual block channels")
            sp.add_argument("--arch-dense", type=int)

    sp = sub.add_parser("generate", help="synthetic cohort -> dataset dir")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--subjects", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--duration", type=float)
    sp.add_argument("--noise-scale", type=float)
    sp.set_defaults(func=_cmd_generate)

    sp = sub.add_parser("train", help="protocol report + model file")
    common(sp, dataset=True, protocol=True)
    sp.add_argument("--out", required=True, help="model file path")
    sp.add_argument("--skip-protocol", action="store_true")
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("eval", help="cross-validated metrics (or evaluate a model file)")
    common(sp, dataset=True, protocol=True)
    sp.add_argument("--model", help="existing model file to evaluate directly")
    sp.set_defaults(func=_cmd_eval)

    sp = sub.add_parser("run", help="live UDP session")
    common(sp, models=True)
    sp.add_argument("--listen", required=True, help="addr:port")
    sp.add_argument("--duration", type=float, default=20.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("replay", help="dump file -> logs + latency report")
    common(sp, models=True)
    sp.add_argument("--dump", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--as-fast-as-possible", action="store_true")
    sp.add_argument("--batch-at-end", action="store_true")
    sp.set_defaults(func=_cmd_replay)

    sp = sub.add_parser("dump", help="record UDP packets to a replay file")
    common(sp)
    sp.add_argument("--listen", required=True)
    sp.add_argument("--duration", type=float, default=20.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_dump)

    sp = sub.add_parser("report", help="logs -> ensemble comparison vs reference")
    common(sp)
    sp.add_argument("--logs", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GaitrtError as e:
        print(f"error code={e.code}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
