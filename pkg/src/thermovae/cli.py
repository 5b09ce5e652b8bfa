"""Command-line pipeline: simulate, train, score, difficulty, generate, export-latent.

Human-readable summaries go to stdout; machine-readable artifacts go to
files only, so scripts never have to parse logs.  Every subcommand is
deterministic given its flags; seeds are recorded in manifests and model
files.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import monitor, vae
from .data import (DataError, PlantConfig, fit_normalizer, load_csv,
                   plant_config_from_json, save_csv, save_windows_csv, simulate,
                   windows)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); keep our contract
        raise UsageError(message)


def _add_common(p: _Parser) -> None:
    p.add_argument("--seed", type=int, default=42, help="base RNG seed (default 42)")
    p.add_argument("--out", default=".", help="output directory (default .)")


def build_parser() -> _Parser:
    parser = _Parser(prog="thermovae",
                     description="Unsupervised thermal condition monitoring "
                                 "of robot joint motors with an LSTM VAE.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a labeled synthetic corpus")
    _add_common(p)
    p.add_argument("--cool", type=int, default=4, help="number of cruise trajectories")
    p.add_argument("--hot", type=int, default=2, help="number of hold trajectories")
    p.add_argument("--duration", type=float, default=600.0, help="seconds per trajectory")
    p.add_argument("--config", default=None, help="plant config JSON path")

    p = sub.add_parser("train", help="train a model on the cool part of a corpus")
    _add_common(p)
    p.add_argument("--data", default=".", help="corpus directory with manifest.json")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--stride", type=int, default=16)
    p.add_argument("--hidden", type=int, default=32, help="LSTM hidden size")
    p.add_argument("--bottleneck", type=int, default=16)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--percentile", type=float, default=99.0,
                   help="threshold percentile over validation scores")

    p = sub.add_parser("score", help="score a trajectory's windows against a model")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="trajectory CSV")
    p.add_argument("--stride", type=int, default=16)
    p.add_argument("--threshold", type=float, default=None,
                   help="override the model's calibrated threshold")

    p = sub.add_parser("difficulty", help="thermal difficulty of a planned trajectory")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="trajectory CSV")
    p.add_argument("--t-l", type=float, required=True, help="horizon start (s)")
    p.add_argument("--t-h", type=float, required=True, help="horizon end (s)")
    p.add_argument("--robot-id", default="robot")
    p.add_argument("--stride", type=int, default=16)
    p.add_argument("--created-at", default=None,
                   help="report timestamp override (for reproducible output)")

    p = sub.add_parser("generate", help="sample new uncritical motion windows")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--eps-seed", type=int, default=None,
                   help="noise seed (defaults to --seed)")

    p = sub.add_parser("export-latent", help="posterior rows and density grid")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", default=".", help="corpus directory with manifest.json")
    p.add_argument("--stride", type=int, default=16)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--pad", type=float, default=3.0, help="bounding box in sigmas")
    return parser


# ------------------------------------------------------------- manifest I/O


def write_manifest(path, plant: PlantConfig, seed: int, entries: list[dict]) -> None:
    plant_doc = asdict(plant)
    for key, value in plant_doc.items():
        if isinstance(value, tuple):
            plant_doc[key] = list(value)
    doc = {"seed": seed, "plant": plant_doc, "files": entries}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"manifest: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "files" not in doc:
        raise DataError("manifest: missing files list")
    for entry in doc["files"]:
        if not {"path", "label", "seed"} <= set(entry):
            raise DataError(f"manifest: malformed entry {entry!r}")
    return doc


def write_history_csv(history: vae.TrainHistory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for i, (tr, va) in enumerate(zip(history.train_loss, history.val_loss), start=1):
            fh.write(f"{i},{repr(tr)},{repr(va)}\n")


def read_history_csv(path) -> vae.TrainHistory:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["epoch", "train_loss", "val_loss"]:
            raise DataError(f"history: bad header {header!r}")
        train_loss, val_loss = [], []
        for cells in reader:
            if len(cells) != 3:
                raise DataError("history: ragged row")
            train_loss.append(float(cells[1]))
            val_loss.append(float(cells[2]))
    return vae.TrainHistory(train_loss=train_loss, val_loss=val_loss)


# ------------------------------------------------------------- subcommands


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    if args.cool < 0 or args.hot < 0:
        raise UsageError("--cool/--hot must be >= 0")
    if args.config is not None:
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise DataError(f"plant config not found: {cfg_path}")
        plant = plant_config_from_json(cfg_path.read_text(encoding="utf-8"))
    else:
        plant = PlantConfig()
    out = _out_dir(args)

    entries = []
    jobs = [("cruise", "cool", i, args.seed + i) for i in range(args.cool)]
    jobs += [("hold", "hot", j, args.seed + 100000 + j) for j in range(args.hot)]
    for mode, prefix, index, seed in jobs:
        traj = simulate(replace(plant, seed=seed), args.duration, mode)
        name = f"{prefix}_{index:03d}.csv"
        save_csv(traj, out / name)
        entries.append({"path": name, "mode": mode, "label": traj.label,
                        "seed": seed, "max_temp": float(traj.temps().max()),
                        "fault": traj.fault})
        print(f"{name}: label={traj.label} max_temp={traj.temps().max():.2f} degC")
    write_manifest(out / "manifest.json", plant, args.seed, entries)
    print(f"wrote {len(entries)} trajectories + manifest.json to {out}")
    return EXIT_OK


def _load_corpus(data_dir: Path):
    manifest = read_manifest(data_dir / "manifest.json")
    trajs = []
    for entry in manifest["files"]:
        traj = load_csv(data_dir / entry["path"])
        traj.label = entry["label"]
        trajs.append(traj)
    return manifest, trajs


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    if not (data_dir / "manifest.json").exists():
        raise DataError(f"no manifest.json in {data_dir}")
    out = _out_dir(args)
    _, trajs = _load_corpus(data_dir)
    cool = [t for t in trajs if t.label == "cool"]  # hot files never train
    if not cool:
        raise DataError("train: corpus has no cool trajectories")

    norm = fit_normalizer(cool)
    wins = []
    for traj in cool:
        wins.extend(windows(traj, norm, args.window, args.stride))
    model = vae.VaeModel(window_len=args.window, channels=3 * cool[0].n_joints,
                         enc_hidden=args.hidden, bottleneck=args.bottleneck,
                         dec_hidden=args.hidden, beta=args.beta, seed=args.seed,
                         normalizer=norm)
    cfg = vae.TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                          learning_rate=args.lr, optimizer=args.optimizer,
                          seed=args.seed, beta=args.beta,
                          validation_fraction=args.val_fraction)
    model, history = vae.train(model, wins, cfg)

    train_idx, val_idx = vae.validation_split(len(wins), cfg)
    values = np.stack([w.values for w in wins])
    val_scores = monitor.window_scores(model, values[val_idx])
    if len(val_scores) >= 20:
        model.threshold = monitor.calibrate_threshold(val_scores, args.percentile)
        threshold_note = f"threshold (p{args.percentile:g} of validation scores): " \
                         f"{model.threshold:.6f}"
    else:
        threshold_note = (f"threshold not calibrated ({len(val_scores)} validation "
                          "windows < 20); pass --threshold to score")
    vae.save(model, out / "model.json")
    write_history_csv(history, out / "history.csv")

    kinds = monitor.channel_kind_errors(model, values)
    print(f"trained {cfg.epochs} epochs on {len(wins)} windows "
          f"({len(train_idx)} train / {len(val_idx)} val)")
    print(f"final train loss {history.train_loss[-1]:.4f}, "
          f"val loss {history.val_loss[-1]:.4f}")
    print("normalized reconstruction error per channel:")
    for kind in ("torque", "position", "velocity"):
        print(f"  {kind:<9} {kinds[kind]:.4f}")
    print(threshold_note)
    print(f"model -> {out / 'model.json'}")
    print(f"history -> {out / 'history.csv'}")
    return EXIT_OK


def _load_model_and_traj(args):
    model_path = Path(args.model)
    data_path = Path(args.data)
    if not model_path.exists():
        raise DataError(f"model not found: {model_path}")
    if not data_path.exists():
        raise DataError(f"trajectory not found: {data_path}")
    model = vae.load(model_path)
    traj = load_csv(data_path)
    if 3 * traj.n_joints != model.channels:
        raise vae.ModelFormatError(
            f"trajectory has {traj.n_joints} joints but model expects "
            f"{model.channels // 3}")
    return model, traj


def cmd_score(args) -> int:
    model, traj = _load_model_and_traj(args)
    threshold = args.threshold if args.threshold is not None else model.threshold
    if threshold is None:
        raise UsageError("model has no calibrated threshold; pass --threshold")
    out = _out_dir(args)
    errors = monitor.recon_error_series(model, traj, stride=args.stride)
    verdicts = monitor.make_verdicts(errors, threshold)
    monitor.save_verdicts_csv(verdicts, out / "verdicts.csv")
    rate = sum(v.is_anomalous for v in verdicts) / len(verdicts)
    print(f"{len(verdicts)} windows scored, threshold {threshold:.6f}, "
          f"anomaly rate {rate:.1%}")
    print(f"verdicts -> {out / 'verdicts.csv'}")
    return EXIT_OK


def cmd_difficulty(args) -> int:
    model, traj = _load_model_and_traj(args)
    out = _out_dir(args)
    report = monitor.difficulty(model, traj, t_l=args.t_l, t_h=args.t_h,
                                robot_id=args.robot_id, stride=args.stride,
                                created_at=args.created_at)
    monitor.emit_report(report, out / "report.json")
    print(f"thermal difficulty over [{args.t_l:g}, {args.t_h:g}] s: "
          f"d = {report.total:.4f}")
    for k, d_k in enumerate(report.per_joint, start=1):
        print(f"  joint {k}: d_{k} = {d_k:.4f}")
    print(f"report -> {out / 'report.json'}")
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    model_path = Path(args.model)
    if not model_path.exists():
        raise DataError(f"model not found: {model_path}")
    model = vae.load(model_path)
    out = _out_dir(args)
    eps_seed = args.eps_seed if args.eps_seed is not None else args.seed
    wins = vae.generate(model, args.count, seed=eps_seed)
    save_windows_csv([w.values for w in wins], model.n_joints, out / "generated.csv")
    print(f"generated {len(wins)} normalized windows (eps seed {eps_seed})")
    print(f"windows -> {out / 'generated.csv'}")
    return EXIT_OK


def cmd_export_latent(args) -> int:
    model_path = Path(args.model)
    data_dir = Path(args.data)
    if not model_path.exists():
        raise DataError(f"model not found: {model_path}")
    if not (data_dir / "manifest.json").exists():
        raise DataError(f"no manifest.json in {data_dir}")
    model = vae.load(model_path)
    if model.normalizer is None:
        raise vae.ModelFormatError("model carries no normalizer")
    out = _out_dir(args)
    _, trajs = _load_corpus(data_dir)
    wins, labels = [], []
    for traj in trajs:
        ws = windows(traj, model.normalizer, model.window_len, args.stride)
        wins.extend(ws)
        labels.extend([traj.label] * len(ws))
    export = monitor.export_latent(model, wins, labels, grid_size=args.grid,
                                   pad_sigmas=args.pad)
    monitor.save_latent_csv(export, out / "latent.csv")
    monitor.save_density_json(export, out / "density.json")
    print(f"exported {len(wins)} posterior rows and a {args.grid}x{args.grid} "
          "density grid")
    print(f"rows -> {out / 'latent.csv'}")
    print(f"grid -> {out / 'density.json'}")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "score": cmd_score,
    "difficulty": cmd_difficulty,
    "generate": cmd_generate,
    "export-latent": cmd_export_latent,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, vae.ModelFormatError, monitor.MonitorError,
            monitor.ReportFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (vae.TrainingDivergedError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
