"""Command surface: train, attack, bounds, sweep, report.

Configs are flat JSON key-value files; command-line flags override file
values. Every artifact lands under --out, and a manifest.json ties the
run together. Exit codes: 0 success, 1 runtime/numeric failure, 2
usage/config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import adversary, bounds, data, mixture, network, trainer
from .errors import CemError, MissingArtifact, ParseError, UnknownDefense

# Desk-scale calibration: at a few hundred training samples the entropy
# penalty's per-sample pull (lambda / N) is orders of magnitude stronger
# relative to the task gradient than at dataset sizes in the tens of
# thousands, so the runnable defaults use a smaller step and batch than
# the published large-scale recipe.
DEFAULT_CONFIG = {
    "lam": 16.0,
    "noise_std": 0.025,
    "k": None,
    "epochs": 300,
    "batch_size": 16,
    "lr": 0.001,
    "momentum": 0.0,
    "seed": 0,
    "defense": "noise_only",
    "d_z": 8,
    "hidden": 32,
    "feature_scale": 2.0,
    "gmm_iters": 10,
    "data_kind": "blobs",
    "data_classes": 3,
    "data_dim": 16,
    "data_per_class": 200,
    "data_spread": 0.05,
    "data_csv": None,
    "attack_epochs": 150,
    "attack_lr": 0.01,
    "attack_seed": 0,
    "h_x_offset": 0.0,
}

DEFAULT_GRID = (0.01, 0.025, 0.05, 0.1, 0.2, 0.3)


@dataclass
class RunManifest:
    run_id: str
    config: dict
    output_dir: str
    artifacts: dict

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config": self.config,
            "output_dir": self.output_dir,
            "artifacts": self.artifacts,
        }

    def save(self, path: Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path: Path) -> "RunManifest":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
            return RunManifest(
                run_id=doc["run_id"],
                config=doc["config"],
                output_dir=doc["output_dir"],
                artifacts=doc["artifacts"],
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ParseError(f"invalid manifest {path}: {exc}") from exc


def _fmt(x: float) -> str:
    return repr(float(x))


def run_id_for(config: dict) -> str:
    """Deterministic run identifier: config digest plus the seed, so two
    runs of the same config emit byte-identical artifacts."""
    canon = json.dumps(config, sort_keys=True).encode("utf-8")
    return f"{hashlib.sha256(canon).hexdigest()[:12]}-s{config['seed']}"


def load_config(path: str | None, overrides: dict) -> dict:
    config = dict(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        try:
            with open(p, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config file {p} is not valid JSON: {exc}") from exc
        unknown = set(file_values) - set(DEFAULT_CONFIG)
        if unknown:
            raise ParseError(f"unknown config keys in {p}: {sorted(unknown)}")
        config.update(file_values)
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    return config


def build_dataset(config: dict) -> data.Dataset:
    if config["data_kind"] == "blobs":
        return data.synth_blobs(
            n_classes=int(config["data_classes"]),
            d=int(config["data_dim"]),
            per_class=int(config["data_per_class"]),
            spread=float(config["data_spread"]),
            seed=int(config["seed"]),
        )
    if config["data_kind"] == "csv":
        if not config["data_csv"]:
            raise ValueError("data_kind=csv requires data_csv")
        return data.load_csv(
            config["data_csv"], int(config["data_classes"]), seed=int(config["seed"])
        )
    raise ValueError(f"unknown data_kind {config['data_kind']!r}")


def training_config(config: dict) -> trainer.TrainingConfig:
    return trainer.TrainingConfig(
        lam=float(config["lam"]),
        noise_std=float(config["noise_std"]),
        k=None if config["k"] is None else int(config["k"]),
        epochs=int(config["epochs"]),
        batch_size=int(config["batch_size"]),
        lr=float(config["lr"]),
        momentum=float(config["momentum"]),
        seed=int(config["seed"]),
        defense=str(config["defense"]),
        d_z=int(config["d_z"]),
        hidden=int(config["hidden"]),
        feature_scale=float(config["feature_scale"]),
        gmm_iters=int(config["gmm_iters"]),
    )


def write_history_csv(path: Path, run_id: str, history) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# run_id={run_id}\n")
        fh.write("epoch,l_d,l_c,total,accuracy,rel_cond_entropy\n")
        for row in history:
            fh.write(
                ",".join(
                    [
                        str(row.epoch),
                        _fmt(row.l_d),
                        _fmt(row.l_c),
                        _fmt(row.total),
                        _fmt(row.accuracy),
                        _fmt(-row.l_c),
                    ]
                )
                + "\n"
            )


def cmd_train(config: dict, out_dir: Path) -> RunManifest:
    out_dir.mkdir(parents=True, exist_ok=True)
    run_id = run_id_for(config)
    ds = build_dataset(config)
    cfg = training_config(config)
    result = trainer.train(cfg, ds)

    artifacts = {
        "encoder": "encoder.json",
        "decoder": "decoder.json",
        "mixture": "mixture.json",
        "history": "history.csv",
    }
    network.save_network(result.encoder, out_dir / artifacts["encoder"])
    network.save_network(result.decoder, out_dir / artifacts["decoder"])
    mixture.save_mixture(result.mixture, out_dir / artifacts["mixture"])
    write_history_csv(out_dir / artifacts["history"], run_id, result.history)

    manifest = RunManifest(
        run_id=run_id, config=config, output_dir=str(out_dir), artifacts=artifacts
    )
    manifest.save(out_dir / "manifest.json")
    return manifest


def _load_manifest(run: str) -> tuple[RunManifest, Path]:
    path = Path(run)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise MissingArtifact(f"manifest not found: {path}")
    return RunManifest.load(path), path.parent


def _artifact_path(manifest: RunManifest, base: Path, name: str) -> Path:
    try:
        rel = manifest.artifacts[name]
    except KeyError as exc:
        raise MissingArtifact(f"manifest lists no {name!r} artifact") from exc
    path = base / rel
    if not path.exists():
        raise MissingArtifact(f"artifact missing on disk: {path}")
    return path


def run_floor(manifest: RunManifest, base: Path) -> float:
    """MSE floor at the run's relative-entropy convention (stated offset)."""
    mix = mixture.load_mixture(_artifact_path(manifest, base, "mixture"))
    config = manifest.config
    noise = bounds.NoiseModel(std=float(config["noise_std"]), dim=int(config["d_z"]))
    h_cond = bounds.cond_entropy_lower(
        float(config["h_x_offset"]), bounds.mi_upper_bound(mix, noise)
    )
    return bounds.mse_floor(h_cond, int(config["data_dim"]))


def cmd_attack(run: str, attack_overrides: dict | None = None) -> adversary.AttackReport:
    manifest, base = _load_manifest(run)
    config = dict(manifest.config)
    if attack_overrides:
        for key, value in attack_overrides.items():
            if value is not None:
                config[key] = value
    encoder = network.load_network(_artifact_path(manifest, base, "encoder"))
    ds = build_dataset(manifest.config)
    noise = bounds.NoiseModel(std=float(config["noise_std"]), dim=int(config["d_z"]))
    atk_cfg = adversary.AttackConfig(
        epochs=int(config["attack_epochs"]),
        lr=float(config["attack_lr"]),
        seed=int(config["attack_seed"]),
    )
    attacker = adversary.train_attacker(encoder, noise, ds, atk_cfg)
    x_train, _ = ds.train_arrays()
    x_test, _ = ds.test_arrays()
    floor = run_floor(manifest, base) if float(config["noise_std"]) > 0 else None
    report = adversary.evaluate_attack(
        attacker, encoder, noise, x_train, x_test, seed=atk_cfg.seed, floor=floor
    )

    with open(base / "attack_report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    csv_path = base / "attacks.csv"
    fresh = not csv_path.exists()
    with open(csv_path, "a", encoding="utf-8", newline="") as fh:
        if fresh:
            fh.write(f"# run_id={manifest.run_id}\n")
            fh.write("attack_seed,mse_train,mse_infer,psnr_train,psnr_infer,floor\n")
        fh.write(
            ",".join(
                [
                    str(atk_cfg.seed),
                    _fmt(report.mse_train),
                    _fmt(report.mse_infer),
                    _fmt(report.psnr_train),
                    _fmt(report.psnr_infer),
                    "" if report.floor is None else _fmt(report.floor),
                ]
            )
            + "\n"
        )
    return report


def cmd_bounds(run: str, h_x_offset: float | None = None) -> bounds.BoundsReport:
    manifest, base = _load_manifest(run)
    config = manifest.config
    mix = mixture.load_mixture(_artifact_path(manifest, base, "mixture"))
    noise = bounds.NoiseModel(std=float(config["noise_std"]), dim=int(config["d_z"]))
    offset = float(config["h_x_offset"]) if h_x_offset is None else float(h_x_offset)
    report = bounds.bounds_report(mix, noise, offset, int(config["data_dim"]))
    with open(base / "bounds_report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return report


def _sweep_point(config: dict, variance: float, out_dir: Path) -> dict:
    point = dict(config)
    point["noise_std"] = float(np.sqrt(variance))
    point["defense"] = "noise_only"
    manifest = cmd_train(point, out_dir)
    history_rel_h = None
    history = read_history_csv(out_dir / manifest.artifacts["history"])
    if history:
        history_rel_h = history[-1]["rel_cond_entropy"]
    report = cmd_attack(str(out_dir))
    ds = build_dataset(point)
    encoder = network.load_network(out_dir / manifest.artifacts["encoder"])
    decoder = network.load_network(out_dir / manifest.artifacts["decoder"])
    noise = bounds.NoiseModel(std=float(point["noise_std"]), dim=int(point["d_z"]))
    accuracy = trainer.evaluate_utility(
        encoder, decoder, ds, noise, seed=int(point["seed"])
    )
    return {
        "variance": variance,
        "rel_cond_entropy": history_rel_h,
        "mse_train": report.mse_train,
        "mse_infer": report.mse_infer,
        "accuracy": accuracy,
        "error": "",
    }


def cmd_sweep(config: dict, grid, out_dir: Path) -> list[dict]:
    """Train one fresh model per noise variance and record the robustness
    curve. Rows are flushed as they complete; the final file is rewritten
    in grid order. CEM_LAB_THREADS caps concurrent grid points."""
    if not grid:
        raise ValueError("sweep grid is empty")
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sweep.csv"
    header = "variance,rel_cond_entropy,mse_train,mse_infer,accuracy,error\n"
    lock = threading.Lock()
    run_id = run_id_for(config)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# run_id={run_id}\n")
        fh.write(header)

    def fmt_row(row: dict) -> str:
        fields = [
            _fmt(row["variance"]),
            "" if row["rel_cond_entropy"] is None else _fmt(row["rel_cond_entropy"]),
            "" if row["mse_train"] is None else _fmt(row["mse_train"]),
            "" if row["mse_infer"] is None else _fmt(row["mse_infer"]),
            "" if row["accuracy"] is None else _fmt(row["accuracy"]),
            row["error"],
        ]
        return ",".join(fields) + "\n"

    def job(i: int, variance: float) -> dict:
        try:
            row = _sweep_point(config, variance, out_dir / f"point_{i:02d}")
        except (CemError, ValueError, OSError) as exc:
            row = {
                "variance": variance,
                "rel_cond_entropy": None,
                "mse_train": None,
                "mse_infer": None,
                "accuracy": None,
                "error": f"{type(exc).__name__}: {exc}",
            }
        with lock, open(csv_path, "a", encoding="utf-8", newline="") as fh:
            fh.write(fmt_row(row))
        return row

    workers = max(1, int(os.environ.get("CEM_LAB_THREADS", "1")))
    if workers == 1:
        rows = [job(i, v) for i, v in enumerate(grid)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, range(len(grid)), grid))

    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# run_id={run_id}\n")
        fh.write(header)
        for row in rows:
            fh.write(fmt_row(row))
    return rows


def read_history_csv(path: Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            values = line.split(",")
            rows.append(
                {k: (float(v) if k != "epoch" else int(v))
                 for k, v in zip(header, values)}
            )
    return rows


def cmd_report(out_dir: Path) -> list[dict]:
    """Aggregate every run manifest beneath a directory into report.csv."""
    entries = []
    for manifest_path in sorted(out_dir.rglob("manifest.json")):
        base = manifest_path.parent
        manifest = RunManifest.load(manifest_path)
        entry = {
            "run_id": manifest.run_id,
            "path": str(base),
            "lam": manifest.config.get("lam"),
            "noise_std": manifest.config.get("noise_std"),
            "seed": manifest.config.get("seed"),
            "final_accuracy": None,
            "final_l_c": None,
            "mse_train": None,
            "mse_infer": None,
            "mi_bound": None,
        }
        history_path = base / manifest.artifacts.get("history", "history.csv")
        if history_path.exists():
            history = read_history_csv(history_path)
            if history:
                entry["final_accuracy"] = history[-1]["accuracy"]
                entry["final_l_c"] = history[-1]["l_c"]
        attack_path = base / "attack_report.json"
        if attack_path.exists():
            with open(attack_path, "r", encoding="utf-8") as fh:
                report = json.load(fh)
            entry["mse_train"] = report.get("mse_train")
            entry["mse_infer"] = report.get("mse_infer")
        bounds_path = base / "bounds_report.json"
        if bounds_path.exists():
            with open(bounds_path, "r", encoding="utf-8") as fh:
                entry["mi_bound"] = json.load(fh).get("mi_bound")
        entries.append(entry)

    report_path = out_dir / "report.csv"
    columns = [
        "run_id", "path", "lam", "noise_std", "seed",
        "final_accuracy", "final_l_c", "mse_train", "mse_infer", "mi_bound",
    ]
    with open(report_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for entry in entries:
            fh.write(
                ",".join(
                    "" if entry[c] is None else str(entry[c]) for c in columns
                )
                + "\n"
            )
    return entries


def _parse_grid(text: str) -> list[float]:
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValueError(f"bad grid {text!r}: {exc}") from exc
    if not grid:
        raise ValueError("grid is empty")
    return grid


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cemlab",
        description="Train split-inference models under an entropy penalty, "
        "evaluate inversion adversaries, and report robustness bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--noise-std", dest="noise_std", type=float)
        p.add_argument("--k", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--out", default="runs/run", help="output directory")

    p_train = sub.add_parser("train", help="run the training loop")
    add_common(p_train)

    p_attack = sub.add_parser("attack", help="train an inversion adversary")
    p_attack.add_argument("run", help="run directory or manifest path")
    p_attack.add_argument("--attack-epochs", dest="attack_epochs", type=int)
    p_attack.add_argument("--attack-lr", dest="attack_lr", type=float)
    p_attack.add_argument("--attack-seed", dest="attack_seed", type=int)

    p_bounds = sub.add_parser("bounds", help="report the information bounds")
    p_bounds.add_argument("run", help="run directory or manifest path")
    p_bounds.add_argument("--h-x-offset", dest="h_x_offset", type=float)

    p_sweep = sub.add_parser("sweep", help="noise-variance robustness sweep")
    add_common(p_sweep)
    p_sweep.add_argument(
        "--grid", default=",".join(str(v) for v in DEFAULT_GRID),
        help="comma-separated noise variances",
    )

    p_report = sub.add_parser("report", help="aggregate run artifacts")
    p_report.add_argument("--out", default="runs", help="directory to scan")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    def merged_config():
        overrides = {
            k: getattr(args, k) for k in ("seed", "lam", "noise_std", "k", "epochs")
        }
        try:
            return load_config(args.config, overrides)
        except ParseError as exc:
            # Config-file problems are usage errors, unlike artifact parse
            # failures at runtime.
            raise ValueError(str(exc)) from exc

    try:
        if args.command == "train":
            manifest = cmd_train(merged_config(), Path(args.out))
            print(f"run {manifest.run_id} complete; artifacts in {args.out}")
        elif args.command == "attack":
            overrides = {
                k: getattr(args, k)
                for k in ("attack_epochs", "attack_lr", "attack_seed")
            }
            report = cmd_attack(args.run, overrides)
            print(
                f"attack mse_train={report.mse_train:.6g} "
                f"mse_infer={report.mse_infer:.6g}"
            )
        elif args.command == "bounds":
            report = cmd_bounds(args.run, args.h_x_offset)
            print(
                f"mi_bound={report.mi_bound:.6g} "
                f"rel_cond_entropy={report.rel_cond_entropy:.6g} "
                f"mse_floor={report.mse_floor:.6g}"
            )
        elif args.command == "sweep":
            rows = cmd_sweep(merged_config(), _parse_grid(args.grid), Path(args.out))
            failures = [r for r in rows if r["error"]]
            print(f"sweep wrote {len(rows)} rows ({len(failures)} failed)")
            if failures:
                return 1
        elif args.command == "report":
            entries = cmd_report(Path(args.out))
            print(f"aggregated {len(entries)} runs into {args.out}/report.csv")
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (UnknownDefense, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CemError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
