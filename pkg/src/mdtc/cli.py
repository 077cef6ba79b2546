"""Command-line entry point.

Subcommands: train (k-fold cross-validated training with reports), synth
(write the bundled synthetic scenario), gradcheck (gradient release gate),
ablate (joint vs marginal comparison). Every run directory receives a
manifest sufficient to reproduce the run: the fully resolved configuration,
dataset checksums, seed, and code version.

Exit codes: 0 success, 1 usage or internal failure, 2 configuration error,
3 data error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import (SyntheticScenario, generate_synthetic, kfold_split,
                   load_domain_dirs, load_eval_split, misalignment_scenario,
                   save_domain, FoldSpec)
from .errors import ConfigError, DataError, MdtcError, NumericError, UsageError
from .experiment import compare_alignments
from .losses import LossWeights
from .model import ModelConfig, save_checkpoint
from .training import TrainConfig, evaluate, fit
from .vat import VatConfig

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

TRAIN_DEFAULTS: dict[str, object] = {
    # model
    "input_dim": 5000,
    "shared_dim": 128,
    "private_dim": 64,
    "extractor_hidden": "1000,500",
    "classifier_hidden": 192,
    "discriminator_hidden": 128,
    "dropout_rate": 0.4,
    # loss weights
    "lambda_d": 0.5,
    "lambda_uvt": 1.0,
    "lambda_lvt": 0.01,
    # vat
    "epsilon": 1.0,
    "xi": 0.1,
    "power_iterations": 1,
    # training
    "learning_rate": 0.0001,
    "batch_size": 8,
    "epochs": 50,
    "seed": 0,
    "folds": 5,
    "seeds": 5,
    "log1p_features": False,
    "checkpoint_every": 0,
}

SCENARIO_DEFAULTS: dict[str, object] = {
    "domains": 2,
    "dim": 2,
    "class_separation": 2.0,
    "flip_shift": 3.0,
    "domain_offset": 4.0,
    "noise_sigma": 0.55,
    "samples_per_class": "500,500;500,500",
    "test_per_class": "1000,1000",
    "labeled_fraction": 0.04,
    "seed": 0,
}


def _parse_kv_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def _coerce(key: str, value: str, default) -> object:
    try:
        if isinstance(default, bool):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        return value
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse {value!r} "
                          f"as {type(default).__name__}") from None


def resolve_config(path: str | None, defaults: dict[str, object],
                   overrides: dict[str, object] | None = None) -> dict[str, object]:
    """Defaults, then config file, then CLI overrides; unknown keys are a
    hard error. A manifest.json from a previous run is accepted in place of
    a config file."""
    resolved = dict(defaults)
    if path is not None:
        p = Path(path)
        if p.suffix == ".json":
            if not p.is_file():
                raise ConfigError(f"config file not found: {p}")
            manifest = json.loads(p.read_text(encoding="utf-8"))
            raw = {k: str(v) for k, v in manifest.get("resolved_config", {}).items()}
        else:
            raw = _parse_kv_file(p)
        for key, value in raw.items():
            if key not in defaults:
                raise ConfigError(f"unknown config key: {key!r}")
            resolved[key] = _coerce(key, value, defaults[key])
    for key, value in (overrides or {}).items():
        if value is not None:
            resolved[key] = value
    return resolved


def _parse_hidden(spec: str | object) -> tuple[int, ...]:
    text = str(spec).strip()
    if not text:
        return ()
    try:
        return tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse layer widths from {spec!r}") from None


def build_train_config(resolved: dict[str, object], num_domains: int) -> TrainConfig:
    model = ModelConfig(
        num_domains=num_domains,
        input_dim=int(resolved["input_dim"]),
        shared_dim=int(resolved["shared_dim"]),
        private_dim=int(resolved["private_dim"]),
        extractor_hidden=_parse_hidden(resolved["extractor_hidden"]),
        classifier_hidden=int(resolved["classifier_hidden"]),
        discriminator_hidden=int(resolved["discriminator_hidden"]),
        dropout_rate=float(resolved["dropout_rate"]),
    )
    return TrainConfig(
        loss_weights=LossWeights(lambda_d=float(resolved["lambda_d"]),
                                 lambda_uvt=float(resolved["lambda_uvt"]),
                                 lambda_lvt=float(resolved["lambda_lvt"])),
        vat=VatConfig(epsilon=float(resolved["epsilon"]),
                      xi=float(resolved["xi"]),
                      power_iterations=int(resolved["power_iterations"])),
        learning_rate=float(resolved["learning_rate"]),
        batch_size=int(resolved["batch_size"]),
        epochs=int(resolved["epochs"]),
        seed=int(resolved["seed"]),
        folds=int(resolved["folds"]),
        log1p_features=bool(resolved["log1p_features"]),
        model=model,
    )


def _parse_per_domain_counts(spec: str | object, num_domains: int,
                             key: str) -> list[tuple[int, int]]:
    groups = [g for g in str(spec).split(";") if g.strip()]
    counts: list[tuple[int, int]] = []
    for g in groups:
        parts = [p for p in g.split(",") if p.strip()]
        try:
            if len(parts) == 1:
                n = int(parts[0])
                counts.append((n, n))
            elif len(parts) == 2:
                counts.append((int(parts[0]), int(parts[1])))
            else:
                raise ValueError(g)
        except ValueError:
            raise ConfigError(f"config key {key}: cannot parse group {g!r}") from None
    while len(counts) < num_domains:
        counts.append(counts[-1])
    return counts[:num_domains]


def build_scenario(resolved: dict[str, object]) -> SyntheticScenario:
    m = int(resolved["domains"])
    samples = _parse_per_domain_counts(resolved["samples_per_class"], m,
                                       "samples_per_class")
    tests = [n for n, _ in _parse_per_domain_counts(resolved["test_per_class"], m,
                                                    "test_per_class")]
    return misalignment_scenario(
        num_domains=m,
        dim=int(resolved["dim"]),
        class_separation=float(resolved["class_separation"]),
        flip_shift=float(resolved["flip_shift"]),
        domain_offset=float(resolved["domain_offset"]),
        noise_sigma=float(resolved["noise_sigma"]),
        samples_per_class=samples,
        test_per_class=tests,
        labeled_fraction=float(resolved["labeled_fraction"]),
        seed=int(resolved["seed"]),
    )


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _dataset_checksums(data_dir: Path) -> dict[str, str]:
    sums = {}
    for p in sorted(data_dir.rglob("*.tsv")):
        sums[str(p.relative_to(data_dir))] = _sha256(p)
    return sums


def write_manifest(out_dir: Path, resolved: dict[str, object],
                   data_dir: Path | None, outputs: list[str],
                   extra: dict | None = None) -> Path:
    manifest = {
        "version": __version__,
        "resolved_config": resolved,
        "seed": resolved.get("seed"),
        "dataset_checksums": _dataset_checksums(data_dir) if data_dir else {},
        "outputs": sorted(outputs),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(fold,))
               .generate_state(1)[0])


def _detect_input_dim(resolved: dict[str, object], data_dir: Path,
                      explicit: bool) -> int:
    """scenario_manifest.json in the data directory supplies the feature
    width for synthetic data unless the config set one explicitly."""
    manifest = data_dir / "scenario_manifest.json"
    if not explicit and manifest.is_file():
        return int(json.loads(manifest.read_text(encoding="utf-8"))["encoded_dim"])
    return int(resolved["input_dim"])


def cmd_train(args) -> int:
    resolved = resolve_config(args.config, TRAIN_DEFAULTS,
                              {"seed": args.seed, "folds": args.folds})
    data_dir = Path(args.data)
    explicit_dim = args.config is not None and "input_dim" in _raw_config_keys(args.config)
    resolved["input_dim"] = _detect_input_dim(resolved, data_dir, explicit_dim)

    datasets = load_domain_dirs(data_dir, int(resolved["input_dim"]))
    cfg = build_train_config(resolved, num_domains=len(datasets))
    if args.ablation:
        cfg = replace(cfg, model=replace(cfg.model, joint_alignment=False))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    from .report import (render_eval_curves, render_loss_curves,
                         render_summary_figure, summarize_folds,
                         write_metrics_jsonl, write_summary)

    fold_specs = [kfold_split(ds, FoldSpec(k=cfg.folds, seed=cfg.seed))
                  for ds in datasets]
    histories: dict[str, list] = {}
    fold_reports: list[dict[str, float]] = []
    outputs: list[str] = []

    for fold in range(cfg.folds):
        train_sets = []
        test_indices = []
        for ds, folds in zip(datasets, fold_specs):
            train_idx, test_idx = folds[fold]
            labeled = [ds.labeled[i] for i in train_idx]
            train_sets.append(type(ds)(name=ds.name, labeled=labeled,
                                       unlabeled=ds.unlabeled,
                                       input_dim=ds.input_dim))
            test_indices.append(test_idx)
        fold_cfg = replace(cfg, seed=_fold_seed(cfg.seed, fold))

        checkpoint_every = int(resolved["checkpoint_every"])
        fold_dir = out_dir / f"fold{fold}"
        fold_dir.mkdir(exist_ok=True)

        def periodic(epoch, model, _dir=fold_dir):
            if checkpoint_every > 0 and (epoch + 1) % checkpoint_every == 0:
                save_checkpoint(model, _dir / f"checkpoint_epoch{epoch + 1}.npz")

        model, history = fit(train_sets, fold_cfg, on_epoch_end=periodic)
        report = evaluate(model, datasets, test_indices=test_indices,
                          log1p=cfg.log1p_features)
        histories[f"fold{fold}"] = history
        fold_reports.append(report.per_domain)
        ckpt = fold_dir / "checkpoint.npz"
        save_checkpoint(model, ckpt)
        outputs.append(str(ckpt.relative_to(out_dir)))

    write_metrics_jsonl(out_dir / "metrics.jsonl", histories)
    summary = summarize_folds(fold_reports)
    tsv_path, json_path = write_summary(summary, out_dir)
    figures = [render_loss_curves(histories, out_dir / "loss_curves.png"),
               render_summary_figure(summary, out_dir / "summary.png")]
    eval_fig = render_eval_curves(histories, out_dir / "eval_curves.png")
    if eval_fig:
        figures.append(eval_fig)
    outputs += [str(p.relative_to(out_dir))
                for p in [out_dir / "metrics.jsonl", tsv_path, json_path, *figures]]
    write_manifest(out_dir, resolved, data_dir, outputs)

    avg = summary["average"]
    print(Path(tsv_path).read_text(encoding="utf-8"), end="")
    print(f"written: {out_dir} (AVG {avg['mean']:.4f} ± {avg['std']:.4f})")
    return EXIT_OK


def _raw_config_keys(path: str) -> set[str]:
    p = Path(path)
    if p.suffix == ".json":
        if not p.is_file():
            return set()
        return set(json.loads(p.read_text(encoding="utf-8"))
                   .get("resolved_config", {}).keys())
    return set(_parse_kv_file(p).keys())


def cmd_synth(args) -> int:
    resolved = resolve_config(args.config, SCENARIO_DEFAULTS, {"seed": args.seed})
    scenario = build_scenario(resolved)
    bundle = generate_synthetic(scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for train, test in zip(bundle.train, bundle.test):
        save_domain(train, out_dir / train.name, test=test)
    per_domain, mean_acc = scenario.bayes_accuracy()
    manifest = {
        "version": __version__,
        "resolved_config": resolved,
        "encoded_dim": scenario.encoded_dim,
        "bayes_accuracy": {"per_domain": per_domain, "mean": mean_acc},
        "labeled_counts": [ds.num_labeled for ds in bundle.train],
        "unlabeled_counts": [ds.num_unlabeled for ds in bundle.train],
        "test_counts": [ds.num_labeled for ds in bundle.test],
        "dataset_checksums": _dataset_checksums(out_dir),
    }
    (out_dir / "scenario_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(bundle.train)} domains to {out_dir} "
          f"(closed-form accuracy bound {mean_acc:.4f})")
    return EXIT_OK


def cmd_gradcheck(_args) -> int:
    from .gradcheck import run_gradient_checks
    return EXIT_OK if run_gradient_checks() else EXIT_FAILURE


def cmd_ablate(args) -> int:
    resolved = resolve_config(args.config, TRAIN_DEFAULTS,
                              {"seed": args.seed, "seeds": args.seeds})
    data_dir = Path(args.data)
    explicit_dim = args.config is not None and "input_dim" in _raw_config_keys(args.config)
    resolved["input_dim"] = _detect_input_dim(resolved, data_dir, explicit_dim)

    datasets = load_domain_dirs(data_dir, int(resolved["input_dim"]))
    cfg = build_train_config(resolved, num_domains=len(datasets))
    test_sets = [load_eval_split(data_dir / ds.name, ds.input_dim) for ds in datasets]
    if any(t is None for t in test_sets):
        raise DataError(f"ablate needs a test.tsv per domain under {data_dir}; "
                        "generate one with the synth command")

    seeds = [cfg.seed + i for i in range(int(resolved["seeds"]))]
    comparison = compare_alignments(datasets, test_sets, cfg, seeds)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .report import render_comparison_figure, write_comparison
    result = comparison.to_dict()
    tsv_path, json_path = write_comparison(result, out_dir)
    fig = render_comparison_figure(result, out_dir / "comparison.png")
    outputs = [str(p.relative_to(out_dir)) for p in (tsv_path, json_path, fig)]
    write_manifest(out_dir, resolved, data_dir, outputs,
                   extra={"seeds": seeds, "margin": result["margin"]})

    print(tsv_path.read_text(encoding="utf-8"), end="")
    print(f"margin (joint - marginal): {result['margin']:+.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdtc",
        description="Multi-domain text classification trainer with joint "
                    "class-domain adversarial alignment.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="k-fold cross-validated training")
    train.add_argument("--config", help="key = value config file or a manifest.json")
    train.add_argument("--data", required=True, help="directory of domain subdirectories")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--seed", type=int, help="override config seed")
    train.add_argument("--folds", type=int, help="override fold count")
    train.add_argument("--ablation", action="store_true",
                       help="train the marginal (domains-only) ablation instead")
    train.set_defaults(func=cmd_train)

    synth = sub.add_parser("synth", help="write the synthetic misalignment scenario")
    synth.add_argument("--config", help="scenario config file")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, help="override scenario seed")
    synth.set_defaults(func=cmd_synth)

    check = sub.add_parser("gradcheck", help="run the gradient release gate")
    check.set_defaults(func=cmd_gradcheck)

    ablate = sub.add_parser("ablate",
                            help="train joint and marginal variants and compare")
    ablate.add_argument("--config", help="key = value config file or a manifest.json")
    ablate.add_argument("--data", required=True)
    ablate.add_argument("--out", required=True)
    ablate.add_argument("--seed", type=int, help="base seed")
    ablate.add_argument("--seeds", type=int, help="number of seeds per method")
    ablate.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, MdtcError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:  # malformed input must never escape as a traceback
        print(f"internal error: {e!r}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
