"""Command-line surface: prepare, train, infer, fuse, evaluate, sweep.

Typical desk-scale round trip:

    dualsr prepare hr/ work/
    dualsr train distortion --data work/hr --out runs/d --config toy.cfg
    dualsr train perception --data work/hr --out runs/p --config toy.cfg
    dualsr infer runs/d/distortion_best.ckpt work/lr out/distortion
    dualsr infer runs/p/perception_stage2.ckpt work/lr out/perception
    dualsr fuse out/perception out/distortion out/fused --threshold 0.73
    dualsr evaluate out/fused work/hr --out fused_metrics.csv
    dualsr sweep out/perception out/distortion work/hr --out sweep.csv

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .data import (
    DatasetConfig,
    PatchPair,
    list_images,
    load_sources,
    prepare_source,
)
from .exceptions import (
    CheckpointError,
    ConfigError,
    DataError,
    DualSRError,
    ImageFormatError,
    NumericAbort,
)
from .fusion import FusionParams, fuse
from .imgio import load_image, save_image, to_unit
from .losses import LossWeights, make_extractor
from .metrics import (
    FileScorer,
    SharpnessProxyScorer,
    apply_protocol,
    evaluate_dir,
    matched_names,
    rmse,
    write_report_csv,
)
from .models import (
    DiscriminatorConfig,
    MemoryGeneratorConfig,
    ResidualGeneratorConfig,
    super_resolve,
)
from .trainer import (
    STAGE_DISTORTION,
    STAGE_PERCEPTION_1,
    STAGE_PERCEPTION_2,
    OptimizerConfig,
    Schedule,
    TrainingPlan,
    TrainLog,
    load_checkpoint,
    save_checkpoint,
    train_distortion,
    train_perception,
)

USAGE_ERROR, DATA_ERROR, NUMERIC_ERROR = 2, 3, 4


def _write_run_log(path, command: str, seed: int, config: RunConfig) -> None:
    with open(path, "w") as fh:
        fh.write(f"# dualsr {__version__}\n")
        fh.write(f"# command: {command}\n")
        fh.write(f"# seed: {seed}\n")
        for line in config.echo_lines():
            fh.write(line + "\n")


def _effective_seed(args, config: RunConfig) -> int:
    return config["train.seed"] if args.seed is None else args.seed


def _dataset_config(config: RunConfig, hr_dir: str, seed: int) -> DatasetConfig:
    return DatasetConfig(
        hr_dir=hr_dir,
        scale=config["data.scale"],
        lr_patch=config["data.lr_patch"],
        batch_size=config["data.batch_size"],
        flip=config["data.flip"],
        seed=seed,
        crops_per_image=config["data.crops_per_image"],
    )


def cmd_prepare(args, config: RunConfig) -> int:
    scale = args.scale if args.scale is not None else config["data.scale"]
    names = list_images(args.hr_dir)
    if not names:
        raise DataError(f"no PNG images in {args.hr_dir}")
    lr_dir = os.path.join(args.out_dir, "lr")
    hr_dir = os.path.join(args.out_dir, "hr")
    os.makedirs(lr_dir, exist_ok=True)
    os.makedirs(hr_dir, exist_ok=True)
    rows = []
    for name in names:
        source = prepare_source(load_image(os.path.join(args.hr_dir, name)), scale, name=name)
        save_image(source.hr, os.path.join(hr_dir, name))
        save_image(source.lr, os.path.join(lr_dir, name))
        rows.append([name, os.path.join(hr_dir, name), os.path.join(lr_dir, name)])
    with open(os.path.join(args.out_dir, "manifest.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "hr", "lr"])
        writer.writerows(rows)
    seed = _effective_seed(args, config)
    _write_run_log(os.path.join(args.out_dir, "run.log"), "prepare", seed, config)
    return 0


def _validation_pairs(config: RunConfig, train_dir: str, scale: int) -> list[PatchPair]:
    val_dir = config["train.val_dir"] or train_dir
    names = list_images(val_dir)
    pairs = []
    for name in names[: config["train.val_images"]]:
        source = prepare_source(load_image(os.path.join(val_dir, name)), scale, name=name)
        pairs.append(PatchPair(lr=source.lr, hr=source.hr))
    if not pairs:
        raise DataError(f"no validation images in {val_dir} (train.val_images = "
                        f"{config['train.val_images']})")
    return pairs


def _training_plan(args, config: RunConfig, seed: int) -> TrainingPlan:
    dataset = _dataset_config(config, args.data, seed)
    extractor = make_extractor(
        config["loss.extractor"],
        seed=seed,
        asset_path=config["loss.extractor_asset"] or None,
    )
    opt = OptimizerConfig(
        lr0=config["train.lr"],
        beta1=config["train.beta1"],
        beta2=config["train.beta2"],
        eps=config["train.eps"],
    )
    schedule = Schedule(
        lr0=config["train.lr"],
        total_iterations=config["train.iterations"],
        decay_at=config["train.decay_at"],
        decay_factor=config["train.decay_factor"],
        epochs=config["train.epochs"],
    )
    return TrainingPlan(
        dataset=dataset,
        weights=LossWeights(
            adv_weight=config["loss.adv_weight"], feat_weight=config["loss.feat_weight"]
        ),
        extractor=extractor,
        opt=opt,
        schedule=schedule,
        validation=_validation_pairs(config, args.data, config["data.scale"]),
        fresh_discriminator_stage2=config["train.fresh_discriminator_stage2"],
    )


def cmd_train(args, config: RunConfig) -> int:
    seed = _effective_seed(args, config)
    os.makedirs(args.out, exist_ok=True)
    _write_run_log(os.path.join(args.out, "run.log"), f"train {args.branch}", seed, config)
    plan = _training_plan(args, config, seed)
    plan.log = TrainLog(os.path.join(args.out, "train_log.csv"))
    sources = load_sources(plan.dataset)
    disc_cfg = DiscriminatorConfig(
        use_batchnorm=(args.branch == "distortion"),
        base_features=config["model.disc_features"],
        input_size=plan.dataset.hr_patch,
        dense_features=config["model.disc_dense"],
    )

    resume_state = None
    if args.resume:
        resume_state, _ = load_checkpoint(args.resume)

    if args.branch == "distortion":
        gen_cfg = MemoryGeneratorConfig(
            n_features=config["model.features"], n_memory_blocks=config["model.memory_blocks"]
        )
        if resume_state is not None and resume_state.stage != STAGE_DISTORTION:
            raise CheckpointError(
                f"cannot resume a {resume_state.stage} checkpoint as distortion training"
            )
        result = train_distortion(
            plan,
            sources,
            seed,
            gen_cfg=gen_cfg,
            disc_cfg=disc_cfg,
            state=resume_state,
            best_checkpoint_path=os.path.join(args.out, "distortion_best.ckpt"),
        )
        save_checkpoint(result.state, os.path.join(args.out, "distortion_last.ckpt"), plan.opt)
        print(f"best validation ssim {result.best_metric:.4f} at epoch {result.best_epoch}")
        return 0

    gen_cfg = ResidualGeneratorConfig(
        n_features=config["model.features"], n_resblocks=config["model.resblocks"]
    )
    stage1_state = stage2_state = None
    if resume_state is not None:
        if resume_state.stage == STAGE_PERCEPTION_1:
            stage1_state = resume_state
        elif resume_state.stage == STAGE_PERCEPTION_2:
            stage2_state = resume_state
            stage1_path = os.path.join(os.path.dirname(args.resume), "perception_stage1.ckpt")
            stage1_state, _ = load_checkpoint(stage1_path)
        else:
            raise CheckpointError(
                f"cannot resume a {resume_state.stage} checkpoint as perception training"
            )
    result = train_perception(
        plan,
        sources,
        seed,
        gen_cfg=gen_cfg,
        disc_cfg=disc_cfg,
        stage1_state=stage1_state,
        stage2_state=stage2_state,
    )
    save_checkpoint(result.stage1_state, os.path.join(args.out, "perception_stage1.ckpt"), plan.opt)
    save_checkpoint(result.stage2_state, os.path.join(args.out, "perception_stage2.ckpt"), plan.opt)
    return 0


def cmd_infer(args, config: RunConfig) -> int:
    state, _ = load_checkpoint(args.checkpoint)
    names = list_images(args.lr_dir)
    if not names:
        raise DataError(f"no PNG images in {args.lr_dir}")
    os.makedirs(args.out_dir, exist_ok=True)
    state.generator.eval()
    for name in names:
        sr = super_resolve(state.generator, load_image(os.path.join(args.lr_dir, name)))
        save_image(sr, os.path.join(args.out_dir, name))
    seed = _effective_seed(args, config)
    _write_run_log(os.path.join(args.out_dir, "run.log"), "infer", seed, config)
    return 0


def cmd_fuse(args, config: RunConfig) -> int:
    threshold = args.threshold if args.threshold is not None else config["fusion.threshold"]
    params = FusionParams(threshold=threshold)
    os.makedirs(args.out_dir, exist_ok=True)
    for name in matched_names(args.perception_dir, args.distortion_dir):
        perception = load_image(os.path.join(args.perception_dir, name))
        distortion = load_image(os.path.join(args.distortion_dir, name))
        save_image(to_unit(fuse(perception, distortion, params)), os.path.join(args.out_dir, name))
    seed = _effective_seed(args, config)
    _write_run_log(os.path.join(args.out_dir, "run.log"), "fuse", seed, config)
    return 0


def cmd_evaluate(args, config: RunConfig) -> int:
    scorer = None
    if args.scores:
        scorer = FileScorer(args.scores)
    elif args.proxy:
        scorer = SharpnessProxyScorer()
    report = evaluate_dir(
        args.sr_dir,
        args.hr_dir,
        scorer=scorer,
        shave=config["metrics.shave"],
        rgb_rmse=config["metrics.rgb_rmse"],
        full_range_y=config["metrics.full_range_y"],
    )
    write_report_csv(report, args.out)
    seed = _effective_seed(args, config)
    _write_run_log(args.out + ".log", "evaluate", seed, config)
    print(
        f"mean rmse {report.mean_rmse:.4f}  mean psnr {report.mean_psnr:.4f}"
        f" ({report.psnr_inf_count} inf excluded)  mean ssim {report.mean_ssim:.4f}"
    )
    return 0


def _parse_grid(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid {text!r} is not start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ConfigError(f"bad grid {text!r}")
        count = int(round((stop - start) / step)) + 1
        return [start + i * step for i in range(count)]
    return [float(p) for p in text.split(",") if p.strip()]


def cmd_sweep(args, config: RunConfig) -> int:
    grid = _parse_grid(args.grid)
    if grid != sorted(grid) or any(t < 0 for t in grid):
        raise ConfigError("threshold grid must be ascending and non-negative")
    names = matched_names(args.perception_dir, args.distortion_dir)
    hr_names = matched_names(args.distortion_dir, args.hr_dir)
    if names != hr_names:
        raise DataError("perception/distortion/hr directories disagree on image names")
    scorer = SharpnessProxyScorer()
    shave = config["metrics.shave"]
    full_range = config["metrics.full_range_y"]
    triples = []
    for name in names:
        triples.append(
            (
                load_image(os.path.join(args.perception_dir, name)),
                load_image(os.path.join(args.distortion_dir, name)),
                apply_protocol(
                    load_image(os.path.join(args.hr_dir, name)), shave=shave, full_range_y=full_range
                ),
            )
        )
    rows = []
    for t in grid:
        params = FusionParams(threshold=t)
        rmses, scores = [], []
        for perception, distortion, hr_ready in triples:
            fused = fuse(perception, distortion, params)
            rmses.append(rmse(hr_ready, apply_protocol(fused, shave=shave, full_range_y=full_range)))
            scores.append(scorer.score(fused))
        rows.append((t, float(np.mean(scores)), float(np.mean(rmses))))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "perceptual", "rmse"])
        for row in rows:
            writer.writerow([repr(v) for v in row])
    if args.plot:
        _plot_tradeoff(rows, args.plot)
    seed = _effective_seed(args, config)
    _write_run_log(args.out + ".log", "sweep", seed, config)
    return 0


def _plot_tradeoff(rows, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    thresholds = [r[0] for r in rows]
    perceptual = [r[1] for r in rows]
    rmses = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rmses, perceptual, marker="o")
    for t, x, y in zip(thresholds, rmses, perceptual):
        ax.annotate(f"{t:.2f}", (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("RMSE (8-bit scale)")
    ax.set_ylabel("perceptual score (lower is better)")
    ax.set_title("perception-distortion tradeoff")
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=120)
    plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualsr", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"dualsr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="path to a section.key = value file")
        p.add_argument("--seed", type=int, default=None, help="override train.seed")

    p = sub.add_parser("prepare", help="write bicubic LR counterparts and a pair manifest")
    p.add_argument("hr_dir")
    p.add_argument("out_dir")
    p.add_argument("--scale", type=int, default=None)
    common(p)

    p = sub.add_parser("train", help="train one branch")
    p.add_argument("branch", choices=["distortion", "perception"])
    p.add_argument("--data", required=True, help="directory of HR training PNGs")
    p.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    common(p)

    p = sub.add_parser("infer", help="4x upscale every PNG in a directory")
    p.add_argument("checkpoint")
    p.add_argument("lr_dir")
    p.add_argument("out_dir")
    common(p)

    p = sub.add_parser("fuse", help="soft-threshold blend of two SR directories")
    p.add_argument("perception_dir")
    p.add_argument("distortion_dir")
    p.add_argument("out_dir")
    p.add_argument("--threshold", type=float, default=None)
    common(p)

    p = sub.add_parser("evaluate", help="RMSE/PSNR/SSIM report against references")
    p.add_argument("sr_dir")
    p.add_argument("hr_dir")
    p.add_argument("--out", required=True, help="metric report CSV path")
    p.add_argument("--scores", default=None, help="CSV of precomputed perceptual scores")
    p.add_argument("--proxy", action="store_true", help="use the built-in sharpness proxy")
    common(p)

    p = sub.add_parser("sweep", help="trace the perception-distortion curve over thresholds")
    p.add_argument("perception_dir")
    p.add_argument("distortion_dir")
    p.add_argument("hr_dir")
    p.add_argument("--out", required=True, help="sweep CSV path")
    p.add_argument("--plot", default=None, help="optional tradeoff plot PNG path")
    p.add_argument("--grid", default="0:0.1:1", help="start:step:stop or comma list")
    common(p)

    return parser


_COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "infer": cmd_infer,
    "fuse": cmd_fuse,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.set("train.seed", args.seed)
        return _COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except NumericAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.record is not None:
            print(f"diagnostic record: {exc.record}", file=sys.stderr)
        return NUMERIC_ERROR
    except (DataError, ImageFormatError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except DualSRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
