"""Adversarial training for both branches, with deterministic resume.

The distortion branch trains single-stage on the combined
pixel + adversarial + feature objective (no-log adversarial term) for a
fixed number of epochs, keeping the checkpoint with the best validation
SSIM.  The perception branch trains in two stages: stage 1 on
pixel + adversarial, stage 2 warm-starts the generator from stage 1 and
switches to feature + adversarial (log adversarial term in both stages).

Every random draw comes from generators derived from one seed, and all
mutable state (parameters, Adam moments, RNG) round-trips losslessly
through the checkpoint container, so save/load/resume is bitwise
equivalent to an uninterrupted run.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import torch

from . import metrics
from .container import read_container, write_container
from .data import DatasetConfig, PatchPair, SourcePair, epoch_batches_from_sources
from .exceptions import CheckpointError, NumericAbort
from .losses import (
    LossWeights,
    adv_loss_log,
    adv_loss_nolog,
    discriminator_loss,
    perceptual_loss,
    pixel_loss,
    stage1_loss,
    stage2_loss,
    total_loss_distortion,
)
from .models import (
    Discriminator,
    DiscriminatorConfig,
    MemoryGeneratorConfig,
    MemoryResidualGenerator,
    ResidualGenerator,
    ResidualGeneratorConfig,
    init_parameters,
    super_resolve,
)

STAGE_DISTORTION = "distortion"
STAGE_PERCEPTION_1 = "perception1"
STAGE_PERCEPTION_2 = "perception2"
STAGES = (STAGE_DISTORTION, STAGE_PERCEPTION_1, STAGE_PERCEPTION_2)

CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind != "adam":
            raise ValueError("only adam is supported")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


@dataclass(frozen=True)
class Schedule:
    """Single-step learning-rate decay plus the epoch budget.

    ``total_iterations``/``decay_at`` drive the perception stages (each
    stage runs the schedule independently); ``epochs`` drives the
    distortion branch, which trains at constant lr0.
    """

    lr0: float = 1e-4
    total_iterations: int = 2000
    decay_at: int = 1000
    decay_factor: float = 10.0
    epochs: int = 2

    def __post_init__(self):
        if not (0 < self.decay_at <= self.total_iterations):
            raise ValueError("need 0 < decay_at <= total_iterations")
        if self.decay_factor <= 0:
            raise ValueError("decay_factor must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def lr_at(sched: Schedule, iteration: int) -> float:
    """lr0 before the decay point, lr0/decay_factor from it onward."""
    if not (0 <= iteration <= sched.total_iterations):
        raise ValueError(
            f"iteration {iteration} outside [0, {sched.total_iterations}]"
        )
    if iteration < sched.decay_at:
        return sched.lr0
    return sched.lr0 / sched.decay_factor


def _constant_schedule(lr0: float, n_iterations: int) -> Schedule:
    n = max(1, n_iterations)
    return Schedule(lr0=lr0, total_iterations=n, decay_at=n, decay_factor=1.0, epochs=1)


@dataclass
class TrainState:
    """Everything that evolves during a stage run."""

    stage: str
    generator: torch.nn.Module
    discriminator: torch.nn.Module
    g_opt: torch.optim.Adam
    d_opt: torch.optim.Adam
    rng: np.random.Generator
    arch: dict
    iteration: int = 0
    warm_started: bool = False
    best: dict | None = None  # {"metric", "epoch", "params"} for SSIM model selection


def _branch_for_stage(stage: str) -> str:
    return "distortion" if stage == STAGE_DISTORTION else "perception"


def _build_generator(arch: dict) -> torch.nn.Module:
    if arch["branch"] == "distortion":
        return MemoryResidualGenerator(MemoryGeneratorConfig(**arch["generator"]))
    return ResidualGenerator(ResidualGeneratorConfig(**arch["generator"]))


def new_train_state(
    stage: str,
    gen_cfg,
    disc_cfg: DiscriminatorConfig,
    opt_cfg: OptimizerConfig,
    seed: int,
) -> TrainState:
    """Fresh state with deterministic Xavier init derived from one seed."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    root = np.random.SeedSequence(seed)
    g_seed, d_seed, data_seed = root.spawn(3)
    arch = {
        "branch": _branch_for_stage(stage),
        "generator": asdict(gen_cfg),
        "discriminator": asdict(disc_cfg),
    }
    generator = _build_generator(arch)
    init_parameters(generator, np.random.default_rng(g_seed))
    discriminator = Discriminator(disc_cfg)
    init_parameters(discriminator, np.random.default_rng(d_seed))
    return TrainState(
        stage=stage,
        generator=generator,
        discriminator=discriminator,
        g_opt=_make_adam(generator, opt_cfg),
        d_opt=_make_adam(discriminator, opt_cfg),
        rng=np.random.default_rng(data_seed),
        arch=arch,
    )


def _make_adam(module: torch.nn.Module, cfg: OptimizerConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        module.parameters(), lr=cfg.lr0, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps
    )


def _set_lr(opt: torch.optim.Adam, lr: float) -> None:
    for group in opt.param_groups:
        group["lr"] = lr


def _stage_uses(stage: str) -> tuple[bool, bool]:
    """(pixel term?, feature term?) for the generator objective."""
    if stage == STAGE_DISTORTION:
        return True, True
    if stage == STAGE_PERCEPTION_1:
        return True, False
    return False, True


def train_step(
    state: TrainState,
    batch: PatchPair,
    weights: LossWeights,
    extractor: torch.nn.Module,
    sched: Schedule,
) -> dict:
    """One discriminator update, then one generator update on the stage loss.

    Returns the scalar log record; raises NumericAbort (with the record)
    if any loss goes non-finite.
    """
    if state.stage == STAGE_PERCEPTION_2 and not state.warm_started:
        raise ValueError("perception stage 2 must warm-start from a stage-1 generator")
    lr_value = lr_at(sched, state.iteration)
    _set_lr(state.g_opt, lr_value)
    _set_lr(state.d_opt, lr_value)

    lr_t = torch.from_numpy(batch.lr.data).float()
    hr_t = torch.from_numpy(batch.hr.data).float()

    def abort(record):
        raise NumericAbort(f"non-finite loss at iteration {state.iteration}", record)

    with torch.no_grad():
        fake_detached = state.generator(lr_t)
    d_real = state.discriminator(hr_t)
    d_fake = state.discriminator(fake_detached)
    d_loss = discriminator_loss(d_real, d_fake)
    record = {
        "iteration": state.iteration,
        "stage": state.stage,
        "lr": lr_value,
        "d_loss": float(d_loss.detach()),
        "g_total": None,
        "pixel": None,
        "adv": None,
        "perceptual": None,
    }
    if not math.isfinite(record["d_loss"]):
        abort(record)
    state.d_opt.zero_grad()
    d_loss.backward()
    state.d_opt.step()

    fake = state.generator(lr_t)
    d_out = state.discriminator(fake)
    use_pixel, use_feature = _stage_uses(state.stage)
    adv = adv_loss_nolog(d_out) if state.stage == STAGE_DISTORTION else adv_loss_log(d_out)
    lp = pixel_loss(hr_t, fake) if use_pixel else None
    lf = perceptual_loss(extractor, hr_t, fake) if use_feature else None
    if state.stage == STAGE_DISTORTION:
        total = total_loss_distortion(lp, adv, lf, weights)
    elif state.stage == STAGE_PERCEPTION_1:
        total = stage1_loss(lp, adv, weights)
    else:
        total = stage2_loss(adv, lf, weights)

    record.update(
        g_total=float(total.detach()),
        pixel=None if lp is None else float(lp.detach()),
        adv=float(adv.detach()),
        perceptual=None if lf is None else float(lf.detach()),
    )
    scalars = [record["g_total"], record["adv"], record["pixel"], record["perceptual"]]
    if not all(math.isfinite(v) for v in scalars if v is not None):
        abort(record)

    state.g_opt.zero_grad()
    total.backward()
    state.g_opt.step()
    state.iteration += 1
    return record


class TrainLog:
    """Append-only CSV of per-iteration scalars; None fields stay blank."""

    FIELDS = ["iteration", "stage", "lr", "d_loss", "g_total", "pixel", "adv", "perceptual"]

    def __init__(self, path=None):
        self.path = path
        self.records: list[dict] = []
        if path is not None:
            with open(path, "w", newline="") as fh:
                csv.writer(fh).writerow(self.FIELDS)

    def append(self, record: dict) -> None:
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", newline="") as fh:
                csv.writer(fh).writerow(
                    ["" if record[k] is None else record[k] for k in self.FIELDS]
                )


@dataclass
class TrainingPlan:
    """Bundle of everything a branch run needs."""

    dataset: DatasetConfig
    weights: LossWeights
    extractor: torch.nn.Module
    opt: OptimizerConfig
    schedule: Schedule
    validation: list[PatchPair] = field(default_factory=list)
    fresh_discriminator_stage2: bool = True
    log: TrainLog | None = None

    def logger(self) -> TrainLog:
        if self.log is None:
            self.log = TrainLog()
        return self.log


def default_validation_metric(validation: list[PatchPair]) -> Callable:
    """Mean SSIM (luma, shave 6) of clamped SR output over held-out pairs."""

    def metric(generator: torch.nn.Module) -> float:
        was_training = generator.training
        generator.eval()
        try:
            scores = []
            for pair in validation:
                sr = super_resolve(generator, pair.lr)
                _, _, s = metrics.metric_triple(pair.hr, sr)
                scores.append(s)
            return float(np.mean(scores))
        finally:
            generator.train(was_training)

    return metric


def _snapshot_params(module: torch.nn.Module) -> dict:
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def run_iterations(
    state: TrainState,
    sources: list[SourcePair],
    plan: TrainingPlan,
    sched: Schedule,
    start: int,
    stop: int,
    epoch_end: Callable | None = None,
    ipe: int | None = None,
) -> None:
    """Drive train_step from ``start`` to ``stop``, drawing batches on demand.

    The batch stream is a function of state.rng alone, so a reloaded
    checkpoint continues exactly where the saved run left off.
    """
    batches = iter(())
    it = start
    while it < stop:
        batch = next(batches, None)
        if batch is None:
            batches = epoch_batches_from_sources(sources, plan.dataset, state.rng)
            continue
        plan.logger().append(train_step(state, batch, plan.weights, plan.extractor, sched))
        it += 1
        if epoch_end is not None and it % ipe == 0:
            epoch_end(it // ipe)


def iterations_per_epoch(n_sources: int, cfg: DatasetConfig) -> int:
    return max(1, (n_sources * cfg.crops_per_image) // cfg.batch_size)


@dataclass
class DistortionResult:
    best_params: dict
    best_epoch: int
    best_metric: float
    state: TrainState


def train_distortion(
    plan: TrainingPlan,
    sources: list[SourcePair],
    seed: int,
    gen_cfg: MemoryGeneratorConfig | None = None,
    disc_cfg: DiscriminatorConfig | None = None,
    validation_metric: Callable | None = None,
    state: TrainState | None = None,
    best_checkpoint_path=None,
) -> DistortionResult:
    """Epoch-driven run at constant lr; keeps the best-SSIM checkpoint.

    Ties break toward the earliest epoch.  Pass ``state`` to resume.
    """
    if validation_metric is None:
        if not plan.validation:
            raise ValueError("distortion training needs a validation set")
        validation_metric = default_validation_metric(plan.validation)
    if state is None:
        state = new_train_state(
            STAGE_DISTORTION,
            gen_cfg or MemoryGeneratorConfig(),
            disc_cfg or DiscriminatorConfig(use_batchnorm=True, input_size=plan.dataset.hr_patch),
            plan.opt,
            seed,
        )
    ipe = iterations_per_epoch(len(sources), plan.dataset)
    total = plan.schedule.epochs * ipe
    sched = _constant_schedule(plan.opt.lr0, total)

    def epoch_end(epoch: int) -> None:
        metric = validation_metric(state.generator)
        if state.best is None or metric > state.best["metric"]:
            state.best = {
                "metric": float(metric),
                "epoch": epoch,
                "params": _snapshot_params(state.generator),
            }
            if best_checkpoint_path is not None:
                save_checkpoint(state, best_checkpoint_path, opt_cfg=plan.opt)

    run_iterations(
        state, sources, plan, sched, state.iteration, total, epoch_end=epoch_end, ipe=ipe
    )
    return DistortionResult(
        best_params=state.best["params"],
        best_epoch=state.best["epoch"],
        best_metric=state.best["metric"],
        state=state,
    )


@dataclass
class PerceptionResult:
    stage1_params: dict
    stage2_params: dict
    stage1_state: TrainState
    stage2_state: TrainState


def start_perception_stage2(
    stage1_state: TrainState, opt_cfg: OptimizerConfig, seed: int, fresh_discriminator: bool = True
) -> TrainState:
    """Warm-start stage 2: keep generator weights, reset optimizer moments.

    The discriminator restarts from a fresh init by default (a carried-over
    critic starts saturated against the pre-trained generator); pass
    ``fresh_discriminator=False`` to carry it across.
    """
    state = new_train_state(
        STAGE_PERCEPTION_2,
        ResidualGeneratorConfig(**stage1_state.arch["generator"]),
        DiscriminatorConfig(**stage1_state.arch["discriminator"]),
        opt_cfg,
        seed,
    )
    state.generator.load_state_dict(stage1_state.generator.state_dict())
    if not fresh_discriminator:
        state.discriminator.load_state_dict(stage1_state.discriminator.state_dict())
    state.warm_started = True
    return state


def train_perception(
    plan: TrainingPlan,
    sources: list[SourcePair],
    seed: int,
    gen_cfg: ResidualGeneratorConfig | None = None,
    disc_cfg: DiscriminatorConfig | None = None,
    stage1_state: TrainState | None = None,
    stage2_state: TrainState | None = None,
) -> PerceptionResult:
    """Two-stage run; each stage gets the full schedule independently."""
    sched = plan.schedule
    if stage2_state is None:
        if stage1_state is None:
            stage1_state = new_train_state(
                STAGE_PERCEPTION_1,
                gen_cfg or ResidualGeneratorConfig(),
                disc_cfg
                or DiscriminatorConfig(use_batchnorm=False, input_size=plan.dataset.hr_patch),
                plan.opt,
                seed,
            )
        run_iterations(
            stage1_state, sources, plan, sched, stage1_state.iteration, sched.total_iterations
        )
        stage2_state = start_perception_stage2(
            stage1_state, plan.opt, seed + 1, plan.fresh_discriminator_stage2
        )
    elif stage1_state is None:
        raise ValueError("resuming stage 2 requires the finished stage-1 state")
    run_iterations(
        stage2_state, sources, plan, sched, stage2_state.iteration, sched.total_iterations
    )
    return PerceptionResult(
        stage1_params=_snapshot_params(stage1_state.generator),
        stage2_params=_snapshot_params(stage2_state.generator),
        stage1_state=stage1_state,
        stage2_state=stage2_state,
    )


# --- checkpoint container -------------------------------------------------


def _optimizer_arrays(opt: torch.optim.Adam, prefix: str, arrays: dict) -> list[int]:
    sd = opt.state_dict()
    present = []
    for idx, entry in sd["state"].items():
        present.append(int(idx))
        for key in ("step", "exp_avg", "exp_avg_sq"):
            arrays[f"{prefix}.{idx}.{key}"] = entry[key].detach().numpy()
    return sorted(present)


def _restore_optimizer(opt: torch.optim.Adam, prefix: str, present: list[int], arrays: dict):
    sd = opt.state_dict()
    state = {}
    for idx in present:
        state[idx] = {
            key: torch.from_numpy(np.array(arrays[f"{prefix}.{idx}.{key}"]))
            for key in ("step", "exp_avg", "exp_avg_sq")
        }
    opt.load_state_dict({"state": state, "param_groups": sd["param_groups"]})


def save_checkpoint(state: TrainState, path, opt_cfg: OptimizerConfig) -> None:
    """Lossless dump of parameters, Adam moments, RNG, and progress."""
    arrays = {}
    for name, tensor in state.generator.state_dict().items():
        arrays[f"g.{name}"] = tensor.detach().numpy()
    for name, tensor in state.discriminator.state_dict().items():
        arrays[f"d.{name}"] = tensor.detach().numpy()
    g_present = _optimizer_arrays(state.g_opt, "g_opt", arrays)
    d_present = _optimizer_arrays(state.d_opt, "d_opt", arrays)
    best_meta = None
    if state.best is not None:
        best_meta = {"metric": state.best["metric"], "epoch": state.best["epoch"]}
        for name, tensor in state.best["params"].items():
            arrays[f"best.{name}"] = tensor.detach().numpy()
    meta = {
        "format": CHECKPOINT_FORMAT,
        "stage": state.stage,
        "iteration": state.iteration,
        "warm_started": state.warm_started,
        "arch": state.arch,
        "opt": asdict(opt_cfg),
        "g_opt_present": g_present,
        "d_opt_present": d_present,
        "rng_state": state.rng.bit_generator.state,
        "best": best_meta,
    }
    write_container(path, "train-state", meta, arrays)


def load_checkpoint(path, expected_arch: dict | None = None) -> tuple[TrainState, OptimizerConfig]:
    """Rebuild a TrainState; refuses checkpoints for a different setup."""
    meta, arrays = read_container(path, expected_kind="train-state")
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: checkpoint format {meta.get('format')}, "
                              f"expected {CHECKPOINT_FORMAT}")
    arch = meta["arch"]
    if expected_arch is not None and arch != expected_arch:
        raise CheckpointError(
            f"{path}: architecture mismatch: checkpoint has {arch}, trainer expects {expected_arch}"
        )
    opt_cfg = OptimizerConfig(**meta["opt"])
    generator = _build_generator(arch)
    discriminator = Discriminator(DiscriminatorConfig(**arch["discriminator"]))
    try:
        generator.load_state_dict(
            {k[2:]: torch.from_numpy(np.array(v)) for k, v in arrays.items() if k.startswith("g.")}
        )
        discriminator.load_state_dict(
            {k[2:]: torch.from_numpy(np.array(v)) for k, v in arrays.items() if k.startswith("d.")}
        )
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameter table mismatch: {exc}") from exc
    g_opt = _make_adam(generator, opt_cfg)
    d_opt = _make_adam(discriminator, opt_cfg)
    _restore_optimizer(g_opt, "g_opt", meta["g_opt_present"], arrays)
    _restore_optimizer(d_opt, "d_opt", meta["d_opt_present"], arrays)
    rng = np.random.default_rng(0)
    rng.bit_generator.state = meta["rng_state"]
    best = None
    if meta["best"] is not None:
        best = dict(meta["best"])
        best["params"] = {
            k[len("best."):]: torch.from_numpy(np.array(v))
            for k, v in arrays.items()
            if k.startswith("best.")
        }
    state = TrainState(
        stage=meta["stage"],
        generator=generator,
        discriminator=discriminator,
        g_opt=g_opt,
        d_opt=d_opt,
        rng=rng,
        arch=arch,
        iteration=meta["iteration"],
        warm_started=meta["warm_started"],
        best=best,
    )
    return state, opt_cfg
