"""Training loop, learning-rate schedule, checkpointing, and ablation grids."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericError
from .evaluate import EvalReport, evaluate
from .localize import localize_video
from .losses import GradMode, LossBreakdown, backward
from .model import (
    Hyperparams,
    ModelParams,
    forward,
    init_params,
    save_checkpoint,
)
from .numerics import AdamState, adam_step
from .ten import make_plan, tcb_forward_full


@dataclass
class RunConfig:
    """One training run: mode, branch wiring, optimizer, and bookkeeping.

    `iterations=None` defers to hyperparams.iterations. With use_ten off, or
    with k=1 (where sample-and-refill is the identity and the branch would
    duplicate the base pass), the continuity branch never runs and its losses
    are exactly 0.
    """

    grad_mode: GradMode = GradMode.STANDARD
    use_ten: bool = False
    hp: Hyperparams = field(default_factory=Hyperparams)
    learning_rate: float = 1e-3
    decay_fraction: float = 0.1
    weight_decay: float = 1e-3
    iterations: int | None = None
    batch_size: int = 16
    seed: int = 0
    checkpoint_path: str | None = None
    log_path: str | None = None
    checkpoint_every: int = 0  # 0 = write only the final checkpoint

    def resolved_iterations(self) -> int:
        return self.hp.iterations if self.iterations is None else self.iterations


@dataclass
class LogRow:
    step: int
    losses: LossBreakdown
    learning_rate: float


@dataclass
class TrainResult:
    params: ModelParams
    log: list


def _mean_breakdown(parts: list) -> LossBreakdown:
    return LossBreakdown(
        fg=float(np.mean([p.fg for p in parts])),
        bg=float(np.mean([p.bg for p in parts])),
        att=float(np.mean([p.att for p in parts])),
        kl=float(np.mean([p.kl for p in parts])),
        bvl=float(np.mean([p.bvl for p in parts])),
        total=float(np.mean([p.total for p in parts])),
    )


def write_log_csv(path, log: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss_fg,loss_bg,loss_att,loss_kl,loss_all,learning_rate\n")
        for row in log:
            b = row.losses
            fh.write(f"{row.step},{b.fg:.8f},{b.bg:.8f},{b.att:.8f},"
                     f"{b.kl:.8f},{b.total:.8f},{row.learning_rate:.8g}\n")


def train(videos: list, config: RunConfig) -> TrainResult:
    """Run the configured number of Adam steps over randomly batched videos.

    `videos` need features and a video label only (TrainingVideo suffices);
    ground truth is never consulted. Deterministic under config.seed.
    """
    if not videos:
        raise ValueError("train: empty dataset")
    hp = config.hp
    rng = np.random.default_rng(config.seed)
    # plans draw from their own stream so enabling the continuity branch
    # never shifts init or batch order; ablation rows at one seed stay
    # batch-for-batch comparable
    plan_rng = np.random.default_rng((config.seed, 1))
    feature_dim = videos[0].x_rgb.shape[1]
    num_classes = videos[0].video_label.shape[0]
    embed_dim = hp.embed_dim if hp.embed_dim > 0 else feature_dim
    params = init_params(rng, feature_dim, embed_dim, num_classes, hp.kernel_size)

    flat = params.to_vector()
    state = AdamState(shape=flat.shape, learning_rate=config.learning_rate,
                      decay_fraction=config.decay_fraction,
                      weight_decay=config.weight_decay)
    total = config.resolved_iterations()
    half = total // 2
    log = []
    mode = config.grad_mode

    for step in range(total):
        picks = rng.integers(0, len(videos), size=config.batch_size)
        grad_sum = np.zeros_like(flat)
        parts = []
        batch_ids = []
        for idx in picks:
            v = videos[int(idx)]
            batch_ids.append(v.video_id)
            bb = forward(v.x_rgb, v.x_flow, params, mode.norm_mode)
            tcb = None
            # k=1 sampling is the identity, so the continuity pair carries no
            # signal; the branch only runs when it can differ from the base
            if config.use_ten and hp.k > 1:
                plan = make_plan(v.x_rgb.shape[0], hp.k, plan_rng)
                tcb = tcb_forward_full(v.x_rgb, v.x_flow, params, plan)
            try:
                report, losses = backward(bb, tcb, v.video_label, params, hp, mode)
            except NumericError as exc:
                raise NumericError(
                    f"non-finite loss at step {step} on batch {batch_ids}: {exc}"
                ) from exc
            grad_sum += report.to_vector()
            parts.append(losses)
        grad = grad_sum / config.batch_size
        mean_losses = _mean_breakdown(parts)
        if not np.isfinite(mean_losses.total):
            raise NumericError(f"non-finite loss {mean_losses.total} at step "
                               f"{step} on batch {batch_ids}")
        state.learning_rate = (config.learning_rate * config.decay_fraction
                               if step >= half else config.learning_rate)
        flat = adam_step(flat, grad, state)
        params = params.from_vector(flat)
        log.append(LogRow(step=step, losses=mean_losses,
                          learning_rate=state.learning_rate))
        if (config.checkpoint_path and config.checkpoint_every > 0
                and (step + 1) % config.checkpoint_every == 0):
            save_checkpoint(config.checkpoint_path, params)

    if config.checkpoint_path:
        save_checkpoint(config.checkpoint_path, params)
    if config.log_path:
        write_log_csv(config.log_path, log)
    return TrainResult(params=params, log=log)


def localize_dataset(records: list, params: ModelParams, hp: Hyperparams) -> dict:
    """Proposals for every record, keyed by video id."""
    return {r.video_id: localize_video(r.x_rgb, r.x_flow, params, hp)
            for r in records}


# Component grid: (row label, gradient mode, continuity branch on)
COMPONENT_GRID = (
    ("BL", GradMode.STANDARD, False),
    ("BL+BGES", GradMode.BGES, False),
    ("TEN", GradMode.STANDARD, True),
    ("TEN+BGES", GradMode.BGES, True),
    ("TEN+GRL", GradMode.GRL, True),
    ("BL+BVL", GradMode.BVL, False),
    ("TEN+BVL", GradMode.BVL, True),
    ("TEN+BVL+BGES", GradMode.BVL_PLUS_BGES, True),
)


@dataclass
class AblationRow:
    label: str
    report: EvalReport
    final_loss: float


def ablate(train_videos: list, test_records: list, config: RunConfig,
           grid=COMPONENT_GRID, iou_thresholds=None) -> list:
    """Train and evaluate one run per grid row; only the row's settings vary."""
    rows = []
    for label, mode, use_ten in grid:
        cfg = replace(config, grad_mode=mode, use_ten=use_ten,
                      checkpoint_path=None, log_path=None)
        result = train(train_videos, cfg)
        proposals = localize_dataset(test_records, result.params, cfg.hp)
        kwargs = {}
        if iou_thresholds is not None:
            kwargs["iou_thresholds"] = iou_thresholds
        report = evaluate(proposals, test_records, **kwargs)
        rows.append(AblationRow(label=label, report=report,
                                final_loss=result.log[-1].losses.total))
    return rows


def format_ablation(rows: list) -> str:
    """Fixed-width summary, one grid row per line."""
    lines = [f"{'run':<16} {'mAP@0.5':>8} {'avg[0.1:0.5]':>13} "
             f"{'avg[0.3:0.7]':>13} {'avg[0.1:0.7]':>13}"]
    for row in rows:
        r = row.report
        m05 = r.map_by_threshold.get(0.5, float("nan"))
        cells = [r.averages.get(k, float("nan"))
                 for k in ("0.1:0.5", "0.3:0.7", "0.1:0.7")]
        lines.append(f"{row.label:<16} {m05:>8.4f} {cells[0]:>13.4f} "
                     f"{cells[1]:>13.4f} {cells[2]:>13.4f}")
    return "\n".join(lines)
