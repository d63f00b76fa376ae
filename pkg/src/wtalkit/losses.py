"""Training losses and the hand-derived analytic gradient of their sum.

Gradient modes
--------------
STANDARD        honest gradient of the written losses.
BGES            the background pooling normalizer N_b is replaced by N_f in
                the forward pass; the gradient is the honest gradient of that
                modified forward. Per snippet this turns the attention-path
                difference (y_bg - y_i) into (-y_bg - y_i), pushing every
                snippet toward background by the same margin.
GRL             gradient-reversal comparison: the STANDARD attention-path
                difference is negated per snippet; classifier-path gradients
                are untouched. Not the gradient of any loss.
BVL             adds an auxiliary cross-entropy that treats the video's mean
                CAS as background.
BVL_PLUS_BGES   both of the above.

The smoothed / softened counterparts in the continuity losses are constant
targets by default (mutual learning); `Hyperparams.stop_gradient_targets`
switches full backpropagation through them on, and the finite-difference
oracle respects whichever convention is configured.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .model import (
    ForwardOutputs,
    Hyperparams,
    ModalityParams,
    ModelParams,
    NormMode,
    forward,
)
from .numerics import (
    finite_diff_grad,
    gaussian_smooth,
    gaussian_smooth_transpose,
    softmax,
)
from .ten import SamplePlan, make_plan, tcb_forward_full

LOG_FLOOR = 1e-12


class GradMode(enum.Enum):
    STANDARD = "standard"
    BGES = "bges"
    GRL = "grl"
    BVL = "bvl"
    BVL_PLUS_BGES = "bvl+bges"

    @property
    def norm_mode(self) -> NormMode:
        if self in (GradMode.BGES, GradMode.BVL_PLUS_BGES):
            return NormMode.BGES
        return NormMode.STANDARD

    @property
    def uses_bvl(self) -> bool:
        return self in (GradMode.BVL, GradMode.BVL_PLUS_BGES)


@dataclass
class LossBreakdown:
    """Raw (unweighted) loss components plus the weighted total."""

    fg: float
    bg: float
    att: float
    kl: float
    bvl: float
    total: float


@dataclass
class GradientReport:
    """Gradients mirroring ModelParams, plus per-snippet diagnostics.

    `att_factors_*` are the per-snippet multipliers of the embedded feature in
    the background-path attention gradient as it enters the joint loss
    (weighted by the background-loss weight): positive values push the snippet
    toward background.
    """

    grads: ModelParams
    att_factors_rgb: np.ndarray
    att_factors_flow: np.ndarray

    def to_vector(self) -> np.ndarray:
        return self.grads.to_vector()


def full_label(video_label: np.ndarray) -> np.ndarray:
    """Extend a C-class multi-hot to C+1 with the background bit set.

    Every untrimmed video contains background, so the last entry is always 1.
    """
    video_label = np.asarray(video_label, dtype=np.float64)
    return np.concatenate([video_label, [1.0]])


def loss_fg(p_fg: np.ndarray, label: np.ndarray) -> float:
    """Cross-entropy against the sum-normalized multi-hot label over C+1."""
    label = np.asarray(label, dtype=np.float64)
    if label.shape != p_fg.shape:
        raise ValueError(f"loss_fg: label shape {label.shape} != probs {p_fg.shape}")
    s = label.sum()
    if s <= 0:
        raise ValueError("loss_fg: label is all zeros")
    return float(-(label / s) @ np.log(np.maximum(p_fg, LOG_FLOOR)))


def loss_bg(p_bg: np.ndarray) -> float:
    """Negative log-probability of the background class (last index)."""
    return float(-np.log(max(float(p_bg[-1]), LOG_FLOOR)))


def loss_bvl(y: np.ndarray) -> float:
    """Cross-entropy treating the video's mean CAS as pure background."""
    p = softmax(np.asarray(y, dtype=np.float64).mean(axis=0))
    return float(-np.log(max(float(p[-1]), LOG_FLOOR)))


def loss_att(a: np.ndarray, a_refill: np.ndarray, sigma: float = 1.0, radius: int = 2) -> float:
    """Symmetric L1 between each attention track and the other's smoothing."""
    a = np.asarray(a, dtype=np.float64)
    a_refill = np.asarray(a_refill, dtype=np.float64)
    if a.shape != a_refill.shape:
        raise ValueError(f"loss_att: shape mismatch {a.shape} vs {a_refill.shape}")
    g_a = gaussian_smooth(a, sigma, radius)
    g_r = gaussian_smooth(a_refill, sigma, radius)
    return float(np.mean(np.abs(a - g_r) + np.abs(a_refill - g_a)))


def _kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    logs = np.log(np.maximum(p, LOG_FLOOR)) - np.log(np.maximum(q, LOG_FLOOR))
    return np.sum(p * logs, axis=1)


def loss_kl(y: np.ndarray, y_refill: np.ndarray) -> float:
    """Snippet-averaged symmetric KL between the two branches' CAS rows."""
    y = np.asarray(y, dtype=np.float64)
    y_refill = np.asarray(y_refill, dtype=np.float64)
    if y.shape != y_refill.shape:
        raise ValueError(f"loss_kl: shape mismatch {y.shape} vs {y_refill.shape}")
    p = softmax(y, axis=1)
    q = softmax(y_refill, axis=1)
    return float(np.mean(_kl_rows(q, p) + _kl_rows(p, q)))


@dataclass
class FrozenTargets:
    """Stop-gradient targets captured from a base-point forward pass.

    Used by the finite-difference loss evaluation so that it differentiates
    the same function the analytic backward does.
    """

    smooth_a: np.ndarray
    smooth_a_refill: np.ndarray
    p_rows: np.ndarray
    p_rows_refill: np.ndarray


def capture_targets(bb: ForwardOutputs, tcb: ForwardOutputs, hp: Hyperparams) -> FrozenTargets:
    return FrozenTargets(
        smooth_a=gaussian_smooth(bb.a, hp.gauss_sigma, hp.gauss_radius),
        smooth_a_refill=gaussian_smooth(tcb.a, hp.gauss_sigma, hp.gauss_radius),
        p_rows=softmax(bb.y, axis=1),
        p_rows_refill=softmax(tcb.y, axis=1),
    )


def compute_losses(bb: ForwardOutputs, tcb: ForwardOutputs | None, video_label: np.ndarray,
                   hp: Hyperparams, mode: GradMode,
                   frozen: FrozenTargets | None = None) -> LossBreakdown:
    """Evaluate all loss components and the weighted total.

    When `frozen` is given, the continuity losses use those constant targets
    instead of live smoothed/softened counterparts (identical value at the
    capture point, different gradient).
    """
    label = full_label(video_label)
    l_fg = loss_fg(bb.p_fg, label)
    l_bg = loss_bg(bb.p_bg)
    l_att = l_kl = 0.0
    if tcb is not None:
        if frozen is None:
            l_att = loss_att(bb.a, tcb.a, hp.gauss_sigma, hp.gauss_radius)
            l_kl = loss_kl(bb.y, tcb.y)
        else:
            l_att = float(np.mean(np.abs(bb.a - frozen.smooth_a_refill)
                                  + np.abs(tcb.a - frozen.smooth_a)))
            p = softmax(bb.y, axis=1)
            q = softmax(tcb.y, axis=1)
            l_kl = float(np.mean(_kl_rows(frozen.p_rows_refill, p)
                                 + _kl_rows(frozen.p_rows, q)))
    l_bvl = loss_bvl(bb.y) if mode.uses_bvl else 0.0
    total = (l_fg + hp.lam * l_bg + hp.beta * (l_kl + l_att)
             + hp.resolved_bvl_weight() * l_bvl)
    return LossBreakdown(fg=l_fg, bg=l_bg, att=l_att, kl=l_kl, bvl=l_bvl, total=total)


def _zero_like(params: ModelParams) -> dict:
    out = {}
    for name in ("rgb", "flow"):
        m = params.modality(name)
        out[name] = {
            "w_embed": np.zeros_like(m.w_embed),
            "b_embed": np.zeros_like(m.b_embed),
            "w_cls": np.zeros_like(m.w_cls),
            "b_cls": np.zeros_like(m.b_cls),
            "w_att": np.zeros_like(m.w_att),
            "b_att": 0.0,
        }
    return out


def _head_backward(out: ForwardOutputs, d_y: np.ndarray, d_a: np.ndarray,
                   params: ModelParams, acc: dict) -> None:
    """Push fused-level gradients through both modality heads (0.5 fusion)."""
    branch = {
        "rgb": (out.xe_rgb, out.z_rgb, out.windows_rgb, out.a_rgb),
        "flow": (out.xe_flow, out.z_flow, out.windows_flow, out.a_flow),
    }
    for name in ("rgb", "flow"):
        xe, z, win, a_m = branch[name]
        p = params.modality(name)
        g = acc[name]
        d_y_m = 0.5 * d_y
        d_a_m = 0.5 * d_a
        g["w_cls"] += xe.T @ d_y_m
        g["b_cls"] += d_y_m.sum(axis=0)
        d_xe = d_y_m @ p.w_cls.T
        d_u = d_a_m * a_m * (1.0 - a_m)
        g["w_att"] += xe.T @ d_u
        g["b_att"] += float(d_u.sum())
        d_xe += np.outer(d_u, p.w_att)
        d_z = d_xe * (z > 0)
        t, k, d = win.shape
        dw2d = win.reshape(t, k * d).T @ d_z  # (k*d, e)
        g["w_embed"] += dw2d.reshape(k, d, -1).transpose(2, 1, 0)
        g["b_embed"] += d_z.sum(axis=0)


def backward(bb: ForwardOutputs, tcb: ForwardOutputs | None, video_label: np.ndarray,
             params: ModelParams, hp: Hyperparams, mode: GradMode) -> tuple:
    """Analytic gradient of the joint loss. Returns (GradientReport, LossBreakdown).

    `bb` must have been produced with `mode.norm_mode`; the gradient modes
    touch only the background path, so foreground/continuity gradients are
    identical across modes.
    """
    if bb.norm_mode is not mode.norm_mode:
        raise ValueError(f"backward: forward was run with {bb.norm_mode}, mode {mode} "
                         f"needs {mode.norm_mode}")
    t = bb.num_snippets
    n_classes_1 = bb.y.shape[1]
    e_bg = np.zeros(n_classes_1)
    e_bg[-1] = 1.0

    losses = compute_losses(bb, tcb, video_label, hp, mode)

    d_y = np.zeros_like(bb.y)
    d_a = np.zeros_like(bb.a)

    # foreground cross-entropy
    label = full_label(video_label)
    y_hat = label / label.sum()
    g_fg = bb.p_fg - y_hat
    d_y += np.outer(bb.a, g_fg) / bb.n_f
    d_a += (bb.y - bb.z_fg) @ g_fg / bb.n_f

    # background cross-entropy; the modes live entirely on this path
    g_bg = bb.p_bg - e_bg
    if mode.norm_mode is NormMode.BGES:
        d_y += np.outer(1.0 - bb.a, hp.lam * g_bg) / bb.n_f
        att_path = (-bb.z_bg - bb.y) @ g_bg / bb.n_f
    else:
        d_y += np.outer(1.0 - bb.a, hp.lam * g_bg) / bb.n_b
        att_path = (bb.z_bg - bb.y) @ g_bg / bb.n_b
        if mode is GradMode.GRL:
            att_path = -att_path
    d_a += hp.lam * att_path

    # diagnostic: per-snippet multiplier of X_e in the background path of the
    # actual joint gradient (lam-weighted, so it vanishes when the path is off)
    att_factors_rgb = hp.lam * att_path * 0.5 * bb.a_rgb * (1.0 - bb.a_rgb)
    att_factors_flow = hp.lam * att_path * 0.5 * bb.a_flow * (1.0 - bb.a_flow)

    # background video loss on the mean CAS
    w_bvl = hp.resolved_bvl_weight()
    if mode.uses_bvl and w_bvl != 0.0:
        p_mean = softmax(bb.y.mean(axis=0))
        d_y += w_bvl * (p_mean - e_bg)[None, :] / t

    d_y_r = d_a_r = None
    if tcb is not None and hp.beta != 0.0:
        d_y_r = np.zeros_like(tcb.y)
        d_a_r = np.zeros_like(tcb.a)
        p = softmax(bb.y, axis=1)
        q = softmax(tcb.y, axis=1)
        d_y += hp.beta / t * (p - q)
        d_y_r += hp.beta / t * (q - p)
        g_a = gaussian_smooth(bb.a, hp.gauss_sigma, hp.gauss_radius)
        g_r = gaussian_smooth(tcb.a, hp.gauss_sigma, hp.gauss_radius)
        s_bb = np.sign(bb.a - g_r)
        s_tcb = np.sign(tcb.a - g_a)
        d_a += hp.beta / t * s_bb
        d_a_r += hp.beta / t * s_tcb
        if not hp.stop_gradient_targets:
            log_p = np.log(np.maximum(p, LOG_FLOOR))
            log_q = np.log(np.maximum(q, LOG_FLOOR))
            kl_qp = _kl_rows(q, p)
            kl_pq = _kl_rows(p, q)
            d_y_r += hp.beta / t * q * ((log_q - log_p) - kl_qp[:, None])
            d_y += hp.beta / t * p * ((log_p - log_q) - kl_pq[:, None])
            d_a_r -= hp.beta / t * gaussian_smooth_transpose(s_bb, hp.gauss_sigma, hp.gauss_radius)
            d_a -= hp.beta / t * gaussian_smooth_transpose(s_tcb, hp.gauss_sigma, hp.gauss_radius)

    acc = _zero_like(params)
    _head_backward(bb, d_y, d_a, params, acc)
    if d_y_r is not None:
        _head_backward(tcb, d_y_r, d_a_r, params, acc)

    grads = ModelParams(
        rgb=ModalityParams(**acc["rgb"]),
        flow=ModalityParams(**acc["flow"]),
    )
    vec = grads.to_vector()
    if not np.all(np.isfinite(vec)):
        raise NumericError("backward produced non-finite gradients")
    report = GradientReport(
        grads=grads,
        att_factors_rgb=att_factors_rgb,
        att_factors_flow=att_factors_flow,
    )
    return report, losses


@dataclass
class TinyInstance:
    """One randomly drawn model + video, small enough to finite-difference."""

    x_rgb: np.ndarray
    x_flow: np.ndarray
    params: ModelParams
    plan: SamplePlan
    video_label: np.ndarray
    seed: int


def make_tiny_instance(seed: int, num_snippets: int = 8, feature_dim: int = 6,
                       embed_dim: int = 5, num_classes: int = 3,
                       kernel_size: int = 3, interval: int = 3) -> TinyInstance:
    rng = np.random.default_rng(seed)
    x_rgb = rng.normal(0.0, 1.0, size=(num_snippets, feature_dim))
    x_flow = rng.normal(0.0, 1.0, size=(num_snippets, feature_dim))

    def draw(mod_rng):
        return ModalityParams(
            w_embed=mod_rng.normal(0.0, 0.5, size=(embed_dim, feature_dim, kernel_size)),
            b_embed=mod_rng.normal(0.0, 0.1, size=embed_dim),
            w_cls=mod_rng.normal(0.0, 0.5, size=(embed_dim, num_classes + 1)),
            b_cls=mod_rng.normal(0.0, 0.1, size=num_classes + 1),
            w_att=mod_rng.normal(0.0, 0.5, size=embed_dim),
            b_att=float(mod_rng.normal(0.0, 0.1)),
        )

    params = ModelParams(rgb=draw(rng), flow=draw(rng))
    plan = make_plan(num_snippets, interval, rng)
    label = np.zeros(num_classes)
    label[rng.integers(0, num_classes)] = 1.0
    if rng.random() < 0.5:
        label[rng.integers(0, num_classes)] = 1.0
    return TinyInstance(x_rgb=x_rgb, x_flow=x_flow, params=params, plan=plan,
                        video_label=label, seed=seed)


def _forward_pair(inst: TinyInstance, params: ModelParams, mode: GradMode):
    bb = forward(inst.x_rgb, inst.x_flow, params, mode.norm_mode)
    tcb = tcb_forward_full(inst.x_rgb, inst.x_flow, params, inst.plan)
    return bb, tcb


def instance_margin(inst: TinyInstance, hp: Hyperparams, mode: GradMode) -> float:
    """Smallest distance to any non-differentiable point or active floor.

    Central differences near ReLU or absolute-value kinks measure the wrong
    one-sided slope, so certification instances are rejected when any margin
    is below the step size by a wide factor.
    """
    bb, tcb = _forward_pair(inst, inst.params, mode)
    margins = [
        float(np.min(np.abs(bb.z_rgb))), float(np.min(np.abs(bb.z_flow))),
        float(np.min(np.abs(tcb.z_rgb))), float(np.min(np.abs(tcb.z_flow))),
    ]
    g_a = gaussian_smooth(bb.a, hp.gauss_sigma, hp.gauss_radius)
    g_r = gaussian_smooth(tcb.a, hp.gauss_sigma, hp.gauss_radius)
    margins.append(float(np.min(np.abs(bb.a - g_r))))
    margins.append(float(np.min(np.abs(tcb.a - g_a))))
    probs = [bb.p_fg.min(), bb.p_bg.min(),
             softmax(bb.y, axis=1).min(), softmax(tcb.y, axis=1).min()]
    if min(probs) < 1e-9 or bb.n_f < 0.05 or bb.n_b < 0.05:
        return 0.0
    return min(margins)


def build_fd_loss(inst: TinyInstance, hp: Hyperparams, mode: GradMode):
    """Scalar loss over the flat parameter vector, for the difference oracle.

    With stop-gradient targets configured, the smoothed/softened counterparts
    are frozen at the base parameters so the oracle differentiates exactly the
    function the analytic backward claims to.
    """
    frozen = None
    if hp.stop_gradient_targets:
        bb0, tcb0 = _forward_pair(inst, inst.params, mode)
        frozen = capture_targets(bb0, tcb0, hp)

    def fd_loss(vec: np.ndarray) -> float:
        p = inst.params.from_vector(vec)
        bb, tcb = _forward_pair(inst, p, mode)
        return compute_losses(bb, tcb, inst.video_label, hp, mode, frozen).total

    return fd_loss


CERTIFIED_MODES = (GradMode.STANDARD, GradMode.BGES, GradMode.BVL)


@dataclass
class CertificationResult:
    mode: str
    seed: int
    max_rel_error: float
    passed: bool


def certify_gradients(num_instances: int = 20, tolerance: float = 1e-5,
                      modes: tuple = CERTIFIED_MODES, hp: Hyperparams | None = None,
                      fd_epsilon: float = 1e-5, min_margin: float = 2e-3,
                      start_seed: int = 1000, flip_block: str | None = None) -> list:
    """Compare analytic and central-difference gradients on tiny instances.

    Returns one CertificationResult per (mode, instance). `flip_block` names a
    parameter block ("rgb.w_att", "flow.b_cls", ...) whose analytic gradient
    is negated before comparison; a certification that still passes with a
    flipped block would prove the harness toothless, so the hook exists for
    exactly that self-test.
    """
    if hp is None:
        hp = Hyperparams()
    results = []
    for mode in modes:
        accepted = 0
        seed = start_seed
        while accepted < num_instances:
            inst = make_tiny_instance(seed)
            seed += 1
            if instance_margin(inst, hp, mode) < min_margin:
                continue
            accepted += 1
            bb, tcb = _forward_pair(inst, inst.params, mode)
            report, _ = backward(bb, tcb, inst.video_label, inst.params, hp, mode)
            if flip_block is not None:
                mod_name, field = flip_block.split(".")
                block = getattr(report.grads.modality(mod_name), field)
                setattr(report.grads.modality(mod_name), field,
                        -block if isinstance(block, np.ndarray) else -block)
            analytic = report.to_vector()
            numeric = finite_diff_grad(build_fd_loss(inst, hp, mode),
                                       inst.params.to_vector(), fd_epsilon)
            # the denominator floor keeps central-difference roundoff
            # (|loss| * 1e-16 / fd_epsilon, ~2e-11 here) from dominating the
            # ratio on zero-adjacent coordinates; below the floor the check
            # still demands absolute agreement to floor * tolerance
            scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-5)
            err = float(np.max(np.abs(analytic - numeric) / scale))
            results.append(CertificationResult(
                mode=mode.value, seed=inst.seed, max_rel_error=err,
                passed=err < tolerance))
    return results


def honest_attention_factors(out: ForwardOutputs, modality: str) -> np.ndarray:
    """Per-snippet X_e multipliers in the honest background attention gradient.

    Differentiates the fused forward exactly, so the softmax pull of every
    class (not only background) appears. Unweighted by the background-loss
    weight. Matches GradientReport.att_factors_* divided by that weight.
    """
    e_bg = np.zeros(out.p_bg.shape[0])
    e_bg[-1] = 1.0
    g_bg = out.p_bg - e_bg
    if out.norm_mode is NormMode.BGES:
        att_path = (-out.z_bg - out.y) @ g_bg / out.n_f
    else:
        att_path = (out.z_bg - out.y) @ g_bg / out.n_b
    a_m = out.a_rgb if modality == "rgb" else out.a_flow
    return att_path * 0.5 * a_m * (1.0 - a_m)


def factor_discrepancy(out: ForwardOutputs, modality: str = "rgb") -> dict:
    """Honest gradient factors vs the printed closed form, side by side.

    The closed form keeps only the background class's softmax term and elides
    the 0.5 fusion, so a residual difference is expected; it is reported here
    rather than folded into either computation.
    """
    if out.norm_mode is not NormMode.STANDARD:
        raise ValueError("factor_discrepancy expects a STANDARD forward")
    honest = honest_attention_factors(out, modality)
    closed = closed_form_attention_factors(out, modality)["std"]
    return {
        "honest": honest,
        "closed_form": closed,
        "max_abs_diff": float(np.max(np.abs(honest - closed))),
        "mean_abs_diff": float(np.mean(np.abs(honest - closed))),
    }


def closed_form_attention_factors(out: ForwardOutputs, modality: str) -> dict:
    """The printed per-snippet closed forms of the background attention gradient.

    Evaluates, on one STANDARD forward state, the per-snippet factor
    (1 - P_bg)/(-2) * (y_bg - y_i)/N_b * a_i(1 - a_i) of the plain gradient,
    the same expression with (y_bg - y_i) -> (-y_bg - y_i) and 1/N_b -> 1/N_f
    (the realized normalizer swap), and the reversed-difference variant.
    Shared state across the three isolates the effect of the difference term.

    Returns a dict with keys std, bges, grl, increment, val, y_video_bg where
    increment = bges - (N_b/N_f) * std = val * y_video_bg exactly.
    """
    if out.norm_mode is not NormMode.STANDARD:
        raise ValueError("closed-form factors are defined on a STANDARD forward")
    y_m = (out.y_rgb if modality == "rgb" else out.y_flow)[:, -1]
    a_m = out.a_rgb if modality == "rgb" else out.a_flow
    p_last = float(out.p_bg[-1])
    y_video_bg = float((1.0 - a_m) @ y_m) / out.n_b
    sig = a_m * (1.0 - a_m)
    f_std = (1.0 - p_last) / (-2.0) * (y_video_bg - y_m) / out.n_b * sig
    f_bges = (1.0 - p_last) / (-2.0) * (-y_video_bg - y_m) / out.n_f * sig
    f_grl = (1.0 - p_last) / (-2.0) * (y_m - y_video_bg) / out.n_b * sig
    val = (1.0 - p_last) * sig / out.n_f
    return {
        "std": f_std,
        "bges": f_bges,
        "grl": f_grl,
        "increment": f_bges - (out.n_b / out.n_f) * f_std,
        "val": val,
        "y_video_bg": y_video_bg,
    }
