"""Temporal continuity branch: equal-interval random sampling with refill.

One snippet is drawn from each length-k segment and repeated across its
segment, producing an affinity sequence of the original length. A single plan
is drawn per video per step and applied to both modalities so the pair stays
temporally aligned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ForwardOutputs, ModelParams, NormMode, forward


@dataclass(frozen=True)
class SamplePlan:
    """Chosen snippet index for each equal-interval segment of a video.

    Segment s covers snippets [s*k, min((s+1)*k, T)); a final partial segment
    is kept when k does not divide T.
    """

    num_snippets: int
    k: int
    chosen: tuple

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("SamplePlan: k must be >= 1")
        for s, c in enumerate(self.chosen):
            lo, hi = s * self.k, min((s + 1) * self.k, self.num_snippets)
            if not lo <= c < hi:
                raise ValueError(f"SamplePlan: chosen index {c} outside segment [{lo}, {hi})")

    def snippet_source(self) -> np.ndarray:
        """Length-T array: source snippet index for every output position."""
        src = np.empty(self.num_snippets, dtype=np.int64)
        for t in range(self.num_snippets):
            src[t] = self.chosen[t // self.k]
        return src


def make_plan(num_snippets: int, k: int, rng: np.random.Generator) -> SamplePlan:
    """Draw one random snippet per segment."""
    if num_snippets < 1:
        raise ValueError("make_plan: need at least one snippet")
    if k < 1:
        raise ValueError("make_plan: k must be >= 1")
    chosen = []
    start = 0
    while start < num_snippets:
        end = min(start + k, num_snippets)
        chosen.append(int(rng.integers(start, end)))
        start = end
    return SamplePlan(num_snippets=num_snippets, k=k, chosen=tuple(chosen))


def refill(x: np.ndarray, plan: SamplePlan) -> np.ndarray:
    """Expand the sampled snippets back to the original length."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != plan.num_snippets:
        raise ValueError(f"refill: plan is for T={plan.num_snippets}, features have T={x.shape[0]}")
    return x[plan.snippet_source()]


def tcb_forward(x_rgb: np.ndarray, x_flow: np.ndarray, params: ModelParams,
                plan: SamplePlan) -> tuple:
    """Run the shared model on the refilled pair; returns fused (a_R, y_R)."""
    out = tcb_forward_full(x_rgb, x_flow, params, plan)
    return out.a, out.y


def tcb_forward_full(x_rgb: np.ndarray, x_flow: np.ndarray, params: ModelParams,
                     plan: SamplePlan) -> ForwardOutputs:
    """Same as `tcb_forward` but keeps the cached intermediates for backward."""
    return forward(refill(x_rgb, plan), refill(x_flow, plan), params, NormMode.STANDARD)
