"""Monte-Carlo two-state fluid queue.

An independent route to Pr{x=K}, Pr{x=0} and the overflow rate that makes
no use of the closed forms.  Two walks are available: an exact one that
jumps from one on/off switch to the next (the default), and a fixed time
grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .fluid import FluidParams


@dataclass(frozen=True)
class FluidEstimate:
    p_full: float
    p_empty: float
    delta: float
    steps: int
    h: float


@numba.njit(cache=True)
def _walk(C, peak, lam_d, K, p_on_off, p_off_on, h, steps, seed, on0):
    np.random.seed(seed)
    on = on0
    x = 0.0
    full = 0
    empty = 0
    spill = 0.0
    for _ in range(steps):
        r = np.random.random()
        if on:
            if r < p_on_off:
                on = False
        elif r < p_off_on:
            on = True
        rate = (peak + lam_d) if on else lam_d
        x += (rate - C) * h
        if x >= K:
            spill += x - K
            x = K
            full += 1
        elif x <= 0.0:
            x = 0.0
            empty += 1
    return full, empty, spill


@numba.njit(cache=True)
def _sojourns(C, peak, lam_d, K, alpha, beta, steps, seed, on0):
    # each step is one exponential on or off period; the level moves
    # linearly and the time pinned at a boundary is computed exactly
    np.random.seed(seed)
    on = on0
    x = 0.0
    total = 0.0
    full = 0.0
    empty = 0.0
    spill = 0.0
    for _ in range(steps):
        if on:
            tau = np.random.exponential(1.0 / alpha)
            slope = peak + lam_d - C
        else:
            tau = np.random.exponential(1.0 / beta)
            slope = lam_d - C
        total += tau
        if slope > 0.0:
            t_hit = (K - x) / slope
            if tau > t_hit:
                full += tau - t_hit
                spill += slope * (tau - t_hit)
                x = K
            else:
                x += slope * tau
        elif slope < 0.0:
            t_hit = x / -slope
            if tau > t_hit:
                empty += tau - t_hit
                x = 0.0
            else:
                x += slope * tau
        on = not on
    return full, empty, spill, total


def default_step(p: FluidParams) -> float:
    h = 1e-3 * p.b
    if p.K > 0:
        h = min(h, 1e-2 * p.K / p.peak)
    return h


def simulate_fluid_queue(p: FluidParams, steps=100_000_000, seed=0,
                         h=None, method="event") -> FluidEstimate:
    """Estimate the stationary boundary probabilities and overflow rate.

    ``method="event"``: every step is a whole on or off period with
    exponential length; the estimates are time averages over the run
    (``h`` is then the mean period length, for reporting).

    ``method="grid"``: the source starts in its stationary state; per step
    of length ``h`` it switches with probability ``1 - exp(-rate*h)`` and
    the buffer then moves by ``(input - C) * h``, reflected at 0 and
    clipped at ``K`` (the clipped amount is counted as overflow).
    """
    on0 = np.random.default_rng(seed).random() < p.pi_on
    if method == "event":
        full, empty, spill, total = _sojourns(
            p.C, p.peak, p.lambda_d, float(p.K), p.alpha, p.beta, int(steps),
            int(seed) & 0xFFFFFFFF, bool(on0))
        return FluidEstimate(p_full=full / total, p_empty=empty / total,
                             delta=spill / total, steps=int(steps),
                             h=total / steps)
    if method != "grid":
        raise ValueError(f"unknown method {method!r}")
    if h is None:
        h = default_step(p)
    full, empty, spill = _walk(
        p.C, p.peak, p.lambda_d, float(p.K),
        -math.expm1(-p.alpha * h), -math.expm1(-p.beta * h),
        h, int(steps), int(seed) & 0xFFFFFFFF, bool(on0))
    return FluidEstimate(p_full=full / steps, p_empty=empty / steps,
                         delta=spill / (steps * h), steps=int(steps), h=h)
