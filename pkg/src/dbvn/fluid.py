"""Fluid-flow analysis of a single virtual circuit (VC).

The fresh traffic of a VC is a two-state Markov modulated on-off fluid: rate
``peak`` while on, 0 while off, leaving the on state at rate ``alpha`` and the
off state at rate ``beta``.  Deflected traffic is modelled as an extra
constant inflow ``lambda_d``.  The VC drains at rate ``C`` and its VOQ holds
``K`` packets.  Rates are packets per slot, times are slots.

Everything here is closed form except the deflection fixed point, which is
found by bisection.  The closed forms are evaluated through an algebraically
equivalent rearrangement that stays finite when the decay exponent is zero,
i.e. exactly at the equilibrium ``mean + lambda_d == C``; the textbook forms
(``full_probability_textbook`` and ``deflection_kernel``) are kept for
cross-checking.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import (NegativeResult, NoConvergence, ParameterError,
                     TargetUnreachable, UnstableRegime)
from .quadrature import adaptive_simpson

STABLE = "stable"
UNSTABLE = "unstable"
EQUILIBRIUM = "equilibrium"

# exponent cap; exp(700) ~ 1e304 keeps every intermediate finite
_EXP_CAP = 700.0


@dataclass(frozen=True)
class FluidParams:
    """Parameter record for one VC.

    ``mean`` is taken as given; use :meth:`from_onoff` or :meth:`from_load`
    to derive it consistently from the on-off process.
    """

    C: float
    peak: float
    mean: float
    alpha: float
    beta: float
    K: float
    lambda_d: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.mean < self.C < self.peak):
            raise ParameterError(
                f"need 0 < mean < C < peak, got mean={self.mean!r}, "
                f"C={self.C!r}, peak={self.peak!r}")
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise ParameterError("alpha and beta must be positive")
        if not (0.0 <= self.lambda_d < self.C):
            raise ParameterError(
                f"lambda_d must lie in [0, C), got {self.lambda_d!r}")
        if not self.K >= 0.0:
            raise ParameterError(f"K must be >= 0, got {self.K!r}")

    @classmethod
    def from_onoff(cls, C, peak, alpha, beta, K, lambda_d=0.0):
        """Build with ``mean = peak * beta / (alpha + beta)``."""
        return cls(C=C, peak=peak, mean=peak * beta / (alpha + beta),
                   alpha=alpha, beta=beta, K=K, lambda_d=lambda_d)

    @classmethod
    def from_load(cls, n, peak, rho, b, K=0.0, lambda_d=0.0):
        """Homogeneous N-port switch: ``C = 1/n``, offered load ``rho`` and
        burstiness ``b``, with alpha and beta chosen so that the on-off
        process has exactly mean ``rho * C``."""
        C = 1.0 / n
        mean = rho * C
        pi_on = mean / peak
        return cls(C=C, peak=peak, mean=mean, alpha=(1.0 - pi_on) / b,
                   beta=pi_on / b, K=K, lambda_d=lambda_d)

    def replace(self, **changes) -> "FluidParams":
        return dataclasses.replace(self, **changes)

    @property
    def b(self):
        return 1.0 / (self.alpha + self.beta)

    @property
    def rho(self):
        return self.mean / self.C

    @property
    def pi_on(self):
        return self.beta / (self.alpha + self.beta)

    @property
    def pi_off(self):
        return self.alpha / (self.alpha + self.beta)

    @property
    def up_rate(self):
        """Net fill rate while on, ``peak + lambda_d - C``."""
        return self.peak + self.lambda_d - self.C

    @property
    def down_rate(self):
        """Net drain rate while off, ``C - lambda_d``."""
        return self.C - self.lambda_d

    @property
    def epsilon(self):
        return self.alpha / self.up_rate - self.beta / self.down_rate


def published_params(K=0.0, lambda_d=0.0) -> FluidParams:
    """The 64-port parameter set with the rounded rates as quoted
    (``mean = 0.98/64`` is not exactly ``peak*beta/(alpha+beta)``)."""
    return FluidParams(C=1 / 64, peak=0.8, mean=0.98 / 64, alpha=0.49,
                       beta=0.0096, K=K, lambda_d=lambda_d)


def scale_burstiness(p: FluidParams, b: float) -> FluidParams:
    """Same peak-to-average ratio, burstiness ``b``."""
    s = p.b / b
    return p.replace(alpha=p.alpha * s, beta=p.beta * s)


@dataclass(frozen=True)
class FluidSolution:
    """Stationary queue of one VC.

    ``a0``/``a1`` are the CDF coefficients as conventionally written; they
    diverge when ``epsilon == 0`` (reported as ``nan``) although every
    probability stays finite.
    """

    p_full: float
    delta: float
    c2: float
    epsilon: float
    a0: float
    a1: float
    p_empty: float


class _Shape(NamedTuple):
    # Unnormalised densities are exp(-eps * (x - shift)) / denom; the shift
    # keeps the exponent <= 0 on [0, K].
    eps: float
    shift: float
    denom: float

    def weight(self, x):
        return math.exp(-self.eps * (x - self.shift)) / self.denom


def _one_minus_exp_over(z):
    """(1 - exp(-z)) / z, continuous at 0."""
    if z == 0.0:
        return 1.0
    return -math.expm1(-z) / z


def _expm1_over(z):
    """(exp(z) - 1) / z, continuous at 0."""
    if z == 0.0:
        return 1.0
    return math.expm1(z) / z


def _shape(p: FluidParams) -> _Shape:
    eps, K, v = p.epsilon, p.K, p.down_rate
    z = eps * K
    if eps >= 0.0:
        return _Shape(eps, 0.0, v + p.beta * K * _one_minus_exp_over(z))
    return _Shape(eps, K, v * math.exp(z) + p.beta * K * _expm1_over(z))


def full_probability(p: FluidParams) -> float:
    """Pr{x = K}."""
    sh = _shape(p)
    return p.pi_on * p.down_rate * sh.weight(p.K)


def empty_probability(p: FluidParams) -> float:
    """Pr{x = 0}."""
    sh = _shape(p)
    return p.pi_off * p.down_rate * sh.weight(0.0)


def cdf(p: FluidParams, x: float):
    """Joint CDFs ``(P0(x), P1(x))`` of the queue with the source off / on,
    for ``0 <= x < K``."""
    sh = _shape(p)
    u, v = p.up_rate, p.down_rate
    ab = p.alpha * p.beta * p.b
    # integral of the density from 0 to x, normalised
    if sh.eps >= 0.0:
        mass = x * _one_minus_exp_over(sh.eps * x) / sh.denom
    else:
        mass = (math.exp(sh.eps * (p.K - x)) * x * _expm1_over(sh.eps * x)
                / sh.denom)
    p0 = p.pi_off * v * sh.weight(0.0) + ab * mass
    p1 = ab * (v / u) * mass
    return p0, p1


def density(p: FluidParams, x: float):
    """Densities ``(p0(x), p1(x))`` on ``0 < x < K``."""
    w = _shape(p).weight(x)
    ab = p.alpha * p.beta * p.b
    return ab * w, ab * (p.down_rate / p.up_rate) * w


def full_probability_textbook(p: FluidParams) -> float:
    """Pr{x = K} written the conventional way; 0/0 at ``epsilon == 0``."""
    u, v, a, be = p.up_rate, p.down_rate, p.alpha, p.beta
    e = math.exp(-p.epsilon * p.K)
    return p.b * (u * be - v * a) / (u * e - v * a / be) * e


def deflection_kernel(p: FluidParams) -> float:
    """``beta/(alpha+beta) * (u*beta - v*alpha) e / (u*beta*e - v*alpha)``
    with ``e = exp(-eps K)``; equal to Pr{x=K} after clearing the
    ``beta`` in the conventional denominator."""
    u, v, a, be = p.up_rate, p.down_rate, p.alpha, p.beta
    e = math.exp(-p.epsilon * p.K)
    return be / (a + be) * (u * be - v * a) / (u * be * e - v * a) * e


def solve_vc(p: FluidParams) -> FluidSolution:
    """Overflow rate, spare capacity and boundary probabilities of one VC."""
    sh = _shape(p)
    u, v = p.up_rate, p.down_rate
    p_full = p.pi_on * v * sh.weight(p.K)
    p_empty = p.pi_off * v * sh.weight(0.0)
    delta = p_full * u
    c2 = p.C - (p.mean + p.lambda_d) + delta
    a0 = a1 = math.nan
    if sh.eps != 0.0:
        # conventional denominator = -eps * u * (v + beta K (1-e^{-eps K})/(eps K))
        try:
            dp = -sh.eps * u * sh.denom * math.exp(sh.eps * sh.shift)
            a0 = -v * p.alpha / ((p.alpha + p.beta) * dp)
            a1 = p.alpha * p.beta / ((p.alpha + p.beta) * dp)
        except OverflowError:
            a0 = a1 = 0.0
    return FluidSolution(p_full=p_full, delta=delta, c2=c2, epsilon=sh.eps,
                         a0=a0, a1=a1, p_empty=p_empty)


# -- ideal deflection --------------------------------------------------------

class DeflectionRate(NamedTuple):
    lambda_d: float
    regime: str


def _overflow(p: FluidParams, lambda_d: float) -> float:
    return full_probability(p.replace(lambda_d=lambda_d)) * (
        p.peak + lambda_d - p.C)


def overflow_fixed_point_residual(p: FluidParams, lambda_d: float) -> float:
    """``Delta(lambda_d) - lambda_d``: zero when all overflow is carried by
    deflection without loss."""
    return _overflow(p, lambda_d) - lambda_d


def spare_fixed_point_residual(p: FluidParams, lambda_d: float) -> float:
    """``C2(lambda_d) - lambda_d``: zero when all spare capacity is consumed
    by deflected traffic."""
    return p.C - p.mean - 2.0 * lambda_d + _overflow(p, lambda_d)


def _bisect(g, lo, hi, tol, max_iter):
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if (glo > 0.0) == (ghi > 0.0):
        raise NoConvergence(
            f"fixed point not bracketed on [{lo:g}, {hi:g}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol:
            return mid
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (gm > 0.0) == (glo > 0.0):
            lo, glo = mid, gm
        else:
            hi = mid
    raise NoConvergence(f"bisection exceeded {max_iter} iterations")


def solve_deflection_rate(p: FluidParams, tol=1e-14, max_iter=200,
                          equilibrium_tol=1e-10) -> DeflectionRate:
    """Self-consistent deflection inflow under ideal deflection.

    The lossless fixed point (overflow equals deflection inflow) is tried
    first and accepted when the overflow does not exceed the spare capacity;
    otherwise the saturated fixed point (spare capacity equals deflection
    inflow) is returned.  ``p.lambda_d`` is ignored.
    """
    lo, hi = 0.0, p.C - 1e-12
    eq_band = equilibrium_tol * p.C

    lam = _bisect(lambda x: overflow_fixed_point_residual(p, x), lo, hi,
                  tol, max_iter)
    s = solve_vc(p.replace(lambda_d=lam))
    if abs(s.delta - s.c2) < eq_band:
        return DeflectionRate(lam, EQUILIBRIUM)
    if s.delta <= s.c2:
        return DeflectionRate(lam, STABLE)

    lam = _bisect(lambda x: spare_fixed_point_residual(p, x), lo, hi,
                  tol, max_iter)
    s = solve_vc(p.replace(lambda_d=lam))
    if abs(s.delta - s.c2) < eq_band:
        return DeflectionRate(lam, EQUILIBRIUM)
    return DeflectionRate(lam, UNSTABLE)


def ideal_loss_probability(p: FluidParams, regime: str) -> float:
    if regime != UNSTABLE:
        return 0.0
    s = solve_vc(p)
    return (s.delta - s.c2) / p.mean


def ideal_deflection_probability(p: FluidParams, regime: str) -> float:
    if regime == EQUILIBRIUM:
        return 1.0 - p.rho
    if regime == UNSTABLE:
        return p.lambda_d / (p.mean + p.lambda_d)
    return solve_vc(p).delta / (p.mean + p.lambda_d)


def critical_voq_size(p: FluidParams) -> float:
    """Smallest VOQ size reaching the equilibrium (no ideal loss)."""
    rho = p.rho
    k = p.b * p.mean * ((p.alpha / p.beta) * (rho / (1.0 - rho) - 1.0) - 1.0)
    if k <= 0.0:
        raise NegativeResult(f"critical VOQ size is {k:g} <= 0")
    return k


@dataclass(frozen=True)
class IdealDeflection:
    """Everything the ideal-deflection approximation says about one VC."""

    params: FluidParams       # with the solved lambda_d
    regime: str
    solution: FluidSolution
    p_loss: float
    p_deflect: float


def ideal_deflection(p: FluidParams, **solver_kw) -> IdealDeflection:
    lam, regime = solve_deflection_rate(p, **solver_kw)
    q = p.replace(lambda_d=lam)
    return IdealDeflection(params=q, regime=regime, solution=solve_vc(q),
                           p_loss=ideal_loss_probability(q, regime),
                           p_deflect=ideal_deflection_probability(q, regime))


# -- delay -------------------------------------------------------------------

def _exp_moment(e, K, m):
    """int_0^K x^m exp(-e x) dx for e >= 0, m in {0, 1, 2}."""
    z = e * K
    if z < 1.0:
        # alternating series, |z| < 1: 40 terms is far below double precision
        total, term = 0.0, 1.0
        for j in range(40):
            total += term / (m + j + 1)
            term *= -z / (j + 1)
        return K ** (m + 1) * total
    ez = math.exp(-min(z, _EXP_CAP))
    if m == 0:
        return (1.0 - ez) / e
    if m == 1:
        return (1.0 - ez * (1.0 + z)) / e ** 2
    return (2.0 - ez * (2.0 + 2.0 * z + z * z)) / e ** 3


def _weighted_moment(sh: _Shape, K, m):
    """int_0^K x^m * exp(-eps (x - shift)) dx / denom."""
    if sh.eps >= 0.0:
        return _exp_moment(sh.eps, K, m) / sh.denom
    # substitute y = K - x so the exponential decays in y
    e = -sh.eps
    i0, i1 = _exp_moment(e, K, 0), _exp_moment(e, K, 1)
    if m == 0:
        val = i0
    elif m == 1:
        val = K * i0 - i1
    else:
        val = K * K * i0 - 2.0 * K * i1 + _exp_moment(e, K, 2)
    return val / sh.denom


def _decay_cuts(eps, K):
    """Breakpoints on [0, K] at 1, 2, 4, ... decay lengths from the end
    where the density peaks, so no panel straddles a narrow spike."""
    if eps == 0.0 or abs(eps) * K <= 1.0:
        return [0.0, K]
    d, pts = 1.0 / abs(eps), [0.0]
    while d < K:
        pts.append(d)
        d *= 2.0
    pts.append(K)
    if eps < 0.0:   # peak at K: mirror
        pts = sorted(K - x for x in pts)
    return pts


def queue_delay_moments(p: FluidParams, s: FluidSolution | None = None,
                        method="closed", rtol=1e-10):
    """First and second moments of the VOQ waiting time, in slots.

    Admitted traffic is split into arrivals to an empty queue (no wait), on-
    and off-state arrivals at level ``0 < x < K`` (wait ``x/C``), and the
    rate-``C`` admission while full (wait ``K/C``).  ``method="quadrature"``
    integrates the densities numerically instead of using antiderivatives.
    """
    if p.K == 0.0:
        return 0.0, 0.0
    if s is None:
        s = solve_vc(p)
    sh = _shape(p)
    K, C = p.K, p.C
    u, v = p.up_rate, p.down_rate
    # traffic-weighted density factor (on-state arrivals at peak+lambda_d,
    # off-state at lambda_d)
    coef = p.alpha * p.beta * p.b * ((p.peak + p.lambda_d) * v / u
                                     + p.lambda_d)
    admitted = p.mean + p.lambda_d - s.delta

    if method == "closed":
        i1 = _weighted_moment(sh, K, 1)
        i2 = _weighted_moment(sh, K, 2)
    elif method == "quadrature":
        scale = _weighted_moment(sh, K, 0) * K
        cuts = _decay_cuts(sh.eps, K)
        i1 = i2 = 0.0
        for lo, hi in zip(cuts, cuts[1:]):
            i1 += adaptive_simpson(lambda x: x * sh.weight(x), lo, hi,
                                   tol=rtol * scale / len(cuts))
            i2 += adaptive_simpson(lambda x: x * x * sh.weight(x), lo, hi,
                                   tol=rtol * scale * K / len(cuts))
    else:
        raise ValueError(f"unknown method {method!r}")

    full_rate = C * s.p_full
    mean = (coef * i1 / C + (K / C) * full_rate) / admitted
    second = (coef * i2 / C ** 2 + (K / C) ** 2 * full_rate) / admitted
    return mean, second


def equilibrium_queue_delay(p: FluidParams):
    """Closed-form waiting-time moments at the equilibrium VOQ size."""
    rho, r, b = p.rho, p.alpha / p.beta, p.b
    mean = b * (((2 * r + 1) * rho - (1 + r))
                * ((2 - 1 / r) * rho + (1 / r - 1))) / (2 * rho * (1 - rho))
    second = b ** 2 * (((2 * rho - 1) * r - (1 - rho)) ** 2
                       * ((1 - rho) * 2 / r + 2 * rho - 1)) / (3 * (1 - rho) ** 2)
    return mean, second


def deflection_delay_terms(p_deflect, a=1.0):
    """Additive deflection contributions to mean delay and to jitter."""
    return (a * p_deflect / (1.0 - p_deflect),
            a * a * p_deflect / (1.0 - p_deflect) ** 2)


def end_to_end_delay(p: FluidParams, regime: str, a=1.0,
                     s: FluidSolution | None = None, method="closed"):
    """Mean end-to-end delay and its variance under ideal deflection.

    ``p`` must carry the solved deflected rate, i.e. pass
    ``ideal_deflection(p).params``.  Defined only without ideal loss (stable
    or equilibrium regime).
    """
    if regime == UNSTABLE:
        raise UnstableRegime("delay is not defined when the ideal loss > 0")
    pd = ideal_deflection_probability(p, regime)
    mq, sq = queue_delay_moments(p, s, method=method)
    dm, dv = deflection_delay_terms(pd, a)
    return mq + dm, (sq - mq * mq) + dv


# -- BvN without deflection ---------------------------------------------------

def bvn_loss(p: FluidParams) -> float:
    """Loss probability when overflow is dropped (``lambda_d`` ignored)."""
    C, u, a, be = p.C, p.peak - p.C, p.alpha, p.beta
    eps = a / u - be / C
    num = u * be * (C * a - be * u)
    den = p.mean * (C * a * math.exp(min(eps * p.K, _EXP_CAP)) - be * u)
    return p.b * num / den


def bvn_required_k(p: FluidParams, loss_target: float) -> float:
    """VOQ size at which :func:`bvn_loss` equals ``loss_target``."""
    if not 0.0 < loss_target < 1.0:
        raise ParameterError("loss target must lie in (0, 1)")
    q = p.replace(K=0.0, lambda_d=0.0)
    if loss_target >= bvn_loss(q):
        raise TargetUnreachable(
            f"target {loss_target:g} >= loss with no buffer {bvn_loss(q):g}")
    C, u, a, be = p.C, p.peak - p.C, p.alpha, p.beta
    eps = a / u - be / C
    arg = (be * u + u * be * (C * a - be * u)
           / ((a + be) * p.mean * loss_target)) / (C * a)
    return math.log(arg) / eps


@dataclass(frozen=True)
class BvNBaseline:
    p_loss: float
    k_required: float | None
    mean_delay: float
    delay_var: float


def bvn_baseline(p: FluidParams, loss_target: float | None = None,
                 method="closed") -> BvNBaseline:
    """Loss, delay and jitter of a plain BvN VC at ``p.K``; with a target,
    also the VOQ size needed to reach it."""
    q = p.replace(lambda_d=0.0)
    mq, sq = queue_delay_moments(q, method=method)
    kreq = None if loss_target is None else bvn_required_k(q, loss_target)
    return BvNBaseline(p_loss=bvn_loss(q), k_required=kreq, mean_delay=mq,
                       delay_var=sq - mq * mq)
