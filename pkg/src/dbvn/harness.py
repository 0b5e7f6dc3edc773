"""Experiment driver: configs, sweeps, critical VOQ search, bound checks, CSV.

A sweep walks one axis (``K``, ``burstiness`` or ``load``) and produces, at
every point, the ideal-deflection analytics next to simulation measurements
taken at the same parameters.  Simulated sources are built from the fluid
rates through :meth:`OnOffSource.from_rates`.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import fluid
from .errors import (ConfigError, DBvNError, NegativeResult, NotBracketed,
                     TargetUnreachable, UnstableRegime, ValidationError)
from .fluid import FluidParams
from .sim import (BVN, DBVN, EMBEDDED, LITERAL, Metrics, OnOffSource,
                  SwitchConfig, run)

log = logging.getLogger(__name__)

AXES = ("K", "burstiness", "load")

CSV_COLUMNS = ("axis", "value", "seed", "sim_pl", "sim_pd", "sim_delay_mean",
               "sim_delay_var", "sim_oos", "sim_reseq_max", "ana_pl", "ana_pd",
               "ana_delay_mean", "ana_delay_var", "kdot", "bvn_pl",
               "bvn_k_required")


def tool_version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:  # not installed
        return "0+unknown"


@dataclass(frozen=True)
class SweepSpec:
    """Everything needed to reproduce a sweep.

    ``switch`` and ``fluid`` describe the base point; each sweep point
    overrides the axis quantity.  ``slots_per_point = None`` means analytics
    only.  With ``kdot_multiple`` set, the VOQ size of every point is that
    multiple of the point's own critical size (rounded, at least 1).
    """

    switch: SwitchConfig
    fluid: FluidParams
    axis: str = "K"
    points: tuple = ()
    slots_per_point: int | None = None
    seeds_per_point: int = 1
    loss_target: float = 1e-5
    source_map: str = EMBEDDED
    k_max: int = 4096
    kdot_multiple: float | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        pts = tuple(float(v) for v in self.points)
        if not pts:
            raise ConfigError("sweep needs at least one point")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ConfigError("sweep points must be strictly increasing")
        object.__setattr__(self, "points", pts)
        if self.seeds_per_point < 1:
            raise ConfigError("seeds_per_point must be >= 1")
        if self.slots_per_point is not None and self.slots_per_point < 1:
            raise ConfigError("slots_per_point must be positive")
        if not 0.0 < self.loss_target < 1.0:
            raise ConfigError("loss_target must lie in (0, 1)")
        if self.source_map not in (EMBEDDED, LITERAL):
            raise ConfigError(f"unknown source_map {self.source_map!r}")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.kdot_multiple is not None:
            if self.kdot_multiple <= 0:
                raise ConfigError("kdot_multiple must be positive")
            if self.axis == "K":
                raise ConfigError("kdot_multiple cannot be used on the K axis")
        if self.axis == "K" and self.slots_per_point is not None:
            bad = [v for v in pts if v != int(v) or v < 0]
            if bad:
                raise ConfigError(f"simulated VOQ sizes must be whole "
                                  f"numbers, got {bad[0]!r}")
        if abs(self.fluid.C - 1.0 / self.switch.n) > 1e-12:
            raise ConfigError("fluid capacity C must equal 1/n")

    @property
    def seeds(self) -> tuple[int, ...]:
        s = int(self.switch.seed)
        return tuple(range(s, s + self.seeds_per_point))

    @property
    def simulated(self) -> bool:
        return self.slots_per_point is not None

    def replace(self, **kw) -> "SweepSpec":
        return dataclasses.replace(self, **kw)

    def point(self, value: float) -> tuple[FluidParams, int]:
        """Fluid parameters and integer VOQ size at one axis value."""
        p = self.fluid
        if self.axis == "K":
            return p.replace(K=float(value)), int(round(value))
        if self.axis == "burstiness":
            p = fluid.scale_burstiness(p, value)
        else:
            p = FluidParams.from_load(self.switch.n, p.peak, value, p.b, p.K)
        k = int(round(p.K))
        if self.kdot_multiple is not None:
            k = max(1, int(round(self.kdot_multiple
                                 * fluid.critical_voq_size(p))))
        return p.replace(K=float(k)), k

    def switch_config(self, p: FluidParams, k: int, seed: int) -> SwitchConfig:
        src = OnOffSource.from_rates(p.peak, p.alpha, p.beta, self.source_map)
        return self.switch.replace(voq_size=k, source=src, seed=seed)


@dataclass(frozen=True)
class Analytics:
    p_loss: float
    p_deflect: float
    regime: str
    delay_mean: float          # nan when the ideal loss is positive
    delay_var: float
    deflection_delay: float
    kdot: float                # nan when the critical size is not positive
    bvn_pl: float
    bvn_k_required: float      # nan when the target is out of reach


def analyze_point(p: FluidParams, a: float = 1.0,
                  loss_target: float = 1e-5) -> Analytics:
    ideal = fluid.ideal_deflection(p)
    q = ideal.params
    try:
        dm, dv = fluid.end_to_end_delay(q, ideal.regime, a, s=ideal.solution)
    except UnstableRegime:
        dm = dv = math.nan
    try:
        kdot = fluid.critical_voq_size(p)
    except NegativeResult:
        kdot = math.nan
    try:
        kreq = fluid.bvn_required_k(p, loss_target)
    except TargetUnreachable:
        kreq = math.nan
    return Analytics(
        p_loss=ideal.p_loss, p_deflect=ideal.p_deflect, regime=ideal.regime,
        delay_mean=dm, delay_var=dv,
        deflection_delay=fluid.deflection_delay_terms(ideal.p_deflect, a)[0],
        kdot=kdot, bvn_pl=fluid.bvn_loss(p), bvn_k_required=kreq)


@dataclass(frozen=True)
class SweepRow:
    value: float
    seed: int | None
    voq_size: int
    params: FluidParams
    analytics: Analytics
    metrics: Metrics | None


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: tuple[SweepRow, ...]

    def point_rows(self, value) -> list[SweepRow]:
        return [r for r in self.rows if r.value == value]

    @property
    def simulated(self) -> bool:
        return any(r.metrics is not None for r in self.rows)

    def to_csv(self) -> str:
        return format_csv(self)


def _annotate(exc: DBvNError, where: str) -> DBvNError:
    try:
        new = type(exc)(f"{where}: {exc}")
    except TypeError:
        return exc
    new.__cause__ = exc
    return new


def run_sweep(spec: SweepSpec,
              progress: Callable[[str], None] | None = None) -> SweepResult:
    """Evaluate every point (and every seed when simulating) in order."""
    rows = []
    a = float(spec.switch.cross_delay)
    for v in spec.points:
        where = f"{spec.axis}={v:g}"
        try:
            p, k = spec.point(v)
            ana = analyze_point(p, a, spec.loss_target)
            if not spec.simulated:
                rows.append(SweepRow(v, None, k, p, ana, None))
                continue
            for seed in spec.seeds:
                cfg = spec.switch_config(p, k, seed)
                m = run(cfg, spec.slots_per_point)
                msg = (f"{where} K={k} seed={seed}: P_l={m.p_loss:.4g} "
                       f"P_d={m.p_deflect:.4g} E[D]={m.delay_mean:.5g}")
                log.info(msg)
                if progress:
                    progress(msg)
                rows.append(SweepRow(v, seed, k, p, ana, m))
        except DBvNError as e:
            raise _annotate(e, where) from e
    return SweepResult(spec, tuple(rows))


# -- critical VOQ size --------------------------------------------------------

@dataclass(frozen=True)
class CriticalK:
    k: int
    loss_target: float
    probes: dict               # K -> pooled simulated loss
    monotone: bool             # probed losses nonincreasing in K


def pooled_loss(spec: SweepSpec, k: int, p: FluidParams | None = None) -> float:
    p = spec.fluid if p is None else p
    lost = offered = 0
    for seed in spec.seeds:
        m = run(spec.switch_config(p, k, seed), spec.slots_per_point)
        lost += m.lost
        offered += m.offered
    return lost / offered if offered else 0.0


def find_critical_k(spec: SweepSpec, loss_target: float | None = None,
                    k_max: int | None = None, start: int | None = None,
                    probe: Callable[[int], float] | None = None,
                    ) -> CriticalK:
    """Smallest K whose simulated loss is at most ``loss_target``.

    Doubling (or halving) from ``start`` brackets the answer, then bisection
    on integers pins it down.  Every probe uses the sweep's seeds, so the
    search is deterministic.  ``start`` defaults to the analytic hint: the
    critical size of ideal deflection, or the fluid BvN requirement in
    plain BvN mode.  ``probe`` replaces the simulation (for testing).
    """
    target = spec.loss_target if loss_target is None else loss_target
    if not 0.0 < target < 1.0:
        raise ValidationError("loss target must lie in (0, 1)")
    kmax = spec.k_max if k_max is None else int(k_max)
    if probe is None:
        if not spec.simulated:
            raise ConfigError("critical-K search needs slots_per_point")
        probe = lambda k: pooled_loss(spec, k)   # noqa: E731
    if start is None:
        start = _search_hint(spec, target)
    start = min(max(int(start), 1), kmax)

    seen: dict[int, float] = {}

    def loss(k):
        if k not in seen:
            seen[k] = probe(k)
            log.info("critical-K probe K=%d: P_l=%.4g", k, seen[k])
        return seen[k]

    if loss(start) <= target:
        hi = start
        lo = 0
        k = start
        while k > 1:
            k = max(k // 2, 1)
            if loss(k) > target:
                lo = k
                break
            hi = k
        if lo == 0:   # passes all the way down to K = 1
            return _critical(hi, target, seen)
    else:
        lo = start
        k = start
        while True:
            if k >= kmax:
                raise NotBracketed(
                    f"loss {seen[k]:.3g} still above {target:g} at K={k} "
                    f"(k_max={kmax})")
            k = min(2 * k, kmax)
            if loss(k) <= target:
                hi = k
                break
            lo = k
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if loss(mid) <= target:
            hi = mid
        else:
            lo = mid
    return _critical(hi, target, seen)


def _critical(k, target, seen):
    ks = sorted(seen)
    vals = [seen[x] for x in ks]
    mono = all(b <= a for a, b in zip(vals, vals[1:]))
    return CriticalK(k=k, loss_target=target, probes=dict(sorted(seen.items())),
                     monotone=mono)


def _search_hint(spec, target):
    p = spec.fluid
    try:
        if spec.switch.mode == BVN:
            return math.ceil(fluid.bvn_required_k(p, target))
        return math.ceil(fluid.critical_voq_size(p))
    except DBvNError:
        return 1


# -- bound checks -------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    value: float
    name: str
    passed: bool
    lhs: float
    rhs: float
    margin: float              # >= 0 when the relation holds
    detail: str = ""

    def line(self, axis="K") -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} {axis}={self.value:g} {self.name}: {self.detail} "
                f"(lhs={self.lhs:.6g}, rhs={self.rhs:.6g}, "
                f"margin={self.margin:+.3g})")


@dataclass(frozen=True)
class Report:
    applicable: bool
    checks: tuple[Check, ...] = ()
    axis: str = "K"

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def lines(self) -> list[str]:
        if not self.applicable:
            return ["not applicable: no simulation columns"]
        return [c.line(self.axis) for c in self.checks]


@dataclass(frozen=True)
class PointStats:
    """Simulation results of one point pooled over its seeds."""

    value: float
    voq_size: int
    analytics: Analytics
    p_loss: float
    p_deflect: float
    delay_mean: float
    oos: float
    deflection_delay: float
    eps_loss: float
    eps_deflect: float
    eps_delay: float
    eps_deflection_delay: float


def _sem(xs):
    xs = np.asarray(xs, dtype=float)
    if xs.size < 2:
        return 0.0
    return float(xs.std(ddof=1) / math.sqrt(xs.size))


def _binom_se(p, n):
    return math.sqrt(p * (1.0 - p) / n) if n else 0.0


def point_stats(rows: Sequence[SweepRow], z: float = 3.0) -> PointStats:
    """Pool the seeds of one point.

    Probabilities are pooled ratios of summed counts; their tolerance is
    ``z`` times the larger of the binomial standard error and the standard
    error of the per-seed estimates.  Delays are per-seed means with a
    tolerance of ``z`` standard errors of the mean.
    """
    ms = [r.metrics for r in rows]
    off = sum(m.offered for m in ms)
    adm = sum(m.admissions for m in ms)
    dlv = sum(m.delivered for m in ms)
    pl = sum(m.lost for m in ms) / off if off else 0.0
    pd = sum(m.deflection_events for m in ms) / adm if adm else 0.0
    oos = sum(m.out_of_seq for m in ms) / dlv if dlv else 0.0
    dm = [m.delay_mean for m in ms]
    dd = [m.deflection_delay_mean for m in ms]
    return PointStats(
        value=rows[0].value, voq_size=rows[0].voq_size,
        analytics=rows[0].analytics, p_loss=pl, p_deflect=pd,
        delay_mean=float(np.mean(dm)), oos=oos,
        deflection_delay=float(np.mean(dd)),
        eps_loss=z * max(_binom_se(pl, off), _sem([m.p_loss for m in ms])),
        eps_deflect=z * max(_binom_se(pd, adm),
                            _sem([m.p_deflect for m in ms])),
        eps_delay=z * _sem(dm), eps_deflection_delay=z * _sem(dd))


def pooled_points(result: SweepResult, z: float = 3.0) -> list[PointStats]:
    return [point_stats(result.point_rows(v), z) for v in result.spec.points
            if result.point_rows(v) and result.point_rows(v)[0].metrics]


def compare_report(result: SweepResult, z: float = 3.0,
                   pd_rel_tol: float | None = None) -> Report:
    """Check the analysis-vs-simulation bounding relations at every point.

    Always: ideal loss - eps <= sim loss <= BvN loss + eps.  In deflection
    mode also: sim P_d >= ideal P_d - eps, sim E[D] >= ideal E[D] - eps
    (where the ideal delay exists) and out-of-sequence fraction <= sim P_d.
    With ``pd_rel_tol``, points with ``K >= Kdot`` must have sim P_d within
    that relative distance of the ideal value.
    """
    axis = result.spec.axis
    if not result.simulated:
        return Report(applicable=False, axis=axis)
    dbvn = result.spec.switch.mode == DBVN
    checks = []
    for s in pooled_points(result, z):
        a, v = s.analytics, s.value

        def add(name, lhs, rhs, margin, detail):
            checks.append(Check(v, name, margin >= 0.0, lhs, rhs, margin,
                                detail))

        add("loss>=ideal", s.p_loss, a.p_loss - s.eps_loss,
            s.p_loss - (a.p_loss - s.eps_loss),
            f"sim P_l >= ideal P_l - eps ({a.p_loss:.4g} - {s.eps_loss:.3g})")
        add("loss<=bvn", s.p_loss, a.bvn_pl + s.eps_loss,
            a.bvn_pl + s.eps_loss - s.p_loss,
            f"sim P_l <= BvN P_l + eps ({a.bvn_pl:.4g} + {s.eps_loss:.3g})")
        if not dbvn:
            continue
        add("pd>=ideal", s.p_deflect, a.p_deflect - s.eps_deflect,
            s.p_deflect - (a.p_deflect - s.eps_deflect),
            f"sim P_d >= ideal P_d - eps ({a.p_deflect:.4g} - "
            f"{s.eps_deflect:.3g})")
        if not math.isnan(a.delay_mean):
            add("delay>=ideal", s.delay_mean, a.delay_mean - s.eps_delay,
                s.delay_mean - (a.delay_mean - s.eps_delay),
                f"sim E[D] >= ideal E[D] - eps ({a.delay_mean:.6g} - "
                f"{s.eps_delay:.3g})")
        add("oos<=pd", s.oos, s.p_deflect, s.p_deflect - s.oos,
            "out-of-sequence fraction <= sim P_d")
        if pd_rel_tol is not None and not math.isnan(a.kdot) \
                and s.voq_size >= a.kdot:
            rel = abs(s.p_deflect - a.p_deflect) / a.p_deflect
            add("pd~ideal", rel, pd_rel_tol, pd_rel_tol - rel,
                f"|sim P_d / ideal P_d - 1| <= {pd_rel_tol:g}")
    return Report(applicable=True, checks=tuple(checks), axis=axis)


# -- CSV ---------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def csv_row(axis: str, row: SweepRow) -> list[str]:
    a, m = row.analytics, row.metrics
    sim = ((None,) * 6 if m is None else
           (m.p_loss, m.p_deflect, m.delay_mean, m.delay_var, m.oos_fraction,
            m.reseq_occupancy_max))
    vals = (axis, row.value, row.seed) + sim + (
        a.p_loss, a.p_deflect, a.delay_mean, a.delay_var, a.kdot, a.bvn_pl,
        a.bvn_k_required)
    return [axis] + [_fmt(x) for x in vals[1:]]


def format_csv(result: SweepResult) -> str:
    """Sweep table with the resolved config echoed as ``#`` lines."""
    out = io.StringIO()
    spec = result.spec
    out.write(f"# dbvn {tool_version()}\n")
    out.write(f"# seeds = {' '.join(map(str, spec.seeds))}\n")
    for line in spec_to_ini(spec).splitlines():
        out.write(f"# {line}\n" if line else "#\n")
    out.write(",".join(CSV_COLUMNS) + "\n")
    for r in result.rows:
        out.write(",".join(csv_row(spec.axis, r)) + "\n")
    return out.getvalue()


def read_csv_rows(text: str) -> list[dict]:
    """Data rows of a sweep CSV as dicts of strings (comments skipped)."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        return []
    head = lines[0].split(",")
    return [dict(zip(head, ln.split(","))) for ln in lines[1:]]


def metrics_csv(rows: Sequence[tuple[int, Metrics]]) -> str:
    """One line per run: the seed followed by every metric field."""
    if not rows:
        return ""
    keys = list(rows[0][1].as_dict())
    out = io.StringIO()
    out.write(",".join(["seed"] + keys) + "\n")
    for seed, m in rows:
        d = m.as_dict()
        out.write(",".join([str(seed)] + [_fmt(d[k]) for k in keys]) + "\n")
    return out.getvalue()


# -- config files ---------------------------------------------------------------

_KNOWN = {
    "switch": {"n", "voq_size", "throttle_pct", "throttle_size", "mode",
               "cross_delay", "stationary_start"},
    "traffic": {"peak", "load", "mean", "alpha", "beta", "b", "source_map"},
    "run": {"seed", "seeds", "slots", "warmup"},
    "sweep": {"axis", "points", "loss_target", "k_max", "kdot_multiple"},
}


def parse_points(text: str) -> tuple[float, ...]:
    """Comma or whitespace separated numbers; ``a:b:step`` spans allowed."""
    out = []
    for tok in text.replace(",", " ").split():
        if ":" in tok:
            parts = [float(x) for x in tok.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ConfigError(f"bad range {tok!r}, want start:stop:step")
            lo, hi, step = parts
            out.extend(float(x) for x in
                       np.arange(lo, hi + step * 1e-9, step).round(12))
        else:
            try:
                out.append(float(tok))
            except ValueError:
                raise ConfigError(f"bad point {tok!r}") from None
    return tuple(out)


def _num(sec, key, conv, default=None):
    if key not in sec:
        return default
    raw = sec[key].strip()
    try:
        if conv is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if conv is bool:
            return sec.getboolean(key)
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key} = {raw!r} is not a valid "
                          f"{conv.__name__}") from None


def parse_config(text: str) -> SweepSpec:
    """Build a :class:`SweepSpec` from ``key = value`` text with sections.

    Traffic is given either as ``peak``, ``load`` and ``b`` (alpha and beta
    derived so the on-off mean is exactly ``load / n``) or as ``peak``,
    ``alpha`` and ``beta`` with an optional explicit ``mean`` used by the
    analytics.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config: {e}") from None
    for name in cp.sections():
        if name not in _KNOWN:
            raise ConfigError(f"unknown section [{name}]")
        extra = set(cp[name]) - _KNOWN[name]
        if extra:
            raise ConfigError(f"unknown key(s) in [{name}]: "
                              f"{', '.join(sorted(extra))}")
    get = lambda s: cp[s] if cp.has_section(s) else cp[cp.default_section]  # noqa: E731
    sw, tr, rn, sp = get("switch"), get("traffic"), get("run"), get("sweep")

    n = _num(sw, "n", int)
    if n is None:
        raise ConfigError("[switch] n is required")
    if n < 2:
        raise ConfigError("[switch] n must be >= 2")
    k = _num(sw, "voq_size", int, 0)
    peak = _num(tr, "peak", float)
    if peak is None:
        raise ConfigError("[traffic] peak is required")
    load, mean = _num(tr, "load", float), _num(tr, "mean", float)
    alpha, beta, b = (_num(tr, x, float) for x in ("alpha", "beta", "b"))
    if load is not None and mean is not None:
        raise ConfigError("[traffic] give load or mean, not both")
    try:
        if alpha is None and beta is None:
            if b is None or (load is None and mean is None):
                raise ConfigError("[traffic] needs load (or mean) and b, "
                                  "or alpha and beta")
            rho = load if load is not None else mean * n
            fp = FluidParams.from_load(n, peak, rho, b, float(k))
        elif alpha is not None and beta is not None:
            if b is not None:
                raise ConfigError("[traffic] b conflicts with alpha/beta")
            fp = FluidParams.from_onoff(1.0 / n, peak, alpha, beta, float(k))
            if mean is not None or load is not None:
                m = mean if mean is not None else load / n
                fp = fp.replace(mean=m)
        else:
            raise ConfigError("[traffic] alpha and beta go together")
    except ValidationError as e:
        raise ConfigError(str(e)) from None

    seed = _num(rn, "seed", int, 0)
    seeds = _num(rn, "seeds", int, 1)
    slots = _num(rn, "slots", int)
    warmup = _num(rn, "warmup", int)
    mode = sw.get("mode", DBVN).strip()
    tpct = _num(sw, "throttle_pct", float)
    tsize = _num(sw, "throttle_size", int)
    switch = SwitchConfig(
        n=n, voq_size=k,
        source=OnOffSource.from_rates(peak, fp.alpha, fp.beta,
                                      tr.get("source_map", EMBEDDED).strip()),
        throttle_size=tsize, throttle_pct=tpct, mode=mode,
        cross_delay=_num(sw, "cross_delay", int, 1), seed=seed, warmup=warmup,
        stationary_start=_num(sw, "stationary_start", bool, True))
    axis = sp.get("axis", "K").strip()
    pts = parse_points(sp["points"]) if "points" in sp else ()
    if not pts:
        pts = (float(k),) if axis == "K" else (
            fp.b if axis == "burstiness" else fp.rho,)
    return SweepSpec(
        switch=switch, fluid=fp, axis=axis, points=pts, slots_per_point=slots,
        seeds_per_point=seeds,
        loss_target=_num(sp, "loss_target", float, 1e-5),
        source_map=tr.get("source_map", EMBEDDED).strip(),
        k_max=_num(sp, "k_max", int, 4096),
        kdot_multiple=_num(sp, "kdot_multiple", float))


def load_config(path) -> SweepSpec:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text)


def spec_to_ini(spec: SweepSpec) -> str:
    """Config text that :func:`parse_config` turns back into ``spec``."""
    sw, p = spec.switch, spec.fluid
    lines = ["[switch]", f"n = {sw.n}", f"voq_size = {sw.voq_size}"]
    if sw.throttle_size is not None:
        lines.append(f"throttle_size = {sw.throttle_size}")
    if sw.throttle_pct is not None:
        lines.append(f"throttle_pct = {sw.throttle_pct!r}")
    lines += [f"mode = {sw.mode}", f"cross_delay = {sw.cross_delay}",
              f"stationary_start = {str(sw.stationary_start).lower()}",
              "", "[traffic]", f"peak = {p.peak!r}", f"alpha = {p.alpha!r}",
              f"beta = {p.beta!r}", f"mean = {p.mean!r}",
              f"source_map = {spec.source_map}", "", "[run]",
              f"seed = {sw.seed}", f"seeds = {spec.seeds_per_point}"]
    if spec.slots_per_point is not None:
        lines.append(f"slots = {spec.slots_per_point}")
    if sw.warmup is not None:
        lines.append(f"warmup = {sw.warmup}")
    lines += ["", "[sweep]", f"axis = {spec.axis}",
              "points = " + ", ".join(repr(v) for v in spec.points),
              f"loss_target = {spec.loss_target!r}", f"k_max = {spec.k_max}"]
    if spec.kdot_multiple is not None:
        lines.append(f"kdot_multiple = {spec.kdot_multiple!r}")
    return "\n".join(lines) + "\n"


def quick_profile(n: int = 16, load: float = 0.98, b: float = 2.0,
                  peak: float = 0.8, voq_size: int | None = None,
                  throttle_pct: float = 10.0, **kw) -> SweepSpec:
    """Small deflection-mode setup with ``C = 1/n``; ``voq_size`` defaults to
    the rounded ideal critical size."""
    fp = FluidParams.from_load(n, peak, load, b)
    k = voq_size if voq_size is not None else \
        int(round(fluid.critical_voq_size(fp)))
    fp = fp.replace(K=float(k))
    smap = kw.pop("source_map", EMBEDDED)
    sw_kw = {x: kw.pop(x) for x in ("mode", "seed", "warmup", "cross_delay")
             if x in kw}
    sw = SwitchConfig(n=n, voq_size=k,
                      source=OnOffSource.from_rates(peak, fp.alpha, fp.beta,
                                                    smap),
                      throttle_pct=throttle_pct, **sw_kw)
    kw.setdefault("points", (float(k),))
    return SweepSpec(switch=sw, fluid=fp, source_map=smap, **kw)
