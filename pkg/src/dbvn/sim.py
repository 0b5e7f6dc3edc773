"""Slot-level simulation of a BvN / deflection-compensated BvN crossbar.

One slot runs four phases in a fixed order:

1. packets whose feedback delay expires re-enter the input co-located with
   the output that bounced them and go through admission;
2. fresh arrivals from the on-off sources go through admission;
3. each input serves its scheduled connection ``(i, j)``: the head of
   ``VOQ[i, j]`` if there is one, otherwise (deflection mode) the head of
   the input's throttle buffer rides the free token to output ``j`` and is
   either delivered (``j`` is its destination) or put on the feedback line;
4. reorder-buffer occupancy is sampled.

Admission puts a packet in its VOQ when there is room, otherwise in the
throttle buffer (deflection mode, if not full), otherwise drops it.
A packet admitted in slot ``t`` can be served in the same slot.

Only packets born at or after ``warmup`` enter the statistics; all of them
are still simulated.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import _kernel as K_
from .errors import ConfigError
from .rng import geometric_scale, seed_streams
from .schedule import FrameSchedule, circular_shift_schedule

DBVN = "dbvn"
BVN = "bvn"
EMBEDDED = "embedded"
LITERAL = "literal"

_WHEEL = 4096
_REORDER_WINDOW = 8192
_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class OnOffSource:
    """Geometric on-off source parameters (per-slot probabilities)."""
    peak: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.peak <= 1.0:
            raise ConfigError(f"peak must be in [0, 1], got {self.peak}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1], got {v}")

    @classmethod
    def from_rates(cls, peak, alpha, beta, mapping=EMBEDDED) -> "OnOffSource":
        """Discrete source for a continuous-time on-off process with exit
        rates ``alpha`` (on) and ``beta`` (off) per slot.

        ``"embedded"`` samples the continuous chain once per slot, so the
        transition probabilities are ``alpha/(alpha+beta) * (1 - exp(-(alpha
        + beta)))`` and likewise for beta; the stationary split is unchanged
        and the burst-length correlation matches the fluid model.
        ``"literal"`` uses the rates directly as probabilities.
        """
        if mapping == LITERAL:
            return cls(peak, alpha, beta)
        if mapping != EMBEDDED:
            raise ConfigError(f"unknown source mapping {mapping!r}")
        s = alpha + beta
        e = -math.expm1(-s)
        return cls(peak, alpha / s * e, beta / s * e)

    @property
    def pi_on(self) -> float:
        return self.beta / (self.alpha + self.beta)

    @property
    def mean(self) -> float:
        return self.peak * self.pi_on

    @property
    def b(self) -> float:
        return 1.0 / (self.alpha + self.beta)


@dataclass(frozen=True, eq=False)
class SwitchConfig:
    n: int
    voq_size: int
    source: OnOffSource
    throttle_size: int | None = None
    throttle_pct: float | None = None
    schedule: FrameSchedule | None = None
    mode: str = DBVN
    cross_delay: int = 1
    seed: int = 0
    warmup: int | None = None
    stationary_start: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.voq_size < 0:
            raise ConfigError("voq_size must be >= 0")
        if self.mode not in (DBVN, BVN):
            raise ConfigError(f"mode must be 'dbvn' or 'bvn', got {self.mode!r}")
        if self.cross_delay < 1:
            raise ConfigError("cross_delay must be >= 1")
        if self.throttle_size is not None and self.throttle_pct is not None:
            raise ConfigError("give throttle_size or throttle_pct, not both")
        if (self.throttle_size or 0) < 0 or (self.throttle_pct or 0) < 0:
            raise ConfigError("throttle buffer size must be >= 0")
        if self.warmup is not None and self.warmup < 0:
            raise ConfigError("warmup must be >= 0")
        if self.schedule is not None and self.schedule.n != self.n:
            raise ConfigError(f"schedule has {self.schedule.n} ports, "
                              f"switch has {self.n}")

    @property
    def throttle(self) -> int:
        """Effective throttle-buffer size (0 in plain BvN mode)."""
        if self.mode == BVN:
            return 0
        if self.throttle_size is not None:
            return int(self.throttle_size)
        if self.throttle_pct is not None:
            return int(round(self.throttle_pct / 100.0 * self.n * self.voq_size))
        return 0

    @property
    def warmup_slots(self) -> int:
        if self.warmup is not None:
            return int(self.warmup)
        return 10 * self.n * self.voq_size

    def resolved_schedule(self) -> FrameSchedule:
        if self.schedule is not None:
            return self.schedule
        return circular_shift_schedule(self.n, self.seed)

    def replace(self, **kw) -> "SwitchConfig":
        return replace(self, **kw)

    def __eq__(self, other):
        if not isinstance(other, SwitchConfig):
            return NotImplemented
        return all(getattr(self, f.name) == getattr(other, f.name)
                   for f in fields(self))

    __hash__ = None


@dataclass
class Metrics:
    offered: int = 0
    delivered: int = 0
    lost: int = 0
    in_flight: int = 0
    admissions: int = 0
    deflection_events: int = 0
    deflected_packets: int = 0
    deflected_delivered: int = 0
    direct_deflections: int = 0
    hops: int = 0
    delay_sum: float = 0.0
    delay_sq_sum: float = 0.0
    queue_wait_sum: float = 0.0
    queue_wait_sq_sum: float = 0.0
    deflection_delay_sum: float = 0.0
    deflection_delay_sq_sum: float = 0.0
    throttle_wait_sum: float = 0.0
    out_of_seq: int = 0
    late_packets: int = 0
    reseq_occupancy_max: int = 0
    reseq_occupancy_mean: float = 0.0
    reseq_overflow: int = 0
    spare_tokens_used: int = 0
    spare_tokens_total: int = 0
    slots_measured: int = 0

    @property
    def p_loss(self) -> float:
        return self.lost / self.offered if self.offered else 0.0

    @property
    def p_deflect(self) -> float:
        """Deflection events per admission attempt (fresh or fed back)."""
        return self.deflection_events / self.admissions if self.admissions else 0.0

    @property
    def delay_mean(self) -> float:
        return self.delay_sum / self.delivered if self.delivered else 0.0

    @property
    def delay_var(self) -> float:
        if not self.delivered:
            return 0.0
        m = self.delay_mean
        return max(self.delay_sq_sum / self.delivered - m * m, 0.0)

    @property
    def queue_wait_mean(self) -> float:
        return self.queue_wait_sum / self.delivered if self.delivered else 0.0

    @property
    def deflection_delay_mean(self) -> float:
        """Cross-switch time of deflection hops (``a`` per feedback trip),
        averaged over all delivered packets."""
        return self.deflection_delay_sum / self.delivered if self.delivered else 0.0

    @property
    def throttle_wait_mean(self) -> float:
        return self.throttle_wait_sum / self.delivered if self.delivered else 0.0

    @property
    def oos_fraction(self) -> float:
        return self.out_of_seq / self.delivered if self.delivered else 0.0

    @property
    def deflected_fraction(self) -> float:
        return self.deflected_delivered / self.delivered if self.delivered else 0.0

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for k in ("p_loss", "p_deflect", "delay_mean", "delay_var",
                  "queue_wait_mean", "deflection_delay_mean",
                  "throttle_wait_mean", "oos_fraction"):
            d[k] = getattr(self, k)
        return d


@dataclass(frozen=True)
class ResequencingStats:
    occupancy_max: np.ndarray     # per output
    occupancy_mean: np.ndarray    # per output
    out_of_seq_fraction: float
    overflow: int


@dataclass(frozen=True)
class TraceEvent:
    slot: int
    event: str
    input: int
    output: int
    flow_i: int
    flow_k: int
    seq: int
    deflections: int


TRACE_COLUMNS = ("slot", "event", "input", "output", "flow_i", "flow_k",
                 "seq", "deflections")


class SwitchState:
    """Complete mutable state of one simulated switch.

    Packets are rows of the ``pk`` pool; VOQs, throttle buffers and
    feedback lines hold row indices.
    """

    def __init__(self, config: SwitchConfig, trace: bool = False):
        c = config
        sched = c.resolved_schedule()
        if sched.n != c.n:
            raise ConfigError(f"schedule has {sched.n} ports, switch has {c.n}")
        self.config = c
        self.schedule = sched
        self._sched = np.ascontiguousarray(sched.slots, dtype=np.int64)
        n = c.n
        self.n = n
        self.K = int(c.voq_size)
        self.B = int(c.throttle)
        self.a = int(c.cross_delay)
        self.dbvn = c.mode == DBVN
        self.warmup = c.warmup_slots
        self.slot = 0
        self.draining = False

        nf = n * n
        kcap = max(min(self.K, 256), 1)
        bcap = max(min(self.B, max(1024, 4 * n + 8)), 1)
        self.voq_buf = np.full((nf, kcap), -1, dtype=np.int64)
        self.voq_head = np.zeros(nf, dtype=np.int64)
        self.voq_len = np.zeros(nf, dtype=np.int64)
        self.tb_buf = np.full((n, bcap), -1, dtype=np.int64)
        self.tb_head = np.zeros(n, dtype=np.int64)
        self.tb_len = np.zeros(n, dtype=np.int64)
        self.fb = np.full((n, self.a), -1, dtype=np.int64)

        self._alloc_pool(self._pool_size())

        src = c.source
        self.streams = seed_streams(np.uint64(int(c.seed) & _U64), nf)
        self.on = np.zeros(nf, dtype=np.bool_)
        self.run_end = np.zeros(nf, dtype=np.int64)
        self.nxt = np.zeros(nf, dtype=np.int64)
        self.wheel_head = np.full(_WHEEL, -1, dtype=np.int64)
        self.wheel_next = np.full(nf, -1, dtype=np.int64)
        self.next_seq = np.zeros(nf, dtype=np.int64)
        self._gscale = (geometric_scale(src.peak) if src.peak > 0 else 0.0,
                        geometric_scale(src.alpha), geometric_scale(src.beta))
        K_.init_sources(self.streams, self.on, self.run_end, self.nxt,
                        self.wheel_head, self.wheel_next, float(src.peak),
                        *self._gscale, float(src.pi_on),
                        bool(c.stationary_start))

        self.rs_expect = np.zeros(nf, dtype=np.int64)
        self.rs_win = np.zeros((nf, _REORDER_WINDOW), dtype=np.uint8)
        self.rs_pend = np.zeros(nf, dtype=np.int64)
        self.rs_held = np.zeros(n, dtype=np.int64)
        self.max_seq = np.full(nf, -1, dtype=np.int64)
        self.occ_sum = np.zeros(n, dtype=np.float64)
        self.occ_max = np.zeros(n, dtype=np.int64)

        self.cnt = np.zeros(K_.N_COUNTERS, dtype=np.int64)
        self.acc = np.zeros(K_.N_ACCUM, dtype=np.float64)
        self.tr = np.zeros((4096 + 16 * nf if trace else 0, 8), dtype=np.int64)
        self.tr_len = np.zeros(1, dtype=np.int64)

    # -- storage management ---------------------------------------------------
    def _pool_size(self):
        n = self.n
        return (n * n * self.voq_buf.shape[1] + n * self.tb_buf.shape[1]
                + n * self.a + 2)

    def _alloc_pool(self, size):
        """(Re)allocate the packet pool with room for ``size`` packets."""
        if not hasattr(self, "pk"):
            self.pk = np.zeros((size, K_.P_FIELDS), dtype=np.int64)
            self.free = np.arange(size - 1, -1, -1, dtype=np.int64)
            self.free_top = np.array([size], dtype=np.int64)
            return
        prev = self.pk.shape[0]
        if size <= prev:
            return
        pk = np.zeros((size, K_.P_FIELDS), dtype=np.int64)
        pk[:prev] = self.pk
        free = np.empty(size, dtype=np.int64)
        top = int(self.free_top[0])
        free[:top] = self.free[:top]
        extra = np.arange(size - 1, prev - 1, -1)
        free[top:top + extra.size] = extra
        self.free_top[0] = top + extra.size
        self.pk, self.free = pk, free

    @staticmethod
    def _unroll(buf, head, length, cap):
        out = np.full((buf.shape[0], cap), -1, dtype=np.int64)
        w = buf.shape[1]
        for r in np.flatnonzero(length):
            idx = (head[r] + np.arange(length[r])) % w
            out[r, :length[r]] = buf[r, idx]
        head[:] = 0
        return out

    def _grow(self, force_voq=False, force_tb=False):
        kcap, bcap = self.voq_buf.shape[1], self.tb_buf.shape[1]
        if kcap < self.K and (force_voq or self.voq_len.max() > kcap - 2):
            self.voq_buf = self._unroll(self.voq_buf, self.voq_head,
                                        self.voq_len, min(2 * kcap, self.K))
        if bcap < self.B and (force_tb or self.tb_len.max() > bcap - self.n - 2):
            self.tb_buf = self._unroll(self.tb_buf, self.tb_head,
                                       self.tb_len, min(2 * bcap, self.B))
        self._alloc_pool(self._pool_size())
        if self.tr.shape[0] and 2 * self.tr_len[0] >= self.tr.shape[0]:
            tr = np.zeros((2 * self.tr.shape[0], 8), dtype=np.int64)
            tr[:self.tr.shape[0]] = self.tr
            self.tr = tr

    # -- running ----------------------------------------------------------------
    def _advance(self, t_end, draining=False):
        src = self.config.source
        status = 0
        while self.slot < t_end:
            t, status = K_.advance(
                self.slot, t_end, draining,
                self.n, self.K, self.B, self.a, self.dbvn, self.warmup,
                float(src.peak), *self._gscale,
                self._sched, self.pk, self.free, self.free_top,
                self.voq_buf, self.voq_head, self.voq_len,
                self.tb_buf, self.tb_head, self.tb_len,
                self.fb,
                self.streams, self.on, self.run_end, self.nxt,
                self.wheel_head, self.wheel_next, self.next_seq,
                self.rs_expect, self.rs_win, self.rs_pend, self.rs_held,
                self.max_seq, self.occ_sum, self.occ_max,
                self.cnt, self.acc, self.tr, self.tr_len)
            self.slot = int(t)
            if status == 2:
                break
            if status == 1:
                self._grow()
        return status

    def step(self) -> list[TraceEvent]:
        """Run one slot; returns its trace events when tracing is on."""
        mark = int(self.tr_len[0])
        self._advance(self.slot + 1, self.draining)
        return self.events(mark)

    def advance(self, slots: int) -> None:
        self._advance(self.slot + int(slots), self.draining)

    def drain(self, max_slots: int | None = None) -> bool:
        """Stop the sources and run until the switch is empty.

        Returns True if the switch emptied within ``max_slots``.
        """
        self.draining = True
        if self.live == 0:
            return True
        if max_slots is None:
            max_slots = 100 * (self.n * (self.K + self.B + self.a) + 1) \
                * self.schedule.frame_size
        self._advance(self.slot + int(max_slots), True)
        return self.live == 0

    @property
    def live(self) -> int:
        return int(self.cnt[K_.C_LIVE])

    # -- manual packet injection (hand traces) --------------------------------
    def inject(self, i: int, k: int) -> str:
        """Offer a fresh packet of flow ``(i, k)`` ahead of the current slot.

        It goes through the same admission rule as a source arrival and is
        stamped with the current slot as its birth.  Returns where it went:
        ``"voq"``, ``"tb"`` or ``"drop"``.
        """
        n = self.n
        if not (0 <= i < n and 0 <= k < n):
            raise ConfigError(f"port out of range: ({i}, {k})")
        f = i * n + k
        if self.voq_len[f] < self.K and self.voq_len[f] >= self.voq_buf.shape[1]:
            self._grow(force_voq=True)
        if self.dbvn and self.tb_len[i] < self.B \
                and self.tb_len[i] >= self.tb_buf.shape[1]:
            self._grow(force_tb=True)
        if self.free_top[0] == 0:
            self._alloc_pool(self.pk.shape[0] + 64)
        if self.tr.shape[0]:
            self._grow()
        t = self.slot
        self.free_top[0] -= 1
        p = int(self.free[self.free_top[0]])
        self.cnt[K_.C_LIVE] += 1
        rec = self.pk[p]
        rec[:] = 0
        rec[K_.P_SRC], rec[K_.P_DST] = i, k
        rec[K_.P_SEQ] = self.next_seq[f]
        rec[K_.P_BIRTH] = t
        self.next_seq[f] += 1
        self.cnt[K_.C_ALL_OFFERED] += 1
        if t >= self.warmup:
            self.cnt[K_.C_OFFERED] += 1
            self.cnt[K_.C_ADMISSIONS] += 1
        if self.tr.shape[0]:
            K_.trace(self.tr, self.tr_len, t, K_.EV_ARRIVE, i, k, self.pk, p)
        r = K_.admit(p, i, t, self.K, self.B, self.dbvn, self.warmup, n,
                     self.pk, self.voq_buf, self.voq_head, self.voq_len,
                     self.tb_buf, self.tb_head, self.tb_len, self.rs_expect,
                     self.rs_win, self.rs_pend, self.rs_held, self.cnt,
                     self.tr, self.tr_len)
        if r == K_.DROPPED:
            self.free[self.free_top[0]] = p
            self.free_top[0] += 1
            self.cnt[K_.C_LIVE] -= 1
        return ("voq", "tb", "drop")[r]

    # -- inspection -------------------------------------------------------------
    def voq(self, i: int, j: int) -> list[tuple[int, int, int]]:
        """Contents of ``VOQ[i, j]`` head first as ``(flow_i, flow_k, seq)``."""
        q = i * self.n + j
        w = self.voq_buf.shape[1]
        idx = [(self.voq_head[q] + r) % w for r in range(self.voq_len[q])]
        return [self._desc(self.voq_buf[q, r]) for r in idx]

    def throttle(self, i: int) -> list[tuple[int, int, int]]:
        w = self.tb_buf.shape[1]
        idx = [(self.tb_head[i] + r) % w for r in range(self.tb_len[i])]
        return [self._desc(self.tb_buf[i, r]) for r in idx]

    def feedback(self, j: int) -> list[tuple[int, int, int]]:
        return [self._desc(p) for p in self.fb[j] if p >= 0]

    def _desc(self, p):
        r = self.pk[p]
        return (int(r[K_.P_SRC]), int(r[K_.P_DST]), int(r[K_.P_SEQ]))

    def resident_packets(self) -> np.ndarray:
        """Pool indices of every stored packet (VOQs, throttles, feedback)."""
        parts = []
        for buf, head, length in ((self.voq_buf, self.voq_head, self.voq_len),
                                  (self.tb_buf, self.tb_head, self.tb_len)):
            w = buf.shape[1]
            for r in np.flatnonzero(length):
                parts.append(buf[r, (head[r] + np.arange(length[r])) % w])
        parts.append(self.fb[self.fb >= 0])
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    def events(self, start: int = 0) -> list[TraceEvent]:
        stop = min(int(self.tr_len[0]), self.tr.shape[0])
        return [TraceEvent(int(r[0]), K_.EVENT_NAMES[r[1]], *map(int, r[2:]))
                for r in self.tr[start:stop]]

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for e in self.events():
            w.writerow((e.slot, e.event, e.input, e.output, e.flow_i, e.flow_k,
                        e.seq, e.deflections))
        return buf.getvalue()

    def metrics(self) -> Metrics:
        c, a = self.cnt, self.acc
        measured = max(self.slot - self.warmup, 0)
        res = self.resident_packets()
        in_flight = int((self.pk[res, K_.P_BIRTH] >= self.warmup).sum())
        return Metrics(
            offered=int(c[K_.C_OFFERED]), delivered=int(c[K_.C_DELIVERED]),
            lost=int(c[K_.C_LOST]), in_flight=in_flight,
            admissions=int(c[K_.C_ADMISSIONS]),
            deflection_events=int(c[K_.C_DEFLECTIONS]),
            deflected_packets=int(c[K_.C_DEFLECTED_PKTS]),
            deflected_delivered=int(c[K_.C_DEFL_DELIVERED]),
            direct_deflections=int(c[K_.C_DEFL_DIRECT]),
            hops=int(c[K_.C_HOPS]),
            delay_sum=float(a[K_.A_DELAY]), delay_sq_sum=float(a[K_.A_DELAY_SQ]),
            queue_wait_sum=float(a[K_.A_QWAIT]),
            queue_wait_sq_sum=float(a[K_.A_QWAIT_SQ]),
            deflection_delay_sum=float(a[K_.A_DEFL_DELAY]),
            deflection_delay_sq_sum=float(a[K_.A_DEFL_DELAY_SQ]),
            throttle_wait_sum=float(a[K_.A_TB_WAIT]),
            out_of_seq=int(c[K_.C_OOS]), late_packets=int(c[K_.C_LATE]),
            reseq_occupancy_max=int(c[K_.C_OCC_MAX]),
            reseq_occupancy_mean=(float(a[K_.A_OCC_SUM]) / (measured * self.n)
                                  if measured else 0.0),
            reseq_overflow=int(c[K_.C_RESEQ_OVERFLOW]),
            spare_tokens_used=int(c[K_.C_SPARE_USED]),
            spare_tokens_total=int(c[K_.C_SPARE_TOTAL]),
            slots_measured=measured)

    def conservation(self) -> tuple[int, int, int, int]:
        """``(offered, delivered, lost, in_flight)`` over every packet,
        warmup included."""
        c = self.cnt
        return (int(c[K_.C_ALL_OFFERED]), int(c[K_.C_ALL_DELIVERED]),
                int(c[K_.C_ALL_LOST]), self.resident_packets().size)


def run(config: SwitchConfig, slots: int, drain: bool = False) -> Metrics:
    """Simulate ``slots`` slots and return the post-warmup metrics."""
    slots = int(slots)
    if slots <= config.warmup_slots:
        raise ConfigError(f"slots ({slots}) must exceed warmup "
                          f"({config.warmup_slots})")
    st = SwitchState(config)
    st.advance(slots)
    if drain:
        st.drain()
    return st.metrics()


def measure_resequencing(state: SwitchState) -> ResequencingStats:
    measured = max(state.slot - state.warmup, 0)
    mean = state.occ_sum / measured if measured else np.zeros(state.n)
    m = state.metrics()
    return ResequencingStats(occupancy_max=state.occ_max.copy(),
                             occupancy_mean=mean,
                             out_of_seq_fraction=m.oos_fraction,
                             overflow=m.reseq_overflow)
