"""Compiled slot loop of the crossbar simulator.

All switch state lives in plain numpy arrays owned by
:class:`dbvn.sim.SwitchState`; this module only mutates them.  A packet is
a row of the ``pk`` pool (one 64-byte record, fields ``P_*`` below); VOQs,
throttle buffers and feedback lines hold row indices.
"""
import numba
import numpy as np

from .rng import trials_until_success, uniform_pos

NEVER = np.int64(1) << np.int64(62)

# packet record fields
P_SRC = 0
P_DST = 1
P_SEQ = 2
P_BIRTH = 3
P_DEFL = 4
P_ENTER = 5      # slot the packet entered its current VOQ / throttle buffer
P_QWAIT = 6      # accumulated VOQ waiting
P_TBWAIT = 7     # accumulated throttle-buffer waiting
P_FIELDS = 8

# counter slots (int64)
C_OFFERED = 0
C_DELIVERED = 1
C_LOST = 2
C_DEFLECTIONS = 3
C_DEFLECTED_PKTS = 4
C_ADMISSIONS = 5
C_OOS = 6
C_LATE = 7
C_SPARE_TOTAL = 8
C_SPARE_USED = 9
C_DEFL_DIRECT = 10
C_RESEQ_OVERFLOW = 11
C_OCC_MAX = 12
C_DEFL_DELIVERED = 13
C_HOPS = 14
C_ALL_OFFERED = 15
C_ALL_DELIVERED = 16
C_ALL_LOST = 17
C_LIVE = 18
N_COUNTERS = 19

# accumulators (float64)
A_DELAY = 0
A_DELAY_SQ = 1
A_QWAIT = 2
A_QWAIT_SQ = 3
A_DEFL_DELAY = 4
A_DEFL_DELAY_SQ = 5
A_OCC_SUM = 6
A_TB_WAIT = 7
N_ACCUM = 8

# trace event codes
EV_ARRIVE = 0
EV_REENTER = 1
EV_VOQ = 2
EV_TB = 3
EV_DROP = 4
EV_DELIVER = 5
EV_DEFLECT = 6
EVENT_NAMES = ("arrive", "reenter", "voq", "tb", "drop", "deliver", "deflect")

# admission outcomes
TO_VOQ = 0
TO_TB = 1
DROPPED = 2

# reorder-window flags
_HELD = 1
_GONE = 2


@numba.njit(cache=True, _nrt=False)
def next_arrival(st, f, on, run_end, t_from, peak, gp, ga, gb):
    """First slot >= t_from in which flow ``f`` emits a packet.

    ``gp``, ``ga``, ``gb`` are the geometric scales of the arrival,
    on->off and off->on probabilities."""
    if peak <= 0.0:
        return NEVER
    while True:
        if on[f]:
            if t_from < run_end[f]:
                cand = t_from + trials_until_success(st, f, gp) - 1
                if cand < run_end[f]:
                    return cand
            on[f] = False
            run_end[f] = run_end[f] + trials_until_success(st, f, gb)
        else:
            on[f] = True
            start = run_end[f]
            run_end[f] = start + trials_until_success(st, f, ga)
            if t_from < start:
                t_from = start
        if run_end[f] >= NEVER:
            return NEVER


@numba.njit(cache=True, _nrt=False)
def init_sources(st, on, run_end, nxt, wheel_head, wheel_next, peak, gp, ga,
                 gb, pi_on, stationary):
    mask = wheel_head.size - 1
    wheel_head[:] = -1
    for f in range(on.size):
        on[f] = stationary and uniform_pos(st, f) <= pi_on
        run_end[f] = trials_until_success(st, f, ga if on[f] else gb)
        nxt[f] = next_arrival(st, f, on, run_end, 0, peak, gp, ga, gb)
        wheel_next[f] = -1
        if nxt[f] < NEVER:
            b = nxt[f] & mask
            wheel_next[f] = wheel_head[b]
            wheel_head[b] = f


@numba.njit(cache=True, _nrt=False)
def trace(tr, tr_len, t, ev, port_in, port_out, pk, p):
    k = tr_len[0]
    if k < tr.shape[0]:
        tr[k, 0] = t
        tr[k, 1] = ev
        tr[k, 2] = port_in
        tr[k, 3] = port_out
        tr[k, 4] = pk[p, P_SRC]
        tr[k, 5] = pk[p, P_DST]
        tr[k, 6] = pk[p, P_SEQ]
        tr[k, 7] = pk[p, P_DEFL]
    tr_len[0] = k + 1


@numba.njit(cache=True, _nrt=False)
def reseq_close(flow, seq, delivered, out_port, rs_expect, rs_win, rs_pend,
                rs_held, cnt):
    """Record that ``seq`` of ``flow`` was delivered (or lost) and release
    whatever became in order.  Returns True if the packet arrived ahead of
    a still-outstanding lower sequence number."""
    W = rs_win.shape[1]
    e = rs_expect[flow]
    if seq == e:
        e += 1
        while rs_pend[flow] > 0:
            slot = e % W
            flag = rs_win[flow, slot]
            if flag == 0:
                break
            if flag == _HELD:
                rs_held[out_port] -= 1
            rs_win[flow, slot] = 0
            rs_pend[flow] -= 1
            e += 1
        rs_expect[flow] = e
        return False
    if seq > e:
        if seq - e >= W:
            cnt[C_RESEQ_OVERFLOW] += 1
            return True
        rs_win[flow, seq % W] = _HELD if delivered else _GONE
        rs_pend[flow] += 1
        if delivered:
            rs_held[out_port] += 1
        return True
    return False


@numba.njit(cache=True, _nrt=False)
def admit(p, i, t, K, B, dbvn, warmup, n, pk, voq_buf, voq_head, voq_len,
          tb_buf, tb_head, tb_len, rs_expect, rs_win, rs_pend, rs_held, cnt,
          tr, tr_len):
    """Admission of packet ``p`` at input ``i``: VOQ if not full, else the
    throttle buffer (deflection mode, if not full), else drop.  A dropped
    packet is not returned to the pool here."""
    k = pk[p, P_DST]
    q = i * n + k
    if voq_len[q] < K:
        cap = voq_buf.shape[1]
        pos = voq_head[q] + voq_len[q]
        if pos >= cap:
            pos -= cap
        voq_buf[q, pos] = p
        voq_len[q] += 1
        pk[p, P_ENTER] = t
        if tr.shape[0]:
            trace(tr, tr_len, t, EV_VOQ, i, k, pk, p)
        return TO_VOQ
    if dbvn and tb_len[i] < B:
        cap = tb_buf.shape[1]
        pos = tb_head[i] + tb_len[i]
        if pos >= cap:
            pos -= cap
        tb_buf[i, pos] = p
        tb_len[i] += 1
        pk[p, P_ENTER] = t
        if tr.shape[0]:
            trace(tr, tr_len, t, EV_TB, i, k, pk, p)
        return TO_TB
    if pk[p, P_BIRTH] >= warmup:
        cnt[C_LOST] += 1
    cnt[C_ALL_LOST] += 1
    if tr.shape[0]:
        trace(tr, tr_len, t, EV_DROP, i, k, pk, p)
    reseq_close(pk[p, P_SRC] * n + k, pk[p, P_SEQ], False, k, rs_expect,
                rs_win, rs_pend, rs_held, cnt)
    return DROPPED


@numba.njit(cache=True, _nrt=False)
def advance(t_start, t_end, draining,
            n, K, B, a, dbvn, warmup, peak, gp, ga, gb,
            sched, pk, free, free_top,
            voq_buf, voq_head, voq_len,
            tb_buf, tb_head, tb_len,
            fb,
            st, on, run_end, nxt, wheel_head, wheel_next, next_seq,
            rs_expect, rs_win, rs_pend, rs_held, max_seq, occ_sum_out,
            occ_max_out, cnt, acc, tr, tr_len):
    """Run slots ``t_start .. t_end - 1``.

    Returns ``(next_slot, status)``: status 0 when ``t_end`` was reached,
    1 when a buffer is close to its allocated capacity and must be grown
    before continuing, 2 when a drain emptied the switch.
    """
    F = sched.shape[0]
    mask = wheel_head.size - 1
    tracing = tr.shape[0] > 0
    Kcap = voq_buf.shape[1]
    Bcap = tb_buf.shape[1]
    kgrow = Kcap < K
    bgrow = Bcap < B

    for t in range(t_start, t_end):
        measuring = t >= warmup
        grow = False

        # ---- phase 1: deflected packets come back through the feedback link
        if dbvn:
            lane = t % a
            for j in range(n):
                p = fb[j, lane]
                if p < 0:
                    continue
                fb[j, lane] = -1
                if tracing:
                    trace(tr, tr_len, t, EV_REENTER, j, pk[p, P_DST], pk, p)
                if pk[p, P_BIRTH] >= warmup:
                    cnt[C_ADMISSIONS] += 1
                r = admit(p, j, t, K, B, dbvn, warmup, n, pk, voq_buf,
                          voq_head, voq_len, tb_buf, tb_head, tb_len,
                          rs_expect, rs_win, rs_pend, rs_held, cnt, tr,
                          tr_len)
                if r == DROPPED:
                    free[free_top[0]] = p
                    free_top[0] += 1
                    cnt[C_LIVE] -= 1
                elif r == TO_VOQ:
                    if kgrow and voq_len[j * n + pk[p, P_DST]] > Kcap - 2:
                        grow = True
                elif bgrow and tb_len[j] > Bcap - n - 2:
                    grow = True

        # ---- phase 2: fresh arrivals
        if not draining:
            bucket = t & mask
            f = wheel_head[bucket]
            wheel_head[bucket] = -1
            while f >= 0:
                f_next = wheel_next[f]
                if nxt[f] == t:
                    i = f // n
                    free_top[0] -= 1
                    p = free[free_top[0]]
                    cnt[C_LIVE] += 1
                    pk[p, P_SRC] = i
                    pk[p, P_DST] = f - i * n
                    pk[p, P_SEQ] = next_seq[f]
                    next_seq[f] += 1
                    pk[p, P_BIRTH] = t
                    pk[p, P_DEFL] = 0
                    pk[p, P_QWAIT] = 0
                    pk[p, P_TBWAIT] = 0
                    cnt[C_ALL_OFFERED] += 1
                    if measuring:
                        cnt[C_OFFERED] += 1
                        cnt[C_ADMISSIONS] += 1
                    if tracing:
                        trace(tr, tr_len, t, EV_ARRIVE, i, f - i * n, pk, p)
                    r = admit(p, i, t, K, B, dbvn, warmup, n, pk, voq_buf,
                              voq_head, voq_len, tb_buf, tb_head, tb_len,
                              rs_expect, rs_win, rs_pend, rs_held, cnt, tr,
                              tr_len)
                    if r == DROPPED:
                        free[free_top[0]] = p
                        free_top[0] += 1
                        cnt[C_LIVE] -= 1
                    elif r == TO_VOQ:
                        if kgrow and voq_len[f] > Kcap - 2:
                            grow = True
                    elif bgrow and tb_len[i] > Bcap - n - 2:
                        grow = True
                    nxt[f] = next_arrival(st, f, on, run_end, t + 1, peak,
                                          gp, ga, gb)
                if nxt[f] < NEVER:
                    b = nxt[f] & mask
                    wheel_next[f] = wheel_head[b]
                    wheel_head[b] = f
                f = f_next

        # ---- phase 3: crossbar service and deflection
        perm = sched[t % F]
        for i in range(n):
            j = perm[i]
            q = i * n + j
            deliver = -1
            if voq_len[q] > 0:
                p = voq_buf[q, voq_head[q]]
                voq_head[q] += 1
                if voq_head[q] == Kcap:
                    voq_head[q] = 0
                voq_len[q] -= 1
                pk[p, P_QWAIT] += t - pk[p, P_ENTER]
                deliver = p
            else:
                if measuring:
                    cnt[C_SPARE_TOTAL] += 1
                if dbvn and tb_len[i] > 0:
                    p = tb_buf[i, tb_head[i]]
                    tb_head[i] += 1
                    if tb_head[i] == Bcap:
                        tb_head[i] = 0
                    tb_len[i] -= 1
                    pk[p, P_TBWAIT] += t - pk[p, P_ENTER]
                    mp = pk[p, P_BIRTH] >= warmup
                    if mp:
                        cnt[C_DEFLECTIONS] += 1
                        if pk[p, P_DEFL] == 0:
                            cnt[C_DEFLECTED_PKTS] += 1
                    if measuring:
                        cnt[C_SPARE_USED] += 1
                    pk[p, P_DEFL] += 1
                    if tracing:
                        trace(tr, tr_len, t, EV_DEFLECT, i, j, pk, p)
                    if pk[p, P_DST] == j:
                        if mp:
                            cnt[C_DEFL_DIRECT] += 1
                        deliver = p
                    else:
                        fb[j, t % a] = p
            if deliver >= 0:
                p = deliver
                k = pk[p, P_DST]
                flow = pk[p, P_SRC] * n + k
                s = pk[p, P_SEQ]
                d = pk[p, P_DEFL]
                early = reseq_close(flow, s, True, k, rs_expect, rs_win,
                                    rs_pend, rs_held, cnt)
                late = s < max_seq[flow]
                if not late:
                    max_seq[flow] = s
                cnt[C_ALL_DELIVERED] += 1
                if pk[p, P_BIRTH] >= warmup:
                    cnt[C_DELIVERED] += 1
                    delay = float(t - pk[p, P_BIRTH])
                    qw = float(pk[p, P_QWAIT])
                    acc[A_DELAY] += delay
                    acc[A_DELAY_SQ] += delay * delay
                    acc[A_QWAIT] += qw
                    acc[A_QWAIT_SQ] += qw * qw
                    tw = float(pk[p, P_TBWAIT])
                    # what is left is the cross-switch time, a per hop
                    dd = delay - qw - tw
                    acc[A_DEFL_DELAY] += dd
                    acc[A_DEFL_DELAY_SQ] += dd * dd
                    acc[A_TB_WAIT] += tw
                    cnt[C_HOPS] += d
                    if d > 0:
                        cnt[C_DEFL_DELIVERED] += 1
                        if early or late:
                            cnt[C_OOS] += 1
                    if late:
                        cnt[C_LATE] += 1
                if tracing:
                    trace(tr, tr_len, t, EV_DELIVER, i, j, pk, p)
                free[free_top[0]] = p
                free_top[0] += 1
                cnt[C_LIVE] -= 1

        # ---- phase 4: reorder-buffer occupancy
        if measuring:
            tot = 0
            for k in range(n):
                h = rs_held[k]
                tot += h
                occ_sum_out[k] += h
                if h > occ_max_out[k]:
                    occ_max_out[k] = h
                    if h > cnt[C_OCC_MAX]:
                        cnt[C_OCC_MAX] = h
            acc[A_OCC_SUM] += tot

        if draining and cnt[C_LIVE] == 0:
            return t + 1, 2
        if tracing and 2 * tr_len[0] > tr.shape[0]:
            grow = True
        if grow:
            return t + 1, 1
    return t_end, 0
