import dataclasses
import math

import numpy as np
import pytest

from dbvn import fluid, harness as H
from dbvn.errors import ConfigError, NotBracketed, ValidationError
from dbvn.sim import BVN, DBVN, EMBEDDED, LITERAL

BASE = """
[switch]
n = 64
voq_size = 75
throttle_pct = 10
mode = dbvn

[traffic]
peak = 0.8
load = 0.98
b = 2

[run]
seed = 7
seeds = 2

[sweep]
axis = K
points = 40, 75, 113, 150
loss_target = 1e-5
"""


def test_parse_config_basics():
    s = H.parse_config(BASE)
    assert s.switch.n == 64 and s.switch.mode == DBVN
    assert s.switch.throttle == 480
    assert s.points == (40.0, 75.0, 113.0, 150.0)
    assert s.seeds == (7, 8)
    assert not s.simulated
    assert s.source_map == EMBEDDED
    assert s.fluid.mean == pytest.approx(0.98 / 64, rel=1e-15)
    assert s.fluid.b == pytest.approx(2.0)
    assert s.fluid.C == 1 / 64


def test_parse_points_forms():
    assert H.parse_points("1, 2 3") == (1.0, 2.0, 3.0)
    assert H.parse_points("50:150:25") == (50.0, 75.0, 100.0, 125.0, 150.0)
    assert H.parse_points("0.1:0.3:0.1") == (0.1, 0.2, 0.3)
    with pytest.raises(ConfigError):
        H.parse_points("1:2")
    with pytest.raises(ConfigError):
        H.parse_points("abc")


@pytest.mark.parametrize("edit,msg", [
    (("[sweep]", "[sweeps]"), "unknown section"),
    (("b = 2", "b = 2\nburst = 3"), "unknown key"),
    (("n = 64", "n = 64.5"), "not a valid int"),
    (("n = 64", "n = 1"), "n must be"),
    (("points = 40, 75, 113, 150", "points = 75, 40"), "increasing"),
    (("axis = K", "axis = time"), "axis"),
    (("loss_target = 1e-5", "loss_target = 2"), "loss_target"),
    (("mode = dbvn", "mode = turbo"), "mode"),
    (("b = 2", "b = 2\nalpha = 0.3"), "alpha"),
    (("load = 0.98", "load = 0.98\nmean = 0.01"), "not both"),
    (("load = 0.98", "load = 1.2"), None),
    (("peak = 0.8", "peak = 0.001"), None),
    (("[run]", "[run]\nslots = 100\nwarmup = 0\n"
      "[sweep]\npoints = 40.5\n[x]"), None),
])
def test_parse_config_errors(edit, msg):
    with pytest.raises(ConfigError, match=msg):
        H.parse_config(BASE.replace(*edit))


def test_config_with_rates_and_mean_override():
    text = """
[switch]
n = 64
voq_size = 75
[traffic]
peak = 0.8
alpha = 0.49
beta = 0.0096
mean = 0.0153125
source_map = literal
"""
    s = H.parse_config(text)
    assert s.fluid.alpha == 0.49 and s.fluid.mean == 0.0153125
    assert s.switch.source.alpha == 0.49          # literal mapping
    assert s.switch.throttle == 0                 # no throttle configured
    assert H.parse_config(text.replace("literal", "embedded")) \
        .switch.source.alpha < 0.49


def test_spec_to_ini_round_trip():
    s = H.parse_config(BASE).replace(slots_per_point=5000, k_max=999)
    again = H.parse_config(H.spec_to_ini(s))
    assert again == s
    b = H.quick_profile(axis="burstiness", points=(2, 4), kdot_multiple=1.5,
                        mode=BVN, seed=3, warmup=10, source_map=LITERAL)
    assert H.parse_config(H.spec_to_ini(b)) == b


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        H.load_config(tmp_path / "nope.ini")


def test_spec_validation():
    s = H.quick_profile()
    with pytest.raises(ConfigError):
        s.replace(points=())
    with pytest.raises(ConfigError):
        s.replace(points=(3, 3))
    with pytest.raises(ConfigError):
        s.replace(seeds_per_point=0)
    with pytest.raises(ConfigError):
        s.replace(source_map="odd")
    with pytest.raises(ConfigError):
        s.replace(kdot_multiple=1.0)                 # K axis
    with pytest.raises(ConfigError):
        s.replace(points=(10.5,), slots_per_point=100)
    with pytest.raises(ConfigError, match="1/n"):
        s.replace(fluid=s.fluid.replace(C=0.5))


# -- analytic sweeps ----------------------------------------------------------------

def test_analytic_k_sweep_loss_vanishes_past_kdot():
    s = H.parse_config(BASE).replace(points=H.parse_points("10:200:10"))
    res = H.run_sweep(s)
    assert len(res.rows) == len(s.points)
    assert all(r.seed is None and r.metrics is None for r in res.rows)
    kdot = res.rows[0].analytics.kdot
    assert kdot == pytest.approx(75.299375, rel=1e-3)
    for r in res.rows:
        a = r.analytics
        assert (a.p_loss > 0) == (r.value < kdot)
        assert a.p_loss <= a.bvn_pl
        assert math.isnan(a.delay_mean) == (a.regime == "unstable")
    pl = [r.analytics.p_loss for r in res.rows]
    pd = [r.analytics.p_deflect for r in res.rows]
    assert all(b <= a for a, b in zip(pl, pl[1:]))
    assert all(b <= a for a, b in zip(pd, pd[1:]))


def test_burstiness_sweep_kdot_is_linear_in_b():
    s = H.parse_config(BASE).replace(axis="burstiness",
                                     points=(2, 4, 6, 8, 10))
    res = H.run_sweep(s)
    b = np.array(s.points)
    kd = np.array([r.analytics.kdot for r in res.rows])
    slope, icpt = np.polyfit(b, kd, 1)
    r2 = 1 - ((kd - (slope * b + icpt)) ** 2).sum() / ((kd - kd.mean()) ** 2).sum()
    assert r2 > 1 - 1e-12
    assert icpt == pytest.approx(0.0, abs=1e-9)
    # burstiness is the mean on+off period over their product
    for r, v in zip(res.rows, b):
        assert r.params.b == pytest.approx(v, rel=1e-12)
        assert r.params.mean == pytest.approx(s.fluid.mean, rel=1e-12)


def test_kdot_multiple_sets_voq_size():
    s = H.parse_config(BASE).replace(axis="burstiness", points=(2, 4),
                                     kdot_multiple=1.0)
    k = [s.point(v)[1] for v in s.points]
    assert k == [75, 151]


def test_load_axis_error_is_annotated():
    s = H.parse_config(BASE).replace(axis="load", points=(0.9, 1.1))
    with pytest.raises(ValidationError, match=r"load=1\.1"):
        H.run_sweep(s)


def test_analytic_compare_is_not_applicable():
    rep = H.compare_report(H.run_sweep(H.parse_config(BASE)))
    assert not rep.applicable and rep.passed
    assert rep.lines() == ["not applicable: no simulation columns"]


# -- simulated sweeps -----------------------------------------------------------------

def _small(**kw):
    kw.setdefault("points", (10, 19))
    return H.quick_profile(n=8, slots_per_point=30_000, seeds_per_point=2,
                           warmup=0, **kw)


def test_csv_is_reproducible():
    s = _small()
    a = H.run_sweep(s).to_csv()
    assert a == H.run_sweep(s).to_csv()
    lines = a.splitlines()
    assert lines[0].startswith("# dbvn ")
    assert "# seeds = 0 1" in lines
    rows = H.read_csv_rows(a)
    assert len(rows) == 4
    assert tuple(rows[0]) == H.CSV_COLUMNS
    assert [r["seed"] for r in rows] == ["0", "1", "0", "1"]
    # the echoed config reproduces the sweep
    ini = "\n".join(ln[2:] if ln.startswith("# ") else ""
                    for ln in lines if ln.startswith("#"))
    assert H.parse_config(ini.split("\n", 2)[2]) == s


def test_compare_passes_and_fails():
    res = H.run_sweep(_small(mode=BVN, points=(40, 60)))
    rep = H.compare_report(res)
    assert rep.applicable
    assert {c.name for c in rep.checks} == {"loss>=ideal", "loss<=bvn"}
    assert rep.passed, rep.lines()
    # claim the BvN switch should have lost nothing at K=40
    bad_rows = tuple(dataclasses.replace(
        r, analytics=dataclasses.replace(r.analytics, bvn_pl=0.0))
        if r.value == 40 else r for r in res.rows)
    rep = H.compare_report(dataclasses.replace(res, rows=bad_rows))
    assert not rep.passed
    assert [(c.value, c.name) for c in rep.failures()] == [(40.0, "loss<=bvn")]
    assert any(ln.startswith("FAIL K=40 loss<=bvn") for ln in rep.lines())


def test_dbvn_compare_lists_all_checks():
    res = H.run_sweep(_small(points=(19, 70)))     # Kdot is about 64.8
    rep = H.compare_report(res, pd_rel_tol=10.0)
    names = [c.name for c in rep.checks]
    assert names.count("pd>=ideal") == 2 and names.count("oos<=pd") == 2
    assert [c.value for c in rep.checks if c.name == "pd~ideal"] == [70.0]


def test_point_stats_pooling():
    res = H.run_sweep(_small(points=(10,)))
    rows = res.point_rows(10.0)
    ps = H.point_stats(rows)
    ms = [r.metrics for r in rows]
    assert ps.p_loss == sum(m.lost for m in ms) / sum(m.offered for m in ms)
    assert ps.p_deflect == (sum(m.deflection_events for m in ms)
                            / sum(m.admissions for m in ms))
    assert ps.delay_mean == pytest.approx(np.mean([m.delay_mean for m in ms]))
    sem = np.std([m.delay_mean for m in ms], ddof=1) / math.sqrt(2)
    assert ps.eps_delay == pytest.approx(3 * sem)
    assert H.point_stats(rows[:1]).eps_delay == 0.0


# -- critical K search ---------------------------------------------------------------

@pytest.mark.parametrize("threshold", [1, 2, 3, 37, 64, 65, 1000])
@pytest.mark.parametrize("start", [1, 10, 64, 500])
def test_critical_k_finds_threshold(threshold, start):
    probe = lambda k: 1e-3 if k < threshold else 1e-6   # noqa: E731
    res = H.find_critical_k(_small(), probe=probe, start=start)
    assert res.k == threshold
    assert res.monotone
    assert res.probes[threshold] <= 1e-5
    assert threshold == 1 or res.probes[threshold - 1] > 1e-5


def test_critical_k_not_bracketed():
    with pytest.raises(NotBracketed):
        H.find_critical_k(_small(), probe=lambda k: 0.1, k_max=100)


def test_critical_k_flags_non_monotone_probes():
    # probes 8, 4, 6, 5; the passing losses rise with K
    wobbly = {8: 9e-6, 4: 1e-3, 6: 2e-6, 5: 1e-6}
    res = H.find_critical_k(_small(), start=8, probe=wobbly.get)
    assert res.k == 5
    assert sorted(res.probes) == [4, 5, 6, 8]
    assert not res.monotone


def test_critical_k_validation():
    with pytest.raises(ValidationError):
        H.find_critical_k(_small(), loss_target=0.0, probe=lambda k: 0)
    with pytest.raises(ConfigError):
        H.find_critical_k(_small().replace(slots_per_point=None))


def test_critical_k_by_simulation_small():
    s = H.quick_profile(n=8, mode=BVN, slots_per_point=20_000,
                        seeds_per_point=1, warmup=0, loss_target=1e-2)
    res = H.find_critical_k(s)
    assert res.probes[res.k] <= 1e-2
    assert res.k == 1 or res.probes[res.k - 1] > 1e-2
    hint = math.ceil(fluid.bvn_required_k(s.fluid, 1e-2))
    assert hint in res.probes
