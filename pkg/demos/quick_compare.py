"""Simulate a 16-port switch at 98% load and check it against the fluid
bounds.  Takes a few seconds.

    python demos/quick_compare.py
"""
import logging

from dbvn import harness as H

logging.basicConfig(level=logging.INFO, format="%(message)s")

spec = H.quick_profile(n=16, points=(10, 19, 30, 40), slots_per_point=100_000,
                       seeds_per_point=2, warmup=5000)
res = H.run_sweep(spec)
for s in H.pooled_points(res):
    a = s.analytics
    print(f"K={s.value:4g}  sim P_l={s.p_loss:.3e} (ideal {a.p_loss:.3e}, "
          f"BvN {a.bvn_pl:.3e})  sim P_d={s.p_deflect:.4f} "
          f"(ideal {a.p_deflect:.4f})  out-of-seq={s.oos:.4f}")
print()
print("\n".join(H.compare_report(res).lines()))
