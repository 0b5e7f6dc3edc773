"""Fluid analysis of one virtual circuit of a 64-port switch.

Prints the critical VOQ size, the equilibrium delay moments, the BvN buffer
requirement and a small table of ideal-deflection loss and deflection
probabilities around the critical size.

    python demos/analytic_tour.py
"""
from dbvn import fluid as F
from dbvn.errors import UnstableRegime

pub = F.published_params()
print("rounded reference on-off parameters")
print(f"  critical VOQ size        {F.critical_voq_size(pub):9.4f} packets")
m, s = F.equilibrium_queue_delay(pub)
print(f"  equilibrium E[Dq]        {m:9.2f} slots   E[Dq^2] {s:.4e}")
print(f"  BvN K for 1e-5 loss      {F.bvn_required_k(pub, 1e-5):9.2f} packets")

p = F.FluidParams.from_load(64, 0.8, 0.98, 2.0)
kdot = F.critical_voq_size(p)
print(f"\nconsistent set (mean = peak * pi_on exactly), Kdot = {kdot:.3f}")
print(f"{'K':>6} {'regime':>12} {'P_l':>10} {'P_d':>9} {'E[D]':>9} {'BvN P_l':>9}")
for K in (20, 40, 60, kdot, 100, 113, 150, 200):
    q = p.replace(K=float(K))
    ideal = F.ideal_deflection(q)
    try:
        # delays use the solved deflected input rate, not lambda_d = 0
        d = F.end_to_end_delay(ideal.params, ideal.regime)[0]
    except UnstableRegime:
        d = float("nan")
    print(f"{K:6.1f} {ideal.regime:>12} {ideal.p_loss:10.3e} "
          f"{ideal.p_deflect:9.5f} {d:9.1f} {F.bvn_loss(q):9.3e}")
