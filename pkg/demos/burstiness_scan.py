"""How the critical VOQ size and the ideal delays move with burstiness at a
fixed peak-to-average ratio (analytics only, instant).

    python demos/burstiness_scan.py
"""
from dbvn import fluid as F

base = F.FluidParams.from_load(64, 0.8, 0.98, 2.0)
print(f"{'b':>4} {'Kdot':>8} {'E[Dq] at Kdot':>14} {'defl. delay':>12}")
for b in (2, 4, 6, 8, 10):
    p = F.scale_burstiness(base, b)
    kdot = F.critical_voq_size(p)
    m, _ = F.equilibrium_queue_delay(p)
    dd = F.deflection_delay_terms(1 - p.rho)[0]
    print(f"{b:4d} {kdot:8.2f} {m:14.1f} {dd:12.6f}")
