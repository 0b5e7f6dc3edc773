"""Five slots of a 2-port switch, printed event by event.

VOQ (0,1) holds one packet and a second packet of the same flow waits in
the throttle buffer.  Whenever the schedule connects input 0 to output 0
while VOQ (0,0) is empty, the waiting packet is deflected through that
spare token, comes back to input 0 after one slot and tries again.

    python demos/hand_trace.py
"""
import numpy as np

from dbvn.schedule import FrameSchedule
from dbvn.sim import OnOffSource, SwitchConfig, SwitchState

cfg = SwitchConfig(n=2, voq_size=1, throttle_size=2,
                   source=OnOffSource(0.0, 0.5, 0.5),      # no own traffic
                   schedule=FrameSchedule(np.array([[0, 1], [1, 0]])),
                   warmup=0)
st = SwitchState(cfg, trace=True)
print("inject:", st.inject(0, 1), st.inject(0, 1))
for _ in range(5):
    for e in st.step():
        print(f"slot {e.slot}: {e.event:8s} in={e.input} out={e.output} "
              f"flow=({e.flow_i},{e.flow_k}) seq={e.seq} hops={e.deflections}")
m = st.metrics()
print(f"\ndelivered {m.delivered}, delay sum {m.delay_sum:g} = VOQ wait "
      f"{m.queue_wait_sum:g} + throttle wait {m.throttle_wait_sum:g} + "
      f"cross-switch {m.deflection_delay_sum:g}")
