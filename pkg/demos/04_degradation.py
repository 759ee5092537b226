"""Latency-driven degradation: the runtime sheds camera streams under lag.

Runs the controller on a scripted latency timeline (probes every 100 ms,
control ticks every 500 ms) so the whole story plays out instantly.
"""

from telecollab.runtime import LatencySample
from telecollab.stack import LocalStack

stack = LocalStack(camera_count=5, high_ms=200.0, low_ms=120.0,
                   control_period_ms=500)
stack.load_default_app(camera_units=5)
core = stack.core

print("5 camera subscriptions live:",
      sum(stack.relay.subscriber_count(f"cam{i}") for i in range(5)))

timeline = []
for t in range(0, 8001, 100):
    if t < 2000:
        rtt = 10.0            # healthy link
    elif t < 3400:
        rtt = 300.0           # congestion hits
    else:
        rtt = 10.0            # link recovers
    timeline.append(("probe", t, rtt))
for t in range(0, 8001, 500):
    timeline.append(("tick", t, None))
timeline.sort(key=lambda e: (e[1], e[0] == "tick"))

last_trace = []
for kind, t, rtt in timeline:
    if kind == "probe":
        core.observe_latency(LatencySample("relay", rtt, t))
    else:
        core.control_tick(now_ms=t)
        trace = core.safe_trace()
        if trace != last_trace:
            module, degree = trace[-1]
            ewma = core.ewma_ms
            live = sum(stack.relay.subscriber_count(f"cam{i}")
                       for i in range(5))
            print(f"  t={t:>5} ms  ewma={ewma:6.1f} ms  SAFE {degree} -> "
                  f"{live} live streams")
            last_trace = list(trace)

entry = core.module_status("camera")
print("final state:", entry.mode, f"{entry.active_units}/5 streams,",
      "signal trace", [d for _, d in core.safe_trace()])
stack.stop()
