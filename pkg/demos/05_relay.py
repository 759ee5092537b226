"""Stream relay: unicast vs multicast fan-out and drop-oldest accounting."""

from telecollab.relay import RelayCore, make_frame

relay = RelayCore(queue_bound=8)
relay.register_source("cam_front", nominal_rate=20.0)

viewer = relay.connect_client("viewer")
relay.subscribe("viewer", "cam_front", "UNICAST")
group = [relay.connect_client(f"wall_{i}") for i in range(3)]
for i in range(3):
    relay.subscribe(f"wall_{i}", "cam_front", "MULTICAST_GROUP",
                    group_id="video_wall")

print("pushing 100 frames; the viewer is stalled, the wall keeps up:")
for seq in range(1, 101):
    relay.push_frame(make_frame("cam_front", seq, ts_ms=seq * 50, size=256))
    for channel in group:
        channel.drain_frames()          # wall members consume immediately

frames = viewer.drain_frames()          # viewer wakes up late
sent, delivered, dropped = viewer.accounting("cam_front")
print(f"  viewer: sent={sent} delivered={delivered} dropped={dropped} "
      f"(delivered + dropped == sent: {delivered + dropped == sent})")
print("  survivors are the freshest frames:",
      [f.frame_seq for f in frames])

wall_counts = [ch.accounting("cam_front") for ch in group]
print("  wall members saw identical full streams:",
      all(c == (100, 100, 0) for c in wall_counts))

print("\nsource discipline:")
try:
    relay.push_frame(make_frame("cam_front", 105, ts_ms=0))
except Exception as exc:
    print("  gap rejected:", exc)
print("  flagged sources:", relay.flagged_sources)
