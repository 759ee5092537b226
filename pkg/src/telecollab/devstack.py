"""Developer stack launcher: everything the operator console needs, one
process.

Assembles the in-process application (session, robot, relay, runtime with the
camera/teleop modules), serves it on loopback sockets, runs the websocket
bridge, and optionally animates the world: a background mover jogging its
phantom and a scripted latency episode that pushes the controller through a
SAFE degradation and recovery.

    python -m telecollab.devstack --ws-port 7865 --mover --degrade-at 2.0

Prints one READY line (JSON) once every port is live; on SIGTERM/SIGINT it
prints an AUDIT line with the robot's executed-command accounting.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import math
import signal
import sys
import threading
import time

from .netserve import RelayServer, SessionServer
from .robot import RobotTicker
from .runtime import LatencySample
from .scenario import ScriptedClient
from .stack import LocalStack


def _mover_loop(stack: LocalStack, stop: threading.Event) -> None:
    mover = ScriptedClient(stack, "mover", "VR")
    mover.join()
    i = 0
    while not stop.is_set():
        i += 1
        mover.update([0.4 * math.sin(i * 0.05), -0.3, 0.35,
                      0.0, 0.2 * math.cos(i * 0.05), 0.0])
        time.sleep(1.0 / 30.0)


def _degrade_loop(stack: LocalStack, at_s: float,
                  stop: threading.Event) -> None:
    """Scripted latency episode: healthy, congested (SAFE 4, SAFE 3), then
    recovered (back to 4, 5).  Uses the controller's logical clock; phase
    lengths are tuned so the signal trace is exactly 4, 3, 4, 5."""
    if stop.wait(at_s):
        return
    t = 0
    for phase_rtt, phase_ms in ((10.0, 600), (300.0, 1300), (10.0, 2600)):
        phase_end = t + phase_ms
        while t < phase_end and not stop.is_set():
            stack.core.observe_latency(LatencySample("probe", phase_rtt, t))
            if t % 500 == 0:
                stack.core.control_tick(now_ms=t)
            t += 100
            time.sleep(0.05)
    stack.core.control_tick(now_ms=t)


def _state_publisher(stack: LocalStack, stop: threading.Event) -> None:
    """Stream the real robot's state to every client for the live overlay."""
    while not stop.is_set():
        stack.session.on_robot_event(stack.sim.state_body())
        time.sleep(0.05)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="telecollab-devstack")
    parser.add_argument("--ws-port", type=int, default=7865)
    parser.add_argument("--cameras", type=int, default=5)
    parser.add_argument("--mover", action="store_true",
                        help="animate a second operator")
    parser.add_argument("--degrade-at", type=float, default=None,
                        metavar="SECONDS",
                        help="run the scripted congestion episode")
    args = parser.parse_args(argv)

    stack = LocalStack(camera_count=args.cameras)
    stack.load_default_app()
    # The degradation episode drives the controller on its logical clock, so
    # no wall-clock control loop here; the robot still ticks in real time.
    ticker = RobotTicker(stack.sim).start()
    for source in stack.sources:
        source.start()
    session_server = SessionServer(stack.session,
                                   trajectory_handler=stack.execute_trajectory)
    session_server.start()
    relay_server = RelayServer(stack.relay).start()

    stop = threading.Event()
    threading.Thread(target=_state_publisher, args=(stack, stop),
                     daemon=True).start()
    if args.mover:
        threading.Thread(target=_mover_loop, args=(stack, stop),
                         daemon=True).start()
    if args.degrade_at is not None:
        threading.Thread(target=_degrade_loop,
                         args=(stack, args.degrade_at, stop),
                         daemon=True).start()

    def audit_and_exit(*_):
        stop.set()
        executed = len(stack.sim.executed_log)
        receipts = (len(stack.session.validation_receipts)
                    + len(stack.trajectory_receipts()))
        print(json.dumps({"audit": {"executed": executed,
                                    "receipts": receipts}}), flush=True)
        ticker.stop()
        stack.stop()
        sys.exit(0)

    signal.signal(signal.SIGTERM, audit_and_exit)
    signal.signal(signal.SIGINT, audit_and_exit)

    async def run_bridge():
        from .bridge import bridge_forever
        started = asyncio.Event()
        task = asyncio.create_task(bridge_forever(
            args.ws_port, session_server.address[0],
            session_server.address[1],
            relay=relay_server.address, started=started))
        await started.wait()
        print(json.dumps({
            "ready": {
                "ws": f"ws://127.0.0.1:{args.ws_port}",
                "session": list(session_server.address),
                "relay": list(relay_server.address),
            }}), flush=True)
        await task

    asyncio.run(run_bridge())
    return 0


if __name__ == "__main__":
    sys.exit(main())
