"""Console entry points for every process in the stack."""

from __future__ import annotations

import argparse
import json
import sys
import time

from .kinematics import robot_params_from_xml, default_robot_params
from .prototyper import (ModuleRegistry, compose_app, descriptor_to_xml,
                         parse_app, parse_descriptor, validate_app)
from .relay import FrameSource, RelayCore
from .robot import RobotSim, RobotTicker
from .session import SessionCore, scene_from_xml
from .storage import FileStore, StoreError
from .transport import parse_hostport


def session_main(argv=None) -> int:
    """teleop-session: the multi-user shared-world server."""
    parser = argparse.ArgumentParser(prog="teleop-session")
    parser.add_argument("--listen", default="127.0.0.1:7750",
                        metavar="HOST:PORT")
    parser.add_argument("--store", metavar="PATH",
                        help="world persistence file")
    parser.add_argument("--scene", metavar="PATH",
                        help="initial scene XML")
    parser.add_argument("--persist-every", type=float, default=5.0,
                        metavar="SECONDS")
    args = parser.parse_args(argv)
    from .netserve import SessionServer
    scene = None
    if args.scene:
        with open(args.scene, encoding="utf-8") as fh:
            scene = scene_from_xml(fh.read())
    store = FileStore(args.store) if args.store else None
    try:
        core = SessionCore(scene=scene, store=store)
    except StoreError as exc:
        print(f"refusing to start: {exc}", file=sys.stderr)
        return 2
    host, port = parse_hostport(args.listen)
    server = SessionServer(core, host, port).start()
    print(f"session server listening on {server.address[0]}:"
          f"{server.address[1]}")
    try:
        while True:
            time.sleep(args.persist_every)
            if store is not None:
                core.persist_world()
    except KeyboardInterrupt:
        if store is not None:
            core.persist_world()
        server.stop()
    return 0


def robot_main(argv=None) -> int:
    """teleop-robot: simulated robot server attached to a session server."""
    parser = argparse.ArgumentParser(prog="teleop-robot")
    parser.add_argument("--connect", required=True, metavar="HOST:PORT")
    parser.add_argument("--robot", metavar="PATH", help="robot config XML")
    args = parser.parse_args(argv)
    from .netserve import RobotServer
    from .transport import connect_endpoint
    if args.robot:
        with open(args.robot, encoding="utf-8") as fh:
            params = robot_params_from_xml(fh.read())
    else:
        params = default_robot_params()
    sim = RobotSim(params)
    host, port = parse_hostport(args.connect)
    endpoint = connect_endpoint(host, port, name="robot")
    server = RobotServer(sim, endpoint)
    server.hello()
    server.start_state_stream()
    ticker = RobotTicker(sim).start()
    print(f"robot server connected to {args.connect}")
    try:
        server.run()
    except KeyboardInterrupt:
        pass
    ticker.stop()
    return 0


def relay_main(argv=None) -> int:
    """teleop-relay: stream fan-out server with synthetic camera sources."""
    parser = argparse.ArgumentParser(prog="teleop-relay")
    parser.add_argument("--listen", default="127.0.0.1:7751",
                        metavar="HOST:PORT")
    parser.add_argument("--max-frame-bytes", type=int, default=256 * 1024)
    parser.add_argument("--queue-bound", type=int, default=32)
    parser.add_argument("--source", action="append", default=[],
                        metavar="ID:RATE_HZ",
                        help="register a synthetic source (repeatable)")
    args = parser.parse_args(argv)
    from .netserve import RelayServer
    core = RelayCore(queue_bound=args.queue_bound,
                     max_frame_bytes=args.max_frame_bytes)
    sources = []
    for spec in args.source:
        source_id, _, rate = spec.partition(":")
        sources.append(FrameSource(core, source_id,
                                   rate_hz=float(rate or "15")))
    host, port = parse_hostport(args.listen)
    server = RelayServer(core, host, port).start()
    print(f"relay listening on {server.address[0]}:{server.address[1]} "
          f"with {len(sources)} sources")
    for source in sources:
        source.start()
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        for source in sources:
            source.stop()
        server.stop()
    return 0


def core_main(argv=None) -> int:
    """teleop-core: run an application file through the module runtime."""
    parser = argparse.ArgumentParser(prog="teleop-core")
    parser.add_argument("--app", required=True, metavar="PATH",
                        help="application XML from the prototyper")
    parser.add_argument("--signal-log", metavar="PATH")
    parser.add_argument("--ticks", type=int, default=0,
                        help="control ticks to run after loading")
    args = parser.parse_args(argv)
    from .runtime import ModuleCore, UnitModule
    with open(args.app, encoding="utf-8") as fh:
        spec = parse_app(fh.read())
    violations = validate_app(spec)
    if violations:
        for v in violations:
            print(f"invalid application: {v}", file=sys.stderr)
        return 2
    core = ModuleCore(signal_log_path=args.signal_log)
    for m in spec.modules:
        report = core.load_module(m.descriptor, m.variant,
                                  requested_units=m.units,
                                  impl=UnitModule(m.descriptor.name))
        print(f"loaded {m.descriptor.name} [{m.variant}] -> {report.status} "
              f"({report.active_units} {m.descriptor.unit_name}s)")
    core.set_priority(list(spec.priority))
    for _ in range(args.ticks):
        core.control_tick()
        time.sleep(core.control_period_ms / 1000.0)
    return 0


def proto_main(argv=None) -> int:
    """proto: register, list, compose and validate application modules."""
    parser = argparse.ArgumentParser(prog="proto")
    parser.add_argument("--registry", default="registry.store", metavar="PATH")
    sub = parser.add_subparsers(dest="command", required=True)
    p_register = sub.add_parser("register")
    p_register.add_argument("descriptor", metavar="DESCRIPTOR_XML")
    sub.add_parser("list")
    p_compose = sub.add_parser("compose")
    p_compose.add_argument("--platform", default="WEB",
                           choices=("WEB", "VR", "MOBILE"))
    p_compose.add_argument("--select", action="append", required=True,
                           metavar="NAME:VARIANT[:UNITS]")
    p_compose.add_argument("--option", action="append", default=[],
                           metavar="KEY=VALUE")
    p_compose.add_argument("--name", default="app")
    p_compose.add_argument("--out", metavar="PATH")
    p_validate = sub.add_parser("validate")
    p_validate.add_argument("app", metavar="APP_XML")
    args = parser.parse_args(argv)

    registry = ModuleRegistry(FileStore(args.registry))
    if args.command == "register":
        with open(args.descriptor, encoding="utf-8") as fh:
            desc = parse_descriptor(fh.read())
        registry.register(desc)
        print(f"registered {desc.name} {desc.version}")
        return 0
    if args.command == "list":
        for desc in registry.list_modules():
            print(f"{desc.name} {desc.version} [{','.join(desc.variants)}] "
                  f"{'degradable' if desc.degradable else 'fixed'} "
                  f"max_units={desc.max_units}")
        return 0
    if args.command == "compose":
        selection = []
        for item in args.select:
            parts = item.split(":")
            if len(parts) == 2:
                selection.append((parts[0], parts[1], None))
            elif len(parts) == 3:
                selection.append((parts[0], parts[1], int(parts[2])))
            else:
                parser.error(f"bad --select {item!r}")
        options = []
        for item in args.option:
            key, _, value = item.partition("=")
            options.append((key, value))
        text = compose_app(registry, selection, options=options,
                           platform=args.platform, app_name=args.name)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
            print(f"wrote {args.out}")
        else:
            sys.stdout.write(text)
        return 0
    if args.command == "validate":
        with open(args.app, encoding="utf-8") as fh:
            spec = parse_app(fh.read())
        violations = validate_app(spec)
        for v in violations:
            print(f"violation: {v}")
        print("valid" if not violations else f"{len(violations)} violations")
        return 0 if not violations else 1
    return 2


def run_main(argv=None) -> int:
    """teleop-run: execute a scenario file and report assertion outcomes."""
    parser = argparse.ArgumentParser(prog="teleop-run")
    parser.add_argument("scenario", metavar="SCENARIO_XML")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--spawn-local", action="store_true",
                        help="serve the stack on loopback sockets and drive "
                             "clients through them")
    parser.add_argument("--report", metavar="OUT_JSONL")
    args = parser.parse_args(argv)
    from . import scenario as scn
    if args.spawn_local:
        report, passed = _run_spawn_local(args)
    else:
        report, passed = scn.run_scenario(args.scenario, seed=args.seed,
                                          report_path=args.report)
    for record in report:
        mark = "PASS" if record["passed"] else "FAIL"
        print(f"[{mark}] {record['assertion']}: {record['detail']}")
    return 0 if passed else 1


def _run_spawn_local(args) -> tuple[list[dict], bool]:
    from . import scenario as scn
    from .netserve import SessionServer
    with open(args.scenario, encoding="utf-8") as fh:
        sc = scn.parse_scenario(fh.read())
    if args.seed is not None:
        sc.seed = args.seed
    runner = scn.ScenarioRunner(sc)
    server = SessionServer(runner.stack.session).start()
    host, port = server.address

    def run_wire_client(script, seed):
        import random
        rng = random.Random(seed)
        client = scn.WireClient(host, port, script.user_id, script.platform)
        runner.clients[script.user_id] = client
        try:
            for action in script.actions:
                runner._apply_action(client, action, rng)
        except Exception as exc:
            runner.errors.append(f"{script.user_id}: {exc}")

    import threading
    threads = [threading.Thread(target=run_wire_client,
                                args=(script, sc.seed + i), daemon=True)
               for i, script in enumerate(sc.clients)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=120)
    runner.stack.quiesce_robot()
    for client in runner.clients.values():
        if client.connected:
            client.wait_settled()
    report = []
    for spec in sc.assertions:
        detail = runner._evaluate(spec)
        report.append({"assertion": spec["kind"], "passed": detail == "",
                       "detail": detail or "ok"})
    if runner.errors:
        report.append({"assertion": "script_errors", "passed": False,
                       "detail": "; ".join(runner.errors)})
    server.stop()
    runner.stack.stop()
    passed = all(r["passed"] for r in report)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            for record in report:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return report, passed


def bridge_main(argv=None) -> int:
    """teleop-bridge: websocket <-> framed-socket bridge for the console."""
    parser = argparse.ArgumentParser(prog="teleop-bridge")
    parser.add_argument("--listen-ws", type=int, required=True, metavar="PORT")
    parser.add_argument("--upstream", required=True, metavar="HOST:PORT")
    parser.add_argument("--relay", metavar="HOST:PORT",
                        help="optional relay to bridge on /relay")
    args = parser.parse_args(argv)
    from .bridge import serve_bridge
    host, port = parse_hostport(args.upstream)
    relay = parse_hostport(args.relay) if args.relay else None
    print(f"bridge on ws://127.0.0.1:{args.listen_ws} -> {args.upstream}")
    serve_bridge(args.listen_ws, host, port, relay)
    return 0
