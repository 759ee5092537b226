"""Module runtime: loads functional modules and degrades them under latency.

The runtime is one state machine processing an ordered event stream (module
signals, state reports, latency samples, control ticks) under a single lock.
Latency observations feed an exponentially weighted moving average; while the
average sits above the high threshold the controller strips one resource unit
per control period from the degradable module highest in the declared
priority order, and while it sits below the low threshold it restores one
unit per period in reverse order.  Inside the band it does nothing, so a
noisy-but-acceptable link never causes signal thrash.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

CLASSIC_MODE = "CLASSIC_MODE"
SAFE_MODE = "SAFE_MODE"

DEFAULT_HIGH_MS = 200.0
DEFAULT_LOW_MS = 120.0
DEFAULT_BETA = 0.2
DEFAULT_CONTROL_PERIOD_MS = 500
REPORT_TIMEOUT_PERIODS = 2


class RuntimeError_(Exception):
    pass


class VariantError(RuntimeError_):
    pass


class ConflictError(RuntimeError_):
    pass


class NotFoundError(RuntimeError_):
    pass


class CapabilityError(RuntimeError_):
    pass


class RangeError(RuntimeError_):
    pass


@dataclass(frozen=True)
class CoreSignal:
    kind: str                       # LOAD | UNLOAD | SAFE
    degree: Optional[int] = None    # present iff kind == SAFE

    def __post_init__(self):
        if (self.kind == "SAFE") != (self.degree is not None):
            raise ValueError("degree is present exactly when kind is SAFE")


@dataclass(frozen=True)
class StateReport:
    module: str
    status: str                     # OK | DEGRADED | FAILED
    active_units: int
    detail: str = ""


@dataclass(frozen=True)
class LatencySample:
    source: str
    rtt_ms: float
    ts_ms: int
    flagged: bool = False


@dataclass
class LoadedModule:
    descriptor: object              # prototyper.ModuleDescriptor
    variant: str                    # CLASSIC | MOBILE
    mode: str = CLASSIC_MODE
    granted_units: int = 0
    requested_units: int = 0
    active_units: int = 0
    status: str = "OK"
    impl: object = None
    pending_deadline_ms: Optional[int] = None


class UnitModule:
    """Default module implementation: a pool of identical resource units
    (cameras, views, rate divisors) that can be capped by SAFE signals."""

    def __init__(self, name: str):
        self.name = name
        self.active_units = 0

    def on_load(self, granted_units: int) -> StateReport:
        self.active_units = granted_units
        return StateReport(self.name, "OK", self.active_units, "loaded")

    def on_safe(self, degree: int, requested_units: int) -> StateReport:
        self.active_units = min(degree, requested_units)
        status = "OK" if self.active_units == requested_units else "DEGRADED"
        return StateReport(self.name, status, self.active_units,
                           f"safe degree {degree}")

    def on_unload(self) -> StateReport:
        self.active_units = 0
        return StateReport(self.name, "OK", 0, "unloaded")


class SilentModule(UnitModule):
    """Test double that never answers SAFE; the runtime times it out."""

    def on_safe(self, degree, requested_units):
        return None


class ModuleCore:
    def __init__(self, high_ms: float = DEFAULT_HIGH_MS,
                 low_ms: float = DEFAULT_LOW_MS,
                 beta: float = DEFAULT_BETA,
                 control_period_ms: int = DEFAULT_CONTROL_PERIOD_MS,
                 signal_log_path: str | None = None):
        if not low_ms < high_ms:
            raise ValueError("hysteresis requires low_ms < high_ms")
        self.high_ms = high_ms
        self.low_ms = low_ms
        self.beta = beta
        self.control_period_ms = control_period_ms
        self._lock = threading.RLock()
        self._modules: dict[str, LoadedModule] = {}
        self._priority: list[str] = []
        self._ewma: Optional[float] = None
        self.signal_log: list[dict] = []
        self.report_log: list[StateReport] = []
        self._signal_log_path = signal_log_path
        self.unload_hooks: list[Callable[[str], None]] = []
        self.signal_listeners: list[Callable[[dict], None]] = []
        self.report_listeners: list[Callable[[dict], None]] = []

    # -- helpers ---------------------------------------------------------------

    def _log_signal(self, module: str, signal: CoreSignal,
                    now_ms: int | None = None) -> None:
        entry = {"ts_ms": now_ms if now_ms is not None
                 else int(time.time() * 1000),
                 "module": module, "kind": signal.kind}
        if signal.degree is not None:
            entry["degree"] = signal.degree
        self.signal_log.append(entry)
        if self._signal_log_path:
            with open(self._signal_log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        body = {"module": module, "kind": signal.kind}
        if signal.degree is not None:
            body["degree"] = signal.degree
        for listener in self.signal_listeners:
            listener(body)

    def _record_report(self, report: StateReport) -> None:
        self.report_log.append(report)
        entry = self._modules.get(report.module)
        body = {"module": report.module, "status": report.status,
                "active_units": report.active_units, "detail": report.detail}
        if entry is not None:
            body["requested_units"] = entry.requested_units
            body["mode"] = entry.mode
        for listener in self.report_listeners:
            listener(body)

    @property
    def ewma_ms(self) -> Optional[float]:
        with self._lock:
            return self._ewma

    def set_priority(self, names: list[str]) -> None:
        with self._lock:
            self._priority = list(names)

    def modules(self) -> dict[str, LoadedModule]:
        with self._lock:
            return dict(self._modules)

    def module_status(self, name: str) -> LoadedModule:
        with self._lock:
            entry = self._modules.get(name)
            if entry is None:
                raise NotFoundError(f"module {name!r} not loaded")
            return entry

    # -- lifecycle ---------------------------------------------------------------

    def load_module(self, descriptor, variant: str,
                    requested_units: int | None = None,
                    impl=None, now_ms: int | None = None) -> StateReport:
        with self._lock:
            if variant not in descriptor.variants:
                raise VariantError(
                    f"module {descriptor.name!r} has no {variant!r} variant")
            if descriptor.name in self._modules:
                raise ConflictError(
                    f"module {descriptor.name!r} already loaded")
            requested = (descriptor.default_units if requested_units is None
                         else requested_units)
            if not 0 <= requested <= descriptor.max_units:
                raise RangeError(
                    f"requested units {requested} outside "
                    f"[0, {descriptor.max_units}]")
            impl = impl or UnitModule(descriptor.name)
            self._log_signal(descriptor.name, CoreSignal("LOAD"), now_ms)
            report = impl.on_load(requested)
            if report is None:
                report = StateReport(descriptor.name, "FAILED", 0,
                                     "no state report after LOAD")
            if report.status == "FAILED":
                self._record_report(report)
                return report
            self._modules[descriptor.name] = LoadedModule(
                descriptor=descriptor, variant=variant,
                granted_units=requested, requested_units=requested,
                active_units=report.active_units, status=report.status,
                impl=impl)
            if descriptor.name not in self._priority and descriptor.degradable:
                self._priority.append(descriptor.name)
            self._record_report(report)
            return report

    def hot_add(self, descriptor, variant: str,
                requested_units: int | None = None, impl=None,
                now_ms: int | None = None) -> StateReport:
        """Load a module into a running application.  Nothing in the runtime
        pauses or reorders other modules' traffic; the add is just a load."""
        return self.load_module(descriptor, variant, requested_units, impl,
                                now_ms)

    def unload_module(self, name: str, now_ms: int | None = None
                      ) -> StateReport:
        with self._lock:
            entry = self._modules.get(name)
            if entry is None:
                raise NotFoundError(f"module {name!r} not loaded")
            # Resource teardown (e.g. stream subscriptions) happens before the
            # module disappears from the listing.
            for hook in self.unload_hooks:
                hook(name)
            self._log_signal(name, CoreSignal("UNLOAD"), now_ms)
            report = entry.impl.on_unload()
            if report is None:
                report = StateReport(name, "OK", 0, "unloaded (no report)")
            self._record_report(report)
            del self._modules[name]
            if name in self._priority:
                self._priority.remove(name)
            return report

    def send_safe(self, name: str, degree: int,
                  now_ms: int | None = None) -> Optional[StateReport]:
        with self._lock:
            entry = self._modules.get(name)
            if entry is None:
                raise NotFoundError(f"module {name!r} not loaded")
            if not entry.descriptor.degradable:
                raise CapabilityError(f"module {name!r} is not degradable")
            if not 0 <= degree <= entry.descriptor.max_units:
                raise RangeError(
                    f"degree {degree} outside [0, {entry.descriptor.max_units}]")
            self._log_signal(name, CoreSignal("SAFE", degree), now_ms)
            report = entry.impl.on_safe(degree, entry.requested_units)
            entry.granted_units = degree
            if report is None:
                now = now_ms if now_ms is not None else int(time.time() * 1000)
                entry.pending_deadline_ms = (
                    now + REPORT_TIMEOUT_PERIODS * self.control_period_ms)
                return None
            entry.pending_deadline_ms = None
            entry.active_units = report.active_units
            entry.status = report.status
            entry.mode = (CLASSIC_MODE if degree >= entry.requested_units
                          else SAFE_MODE)
            self._record_report(report)
            return report

    # -- degradation control --------------------------------------------------

    def observe_latency(self, sample: LatencySample) -> None:
        with self._lock:
            if self._ewma is None:
                self._ewma = float(sample.rtt_ms)
            else:
                self._ewma = ((1.0 - self.beta) * self._ewma
                              + self.beta * float(sample.rtt_ms))

    def decide_degradation(self) -> list[tuple[str, int]]:
        """One control step: at most one (module, degree) adjustment."""
        with self._lock:
            if self._ewma is None:
                return []
            if self._ewma > self.high_ms:
                for name in self._priority:
                    entry = self._modules.get(name)
                    if entry is None or entry.status == "FAILED":
                        continue
                    if entry.active_units > 0:
                        return [(name, entry.active_units - 1)]
                return []
            if self._ewma < self.low_ms:
                for name in reversed(self._priority):
                    entry = self._modules.get(name)
                    if entry is None or entry.status == "FAILED":
                        continue
                    if entry.active_units < entry.requested_units:
                        return [(name, entry.active_units + 1)]
                return []
            return []

    def control_tick(self, now_ms: int | None = None) -> list[StateReport]:
        """Apply one control period: expire overdue reports, then emit the
        degradation decision."""
        now = now_ms if now_ms is not None else int(time.time() * 1000)
        reports = []
        with self._lock:
            for name, entry in self._modules.items():
                if (entry.pending_deadline_ms is not None
                        and now >= entry.pending_deadline_ms):
                    entry.pending_deadline_ms = None
                    entry.status = "FAILED"
                    report = StateReport(name, "FAILED", entry.active_units,
                                         "state report timed out")
                    self._record_report(report)
                    reports.append(report)
            for name, degree in self.decide_degradation():
                report = self.send_safe(name, degree, now_ms=now)
                if report is not None:
                    reports.append(report)
        return reports

    def safe_trace(self) -> list[tuple[str, int]]:
        """(module, degree) sequence of every SAFE signal issued so far."""
        return [(e["module"], e["degree"]) for e in self.signal_log
                if e["kind"] == "SAFE"]


class ControlLoop:
    """Wall-clock driver calling control_tick at the configured period."""

    def __init__(self, core: ModuleCore):
        self.core = core
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)

    def start(self) -> "ControlLoop":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=2.0)

    def _run(self) -> None:
        period = self.core.control_period_ms / 1000.0
        while not self._stop.wait(period):
            self.core.control_tick()
