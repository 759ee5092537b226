"""Application prototyper: module descriptors, registry, and app composition.

A module ships with an XML description (its methods, variants, and resource
unit declaration).  The composer turns a user's selection of registered
modules plus options into one application XML embedding full descriptor
copies; that file is the runtime's startup input.  Parsing is strict and
emission canonical, so parse-compose round trips are byte-exact.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from . import xmlutil
from .storage import FileStore
from .xmlutil import Node, XmlError

VARIANTS = ("CLASSIC", "MOBILE")
APP_PLATFORMS = ("WEB", "VR", "MOBILE")


class ProtoError(Exception):
    pass


class ComposeError(ProtoError):
    pass


class CompatibilityError(ComposeError):
    pass


@dataclass(frozen=True)
class ModuleMethod:
    name: str
    args: tuple[tuple[str, str], ...] = ()   # (arg name, type tag)


@dataclass(frozen=True)
class ModuleDescriptor:
    name: str
    version: str
    variants: tuple[str, ...]
    methods: tuple[ModuleMethod, ...] = ()
    degradable: bool = False
    unit_name: str = "unit"
    max_units: int = 1
    default_units: int = 1

    def __post_init__(self):
        if not self.variants:
            raise ValueError(f"module {self.name!r} declares no variants")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}")
        if len(set(self.variants)) != len(self.variants):
            raise ValueError("duplicate variants")
        if not 0 <= self.default_units <= self.max_units:
            raise ValueError("default_units must lie in [0, max_units]")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate method names in {self.name!r}")


@dataclass(frozen=True)
class AppModule:
    descriptor: ModuleDescriptor
    variant: str
    units: int


@dataclass(frozen=True)
class AppSpec:
    name: str
    platform: str
    options: tuple[tuple[str, str], ...]
    modules: tuple[AppModule, ...]
    priority: tuple[str, ...]


# ---------------------------------------------------------------------------
# Descriptor XML

def descriptor_to_node(desc: ModuleDescriptor) -> Node:
    root = Node("module", {
        "name": desc.name,
        "version": desc.version,
        "degradable": xmlutil.fmt_bool(desc.degradable),
        "unit_name": desc.unit_name,
        "max_units": str(desc.max_units),
        "default_units": str(desc.default_units),
    })
    variants = Node("variants")
    for v in sorted(desc.variants):
        variants.children.append(Node("variant", text=v))
    root.children.append(variants)
    methods = Node("methods")
    for m in desc.methods:
        method = Node("method", {"name": m.name})
        for arg_name, arg_type in m.args:
            method.children.append(Node("arg", {"name": arg_name,
                                                "type": arg_type}))
        methods.children.append(method)
    root.children.append(methods)
    return root


def descriptor_to_xml(desc: ModuleDescriptor) -> str:
    return xmlutil.emit(descriptor_to_node(desc))


def descriptor_from_node(root: Node) -> ModuleDescriptor:
    xmlutil.require_tag(root, "module")
    xmlutil.check_children(root, ("variants", "methods"))
    attrs = xmlutil.get_attrs(root, {"name": str, "version": str}, {
        "degradable": (xmlutil.parse_bool, False),
        "unit_name": (str, "unit"),
        "max_units": (int, None),
        "default_units": (int, None),
    })
    max_units = attrs["max_units"] if attrs["max_units"] is not None else 1
    default_units = (attrs["default_units"]
                     if attrs["default_units"] is not None else max_units)
    variants_nodes = root.find_all("variants")
    if not variants_nodes:
        raise XmlError(
            f"<module> at line {root.line} missing required element "
            "<variants>")
    if len(variants_nodes) > 1 or len(root.find_all("methods")) > 1:
        raise XmlError(f"<module> at line {root.line} has duplicate sections")
    variants = []
    xmlutil.check_children(variants_nodes[0], ("variant",))
    for v in variants_nodes[0].find_all("variant"):
        xmlutil.get_attrs(v, {})
        value = v.text.strip()
        if value not in VARIANTS:
            raise XmlError(
                f"<variant> at line {v.line} must be one of {VARIANTS}, "
                f"got {value!r}")
        variants.append(value)
    methods = []
    for methods_node in root.find_all("methods"):
        xmlutil.check_children(methods_node, ("method",))
        for m in methods_node.find_all("method"):
            m_attrs = xmlutil.get_attrs(m, {"name": str})
            xmlutil.check_children(m, ("arg",))
            args = []
            for a in m.find_all("arg"):
                a_attrs = xmlutil.get_attrs(a, {"name": str, "type": str})
                args.append((a_attrs["name"], a_attrs["type"]))
            methods.append(ModuleMethod(m_attrs["name"], tuple(args)))
    try:
        return ModuleDescriptor(
            name=attrs["name"], version=attrs["version"],
            variants=tuple(variants), methods=tuple(methods),
            degradable=attrs["degradable"], unit_name=attrs["unit_name"],
            max_units=max_units, default_units=default_units)
    except ValueError as exc:
        raise XmlError(f"<module> at line {root.line}: {exc}") from None


def parse_descriptor(text: str) -> ModuleDescriptor:
    return descriptor_from_node(xmlutil.parse_xml(text))


# ---------------------------------------------------------------------------
# Registry

class ModuleRegistry:
    """Name-keyed descriptor store; file-backed when given a store."""

    def __init__(self, store: FileStore | None = None):
        self._store = store
        self._lock = threading.Lock()
        self._by_name: dict[str, ModuleDescriptor] = {}
        if store is not None and store.exists():
            _, records = store.read("registry")
            for rec in records:
                desc = parse_descriptor(rec["xml"])
                self._by_name[desc.name] = desc

    def register(self, descriptor: ModuleDescriptor) -> None:
        """Register or replace; the latest content for a name wins."""
        with self._lock:
            self._by_name[descriptor.name] = descriptor
            self._persist()

    def _persist(self) -> None:
        if self._store is not None:
            records = [{"xml": descriptor_to_xml(self._by_name[name])}
                       for name in sorted(self._by_name)]
            self._store.write("registry", {}, records)

    def list_modules(self) -> list[ModuleDescriptor]:
        with self._lock:
            return [self._by_name[name] for name in sorted(self._by_name)]

    def get(self, name: str) -> ModuleDescriptor:
        with self._lock:
            desc = self._by_name.get(name)
            if desc is None:
                raise ComposeError(f"module {name!r} is not registered")
            return desc


# ---------------------------------------------------------------------------
# Application composition

def _check_variant(desc: ModuleDescriptor, variant: str, platform: str) -> None:
    if variant not in desc.variants:
        raise CompatibilityError(
            f"module {desc.name!r} has no {variant!r} variant")
    if platform == "MOBILE" and variant != "MOBILE":
        raise CompatibilityError(
            f"platform MOBILE requires the MOBILE variant of {desc.name!r}")


def compose_app(registry: ModuleRegistry,
                selection: list[tuple[str, str, int | None]],
                options: list[tuple[str, str]] | None = None,
                platform: str = "WEB", app_name: str = "app",
                priority: list[str] | None = None) -> str:
    """Compose the application XML from registered modules.

    selection entries are (module name, variant, units or None for the
    descriptor default).  The default degradation priority is the selection
    order restricted to degradable modules.
    """
    if platform not in APP_PLATFORMS:
        raise ComposeError(f"unknown platform {platform!r}")
    modules = []
    for name, variant, units in selection:
        desc = registry.get(name)
        _check_variant(desc, variant, platform)
        chosen = desc.default_units if units is None else units
        if not 0 <= chosen <= desc.max_units:
            raise ComposeError(
                f"module {name!r}: requested units {chosen} outside "
                f"[0, {desc.max_units}]")
        modules.append(AppModule(desc, variant, chosen))
    names = [m.descriptor.name for m in modules]
    if len(set(names)) != len(names):
        raise ComposeError("duplicate module selected")
    if priority is None:
        priority = [m.descriptor.name for m in modules
                    if m.descriptor.degradable]
    spec = AppSpec(app_name, platform, tuple(options or ()),
                   tuple(modules), tuple(priority))
    return app_to_xml(spec)


def app_to_xml(spec: AppSpec) -> str:
    root = Node("application", {"name": spec.name, "platform": spec.platform})
    options = Node("options")
    for key, value in spec.options:
        options.children.append(Node("option", {"key": key, "value": value}))
    root.children.append(options)
    modules = Node("modules")
    for m in spec.modules:
        selection = Node("selection", {"variant": m.variant,
                                       "units": str(m.units)})
        selection.children.append(descriptor_to_node(m.descriptor))
        modules.children.append(selection)
    root.children.append(modules)
    priority = Node("degradation_priority")
    for name in spec.priority:
        priority.children.append(Node("priority", {"name": name}))
    root.children.append(priority)
    return xmlutil.emit(root)


def parse_app(text: str) -> AppSpec:
    root = xmlutil.parse_xml(text)
    xmlutil.require_tag(root, "application")
    xmlutil.check_children(root, ("options", "modules",
                                  "degradation_priority"))
    attrs = xmlutil.get_attrs(root, {"name": str, "platform": str})
    options = []
    for options_node in root.find_all("options"):
        xmlutil.check_children(options_node, ("option",))
        for opt in options_node.find_all("option"):
            o = xmlutil.get_attrs(opt, {"key": str, "value": str})
            options.append((o["key"], o["value"]))
    modules = []
    for modules_node in root.find_all("modules"):
        xmlutil.check_children(modules_node, ("selection",))
        for sel in modules_node.find_all("selection"):
            s = xmlutil.get_attrs(sel, {"variant": str, "units": int})
            children = sel.children
            if len(children) != 1:
                raise XmlError(
                    f"<selection> at line {sel.line} must embed exactly one "
                    "<module>")
            desc = descriptor_from_node(children[0])
            modules.append(AppModule(desc, s["variant"], s["units"]))
    priority = []
    for pr_node in root.find_all("degradation_priority"):
        xmlutil.check_children(pr_node, ("priority",))
        for p in pr_node.find_all("priority"):
            priority.append(xmlutil.get_attrs(p, {"name": str})["name"])
    return AppSpec(attrs["name"], attrs["platform"], tuple(options),
                   tuple(modules), tuple(priority))


def validate_app(spec: AppSpec) -> list[str]:
    """Check the app invariants; returns all violations, not just the first."""
    violations = []
    if spec.platform not in APP_PLATFORMS:
        violations.append(f"unknown platform {spec.platform!r}")
    names = [m.descriptor.name for m in spec.modules]
    for name in sorted(set(n for n in names if names.count(n) > 1)):
        violations.append(f"module {name!r} selected more than once")
    for m in spec.modules:
        desc = m.descriptor
        if m.variant not in desc.variants:
            violations.append(
                f"module {desc.name!r}: variant {m.variant!r} not declared")
        elif spec.platform == "MOBILE" and m.variant != "MOBILE":
            violations.append(
                f"module {desc.name!r}: platform MOBILE requires the MOBILE "
                "variant")
        if not 0 <= m.units <= desc.max_units:
            violations.append(
                f"module {desc.name!r}: requested units {m.units} outside "
                f"[0, {desc.max_units}]")
        if desc.degradable and desc.name not in spec.priority:
            violations.append(
                f"degradable module {desc.name!r} missing from the "
                "degradation priority list")
    for name in spec.priority:
        if name not in names:
            violations.append(
                f"priority entry {name!r} does not match a selected module")
    return violations


def builtin_descriptors() -> dict[str, ModuleDescriptor]:
    """Descriptors for the modules this project ships in-process."""
    camera = ModuleDescriptor(
        name="camera", version="1.0", variants=("CLASSIC", "MOBILE"),
        methods=(ModuleMethod("select_view", (("index", "int"),)),),
        degradable=True, unit_name="camera", max_units=5, default_units=5)
    teleop = ModuleDescriptor(
        name="teleop", version="1.0", variants=("CLASSIC", "MOBILE"),
        methods=(ModuleMethod("jog", (("axis", "int"), ("delta", "float"))),
                 ModuleMethod("validate", ())),
        degradable=False, unit_name="channel", max_units=1, default_units=1)
    trajectory = ModuleDescriptor(
        name="trajectory", version="1.0", variants=("CLASSIC",),
        methods=(ModuleMethod("run", (("waypoints", "joint_list"),)),),
        degradable=False, unit_name="program", max_units=1, default_units=1)
    return {d.name: d for d in (camera, teleop, trajectory)}
