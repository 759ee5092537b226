"""Composing an application: registry -> selection -> XML -> runtime."""

from telecollab.prototyper import (ModuleRegistry, builtin_descriptors,
                                   compose_app, parse_app, validate_app)
from telecollab.runtime import ModuleCore, UnitModule

registry = ModuleRegistry()
for descriptor in builtin_descriptors().values():
    registry.register(descriptor)
print("registered modules:")
for desc in registry.list_modules():
    print(f"  {desc.name} {desc.version} "
          f"[{','.join(desc.variants)}] max {desc.max_units} "
          f"{desc.unit_name}(s)")

text = compose_app(registry,
                   [("camera", "CLASSIC", 5), ("teleop", "CLASSIC", None)],
                   options=[("title", "desk teleoperation")],
                   platform="WEB", app_name="desk_demo")
print("\ncomposed application XML:")
print("  " + "\n  ".join(text.splitlines()[:6]) + "\n  ...")

spec = parse_app(text)
print("\nvalidation:", validate_app(spec) or "clean")

print("\nfeeding the file to the runtime core:")
core = ModuleCore()
for m in spec.modules:
    report = core.load_module(m.descriptor, m.variant,
                              requested_units=m.units,
                              impl=UnitModule(m.descriptor.name))
    print(f"  LOAD {m.descriptor.name:<10} -> {report.status}, "
          f"{report.active_units} {m.descriptor.unit_name}(s)")
core.set_priority(list(spec.priority))
print("degradation priority:", list(spec.priority))

bad = compose_app(registry, [("camera", "CLASSIC", 5)], platform="WEB")
bad_spec = parse_app(bad.replace(' units="5"', ' units="6"'))
print("\na hand-edited file is caught:", validate_app(bad_spec))
