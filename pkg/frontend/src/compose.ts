// Setup screen support: compose the application XML from a module checklist.
// Emission matches the server-side canonical form byte for byte, so a file
// composed here parses and re-emits identically over there.

export interface MethodDecl {
  name: string;
  args: Array<[string, string]>;
}

export interface ModuleInfo {
  name: string;
  version: string;
  variants: string[];
  methods: MethodDecl[];
  degradable: boolean;
  unitName: string;
  maxUnits: number;
  defaultUnits: number;
}

export interface Selection {
  name: string;
  variant: string;
  units: number | null;
}

export const BUILTIN_MODULES: ModuleInfo[] = [
  {
    name: "camera", version: "1.0", variants: ["CLASSIC", "MOBILE"],
    methods: [{ name: "select_view", args: [["index", "int"]] }],
    degradable: true, unitName: "camera", maxUnits: 5, defaultUnits: 5,
  },
  {
    name: "teleop", version: "1.0", variants: ["CLASSIC", "MOBILE"],
    methods: [
      { name: "jog", args: [["axis", "int"], ["delta", "float"]] },
      { name: "validate", args: [] },
    ],
    degradable: false, unitName: "channel", maxUnits: 1, defaultUnits: 1,
  },
  {
    name: "trajectory", version: "1.0", variants: ["CLASSIC"],
    methods: [{ name: "run", args: [["waypoints", "joint_list"]] }],
    degradable: false, unitName: "program", maxUnits: 1, defaultUnits: 1,
  },
];

function escapeAttr(value: string): string {
  return value.replace(/&/g, "&amp;").replace(/</g, "&lt;")
    .replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

function escapeText(value: string): string {
  return value.replace(/&/g, "&amp;").replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

interface XmlNode {
  tag: string;
  attrs: Array<[string, string]>;
  children: XmlNode[];
  text?: string;
}

function node(tag: string, attrs: Array<[string, string]> = [],
              children: XmlNode[] = [], text?: string): XmlNode {
  return { tag, attrs, children, text };
}

function emit(root: XmlNode): string {
  const lines: string[] = [];
  const walk = (n: XmlNode, depth: number) => {
    const pad = "  ".repeat(depth);
    const attrs = n.attrs.map(([k, v]) => ` ${k}="${escapeAttr(v)}"`).join("");
    if (n.children.length > 0) {
      lines.push(`${pad}<${n.tag}${attrs}>`);
      for (const child of n.children) walk(child, depth + 1);
      lines.push(`${pad}</${n.tag}>`);
    } else if (n.text) {
      lines.push(`${pad}<${n.tag}${attrs}>${escapeText(n.text)}</${n.tag}>`);
    } else {
      lines.push(`${pad}<${n.tag}${attrs}/>`);
    }
  };
  walk(root, 0);
  return lines.join("\n") + "\n";
}

function moduleNode(info: ModuleInfo): XmlNode {
  const variants = node("variants", [],
    [...info.variants].sort().map((v) => node("variant", [], [], v)));
  const methods = node("methods", [], info.methods.map((m) =>
    node("method", [["name", m.name]],
         m.args.map(([argName, argType]) =>
           node("arg", [["name", argName], ["type", argType]])))));
  return node("module", [
    ["name", info.name],
    ["version", info.version],
    ["degradable", info.degradable ? "true" : "false"],
    ["unit_name", info.unitName],
    ["max_units", String(info.maxUnits)],
    ["default_units", String(info.defaultUnits)],
  ], [variants, methods]);
}

export class ComposeError extends Error {}

export function composeApp(
  modules: ModuleInfo[],
  selection: Selection[],
  options: Array<[string, string]>,
  platform: string,
  appName: string,
): string {
  const byName = new Map(modules.map((m) => [m.name, m]));
  const chosen: Array<{ info: ModuleInfo; variant: string; units: number }>
    = [];
  for (const pick of selection) {
    const info = byName.get(pick.name);
    if (!info) throw new ComposeError(`module '${pick.name}' is unknown`);
    if (!info.variants.includes(pick.variant)) {
      throw new ComposeError(
        `module '${pick.name}' has no ${pick.variant} variant`);
    }
    if (platform === "MOBILE" && pick.variant !== "MOBILE") {
      throw new ComposeError(
        `platform MOBILE requires the MOBILE variant of '${pick.name}'`);
    }
    const units = pick.units ?? info.defaultUnits;
    if (units < 0 || units > info.maxUnits) {
      throw new ComposeError(
        `module '${pick.name}': ${units} outside [0, ${info.maxUnits}]`);
    }
    chosen.push({ info, variant: pick.variant, units });
  }
  const root = node("application",
                    [["name", appName], ["platform", platform]]);
  root.children.push(node("options", [],
    options.map(([k, v]) => node("option", [["key", k], ["value", v]]))));
  root.children.push(node("modules", [], chosen.map((c) =>
    node("selection",
         [["variant", c.variant], ["units", String(c.units)]],
         [moduleNode(c.info)]))));
  root.children.push(node("degradation_priority", [],
    chosen.filter((c) => c.info.degradable)
      .map((c) => node("priority", [["name", c.info.name]]))));
  return emit(root);
}
