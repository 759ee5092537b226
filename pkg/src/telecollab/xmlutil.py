"""Strict XML parsing and canonical emission.

Every XML surface in this project (module descriptors, application files,
scenes, robot configs, scenarios) shares one discipline: a closed schema that
rejects unknown elements and attributes by name and line, and a canonical
writer (fixed element/attribute order, two-space indent) so that composing the
same value twice yields byte-identical text.
"""

from __future__ import annotations

import xml.parsers.expat
from xml.sax.saxutils import escape, quoteattr


class XmlError(Exception):
    """Schema or well-formedness violation, carrying element and line."""


class Node:
    """Minimal element tree node that remembers its source line."""

    __slots__ = ("tag", "attrs", "children", "text", "line")

    def __init__(self, tag, attrs=None, children=None, text="", line=0):
        self.tag = tag
        self.attrs = dict(attrs or {})
        self.children = list(children or [])
        self.text = text
        self.line = line

    def find_all(self, tag):
        return [c for c in self.children if c.tag == tag]

    def __repr__(self):
        return f"<Node {self.tag} line={self.line}>"


def parse_xml(text: str) -> Node:
    """Parse a document into a Node tree; raise XmlError on malformed input."""
    parser = xml.parsers.expat.ParserCreate()
    root: list[Node] = []
    stack: list[Node] = []

    def start(tag, attrs):
        node = Node(tag, attrs, line=parser.CurrentLineNumber)
        if stack:
            stack[-1].children.append(node)
        else:
            root.append(node)
        stack.append(node)

    def end(tag):
        stack.pop()

    def chars(data):
        if stack:
            stack[-1].text += data

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    try:
        parser.Parse(text, True)
    except xml.parsers.expat.ExpatError as exc:
        raise XmlError(f"malformed XML: {exc}") from None
    if len(root) != 1:
        raise XmlError("document must have exactly one root element")
    return root[0]


def require_tag(node: Node, tag: str) -> None:
    if node.tag != tag:
        raise XmlError(
            f"expected element <{tag}>, found <{node.tag}> at line {node.line}")


def get_attrs(node: Node, required: dict, optional: dict | None = None) -> dict:
    """Extract and convert attributes against a closed vocabulary.

    required/optional map attribute name -> converter; optional may map to
    (converter, default).  Any attribute outside the vocabulary is an error.
    """
    optional = optional or {}
    out = {}
    for name in node.attrs:
        if name not in required and name not in optional:
            raise XmlError(
                f"unknown attribute {name!r} on <{node.tag}> at line {node.line}")
    for name, conv in required.items():
        if name not in node.attrs:
            raise XmlError(
                f"<{node.tag}> at line {node.line} missing required "
                f"attribute {name!r}")
        out[name] = _convert(node, name, conv)
    for name, spec in optional.items():
        conv, default = spec if isinstance(spec, tuple) else (spec, None)
        out[name] = _convert(node, name, conv) if name in node.attrs else default
    return out


def _convert(node: Node, name: str, conv):
    try:
        return conv(node.attrs[name])
    except (ValueError, TypeError) as exc:
        raise XmlError(
            f"attribute {name!r} on <{node.tag}> at line {node.line}: {exc}"
        ) from None


def check_children(node: Node, allowed: tuple[str, ...]) -> None:
    for child in node.children:
        if child.tag not in allowed:
            raise XmlError(
                f"unknown element <{child.tag}> at line {child.line} "
                f"inside <{node.tag}>")
    if node.text.strip():
        raise XmlError(
            f"<{node.tag}> at line {node.line} must not contain text")


def parse_bool(value: str) -> bool:
    if value == "true":
        return True
    if value == "false":
        return False
    raise ValueError(f"expected 'true' or 'false', got {value!r}")


def fmt_bool(value: bool) -> str:
    return "true" if value else "false"


def fmt_float(value: float) -> str:
    # repr keeps full precision and round-trips exactly through float().
    return repr(float(value))


def parse_floats(value: str, count: int | None = None) -> list[float]:
    parts = value.split()
    out = [float(p) for p in parts]
    if count is not None and len(out) != count:
        raise ValueError(f"expected {count} numbers, got {len(out)}")
    return out


def fmt_floats(values) -> str:
    return " ".join(fmt_float(v) for v in values)


def emit(node: Node) -> str:
    """Serialize a Node tree in canonical form (attribute order as built,
    two-space indent, trailing newline)."""
    lines = []
    _emit(node, 0, lines)
    return "\n".join(lines) + "\n"


def _emit(node: Node, depth: int, lines: list) -> None:
    pad = "  " * depth
    attrs = "".join(f" {k}={quoteattr(str(v))}" for k, v in node.attrs.items())
    if node.children:
        lines.append(f"{pad}<{node.tag}{attrs}>")
        for child in node.children:
            _emit(child, depth + 1, lines)
        lines.append(f"{pad}</{node.tag}>")
    elif node.text:
        lines.append(f"{pad}<{node.tag}{attrs}>{escape(node.text)}</{node.tag}>")
    else:
        lines.append(f"{pad}<{node.tag}{attrs}/>")
