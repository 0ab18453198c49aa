"""Deterministic JSON report emission.

Reports are rendered by a small canonical serializer rather than json.dumps
so that numeric formatting is fixed: every float is written as decimal with
17 significant digits (round-trip safe), and key order is insertion order.
Identical inputs therefore produce byte-identical reports.
"""

from __future__ import annotations

import math

TOOL_VERSION = "0.1.0"


def format_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = f"{x:.17g}"
    # make whole numbers recognizable as JSON floats
    if ("." not in text and "e" not in text and "E" not in text
            and "n" not in text):
        text += ".0"
    return text


def _escape(s: str) -> str:
    out = []
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return "".join(out)


def render(obj, indent: int = 0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return f'"{_escape(obj)}"'
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, complex):
        return (f"[{format_float(obj.real)}, {format_float(obj.imag)}]")
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{inner}"{_escape(str(k))}": {render(v, indent + 1)}'
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{inner}{render(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    # numpy scalars and anything float-like
    try:
        return format_float(float(obj))
    except (TypeError, ValueError):
        return f'"{_escape(repr(obj))}"'


def build_report(config: dict, system: str, results: list) -> dict:
    return {"tool_version": TOOL_VERSION, "config": config,
            "system": system, "results": results}


def render_report(report: dict) -> str:
    return render(report) + "\n"
