"""Plain-text LP dump for cross-checking models in external solvers.

The grammar is documented in ``docs/lp_format.md``. It is a strict subset of
the CPLEX LP format: one objective line, one constraint per line, explicit
two-sided bounds for every variable and a ``Binaries`` section.
"""

from __future__ import annotations

import io
import math
import re
from pathlib import Path
from typing import TextIO

from .model import LpModel, Relation

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_\[\].]*$")
_TERM = re.compile(r"([+-])\s*([0-9.eE+-]+)\s+([A-Za-z_][A-Za-z0-9_\[\].]*)")


def _num(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def _names(model: LpModel) -> list[str]:
    seen: set[str] = set()
    out = []
    for j, name in enumerate(model.names):
        if not _NAME.match(name) or name in seen:
            name = f"x{j}"
        seen.add(name)
        out.append(name)
    return out


def _expr(pairs, names) -> str:
    parts = []
    for j, a in pairs:
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_num(abs(a))} {names[j]}")
    return " ".join(parts) if parts else "+ 0 " + (names[0] if names else "x0")


def write_lp(model: LpModel, target: str | Path | TextIO | None = None) -> str:
    names = _names(model)
    buf = io.StringIO()
    buf.write("\\ fleetv2g LP dump\n")
    buf.write("Maximize\n")
    obj = [(j, c) for j, c in enumerate(model.obj) if c != 0.0]
    buf.write(f" obj: {_expr(obj, names)}\n")
    buf.write("Subject To\n")
    for i, row in enumerate(model.rows):
        label = row.name if _NAME.match(row.name or "") else f"r{i}"
        body = _expr(zip(row.indices, row.coefs), names) if row.indices else "+ 0 " + names[0]
        buf.write(f" {label}: {body} {row.relation.value} {_num(row.rhs)}\n")
    buf.write("Bounds\n")
    for j in range(model.n):
        buf.write(f" {_num(model.lb[j])} <= {names[j]} <= {_num(model.ub[j])}\n")
    if model.binary_indices:
        buf.write("Binaries\n")
        buf.write(" " + " ".join(names[j] for j in sorted(model.binary_indices)) + "\n")
    buf.write("End\n")
    text = buf.getvalue()
    if isinstance(target, (str, Path)):
        Path(target).write_text(text)
    elif target is not None:
        target.write(text)
    return text


_INF = {"+inf": math.inf, "inf": math.inf, "-inf": -math.inf}


def _parse_num(tok: str) -> float:
    return _INF[tok] if tok in _INF else float(tok)


def _parse_expr(text: str) -> list[tuple[str, float]]:
    text = text.strip()
    if not text.startswith(("+", "-")):
        text = "+ " + text
    terms = []
    pos = 0
    for m in _TERM.finditer(text):
        if text[pos:m.start()].strip():
            raise ValueError(f"cannot parse expression near {text[pos:m.start()]!r}")
        coef = float(m.group(2))
        terms.append((m.group(3), -coef if m.group(1) == "-" else coef))
        pos = m.end()
    if text[pos:].strip():
        raise ValueError(f"cannot parse expression near {text[pos:]!r}")
    return terms


def read_lp(source: str | Path | TextIO) -> LpModel:
    """Parse text produced by :func:`write_lp` back into a model."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()

    section = None
    objective: list[tuple[str, float]] = []
    rows: list[tuple[str, list[tuple[str, float]], str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    order: list[str] = []
    binaries: list[str] = []
    headers = {"maximize": "obj", "subject to": "rows", "bounds": "bounds",
               "binaries": "bin", "end": "end"}
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in headers:
            section = headers[key]
            continue
        if section == "obj":
            objective = _parse_expr(line.split(":", 1)[1])
        elif section == "rows":
            label, body = line.split(":", 1)
            m = re.match(r"^(.*?)(<=|>=|=)\s*(\S+)$", body.strip())
            if not m:
                raise ValueError(f"bad constraint line: {raw!r}")
            rows.append((label.strip(), _parse_expr(m.group(1)), m.group(2),
                         _parse_num(m.group(3))))
        elif section == "bounds":
            lo, name, hi = re.match(r"^(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)$", line).groups()
            bounds[name] = (_parse_num(lo), _parse_num(hi))
            order.append(name)
        elif section == "bin":
            binaries.extend(line.split())
        elif section is None:
            raise ValueError(f"content before any section: {raw!r}")

    model = LpModel()
    index = {}
    for name in order:
        lo, hi = bounds[name]
        index[name] = model.add_var(lo, hi, name=name)
    for name, coef in objective:
        model.obj[index[name]] += coef
    for label, terms, rel, rhs in rows:
        model.add_row([(index[n], a) for n, a in terms], Relation(rel), rhs, label)
    model.binary_indices = {index[n] for n in binaries}
    return model
