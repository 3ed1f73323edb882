"""LP file format export and parsing.

Floats are written with ``repr`` so a parse of the exported text recovers
every coefficient bit for bit.
"""

from __future__ import annotations

import math
import re

from ..milp import EQ, GE, LE, MilpModel

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\[\]]*$")
_SECTIONS = {
    "minimize": "objective", "minimise": "objective", "min": "objective",
    "subject to": "rows", "such that": "rows", "st": "rows", "s.t.": "rows",
    "bounds": "bounds", "binaries": "binaries", "binary": "binaries", "bin": "binaries",
    "end": "end",
}


class LpFormatError(ValueError):
    pass


def _num(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def _terms(pairs) -> str:
    out = []
    for vid_name, coef in pairs:
        sign = "-" if coef < 0 or (coef == 0 and math.copysign(1.0, coef) < 0) else "+"
        out.append(f"{sign} {_num(abs(coef))} {vid_name}")
    text = " ".join(out)
    return text[2:] if text.startswith("+ ") else text


def export_lp_text(model: MilpModel) -> str:
    """Render ``model`` in LP file format (Minimize / Subject To / Bounds / Binaries)."""
    names = model.names
    for n in names:
        if not _NAME_RE.match(n):
            raise LpFormatError(f"variable name {n!r} is not LP-safe")
    lines = [f"\\ {model.name}", "Minimize"]
    obj = _terms((names[v], c) for v, c in sorted(model.objective.items()))
    if model.obj_offset:
        obj = f"{obj} {'-' if model.obj_offset < 0 else '+'} {_num(abs(model.obj_offset))}".strip()
    lines.append(f" obj: {obj if obj else '0'}")
    lines.append("Subject To")
    sense_txt = {LE: "<=", GE: ">=", EQ: "="}
    for i, row in enumerate(model.constraints):
        label = row.name if row.name and _NAME_RE.match(row.name) else f"c{i}"
        lhs = _terms((names[v], c) for v, c in zip(row.index, row.coef))
        lines.append(f" {label}: {lhs} {sense_txt[row.sense]} {_num(row.rhs)}")
    lines.append("Bounds")
    for vid, n in enumerate(names):
        lo, hi = model.lb[vid], model.ub[vid]
        if model.is_binary[vid] and lo == 0.0 and hi == 1.0:
            continue
        if lo == hi:
            lines.append(f" {n} = {_num(lo)}")
        elif lo == -math.inf and hi == math.inf:
            lines.append(f" {n} free")
        else:
            lines.append(f" {_num(lo)} <= {n} <= {_num(hi)}")
    binaries = [n for n, isb in zip(names, model.is_binary) if isb]
    lines.append("Binaries")
    for k in range(0, len(binaries), 8):
        lines.append(" " + " ".join(binaries[k:k + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


# -- parsing -----------------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(<=|>=|=<|=>|[<>=]|[+-]|:|[A-Za-z_][A-Za-z0-9_.\[\]]*|"
                       r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)")


def _tokenize(text: str) -> list[str]:
    out = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise LpFormatError(f"unexpected character {text[pos]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


def _is_number(tok: str) -> bool:
    if tok.lower() in ("inf", "infinity"):
        return True
    try:
        float(tok)
    except ValueError:
        return False
    return tok[0].isdigit() or tok[0] == "."


def _value(tok: str) -> float:
    return math.inf if tok.lower() in ("inf", "infinity") else float(tok)


def _linear(tokens: list[str]) -> tuple[list[tuple[str, float]], float]:
    """Parse ``[sign] [coef] name ...``; returns terms and a constant."""
    terms: list[tuple[str, float]] = []
    const = 0.0
    i = 0
    while i < len(tokens):
        sign = 1.0
        while i < len(tokens) and tokens[i] in "+-":
            sign *= -1.0 if tokens[i] == "-" else 1.0
            i += 1
        if i >= len(tokens):
            raise LpFormatError("dangling sign")
        coef = 1.0
        if _is_number(tokens[i]):
            coef = _value(tokens[i])
            i += 1
            if i >= len(tokens) or tokens[i] in "+-":
                const += sign * coef
                continue
        name = tokens[i]
        if not _NAME_RE.match(name):
            raise LpFormatError(f"expected a variable name, got {name!r}")
        terms.append((name, sign * coef))
        i += 1
    return terms, const


def _split_sections(text: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {k: [] for k in ("objective", "rows", "bounds", "binaries")}
    current = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in _SECTIONS:
            current = _SECTIONS[key]
            if current == "end":
                break
            continue
        if current is None:
            raise LpFormatError(f"content before any section: {line!r}")
        sections[current].append(line)
    return sections


def parse_lp_text(text: str, name: str = "model") -> MilpModel:
    """Inverse of :func:`export_lp_text` for the subset it writes (plus line wrapping)."""
    sec = _split_sections(text)
    var_order: list[str] = []
    seen: dict[str, None] = {}

    def note(n: str):
        if n not in seen:
            seen[n] = None
            var_order.append(n)

    obj_tokens = _tokenize(" ".join(sec["objective"]))
    if len(obj_tokens) >= 2 and obj_tokens[1] == ":":
        obj_tokens = obj_tokens[2:]
    obj_terms, obj_const = _linear(obj_tokens)
    for n, _ in obj_terms:
        note(n)

    rows = []
    tokens = _tokenize(" ".join(sec["rows"]))
    i = 0
    senses = {"<=": LE, "=<": LE, "<": LE, ">=": GE, "=>": GE, ">": GE, "=": EQ}
    while i < len(tokens):
        label = ""
        if i + 1 < len(tokens) and tokens[i + 1] == ":":
            label = tokens[i]
            i += 2
        j = i
        while j < len(tokens) and tokens[j] not in senses:
            j += 1
        if j + 1 >= len(tokens):
            raise LpFormatError(f"row {label or len(rows)} has no sense/rhs")
        terms, const = _linear(tokens[i:j])
        rhs_sign = 1.0
        k = j + 1
        if tokens[k] in "+-":
            rhs_sign = -1.0 if tokens[k] == "-" else 1.0
            k += 1
        rhs = rhs_sign * _value(tokens[k])
        for n, _ in terms:
            note(n)
        rows.append((label, terms, senses[tokens[j]], rhs - const))
        i = k + 1

    bounds: dict[str, tuple[float, float]] = {}
    for line in sec["bounds"]:
        toks = _tokenize(line)
        if len(toks) == 2 and toks[1].lower() == "free":
            bounds[toks[0]] = (-math.inf, math.inf)
            note(toks[0])
            continue
        vals = []
        k = 0
        parts = []
        while k < len(toks):
            t = toks[k]
            if t in "+-" and k + 1 < len(toks) and _is_number(toks[k + 1]):
                vals.append((-1.0 if t == "-" else 1.0) * _value(toks[k + 1]))
                parts.append("num")
                k += 2
                continue
            if _is_number(t):
                vals.append(_value(t))
                parts.append("num")
            elif t in senses:
                parts.append(t)
            else:
                parts.append("var")
                vname = t
            k += 1
        if "var" not in parts:
            raise LpFormatError(f"bound line without variable: {line!r}")
        note(vname)
        lo, hi = bounds.get(vname, (0.0, math.inf))
        shape = tuple(p if p in ("num", "var") else senses[p] for p in parts)
        if shape == ("num", LE, "var", LE, "num"):
            lo, hi = vals
        elif shape == ("var", EQ, "num"):
            lo = hi = vals[0]
        elif shape == ("var", LE, "num"):
            hi = vals[0]
        elif shape == ("var", GE, "num"):
            lo = vals[0]
        elif shape == ("num", LE, "var"):
            lo = vals[0]
        elif shape == ("num", GE, "var"):
            hi = vals[0]
        else:
            raise LpFormatError(f"unsupported bound line: {line!r}")
        bounds[vname] = (lo, hi)

    binaries = set()
    for line in sec["binaries"]:
        for n in line.split():
            binaries.add(n)
            note(n)

    model = MilpModel(name)
    ids = {}
    for n in var_order:
        if n in binaries:
            lo, hi = bounds.get(n, (0.0, 1.0))
            ids[n] = model.add_var(n, lo, hi, binary=True)
        else:
            lo, hi = bounds.get(n, (0.0, math.inf))
            ids[n] = model.add_var(n, lo, hi)
    for n, c in obj_terms:
        model.add_objective(ids[n], c)
    model.obj_offset = obj_const
    for label, terms, sense, rhs in rows:
        model.add_constr([(ids[n], c) for n, c in terms], sense, rhs, label)
    return model
