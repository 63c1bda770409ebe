"""CPLEX LP text export of a MilpInstance."""

from __future__ import annotations

from .instance import MilpInstance

MAX_LINE = 120
_SENSE = {"<=": "<=", "=": "=", ">=": ">="}


def _num(v: float) -> str:
    v = float(v)
    if v == 0:
        v = 0.0  # never print -0
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _terms(coeffs) -> list[str]:
    out = []
    for name, coef in coeffs:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        out.append(f"{sign} {name}" if mag == 1 else f"{sign} {_num(mag)} {name}")
    return out


def _wrap(head: str, pieces: list[str], tail: str = "") -> list[str]:
    lines, cur = [], head
    for p in pieces + ([tail] if tail else []):
        if len(cur) + 1 + len(p) > MAX_LINE and cur.strip():
            lines.append(cur)
            cur = "   " + p
        else:
            cur = f"{cur} {p}" if cur else p
    lines.append(cur)
    return lines


def emit_lp(inst: MilpInstance, title: str = "embedding") -> str:
    """LP text for ``inst``; identical input gives byte-identical output.

    Every variable is declared (Bounds or Binaries), so names round-trip even
    when a variable appears in no row. Each row is preceded by a comment with
    its provenance tag.
    """
    lines = [f"\\ Problem: {title}", "Minimize"]
    obj = [(v, c) for v, c in inst.objective.items() if c != 0]
    lines += _wrap(" obj:", _terms(obj) if obj else ["0"])
    lines.append("Subject To")
    for con in inst.constraints:
        lines.append(f"\\ tag {con.tag}")
        pieces = _terms(con.coeffs) or [f"0 {_first_var(inst)}"]
        lines += _wrap(f" {con.name}:", pieces, f"{_SENSE[con.sense]} {_num(con.rhs)}")
    lines.append("Bounds")
    binaries = []
    for v in inst.variables:
        if v.kind == "binary":
            binaries.append(v.name)
        elif v.upper is None:
            lines.append(f" {v.name} >= 0")
        else:
            lines.append(f" 0 <= {v.name} <= {_num(v.upper)}")
    if binaries:
        lines.append("Binaries")
        lines += _wrap("", binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


def _first_var(inst: MilpInstance) -> str:
    # an empty row still needs a variable term in LP syntax
    return inst.variables[0].name if inst.variables else ""
