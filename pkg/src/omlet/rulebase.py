"""Text formats: category definitions, labeled examples and trained models.

All three are line-oriented UTF-8 with ``#`` comments.

Rules::

    category conventional_chair extends chair
      binary provides_stable_support
      group provides_sittable_surface {
        range area unit m^2
        range height unit m
      }
    end

Examples::

    example c01 category=conventional_chair desired=0.85
      m area=0.15
      m height=0.45
      b provides_stable_support=1

Models carry ``key=value`` header lines followed by one line per range,
``AREA (0.057599 0.135 0.22 0.546699)``.
"""

from __future__ import annotations

import math
import re
from typing import Iterable, Optional

from .errors import CyclicDefinition, DesiredOutOfRange, MissingMeasurement, ParseError
from .membership import OPEN_SENTINEL, Limits, Trapezoid
from .model import Model
from .tree import CategoryDef, DefinitionTree, Example, FunctionalProperty

ExampleRecord = Example

_IDENT = r"[A-Za-z_][A-Za-z0-9_\-.]*"
_IDENT_RE = re.compile(rf"^{_IDENT}$")


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        yield no, raw, line


def _ident(tok: str, no: int, what: str) -> str:
    if not _IDENT_RE.match(tok):
        raise ParseError(no, f"invalid {what} name {tok!r}")
    return tok


# --- rules -------------------------------------------------------------------


def parse_rules(text: str) -> DefinitionTree:
    defs = DefinitionTree()
    where: dict[str, int] = {}
    range_seen: dict[str, int] = {}
    cat: Optional[CategoryDef] = None
    group: Optional[FunctionalProperty] = None

    for no, _raw, line in _lines(text):
        toks = line.split()
        if not toks:
            continue
        kw = toks[0]
        if group is not None:
            if toks == ["}"]:
                cat.range_groups.append(group)
                group = None
            elif kw == "range":
                if len(toks) not in (2, 4) or (len(toks) == 4 and toks[2] != "unit"):
                    raise ParseError(no, "expected 'range <id> [unit <string>]'")
                rid = _ident(toks[1], no, "range")
                if rid in range_seen:
                    raise ParseError(no, f"range {rid!r} already defined on line {range_seen[rid]}")
                range_seen[rid] = no
                group.ranges.append(rid)
                if len(toks) == 4:
                    group.units[rid] = toks[3]
            else:
                raise ParseError(no, f"expected 'range' or '}}' inside group {group.name!r}")
            continue
        if kw == "category":
            if cat is not None:
                raise ParseError(no, f"category {cat.name!r} is not closed with 'end'")
            if len(toks) == 2:
                parent = None
            elif len(toks) == 4 and toks[2] == "extends":
                parent = _ident(toks[3], no, "category")
            else:
                raise ParseError(no, "expected 'category <name> [extends <name>]'")
            name = _ident(toks[1], no, "category")
            if name in where:
                raise ParseError(no, f"duplicate category {name!r} (first defined on line {where[name]})")
            where[name] = no
            cat = CategoryDef(name, parent)
        elif cat is None:
            raise ParseError(no, f"unexpected {kw!r} outside a category block")
        elif kw == "binary":
            if len(toks) != 2:
                raise ParseError(no, "expected 'binary <prop_id>'")
            cat.binary_props.append(_ident(toks[1], no, "binary property"))
        elif kw == "group":
            if len(toks) != 3 or toks[2] != "{":
                raise ParseError(no, "expected 'group <name> {'")
            group = FunctionalProperty(_ident(toks[1], no, "group"))
        elif kw == "end":
            if len(toks) != 1:
                raise ParseError(no, "unexpected tokens after 'end'")
            defs.categories.append(cat)
            cat = None
        else:
            raise ParseError(no, f"unknown keyword {kw!r}")
    if group is not None:
        raise ParseError(0, f"group {group.name!r} is not closed with '}}'")
    if cat is not None:
        raise ParseError(0, f"category {cat.name!r} is not closed with 'end'")

    for c in defs.categories:
        if c.parent is not None and c.parent not in where:
            raise ParseError(where[c.name], f"category {c.name!r} extends undefined category {c.parent!r}")
    for c in defs.categories:
        try:
            defs.ancestry(c.name)
        except CyclicDefinition as exc:
            raise CyclicDefinition(f"line {where[c.name]}: {exc}") from None
    return defs


def serialize_rules(defs: DefinitionTree) -> str:
    out = []
    for c in defs.categories:
        head = f"category {c.name}"
        if c.parent:
            head += f" extends {c.parent}"
        out.append(head)
        for b in c.binary_props:
            out.append(f"  binary {b}")
        for g in c.range_groups:
            out.append(f"  group {g.name} {{")
            for r in g.ranges:
                unit = g.units.get(r)
                out.append(f"    range {r}" + (f" unit {unit}" if unit else ""))
            out.append("  }")
        out.append("end")
        out.append("")
    return "\n".join(out)


# --- examples ----------------------------------------------------------------


def _real(tok: str, no: int, what: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(no, f"{what} {tok!r} is not a number") from None
    if not math.isfinite(v):
        raise ParseError(no, f"{what} must be finite")
    return v


def _kv(tok: str, no: int) -> tuple[str, str]:
    if "=" not in tok:
        raise ParseError(no, f"expected key=value, got {tok!r}")
    k, v = tok.split("=", 1)
    return k, v


def parse_examples(text: str, defs: DefinitionTree) -> list[Example]:
    records: list[Example] = []
    starts: dict[str, int] = {}
    cur: Optional[Example] = None

    def close():
        if cur is None:
            return
        no = starts[cur.id]
        for r in defs.ranges_for(cur.category):
            if r not in cur.measurements:
                raise MissingMeasurement(r, f"line {no}: example {cur.id!r} lacks measurement for range {r!r}")
        for b in defs.binaries_for(cur.category):
            if b not in cur.binaries:
                raise ParseError(no, f"example {cur.id!r} lacks binary property {b!r}")
        records.append(cur)

    for no, raw, line in _lines(text):
        toks = line.split()
        if not toks:
            if not raw.strip():
                close()
                cur = None
            continue
        kw = toks[0]
        if kw == "example":
            close()
            if len(toks) != 4:
                raise ParseError(no, "expected 'example <id> category=<name> desired=<real>'")
            ex_id = _ident(toks[1], no, "example")
            if ex_id in starts:
                raise ParseError(no, f"duplicate example id {ex_id!r}")
            fields = dict(_kv(t, no) for t in toks[2:])
            if set(fields) != {"category", "desired"}:
                raise ParseError(no, "example header needs category= and desired=")
            category = fields["category"]
            if category not in defs:
                raise ParseError(no, f"unknown category {category!r}")
            if not defs.get(category).carries_measure:
                raise ParseError(no, f"category {category!r} has no functional properties")
            desired = _real(fields["desired"], no, "desired")
            if not (0.0 < desired <= 1.0):
                raise DesiredOutOfRange(no, f"desired measure {desired} must lie in (0, 1]")
            starts[ex_id] = no
            cur = Example(ex_id, category, desired)
        elif kw in ("m", "b"):
            if cur is None:
                raise ParseError(no, f"'{kw}' line outside an example block")
            if len(toks) != 2:
                raise ParseError(no, f"expected '{kw} <id>=<value>'")
            key, val = _kv(toks[1], no)
            if kw == "m":
                if key not in defs.ranges_for(cur.category):
                    raise ParseError(no, f"range {key!r} is not part of category {cur.category!r}")
                if key in cur.measurements:
                    raise ParseError(no, f"duplicate measurement for {key!r}")
                cur.measurements[key] = _real(val, no, "measurement")
            else:
                if key not in defs.binaries_for(cur.category):
                    raise ParseError(no, f"binary {key!r} is not part of category {cur.category!r}")
                if val not in ("0", "1"):
                    raise ParseError(no, f"binary value must be 0 or 1, got {val!r}")
                cur.binaries[key] = val == "1"
        else:
            raise ParseError(no, f"unknown keyword {kw!r}")
    close()
    return records


def serialize_examples(examples: Iterable[Example]) -> str:
    out = []
    for e in examples:
        out.append(f"example {e.id} category={e.category} desired={_fmt(e.desired)}")
        for r, x in e.measurements.items():
            out.append(f"  m {r}={_fmt(x)}")
        for b, ok in e.binaries.items():
            out.append(f"  b {b}={int(bool(ok))}")
        out.append("")
    return "\n".join(out)


# --- models ------------------------------------------------------------------


def _fmt(v: float) -> str:
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def display_name(range_id: str) -> str:
    return range_id.upper().replace("_", " ")


_RANGE_LINE = re.compile(r"^(?P<name>[^()]+?)\s*\((?P<body>[^()]*)\)\s*$")


def serialize_model(model: Model) -> str:
    out = ["# omlet model", "format=omlet-model/1"]
    for k, v in model.provenance.items():
        out.append(f"provenance.{k}={v}")
    names = list(model.levels) or list(model.trapezoids)
    for r in model.trapezoids:
        if r not in names:
            names.append(r)
    for r in names:
        out.append(f"range.{r}.level={model.levels.get(r, 1)}")
        t = model.trapezoids.get(r)
        if t is None:
            out.append(f"range.{r}.trained=0")
            continue
        out.append(f"range.{r}.left_open={int(t.left_open)}")
        out.append(f"range.{r}.right_open={int(t.right_open)}")
        out.append(f"range.{r}.frozen={int(t.frozen)}")
        lim = model.limits.get(r)
        if lim is not None:
            for fname in ("n1_max", "n2_min", "z1_max", "z2_min"):
                v = getattr(lim, fname)
                if v is not None:
                    out.append(f"range.{r}.{fname}={_fmt(v)}")
    out.append("")
    for r in names:
        t = model.trapezoids.get(r)
        if t is None:
            out.append(f"{display_name(r)} (untrained)")
        else:
            out.append(f"{display_name(r)} ({' '.join(_fmt(p) for p in t.params)})")
    return "\n".join(out) + "\n"


def parse_model(text: str) -> Model:
    model = Model()
    attrs: dict[str, dict[str, str]] = {}
    body: list[tuple[int, str, str]] = []
    for no, _raw, line in _lines(text):
        s = line.strip()
        if not s:
            continue
        m = _RANGE_LINE.match(s)
        if m and "=" not in m.group("name"):
            body.append((no, m.group("name").strip(), m.group("body").strip()))
            continue
        if "=" not in s:
            raise ParseError(no, f"unrecognized model line {s!r}")
        key, val = s.split("=", 1)
        key, val = key.strip(), val.strip()
        if key == "format":
            if not val.startswith("omlet-model/"):
                raise ParseError(no, f"unsupported model format {val!r}")
        elif key.startswith("provenance."):
            model.provenance[key[len("provenance."):]] = val
        elif key.startswith("range."):
            rid, _, attr = key[len("range."):].rpartition(".")
            if not rid or not attr:
                raise ParseError(no, f"malformed range attribute {key!r}")
            attrs.setdefault(rid, {})[attr] = val
            attrs[rid].setdefault("_line", str(no))
        else:
            raise ParseError(no, f"unknown header key {key!r}")

    by_display = {display_name(r): r for r in attrs}
    seen = set()
    for no, name, params in body:
        rid = by_display.get(name) or by_display.get(name.upper())
        if rid is None:
            rid = name.lower().replace(" ", "_")
        if rid in seen:
            raise ParseError(no, f"duplicate range line for {name!r}")
        seen.add(rid)
        a = attrs.get(rid, {})
        model.levels[rid] = int(a.get("level", "1"))
        if params == "untrained":
            continue
        toks = params.split()
        if len(toks) != 4:
            raise ParseError(no, f"range {name!r} needs four parameters")
        vals = [_real(t, no, "range parameter") for t in toks]
        left_open = a.get("left_open", "0") == "1" or (vals[0] == vals[1] == -OPEN_SENTINEL)
        right_open = a.get("right_open", "0") == "1" or (vals[2] == vals[3] == OPEN_SENTINEL)
        try:
            t = Trapezoid(*vals, left_open=left_open, right_open=right_open,
                          frozen=a.get("frozen", "0") == "1")
        except ValueError as exc:
            raise ParseError(no, str(exc)) from None
        model.trapezoids[rid] = t
        lim = {f: _real(a[f], no, f) for f in ("n1_max", "n2_min", "z1_max", "z2_min") if f in a}
        if lim:
            model.limits[rid] = Limits(**lim)
    for rid, a in attrs.items():
        if rid not in seen:
            if a.get("trained") == "0":
                model.levels[rid] = int(a.get("level", "1"))
            else:
                raise ParseError(int(a["_line"]), f"range {rid!r} has header entries but no parameter line")
    return model


def read_rules(path) -> DefinitionTree:
    with open(path, encoding="utf-8") as fh:
        return parse_rules(fh.read())


def read_examples(path, defs: DefinitionTree) -> list[Example]:
    with open(path, encoding="utf-8") as fh:
        return parse_examples(fh.read(), defs)


def read_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
