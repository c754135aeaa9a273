"""Shared fixtures: the 13-district running example and random generators
for property suites (schemas, instances, well-typed queries, valuations)."""

from __future__ import annotations

import random

from concord.algebra import (Aggregate, AndCond, Attr, BinOp, CmpAttrs, CmpLit,
                             Cond, Const, Derive, Diff, DiscUnion, Join,
                             KeyShift, NotCond, ProjectAway, Query, RelRef,
                             Rename, Select, TrueCond, typecheck)
from concord.align import AlignmentSpec, ViewDef
from concord.model import (Instance, LinExpr, STable, Signature, Valuation,
                           VarCatalog, VarKind, Week)

ROMAN = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI",
         "XII"]
WEEK = Week(2110, 25)


def panem_instance():
    """The symbolic running example: 12 reporting districts with relative
    error variables, one unreported district, country totals, census deaths.

    Returns (instance, ids) where ids maps "x" (list of 12), "x13", "y", "z"
    to variable ids.
    """
    cat = VarCatalog()
    ids = {"x": []}
    drows = {}
    for d in ROMAN:
        x = cat.fresh(VarKind.ERROR, f"ReportedDistrict({d},{WEEK}).cases")
        ids["x"].append(x)
        drows[(d, WEEK)] = (LinExpr(75.0, {x: 75.0}),)
    ids["x13"] = cat.fresh(VarKind.NULL, f"ReportedDistrict(XIII,{WEEK}).cases")
    drows[("XIII", WEEK)] = (LinExpr.of_var(ids["x13"]),)
    ids["y"] = cat.fresh(VarKind.ERROR, f"ReportedCountry({WEEK}).cases")
    ids["z"] = cat.fresh(VarKind.ERROR, f"Census({WEEK}).deaths")

    tables = {
        "ReportedDistrict": STable(Signature(("district", "week"), ("cases",)),
                                   drows),
        "ReportedCountry": STable(Signature(("week",), ("cases",)),
                                  {(WEEK,): (LinExpr(1000.0, {ids["y"]: 1000.0}),)}),
        "Census": STable(Signature(("week",), ("deaths",)),
                         {(WEEK,): (LinExpr(20.0, {ids["z"]: 20.0}),)}),
    }
    return Instance(tables, cat), ids


def panem_ground_instance():
    """The contradictory ground version: twelve 75-case districts (XIII
    missing entirely), a 1000-case country total, 15 inferred vs 20 census
    deaths."""
    cat = VarCatalog()
    drows = {(d, WEEK): (LinExpr.of_const(75.0),) for d in ROMAN}
    tables = {
        "ReportedDistrict": STable(Signature(("district", "week"), ("cases",)),
                                   drows),
        "ReportedCountry": STable(Signature(("week",), ("cases",)),
                                  {(WEEK,): (LinExpr.of_const(1000.0),)}),
        "Census": STable(Signature(("week",), ("deaths",)),
                         {(WEEK,): (LinExpr.of_const(20.0),)}),
    }
    return Instance(tables, cat)


def panem_spec(schema) -> AlignmentSpec:
    """Two views: country total vs aggregated districts, and census deaths vs
    a 1.5% case-fatality inference."""
    agg = Aggregate(RelRef("ReportedDistrict"), ("week",), ("cases",))
    inferred = ProjectAway(
        Derive(RelRef("ReportedCountry"), "deaths",
               BinOp("*", Const(0.015), Attr("cases"))),
        ("cases",))
    return AlignmentSpec(dict(schema), (
        ViewDef("SumOfCases", (RelRef("ReportedCountry"), agg)),
        ViewDef("NumberOfDeaths", (RelRef("Census"), inferred)),
    ))


def hand_solutions(ids):
    """The two hand solutions: S1 absorbs everything into the country error
    and census error; S2 assigns the missing 100 cases to the silent district."""
    s1 = {v: 0.0 for v in ids["x"]}
    s1[ids["x13"]] = 0.0
    s1[ids["y"]] = -0.1
    s1[ids["z"]] = -0.325
    s2 = {v: 0.0 for v in ids["x"]}
    s2[ids["x13"]] = 100.0
    s2[ids["y"]] = 0.0
    s2[ids["z"]] = -0.25
    return s1, s2


# ---------------------------------------------------------------------------
# Random generation for property suites

TEXT_KEYS = ["a", "b", "c", "d", "e"]


def rand_schema(rng: random.Random) -> dict[str, Signature]:
    """1-3 small tables; key attrs are k* (integer) or t* (text)."""
    schema = {}
    for ti in range(rng.randint(1, 3)):
        n_keys = rng.randint(1, 2)
        keys = []
        for ki in range(n_keys):
            kind = rng.choice(["k", "t"])
            keys.append(f"{kind}{ki}")
        n_vals = rng.randint(1, 3)
        values = tuple(f"v{ti}{vi}" for vi in range(n_vals))
        schema[f"T{ti}"] = Signature(tuple(keys), values)
    return schema


def rand_key_value(rng: random.Random, attr: str):
    if attr.startswith("t"):
        return rng.choice(TEXT_KEYS)
    return rng.randint(0, 4)


def rand_instance(rng: random.Random, schema, catalog: VarCatalog,
                  max_rows: int = 12, var_pool: int = 8) -> Instance:
    pool = [catalog.fresh(VarKind.ERROR if i % 3 else VarKind.NULL, f"p{i}")
            for i in range(var_pool)]
    tables = {}
    for name, sig in schema.items():
        rows = {}
        for _ in range(rng.randint(0, max_rows)):
            key = tuple(rand_key_value(rng, a) for a in sig.key_attrs)
            cells = []
            for _attr in sig.value_attrs:
                e = LinExpr.of_const(round(rng.uniform(-10, 10), 2))
                for _ in range(rng.randint(0, 2)):
                    v = rng.choice(pool)
                    e = e.add(LinExpr.of_var(v, round(rng.uniform(-3, 3), 2)))
                cells.append(e)
            rows[key] = tuple(cells)
        tables[name] = STable(sig, rows)
    return Instance(tables, catalog)


def rand_valuation(rng: random.Random, catalog: VarCatalog) -> Valuation:
    return Valuation({v.id: round(rng.uniform(-5, 5), 3) for v in catalog})


def _rand_cond(rng: random.Random, sig: Signature, depth: int = 2) -> Cond:
    if not sig.key_attrs:
        return TrueCond()
    roll = rng.random()
    if depth > 0 and roll < 0.15:
        return NotCond(_rand_cond(rng, sig, depth - 1))
    if depth > 0 and roll < 0.3:
        return AndCond(_rand_cond(rng, sig, depth - 1),
                       _rand_cond(rng, sig, depth - 1))
    keys = sig.key_attrs
    attr = rng.choice(keys)
    same_variant = [a for a in keys if a[0] == attr[0]]
    if rng.random() < 0.4 and len(same_variant) > 1:
        other = rng.choice([a for a in same_variant if a != attr] or same_variant)
        return CmpAttrs(rng.choice("=<"), attr, other)
    lit = rand_key_value(rng, attr)
    return CmpLit(rng.choice("=<>"), attr, lit)


def _rand_vexpr(rng: random.Random, sig: Signature, depth: int = 2):
    roll = rng.random()
    if depth == 0 or roll < 0.3:
        choices = list(sig.value_attrs) + \
            [a for a in sig.key_attrs if a.startswith("k")]
        if choices and rng.random() < 0.8:
            return Attr(rng.choice(choices))
        return Const(round(rng.uniform(-4, 4), 2))
    op = rng.choice(["+", "-", "*"])
    if op == "*":
        return BinOp("*", Const(round(rng.uniform(-3, 3), 2)),
                     _rand_vexpr(rng, sig, depth - 1))
    return BinOp(op, _rand_vexpr(rng, sig, depth - 1),
                 _rand_vexpr(rng, sig, depth - 1))


def rand_query(rng: random.Random, schema, depth: int = 4,
               _fresh=[0]) -> Query:
    """A well-typed random query; every result is verified by the typechecker."""
    if depth == 0 or rng.random() < 0.2:
        return RelRef(rng.choice(sorted(schema)))
    source = rand_query(rng, schema, depth - 1)
    sig = typecheck(source, schema)
    ops = ["select", "projaway", "derive", "agg", "dunion", "diff"]
    if sig.attrs:
        ops.append("rename")
    if any(a.startswith("k") for a in sig.key_attrs):
        ops.append("keyshift")
    op = rng.choice(ops + ["join"] * 2)

    _fresh[0] += 1
    fresh = f"f{_fresh[0]}"

    if op == "select":
        return Select(source, _rand_cond(rng, sig))
    if op == "projaway":
        drop = tuple(a for a in sig.value_attrs if rng.random() < 0.4)
        return ProjectAway(source, drop)
    if op == "rename":
        return Rename(source, rng.choice(sig.attrs), fresh)
    if op == "derive":
        return Derive(source, fresh, _rand_vexpr(rng, sig))
    if op == "agg":
        group = tuple(a for a in sig.key_attrs if rng.random() < 0.7)
        values = tuple(a for a in sig.value_attrs if rng.random() < 0.7)
        return Aggregate(source, group, values)
    if op == "dunion":
        other = Select(source, _rand_cond(rng, sig))
        return DiscUnion(source, other, fresh) if rng.random() < 0.5 else \
            DiscUnion(other, source, fresh)
    if op == "diff":
        right = ProjectAway(Select(source, _rand_cond(rng, sig)),
                            sig.value_attrs)
        return Diff(source, right)
    if op == "keyshift":
        attr = rng.choice([a for a in sig.key_attrs if a.startswith("k")])
        return KeyShift(source, attr, rng.randint(-3, 3))
    # join: try a few partners, fall back to a rename chain when the
    # attribute sets cannot be reconciled
    for _ in range(4):
        partner = rand_query(rng, schema, depth - 1)
        psig = typecheck(partner, schema)
        if set(sig.value_attrs) & set(psig.value_attrs):
            continue
        if (set(sig.key_attrs) & set(psig.value_attrs)) or \
                (set(sig.value_attrs) & set(psig.key_attrs)):
            continue
        return Join(source, partner)
    return Select(source, _rand_cond(rng, sig))
