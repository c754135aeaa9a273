import pytest

from concord.algebra import (Aggregate, Attr, BinOp, CmpAttrs, CmpLit, Const,
                             Derive, Diff, DiscUnion, Join, KeyShift, NotCond,
                             ProjectAway, RelRef, Rename, Select, TrueCond,
                             apply_valuation, apply_valuation_instance,
                             eval_ground, eval_symbolic, typecheck)
from concord.errors import (DivisorError, GroundnessError, KeyVariantError,
                            NonlinearError, QueryTypeError)
from concord.model import (Instance, LinExpr, STable, Signature, Valuation,
                           VarCatalog, VarKind, Week)

from helpers import WEEK, hand_solutions, panem_instance


def C(x):
    return LinExpr.of_const(float(x))


@pytest.fixture
def panem():
    return panem_instance()


# ---------------------------------------------------------------------------
# typecheck

def test_typecheck_aggregate_running_example(panem):
    inst, _ = panem
    q = Aggregate(RelRef("ReportedDistrict"), ("week",), ("cases",))
    assert typecheck(q, inst.schema()) == Signature(("week",), ("cases",))


def test_typecheck_rejects_projecting_away_keys(panem):
    inst, _ = panem
    q = ProjectAway(RelRef("ReportedDistrict"), ("district",))
    with pytest.raises(QueryTypeError) as err:
        typecheck(q, inst.schema())
    assert err.value.rule == "projaway-values-only"


def test_typecheck_join_merges_keys_and_values():
    schema = {"R": Signature(("A", "B"), ("C", "D")),
              "S": Signature(("B",), ("E", "F"))}
    sig = typecheck(Join(RelRef("R"), RelRef("S")), schema)
    assert sig == Signature(("A", "B"), ("C", "D", "E", "F"))


def test_typecheck_rejects_value_selection(panem):
    inst, _ = panem
    q = Select(RelRef("ReportedDistrict"), CmpLit("=", "cases", 75))
    with pytest.raises(QueryTypeError) as err:
        typecheck(q, inst.schema())
    assert err.value.rule == "select-keys-only"


def test_typecheck_rejects_overlapping_join_values():
    schema = {"R": Signature(("A",), ("C",)), "S": Signature(("B",), ("C",))}
    with pytest.raises(QueryTypeError) as err:
        typecheck(Join(RelRef("R"), RelRef("S")), schema)
    assert err.value.rule == "join-values-disjoint"


def test_typecheck_rejects_undiscriminated_union_shape_mismatch():
    schema = {"R": Signature(("A",), ("C",)), "S": Signature(("A",), ("D",))}
    with pytest.raises(QueryTypeError) as err:
        typecheck(DiscUnion(RelRef("R"), RelRef("S"), "Z"), schema)
    assert err.value.rule == "dunion-signatures-equal"


def test_typecheck_rejects_grouping_on_values_and_aggregating_keys():
    schema = {"R": Signature(("A",), ("C",))}
    with pytest.raises(QueryTypeError) as err:
        typecheck(Aggregate(RelRef("R"), ("C",), ("C",)), schema)
    assert err.value.rule == "agg-group-on-keys"
    with pytest.raises(QueryTypeError) as err:
        typecheck(Aggregate(RelRef("R"), ("A",), ("A",)), schema)
    assert err.value.rule == "agg-sum-values-only"


def test_typecheck_rejects_diff_with_values_on_right():
    schema = {"R": Signature(("A",), ("C",)), "S": Signature(("A",), ("D",))}
    with pytest.raises(QueryTypeError) as err:
        typecheck(Diff(RelRef("R"), RelRef("S")), schema)
    assert err.value.rule == "diff-right-keys-only"


def test_typecheck_unknown_relation_and_rename_rules():
    schema = {"R": Signature(("A",), ("C",))}
    with pytest.raises(QueryTypeError) as err:
        typecheck(RelRef("Q"), schema)
    assert err.value.rule == "relation-unknown"
    with pytest.raises(QueryTypeError) as err:
        typecheck(Rename(RelRef("R"), "X", "Y"), schema)
    assert err.value.rule == "rename-unknown-attribute"
    with pytest.raises(QueryTypeError) as err:
        typecheck(Rename(RelRef("R"), "C", "A"), schema)
    assert err.value.rule == "rename-target-fresh"


def test_typecheck_keyshift_requires_key():
    schema = {"R": Signature(("A",), ("C",))}
    with pytest.raises(QueryTypeError) as err:
        typecheck(KeyShift(RelRef("R"), "C", 1), schema)
    assert err.value.rule == "keyshift-key-only"


# ---------------------------------------------------------------------------
# eval_symbolic

def test_aggregate_sums_thirteen_district_expressions(panem):
    inst, ids = panem
    q = Aggregate(RelRef("ReportedDistrict"), ("week",), ("cases",))
    out = eval_symbolic(q, inst)
    assert len(out) == 1
    (cases,) = out.rows[(WEEK,)]
    expected = LinExpr(900.0, {**{x: 75.0 for x in ids["x"]}, ids["x13"]: 1.0})
    assert cases == expected


def test_derive_scales_country_cases(panem):
    inst, ids = panem
    q = Derive(RelRef("ReportedCountry"), "deaths",
               BinOp("*", Const(0.015), Attr("cases")))
    out = eval_symbolic(q, inst)
    cases, deaths = out.rows[(WEEK,)]
    assert deaths == LinExpr(15.0, {ids["y"]: 15.0})
    assert cases == LinExpr(1000.0, {ids["y"]: 1000.0})


def test_identity_select_and_projectaway(panem):
    inst, _ = panem
    t = inst.tables["ReportedDistrict"]
    assert eval_symbolic(Select(RelRef("ReportedDistrict"), TrueCond()),
                         inst) == t
    assert eval_symbolic(ProjectAway(RelRef("ReportedDistrict"), ()), inst) == t


def test_select_on_keys_and_literals(panem):
    inst, _ = panem
    q = Select(RelRef("ReportedDistrict"), CmpLit("=", "district", "XIII"))
    out = eval_symbolic(q, inst)
    assert list(out.rows) == [("XIII", WEEK)]
    q = Select(RelRef("ReportedDistrict"), NotCond(CmpLit("=", "district", "XIII")))
    assert len(eval_symbolic(q, inst)) == 12


def test_select_cross_variant_comparison_is_an_error(panem):
    inst, _ = panem
    q = Select(RelRef("ReportedDistrict"), CmpLit("<", "district", 5))
    with pytest.raises(KeyVariantError):
        eval_symbolic(q, inst)


def test_discriminated_union_tags_with_zero_and_one():
    sig = Signature(("k",), ("v",))
    r = STable(sig, {(1,): (C(10),)})
    s = STable(sig, {(1,): (C(20),), (2,): (C(30),)})
    inst = Instance({"R": r, "S": s}, VarCatalog())
    out = eval_symbolic(DiscUnion(RelRef("R"), RelRef("S"), "Z"), inst)
    assert out.sig == Signature(("k", "Z"), ("v",))
    assert out.rows == {(1, 0): (C(10),), (1, 1): (C(20),), (2, 1): (C(30),)}


def test_difference_removes_right_keys():
    inst = Instance({
        "R": STable(Signature(("k",), ("v",)), {(1,): (C(1),), (2,): (C(2),)}),
        "S": STable(Signature(("k",), ()), {(2,): ()}),
    }, VarCatalog())
    out = eval_symbolic(Diff(RelRef("R"), RelRef("S")), inst)
    assert list(out.rows) == [(1,)]


def test_join_on_shared_keys_and_cartesian():
    r = STable(Signature(("a", "b"), ("c",)), {(1, 1): (C(5),), (2, 1): (C(6),)})
    s = STable(Signature(("b",), ("e",)), {(1,): (C(7),), (9,): (C(8),)})
    inst = Instance({"R": r, "S": s}, VarCatalog())
    out = eval_symbolic(Join(RelRef("R"), RelRef("S")), inst)
    assert out.sig == Signature(("a", "b"), ("c", "e"))
    assert out.rows == {(1, 1): (C(5), C(7)), (2, 1): (C(6), C(7))}

    # disjoint keys: the legal degenerate case is a product
    u = STable(Signature(("u",), ("f",)), {(4,): (C(1),)})
    inst2 = Instance({"R": r, "U": u}, VarCatalog())
    out2 = eval_symbolic(Join(RelRef("R"), RelRef("U")), inst2)
    assert out2.sig == Signature(("a", "b", "u"), ("c", "f"))
    assert set(out2.rows) == {(1, 1, 4), (2, 1, 4)}


def test_keyshift_rewrites_week_keys(panem):
    inst, _ = panem
    q = KeyShift(RelRef("ReportedCountry"), "week", 3)
    out = eval_symbolic(q, inst)
    assert list(out.rows) == [(Week(2110, 28),)]


def test_derive_division_by_symbolic_or_zero_fails():
    sig = Signature(("k",), ("v", "w"))
    cat = VarCatalog()
    x = cat.fresh(VarKind.ERROR, "x")
    t = STable(sig, {(1,): (C(4), LinExpr(1.0, {x: 1.0}))})
    inst = Instance({"R": t}, cat)
    with pytest.raises(DivisorError):
        eval_symbolic(Derive(RelRef("R"), "q", BinOp("/", Attr("v"), Attr("w"))),
                      inst)
    t0 = STable(sig, {(1,): (C(4), C(0))})
    with pytest.raises(DivisorError):
        eval_symbolic(Derive(RelRef("R"), "q", BinOp("/", Attr("v"), Attr("w"))),
                      Instance({"R": t0}, VarCatalog()))


def test_derive_product_of_two_symbolic_sides_fails():
    cat = VarCatalog()
    x = cat.fresh(VarKind.ERROR, "x")
    t = STable(Signature(("k",), ("v", "w")),
               {(1,): (LinExpr(1.0, {x: 1.0}), LinExpr(2.0, {x: 3.0}))})
    inst = Instance({"R": t}, cat)
    with pytest.raises(NonlinearError):
        eval_symbolic(Derive(RelRef("R"), "q", BinOp("*", Attr("v"), Attr("w"))),
                      inst)


def test_derive_product_with_pointwise_constant_column_is_linear():
    # the column W below is symbolic in the schema but variable-free row by
    # row, so W*C stays linear
    cat = VarCatalog()
    x = cat.fresh(VarKind.ERROR, "x")
    t = STable(Signature(("k",), ("c",)), {(1,): (LinExpr(5.0, {x: 5.0}),)})
    inst = Instance({"R": t}, cat)
    q = Derive(Derive(RelRef("R"), "w", Const(1.0)), "p",
               BinOp("*", Attr("w"), Attr("c")))
    out = eval_symbolic(q, inst)
    c, w, p = out.rows[(1,)]
    assert p == LinExpr(5.0, {x: 5.0})


def test_derive_numeric_key_attribute_acts_as_constant():
    t = STable(Signature(("k",), ("v",)), {(3,): (C(10),), (4,): (C(10),)})
    inst = Instance({"R": t}, VarCatalog())
    out = eval_symbolic(Derive(RelRef("R"), "kk", BinOp("*", Attr("k"), Attr("v"))),
                        inst)
    assert out.rows[(3,)][1] == C(30)
    assert out.rows[(4,)][1] == C(40)


def test_derive_text_key_attribute_is_rejected_at_evaluation(panem):
    inst, _ = panem
    q = Derive(RelRef("ReportedDistrict"), "d2", Attr("district"))
    with pytest.raises(KeyVariantError):
        eval_symbolic(q, inst)


# ---------------------------------------------------------------------------
# eval_ground

def test_ground_aggregate_of_fully_reported_districts():
    sig = Signature(("district", "week"), ("cases",))
    rows = {(d, WEEK): (C(75),) for d in
            ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X",
             "XI", "XII"]}
    rows[("XIII", WEEK)] = (C(0),)
    inst = Instance({"ReportedDistrict": STable(sig, rows)}, VarCatalog())
    out = eval_ground(Aggregate(RelRef("ReportedDistrict"), ("week",),
                                ("cases",)), inst)
    assert out.rows[(WEEK,)] == (C(900),)


def test_ground_empty_table_through_unary_ops():
    sig = Signature(("k",), ("v",))
    inst = Instance({"R": STable(sig, {})}, VarCatalog())
    for q in [Select(RelRef("R"), TrueCond()),
              ProjectAway(RelRef("R"), ("v",)),
              Aggregate(RelRef("R"), ("k",), ("v",)),
              Derive(RelRef("R"), "w", Const(1.0))]:
        assert len(eval_ground(q, inst)) == 0


def test_ground_row_sums_match_hand_computation():
    rows = {(1,): (C(1), C(10)), (2,): (C(2), C(20)), (3,): (C(3), C(30))}
    inst = Instance({"R": STable(Signature(("k",), ("c", "d")), rows)},
                    VarCatalog())
    out = eval_ground(Derive(RelRef("R"), "w", BinOp("+", Attr("c"), Attr("d"))),
                      inst)
    assert [v[2] for v in out.rows.values()] == [C(11), C(22), C(33)]


def test_ground_rejects_symbolic_input(panem):
    inst, _ = panem
    with pytest.raises(GroundnessError):
        eval_ground(RelRef("ReportedCountry"), inst)


# ---------------------------------------------------------------------------
# apply_valuation

def test_apply_first_hand_solution_grounds_country_to_900(panem):
    inst, ids = panem
    s1, _ = hand_solutions(ids)
    out = apply_valuation(inst.tables["ReportedCountry"], Valuation(s1))
    assert out.rows[(WEEK,)] == (C(900),)


def test_zero_valuation_fixes_ground_table():
    t = STable(Signature(("k",), ("v",)), {(1,): (C(5),)})
    assert apply_valuation(t, Valuation({})) == t


def test_commutation_on_the_running_example(panem):
    inst, ids = panem
    s1, _ = hand_solutions(ids)
    h = Valuation(s1)
    q = Aggregate(RelRef("ReportedDistrict"), ("week",), ("cases",))
    a = apply_valuation(eval_symbolic(q, inst), h)
    b = eval_ground(q, apply_valuation_instance(inst, h))
    assert a.sig == b.sig and set(a.rows) == set(b.rows)
    for k in a.rows:
        for x, y in zip(a.rows[k], b.rows[k]):
            assert x.const == pytest.approx(y.const, rel=1e-9)
