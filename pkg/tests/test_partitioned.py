import csv
import random

import pytest

from concord.algebra import (Aggregate, Attr, BinOp, Const, Derive, DiscUnion,
                             Join, RelRef, eval_symbolic, typecheck)
from concord.errors import NonlinearError
from concord.model import (Instance, LinExpr, STable, Signature, VarCatalog,
                           VarKind)
from concord.partitioned import (PartitionedTable, dump_csv, eval_partitioned,
                                 from_inline, to_inline)

from helpers import rand_instance, rand_query, rand_schema


def C(x):
    return LinExpr.of_const(float(x))


@pytest.fixture
def districts():
    """Rows shaped like the motivating table: constants 75 with one error
    variable each, plus a bare variable for the unreported district."""
    cat = VarCatalog()
    sig = Signature(("district", "year"), ("cases",))
    x1 = cat.fresh(VarKind.ERROR, "x1")
    x13 = cat.fresh(VarKind.NULL, "x13")
    t = STable(sig, {
        ("I", 2110): (LinExpr(75.0, {x1: 75.0}),),
        ("XIII", 2110): (LinExpr.of_var(x13),),
    })
    return t, x1, x13


def test_from_inline_splits_constants_and_coefficients(districts):
    t, x1, x13 = districts
    pt = from_inline(t)
    assert pt.base.rows[("I", 2110)] == (C(75),)
    assert pt.coeffs["cases"][("I", 2110)] == {x1: 75.0}
    # a bare variable leaves a zero constant behind
    assert pt.base.rows[("XIII", 2110)] == (C(0),)
    assert pt.coeffs["cases"][("XIII", 2110)] == {x13: 1.0}


def test_ground_table_has_empty_coefficient_tables():
    t = STable(Signature(("k",), ("v", "w")), {(1,): (C(2), C(3))})
    pt = from_inline(t)
    assert pt.coeffs == {"v": {}, "w": {}}


def test_round_trips(districts):
    t, *_ = districts
    assert to_inline(from_inline(t)) == t
    pt = from_inline(t)
    again = from_inline(to_inline(pt))
    assert again == pt


def test_identity_query_returns_input(districts):
    t, *_ = districts
    pt = from_inline(t)
    out = eval_partitioned(RelRef("T"), {"T": pt})
    assert out == pt


def test_grouped_aggregation_sums_and_zero_filters():
    cat = VarCatalog()
    x = cat.fresh(VarKind.ERROR, "x")
    y = cat.fresh(VarKind.ERROR, "y")
    sig = Signature(("a", "b"), ("c",))
    t = STable(sig, {
        (1, 1): (LinExpr(1.0, {x: 2.0, y: 1.0}),),
        (1, 2): (LinExpr(2.0, {x: -2.0}),),
        (2, 1): (LinExpr(3.0, {y: 4.0}),),
    })
    q = Aggregate(RelRef("T"), ("a",), ("c",))
    out = eval_partitioned(q, {"T": from_inline(t)})
    # x cancels exactly within group a=1 and must be filtered out
    assert out.coeffs["c"][(1,)] == {y: 1.0}
    assert out.coeffs["c"][(2,)] == {y: 4.0}
    assert out.base.rows[(1,)] == (C(3),)
    assert not out.zero_rows()
    assert to_inline(out) == eval_symbolic(q, Instance({"T": t}, cat))


def test_derive_product_nonlinearity_detected():
    cat = VarCatalog()
    x = cat.fresh(VarKind.ERROR, "x")
    t = STable(Signature(("k",), ("v", "w")),
               {(1,): (LinExpr(1.0, {x: 1.0}), LinExpr(1.0, {x: 1.0}))})
    q = Derive(RelRef("T"), "p", BinOp("*", Attr("v"), Attr("w")))
    with pytest.raises(NonlinearError):
        eval_partitioned(q, {"T": from_inline(t)})


def test_csv_dump_writes_base_and_coefficient_files(districts, tmp_path):
    t, x1, x13 = districts
    files = dump_csv(from_inline(t), tmp_path, "districts")
    assert [f.rsplit("/", 1)[-1] for f in files] == [
        "districts_base.csv", "districts_cases.csv"]
    with open(files[0]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["district", "year", "cases"]
    assert rows[1][:2] == ["I", "2110"]
    with open(files[1]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["district", "year", "var", "coeff"]
    assert rows[1] == ["I", "2110", str(x1), "75.0"]


def test_backends_agree_exactly_on_random_trees():
    rng = random.Random(20260810)
    for _ in range(150):
        schema = rand_schema(rng)
        catalog = VarCatalog()
        inst = rand_instance(rng, schema, catalog)
        q = rand_query(rng, schema, depth=4)
        typecheck(q, schema)
        inline = eval_symbolic(q, inst)
        ptables = {n: from_inline(t) for n, t in inst.tables.items()}
        part = eval_partitioned(q, ptables)
        assert not part.zero_rows()
        assert to_inline(part) == inline  # canonical-form exact equality
