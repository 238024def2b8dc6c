import random

import pytest
from hypothesis import given, settings, strategies as st

from relopt.errors import FormulaParseError, SchemaError
from relopt.formula import (
    And,
    Atom,
    Const,
    Not,
    Or,
    classify,
    evaluate_body,
    parse_formula,
    print_expr,
)
from relopt.structure import load_structure

from oracles import random_instance


def test_parse_two_opt_vars():
    f = parse_formula("max x1,x2 . count y . E(x1,y) & E(x2,y)")
    assert f.kind == "max"
    assert f.k == 2 and f.ell == 1
    assert f.body == And(Atom("E", ("x1", "y")), Atom("E", ("x2", "y")))


def test_parse_negation():
    f = parse_formula("min x . count y . !E(x,y)")
    assert f.kind == "min"
    assert f.body == Not(Atom("E", ("x", "y")))


def test_parse_keeps_constants_literal():
    f = parse_formula("max x . count y . E(y,x) | true")
    assert f.body == Or(Atom("E", ("y", "x")), Const(True))
    assert str(f) == "max x . count y . E(y,x) | true"


def test_parse_errors():
    with pytest.raises(FormulaParseError):
        parse_formula("max x . count y . E(x,")
    with pytest.raises(FormulaParseError):
        parse_formula("max x . count y . E(x,z)")  # unbound z
    with pytest.raises(FormulaParseError):
        parse_formula("max x,x . count y . E(x,y)")  # duplicate variable
    with pytest.raises(FormulaParseError):
        parse_formula("sum x . count y . E(x,y)")


def test_precedence_and_parens():
    f = parse_formula("max x . count y . E(x,y) & F(x,y) | G(x,y)")
    assert isinstance(f.body, Or)
    g = parse_formula("max x . count y . E(x,y) & (F(x,y) | G(x,y))")
    assert isinstance(g.body, And)


def _expr_strategy():
    atom = st.sampled_from(
        [Atom("E", ("x", "y")), Atom("F", ("y", "x")), Atom("P", ("x",)), Const(True), Const(False)]
    )
    return st.recursive(
        atom,
        lambda sub: st.one_of(
            st.builds(Not, sub),
            st.builds(And, sub, sub),
            st.builds(Or, sub, sub),
        ),
        max_leaves=12,
    )


@given(_expr_strategy())
@settings(max_examples=200, deadline=None)
def test_print_parse_fixpoint(expr):
    from relopt.formula import parse_expr

    printed = print_expr(expr)
    reparsed = parse_expr(printed)
    assert print_expr(reparsed) == printed
    # printing strips only redundant parentheses, so semantics must agree
    from relopt.formula import atoms_of, eval_expr_table

    atoms = list(dict.fromkeys(atoms_of(expr)))
    rng = random.Random(0)
    for _ in range(8):
        vals = {a: bool(rng.getrandbits(1)) for a in atoms}
        assert eval_expr_table(expr, vals) == eval_expr_table(reparsed, vals)


def test_classify_sparse_max_ip_profile():
    s = load_structure("rel E 2\nE a y\n")
    f = parse_formula("max x1,x2 . count y . E(x1,y) & E(x2,y)")
    p = classify(f, s)
    assert (p.k, p.ell) == (2, 1)
    assert not p.has_hyper
    assert p.cross_atoms == ()
    assert p.r == 1


def test_classify_hyper_flag():
    s = load_structure("rel R 3\nR a b c\n")
    f = parse_formula("max x1,x2 . count y . R(x1,x2,y)")
    assert classify(f, s).has_hyper


def test_classify_cross_atoms_and_r():
    s = load_structure("rel E 2\nrel F 2\nE a b\nF a y\n")
    f = parse_formula("max x1,x2 . count y . E(x1,x2) & F(x1,y)")
    p = classify(f, s)
    assert p.cross_atoms == (Atom("E", ("x1", "x2")),)
    assert p.r == 1
    assert not p.has_hyper


def test_classify_repeated_variable_atom_is_not_cross():
    s = load_structure("rel E 2\nE a a\n")
    f = parse_formula("max x1,x2 . count y . E(x1,x1)")
    assert classify(f, s).cross_atoms == ()


def test_classify_errors():
    s = load_structure("rel E 2\nE a b\n")
    with pytest.raises(SchemaError):
        classify(parse_formula("max x . count y . F(x,y)"), s)
    with pytest.raises(SchemaError):
        classify(parse_formula("max x . count y . E(x,y,y)"), s)


def test_classify_invariant_under_renaming():
    s = load_structure("rel E 2\nrel P 1\nE a b\nP a\n")
    f1 = parse_formula("max x1,x2 . count y . E(x1,y) & P(x2)")
    f2 = parse_formula("max u,v . count w . E(u,w) & P(v)")
    p1, p2 = classify(f1, s), classify(f2, s)
    assert (p1.k, p1.ell, p1.has_hyper, p1.r) == (p2.k, p2.ell, p2.has_hyper, p2.r)
    assert len(p1.cross_atoms) == len(p2.cross_atoms)


def test_evaluate_body_basics():
    s = load_structure("rel E 2\nE a b\n")
    f = parse_formula("max x . count y . E(x,y)")
    a, b = s.index("a"), s.index("b")
    assert evaluate_body(f, s, {"x": a, "y": b})
    assert not evaluate_body(f, s, {"x": b, "y": a})


def test_evaluate_body_empty_relation_false():
    s = load_structure("rel E 2\nrel P 1\nP a\n")
    a = s.index("a")
    f = parse_formula("max x . count y . E(x,y)")
    assert not evaluate_body(f, s, {"x": a, "y": a})
    g = parse_formula("max x . count y . E(x,y) | P(x)")
    assert evaluate_body(g, s, {"x": a, "y": a})


def test_evaluate_matches_truth_table_oracle():
    from relopt.formula import atoms_of, eval_expr_table

    rng = random.Random(5)
    for _ in range(50):
        structure, formula = random_instance(rng, k=2, ell=1, n_objects=5)
        atoms = list(dict.fromkeys(atoms_of(formula.body)))
        all_vars = formula.opt_vars + formula.count_vars
        for _ in range(10):
            asn = {v: rng.randrange(structure.n) for v in all_vars}
            direct = evaluate_body(formula, structure, asn)
            vals = {
                a: tuple(asn[v] for v in a.args)
                in structure.relation(a.pred).records
                for a in atoms
            }
            assert direct == eval_expr_table(formula.body, vals)


def test_evaluate_distributes():
    rng = random.Random(6)
    for _ in range(30):
        structure, formula = random_instance(rng, k=2, ell=1, n_objects=5)
        e = formula.body
        all_vars = formula.opt_vars + formula.count_vars
        asn = {v: rng.randrange(structure.n) for v in all_vars}
        from relopt.formula import eval_expr

        assert eval_expr(Not(e), structure, asn) == (not eval_expr(e, structure, asn))
        assert eval_expr(And(e, e), structure, asn) == eval_expr(e, structure, asn)
        assert eval_expr(Or(e, Const(False)), structure, asn) == eval_expr(
            e, structure, asn
        )
