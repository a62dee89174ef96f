import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from diffarb import dsl
from diffarb.errors import ArityError, BindError, DomainError, ParseError, UnknownIdentifier


def ev(src, t=0.0, x=(1.0,)):
    return dsl.eval_expr(dsl.parse_expr(src), t, np.asarray(x, dtype=float))


@pytest.mark.parametrize(
    "src,expected",
    [
        ("1 + 2 * 3", 7.0),
        ("(1 + 2) * 3", 9.0),
        ("2 * 3 ^ 2", 18.0),
        ("-2 ^ 2", -4.0),          # unary minus binds looser than ^
        ("2 ^ -2", 0.25),          # sign allowed in exponent position
        ("2 ^ 3 ^ 2", 512.0),      # right-associative
        ("10 / 4 / 5", 0.5),       # left-associative
        ("1 - 2 - 3", -4.0),
        (".5 + 1e1", 10.5),
        ("2.5E+2", 250.0),
        ("min(3, max(1, 2))", 2.0),
        ("pow(2, 10)", 1024.0),
        ("abs(-3.5)", 3.5),
        ("exp(0)", 1.0),
        ("log(exp(2))", 2.0),
        ("sqrt(16)", 4.0),
    ],
)
def test_arithmetic(src, expected):
    assert_allclose(ev(src), expected)


def test_variables_and_norm():
    x = np.array([3.0, -4.0])
    assert ev("x1", x=x) == 3.0
    assert ev("x2", x=x) == -4.0
    assert_allclose(ev("norm", x=x), 5.0)
    assert ev("t", t=2.5, x=x) == 2.5


def test_whitespace_insensitive():
    a = dsl.parse_expr("1+2*x1")
    b = dsl.parse_expr("  1 +  2*x1 ")
    assert a == b


def test_vectorized_eval_and_broadcast():
    e = dsl.parse_expr("x1 ^ 2 + t")
    X = np.array([[1.0], [2.0], [3.0]])
    assert_allclose(dsl.eval_expr(e, 1.0, X), [2.0, 5.0, 10.0])
    # constant expressions broadcast to the batch length
    c = dsl.parse_expr("7")
    assert_allclose(dsl.eval_expr(c, 0.0, X), [7.0, 7.0, 7.0])


def test_norm_vectorized():
    e = dsl.parse_expr("norm ^ 2")
    X = np.array([[3.0, 4.0], [0.0, 2.0]])
    assert_allclose(dsl.eval_expr(e, 0.0, X), [25.0, 4.0])


@pytest.mark.parametrize("src", ["1 +", "(1", "min(1,)", ")", "1 2", "", "1..2", "min(1 2)"])
def test_parse_errors_have_position(src):
    with pytest.raises(ParseError) as exc:
        dsl.parse_expr(src)
    assert exc.value.position >= 0
    assert exc.value.expected


def test_bad_character_position():
    with pytest.raises(ParseError) as exc:
        dsl.parse_expr("1 + $")
    assert exc.value.position == 4


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        dsl.parse_expr("foo(x1)")
    with pytest.raises(UnknownIdentifier):
        dsl.parse_expr("x0")        # state indices start at 1
    with pytest.raises(UnknownIdentifier):
        dsl.parse_expr("y + 1")


@pytest.mark.parametrize("src", ["min(1)", "max(1, 2, 3)", "exp(1, 2)", "pow(2)"])
def test_arity_errors(src):
    with pytest.raises(ArityError):
        dsl.parse_expr(src)


@pytest.mark.parametrize(
    "src,x",
    [
        ("1 / x1", [0.0]),
        ("x1 ^ 0.5", [-2.0]),      # fractional power of a negative
        ("x1 ^ -1", [0.0]),
        ("sqrt(x1)", [-1.0]),
        ("log(x1)", [0.0]),
        ("exp(x1)", [1000.0]),     # overflow
    ],
)
def test_domain_errors_carry_witness(src, x):
    with pytest.raises(DomainError) as exc:
        ev(src, t=0.5, x=x)
    assert exc.value.t == 0.5
    assert_allclose(exc.value.x, x)


def test_domain_error_batch_reports_offending_row():
    e = dsl.parse_expr("log(x1)")
    X = np.array([[1.0], [2.0], [-3.0]])
    with pytest.raises(DomainError) as exc:
        dsl.eval_expr(e, 0.0, X)
    assert_allclose(exc.value.x, [-3.0])


def test_integer_exponent_of_negative_base_is_fine():
    assert ev("x1 ^ 3", x=[-2.0]) == -8.0
    assert ev("x1 ^ -2", x=[-2.0]) == 0.25


def test_free_variables():
    e = dsl.parse_expr("t * x2 + norm")
    assert dsl.free_variables(e) == {"t", "x2", "norm"}


def test_bind_state_expr_rejects_out_of_range_and_scalar_vars():
    with pytest.raises(BindError):
        dsl.bind_state_expr(dsl.parse_expr("x3"), 2)
    with pytest.raises(BindError):
        dsl.bind_state_expr(dsl.parse_expr("z + 1"), 2)
    with pytest.raises(BindError):
        dsl.bind_state_expr(dsl.parse_expr("rho"), 2)
    dsl.bind_state_expr(dsl.parse_expr("x2 + t + norm"), 2)


def test_bind_scalar_expr():
    with pytest.raises(BindError):
        dsl.bind_scalar_expr(dsl.parse_expr("x1"), "z")
    with pytest.raises(BindError):
        dsl.bind_scalar_expr(dsl.parse_expr("rho"), "z")
    dsl.bind_scalar_expr(dsl.parse_expr("z ^ 2"), "z")


def test_scalar_function():
    f = dsl.scalar_function(dsl.parse_expr("z ^ 2 + 1"), "z")
    assert f(3.0) == 10.0
    assert_allclose(f(np.array([1.0, 2.0])), [2.0, 5.0])


def test_print_round_trip_examples():
    for src in ["min(abs(x1)^0.5, 1)", "-(t + norm)/2", "2^-3 * x1", "exp(-x1^2/2)"]:
        e = dsl.parse_expr(src)
        assert dsl.parse_expr(dsl.print_expr(e)) == e


# random expression trees: printing then parsing must reproduce the tree
_leaf = st.one_of(
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False).map(dsl.Lit),
    st.sampled_from([dsl.Var("t"), dsl.Var("x1"), dsl.Var("x2"), dsl.Var("norm")]),
)


def _branch(children):
    unary = children.map(dsl.Neg)
    binop = st.tuples(st.sampled_from("+-*/^"), children, children).map(
        lambda s: dsl.BinOp(s[0], s[1], s[2])
    )
    call1 = st.tuples(st.sampled_from(["exp", "log", "sqrt", "abs"]), children).map(
        lambda s: dsl.Call(s[0], (s[1],))
    )
    call2 = st.tuples(st.sampled_from(["min", "max", "pow"]), children, children).map(
        lambda s: dsl.Call(s[0], (s[1], s[2]))
    )
    return st.one_of(unary, binop, call1, call2)


@given(st.recursive(_leaf, _branch, max_leaves=12))
def test_print_parse_round_trip(expr):
    assert dsl.parse_expr(dsl.print_expr(expr)) == expr


@given(st.floats(min_value=1e-300, max_value=1e300, allow_nan=False))
def test_number_formatting_round_trip(v):
    printed = dsl.print_expr(dsl.Lit(v))
    assert dsl.eval_expr(dsl.parse_expr(printed), 0.0, np.zeros(1)) == v
