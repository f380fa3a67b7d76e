from fractions import Fraction

from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gameform.engine import Engine, substitute, unify
from gameform.games import CLASSIC, GameClass, PayoffMatrix, classify
from gameform.parser import parse_program, parse_term
from gameform.terms import Atom, Compound, Number, Var, format_term

# ---- terms


atoms = st.sampled_from(["a", "foo", "C", "D", "hello world", "it's", "[]", "x_1", "+", "\\+"]).map(Atom)
# only values that have a literal spelling: integers and terminating decimals
numbers = st.one_of(
    st.integers(-1000, 1000),
    st.tuples(st.integers(-10000, 10000), st.sampled_from([2, 4, 5, 8, 10, 20, 100])).map(
        lambda p: Fraction(*p)
    ),
).map(lambda v: Number(Fraction(v)))
variables = st.sampled_from(["X", "Y", "Zed", "_A"]).map(lambda n: Var(n, 0))
functors = st.sampled_from(["f", "g", "choice", "do", "+", "-", "*", "=", "is", "<", ",", ";", "->", "Quoted F"])

terms = st.recursive(
    st.one_of(atoms, numbers, variables),
    lambda inner: st.builds(
        lambda f, args: Compound(f, tuple(args)),
        functors,
        st.lists(inner, min_size=1, max_size=3),
    ),
    max_leaves=12,
)


@settings(max_examples=300, deadline=None)
@given(terms)
def test_write_then_read_is_identity(t):
    text = format_term(t)
    assert format_term(parse_term(text)) == text


@settings(max_examples=200, deadline=None)
@given(terms)
def test_clause_round_trip(t):
    fact = Compound("fact", (t,))
    src = format_term(fact) + ".\n"
    program, report = parse_program(src)
    assert report.ok, (src, report.errors)
    assert parse_program(program.to_source())[0] == program


ground = st.recursive(
    st.one_of(atoms, numbers),
    lambda inner: st.builds(lambda f, a: Compound(f, tuple(a)), st.sampled_from(["f", "g"]), st.lists(inner, min_size=1, max_size=2)),
    max_leaves=6,
)
open_terms = st.recursive(
    st.one_of(atoms, st.sampled_from([Var("X", 1), Var("Y", 2), Var("Z", 3)])),
    lambda inner: st.builds(lambda f, a: Compound(f, tuple(a)), st.sampled_from(["f", "g"]), st.lists(inner, min_size=1, max_size=2)),
    max_leaves=6,
)


@settings(max_examples=300, deadline=None)
@given(open_terms, open_terms)
def test_unifier_makes_terms_equal(a, b):
    env = unify(a, b)
    if env is not None:
        assert substitute(a, env) == substitute(b, env)
    assert (env is None) == (unify(b, a) is None)


@settings(max_examples=200, deadline=None)
@given(ground)
def test_ground_term_unifies_with_itself_only_trivially(t):
    assert unify(t, t) == {}


# ---- arithmetic agrees with exact rationals

exprs = st.recursive(
    st.integers(-20, 20),
    lambda inner: st.tuples(st.sampled_from(["+", "-", "*"]), inner, inner),
    max_leaves=8,
)


def render(e):
    if isinstance(e, int):
        return f"({e})"
    op, a, b = e
    return f"({render(a)} {op} {render(b)})"


def value(e):
    if isinstance(e, int):
        return e
    op, a, b = e
    x, y = value(a), value(b)
    return {"+": x + y, "-": x - y, "*": x * y}[op]


@settings(max_examples=200, deadline=None)
@given(exprs)
def test_is_matches_python(e):
    (sol,) = Engine(parse_program("")[0]).solve(f"X is {render(e)}")
    assert sol.bindings["X"] == Number(value(e))


# ---- classifier

payoff = st.integers(-50, 50)


def matrix(vals, labels=("C", "D"), cols=("C", "D")):
    it = iter(vals)
    return PayoffMatrix.from_cells({(r, c): (next(it), next(it)) for r in labels for c in cols})


@settings(max_examples=500, deadline=None)
@given(st.lists(payoff, min_size=8, max_size=8))
def test_pd_hd_sh_are_mutually_exclusive_on_generic_matrices(vals):
    assume(len(set(vals[0::2])) == 4 and len(set(vals[1::2])) == 4)
    found = classify(matrix(vals))
    assert len(found & {GameClass.PRISONERS_DILEMMA, GameClass.HAWK_DOVE, GameClass.STAG_HUNT}) <= 1


@settings(max_examples=500, deadline=None)
@given(st.lists(payoff, min_size=8, max_size=8), st.booleans(), st.booleans())
def test_label_invariance(vals, flip_rows, flip_cols):
    m = matrix(vals)
    rows = ["r_b", "r_a"] if flip_rows else ["r_a", "r_b"]
    cols = ["k_b", "k_a"] if flip_cols else ["k_a", "k_b"]
    rename_r = dict(zip(["C", "D"], ["r_a", "r_b"]))
    rename_c = dict(zip(["C", "D"], ["k_a", "k_b"]))
    cells = {(rename_r[r], rename_c[c]): v for (r, c), v in m.cells.items()}
    renamed = PayoffMatrix(rows, cols, cells)
    assert classify(renamed) == classify(m)


def test_each_classic_class_is_reachable():
    from helpers import TABLES

    for cls, (_, table) in TABLES.items():
        assert cls in classify(PayoffMatrix.from_cells(table))
    assert set(TABLES) == set(CLASSIC)
