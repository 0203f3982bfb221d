import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualwheel.errors import DomainError, ParseError
from dualwheel.exprdsl import (
    Node,
    eval_utility,
    format_expr,
    gradient,
    parse_utility,
)


class TestParse:
    def test_cobb_douglas_tree(self):
        u = parse_utility("q1^0.5 * q2^0.5")
        assert u.root.kind == "mul"
        left, right = u.root.children
        assert left.kind == "pow" and left.children[0].index == 1
        assert right.kind == "pow" and right.children[1].value == 0.5
        assert u.n_goods == 2

    def test_quasilinear_tree(self):
        u = parse_utility("q1 + ln(q2)")
        assert u.root.kind == "add"
        assert u.root.children[1].kind == "ln"
        assert u.n_goods == 2

    def test_double_star_rejected_at_offset(self):
        with pytest.raises(ParseError) as err:
            parse_utility("q1 ** q2")
        assert err.value.position == 3

    @pytest.mark.parametrize(
        "text",
        ["", "   ", "q1 +", "(q1+q2", "ln q2", "q1^", "2..5*q2", "q1 $ q2"],
    )
    def test_malformed(self, text):
        with pytest.raises(ParseError):
            parse_utility(text)

    def test_index_out_of_range(self):
        with pytest.raises(DomainError):
            parse_utility("q1*q5")

    def test_single_good_rejected(self):
        with pytest.raises(DomainError):
            parse_utility("q1^2")

    def test_power_right_associative(self):
        u = parse_utility("q1^q2^2 + q2")
        pow_node = u.root.children[0]
        assert pow_node.kind == "pow"
        assert pow_node.children[1].kind == "pow"  # q2^2 grouped right

    def test_unary_minus_binds_outside_power(self):
        u = parse_utility("-q1^2 + q2")
        neg = u.root.children[0]
        assert neg.kind == "neg"
        assert neg.children[0].kind == "pow"


class TestEval:
    @pytest.mark.parametrize(
        "text, q, expected",
        [
            ("q1*q2", (1, 1), 1.0),
            ("q1^0.5*q2^0.5", (4, 1), 2.0),
            ("q1+ln(q2)", (5, 2), 5 + math.log(2)),
            ("q1^2+q2^2", (1, 2), 5.0),
            ("sqrt(q1*q2)", (4, 9), 6.0),
            ("exp(q1)-q2", (0, 1), 0.0),
            ("q1/q2", (6, 3), 2.0),
            ("(0.5*q1^-1.0+0.5*q2^-1.0)^-1.0", (1, 1), 1.0),
        ],
    )
    def test_values(self, text, q, expected):
        assert eval_utility(parse_utility(text), q) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize(
        "text, q",
        [
            ("q1+ln(q2)", (1, 0)),       # ln(0)
            ("q1/q2", (1, 0)),           # division by zero
            ("q1^-1+q2", (0, 1)),        # 0^negative
            ("sqrt(q1-q2)", (1, 2)),     # sqrt of negative
        ],
    )
    def test_domain_errors(self, text, q):
        with pytest.raises(DomainError):
            eval_utility(parse_utility(text), q)

    def test_wrong_dimension(self):
        with pytest.raises(DomainError):
            eval_utility(parse_utility("q1*q2"), (1, 2, 3))


class TestGradient:
    @pytest.mark.parametrize(
        "text, q, expected",
        [
            ("q1*q2", (2, 3), (3, 2)),
            ("q1+ln(q2)", (5, 2), (1, 0.5)),
            ("q1^0.3*q2^0.7", (1, 1), (0.3, 0.7)),
        ],
    )
    def test_known_gradients(self, text, q, expected):
        got = gradient(parse_utility(text), q)
        assert np.allclose(got, expected, rtol=1e-12)

    @pytest.mark.parametrize(
        "text",
        [
            "q1^0.3*q2^0.7",
            "q1+ln(q2)",
            "q1^2+q2^2",
            "(0.5*q1^0.5+0.5*q2^0.5)^2.0",
            "sqrt(q1)*exp(q2/10)",
        ],
    )
    def test_matches_central_differences(self, text):
        # independent cross-check of the symbolic rules
        u = parse_utility(text)
        q = np.array([1.3, 0.7])
        h = 1e-6
        sym = u.gradient(q)
        for i in range(2):
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            fd = (u.value(qp) - u.value(qm)) / (2 * h)
            assert sym[i] == pytest.approx(fd, rel=1e-5)

    def test_hessian_symmetry(self):
        u = parse_utility("q1^0.3*q2^0.7")
        h = u.hessian([2.0, 3.0])
        assert h[0, 1] == pytest.approx(h[1, 0], rel=1e-12)


class TestFormat:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("q1*q2", "q1*q2"),
            ("(q1)*q2", "q1*q2"),
            ("q1^0.5*q2^0.5", "q1^0.5*q2^0.5"),
            ("q1+ln(q2)", "q1+ln(q2)"),
            ("(q1+q2)^2", "(q1+q2)^2"),
            ("q1-(q2-q1)", "q1-(q2-q1)"),
        ],
    )
    def test_known_forms(self, text, expected):
        assert format_expr(parse_utility(text)) == expected

    def test_round_trip_structural(self):
        for text in ("q1^0.3*q2^0.7", "q1+ln(q2)", "-q1^2+q2", "q1/(q2+1)*sqrt(q1)"):
            u = parse_utility(text)
            again = parse_utility(format_expr(u))
            assert again.root == u.root


# grammar-directed random expressions for the round-trip property
_leaf = st.one_of(
    st.sampled_from(["q1", "q2", "q3"]),
    st.floats(min_value=0.001, max_value=99.0, allow_nan=False).map(
        lambda v: f"{round(v, 3)}"
    ),
)


def _exprs(depth: int):
    if depth == 0:
        return _leaf
    sub = _exprs(depth - 1)
    return st.one_of(
        _leaf,
        st.tuples(sub, st.sampled_from("+-*/"), sub).map(lambda t: f"({t[0]}{t[1]}{t[2]})"),
        st.tuples(sub, st.floats(min_value=0.1, max_value=3.0).map(lambda v: round(v, 2))).map(
            lambda t: f"({t[0]})^{t[1]}"
        ),
        sub.map(lambda s: f"ln({s})"),
        sub.map(lambda s: f"sqrt({s})"),
        sub.map(lambda s: f"-({s})"),
    )


@settings(max_examples=150, deadline=None)
@given(_exprs(3))
def test_format_parse_round_trip(text):
    text = f"({text})+q1+q2"  # ensure at least two goods
    u = parse_utility(text)
    assert parse_utility(format_expr(u)).root == u.root
