import math
import unittest

from hypothesis import given, settings
from hypothesis import strategies as st

from contactmae.errors import (DomainError, ExprSyntaxError,
                               JetOrderOverflow, UnboundVariable,
                               UnknownVariable)
from contactmae.exprlang import (Const, VarTable, diff, evaluate,
                                 free_variables, jet_name, multi_index,
                                 parse, substitute, to_string,
                                 total_derivative, total_derivative_multi)

finite = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False,
                   allow_infinity=False)


class ParseTest(unittest.TestCase):
    """Grammar, names and evaluation."""

    vt = VarTable(2)

    def test_precedence(self):
        e = parse("1 + 2 * 3 ^ 2", self.vt)
        self.assertEqual(evaluate(e, {}), 19.0)

    def test_unary_minus_binds_below_power(self):
        self.assertEqual(evaluate(parse("-2^2", self.vt), {}), -4.0)

    def test_functions_and_constants(self):
        e = parse("exp(x1) * cos(pi * x2)", self.vt)
        self.assertAlmostEqual(evaluate(e, {"x1": 1.0, "x2": 1.0}),
                               -math.e, places=12)

    def test_jet_names_are_canonical(self):
        e = parse("p21 + p12", self.vt)
        self.assertEqual(free_variables(e), frozenset({"p12"}))

    def test_alias(self):
        vt = VarTable(4, aliases={"x1b": "x3", "p1b": "p3"})
        e = parse("x1b * p1b", vt)
        self.assertEqual(free_variables(e), frozenset({"x3", "p3"}))

    def test_unknown_variable(self):
        with self.assertRaises(UnknownVariable):
            parse("x3 + 1", self.vt)
        with self.assertRaises(UnknownVariable):
            parse("p111", self.vt)

    def test_syntax_error_position(self):
        with self.assertRaises(ExprSyntaxError) as ctx:
            parse("x1 + * 2", self.vt)
        self.assertEqual(ctx.exception.position, 5)

    def test_empty_text(self):
        with self.assertRaises(ExprSyntaxError):
            parse("   ", self.vt)

    def test_unbound(self):
        with self.assertRaises(UnboundVariable):
            evaluate(parse("x1 + z", self.vt), {"x1": 1.0})

    def test_domain(self):
        with self.assertRaises(DomainError):
            evaluate(parse("log(x1)", self.vt), {"x1": -1.0})
        with self.assertRaises(DomainError):
            evaluate(parse("1 / x1", self.vt), {"x1": 0.0})

    def test_power_overflow(self):
        with self.assertRaises(DomainError):
            evaluate(parse("10.0^400", self.vt), {})
        with self.assertRaises(DomainError):
            evaluate(parse("x1^400", self.vt), {"x1": 10.0})

    def test_print_parse(self):
        text = "x1 - (x2 - z) / (p1 * p2) ^ 2"
        e = parse(text, self.vt)
        again = parse(to_string(e), self.vt)
        env = {"x1": 0.3, "x2": -1.2, "z": 0.7, "p1": 1.5, "p2": -0.4}
        self.assertAlmostEqual(evaluate(e, env), evaluate(again, env),
                               places=12)

    def test_substitute(self):
        e = substitute(parse("x1 * p1", self.vt), {"p1": 2.0})
        self.assertEqual(evaluate(e, {"x1": 3.0}), 6.0)

    def test_multi_index(self):
        self.assertEqual(multi_index("p312"), (1, 2, 3))
        self.assertEqual(jet_name((2, 1, 1)), "p112")


class DiffTest(unittest.TestCase):
    """Exact partial and total derivatives."""

    vt = VarTable(2, order=2, max_order=4)

    def test_constant_folding(self):
        e = diff(parse("3 * x1 + 2", self.vt), "x1")
        self.assertIsInstance(e, Const)
        self.assertEqual(e.value, 3.0)

    def test_absent_variable(self):
        self.assertIsInstance(diff(parse("x1", self.vt), "x2"), Const)

    @given(finite, finite)
    @settings(max_examples=50, deadline=None)
    def test_matches_finite_difference(self, a, b):
        e = parse("sin(x1 * x2) + exp(x1) / (2 + cos(x2)) + x1^3", self.vt)
        d = diff(e, "x1")
        h = 1e-6
        fd = (evaluate(e, {"x1": a + h, "x2": b})
              - evaluate(e, {"x1": a - h, "x2": b})) / (2 * h)
        self.assertAlmostEqual(evaluate(d, {"x1": a, "x2": b}), fd, places=5)

    def test_total_derivative(self):
        e = total_derivative(parse("z * p11", self.vt), 2, self.vt)
        env = {"z": 2.0, "p2": 3.0, "p11": 5.0, "p112": 7.0}
        self.assertEqual(evaluate(e, env), 3.0 * 5.0 + 2.0 * 7.0)

    def test_total_derivatives_commute(self):
        e = parse("x1 * p1 * p22 + z^2", self.vt)
        d12 = total_derivative_multi(e, (1, 2), self.vt)
        d21 = total_derivative_multi(e, (2, 1), self.vt)
        env = {name: 0.1 * (k + 1) for k, name in enumerate(
            ["x1", "x2", "z"] + [jet_name(i) for i in
                                 [(1,), (2,), (1, 1), (1, 2), (2, 2),
                                  (1, 1, 1), (1, 1, 2), (1, 2, 2),
                                  (2, 2, 2), (1, 1, 2, 2), (1, 2, 2, 2)]])}
        self.assertAlmostEqual(evaluate(d12, env), evaluate(d21, env),
                               places=12)

    def test_order_cap(self):
        vt = VarTable(2, order=2, max_order=2)
        with self.assertRaises(JetOrderOverflow):
            total_derivative(parse("p11", vt), 1, vt)


if __name__ == "__main__":
    unittest.main()
