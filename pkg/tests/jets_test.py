import json
import unittest
from math import comb

from hypothesis import given
from hypothesis import strategies as st

from contactmae.errors import CharacteristicDatum, NewtonDivergence
from contactmae.exprlang import VarTable, parse
from contactmae.jets import (JetTable, NormalizedCauchyData, check_table,
                            fiber_dimension, formal_integrability_check,
                            formal_solve, is_noncharacteristic,
                            prolonged_fiber_system, taylor_table)


class FiberDimensionTest(unittest.TestCase):

    def test_small_values(self):
        self.assertEqual(fiber_dimension(1, 2), 2)
        self.assertEqual(fiber_dimension(2, 2), 2)
        self.assertEqual(fiber_dimension(1, 3), 7)

    @given(st.integers(min_value=1, max_value=6),
           st.integers(min_value=2, max_value=8))
    def test_unknowns_minus_equations(self, k, n):
        self.assertEqual(fiber_dimension(k, n) + comb(n + k - 1, k),
                         comb(n + k + 1, k + 2))


class FormalSolveTest(unittest.TestCase):
    """Jets of formal solutions through normalised Cauchy data."""

    def test_wave(self):
        vt = VarTable(2)
        F = parse("p22 - p11", vt)
        table = formal_solve(F, NormalizedCauchyData(parse("x1", vt)), 5, 2)
        self.assertTrue(table.is_complete())
        for name, value in table.values.items():
            expected = 1.0 if name == "p12" else 0.0
            self.assertAlmostEqual(value, expected, delta=1e-12, msg=name)
        self.assertLessEqual(check_table(F, table), 1e-12)
        exact = taylor_table(parse("x1 * x2", vt), 5, 2)
        self.assertEqual(exact.values.keys(), table.values.keys())

    def test_goursat_cross_check(self):
        vt = VarTable(4)
        F = parse("(p13 + exp(x1 + x3)) * (p24 + p44) - p14 * (p23 + p34)",
                  vt)
        table = formal_solve(F, NormalizedCauchyData(parse("-x1", vt)), 3, 4)
        self.assertLessEqual(check_table(F, table), 1e-9)
        for name, value in table.values.items():
            expected = -1.0 if name == "p14" else 0.0
            self.assertAlmostEqual(value, expected, delta=1e-9, msg=name)
        self.assertTrue(is_noncharacteristic(F, table.jet_point()))

    def test_nonlinear_top(self):
        vt = VarTable(2)
        F = parse("p22^2 - 4", vt)
        table = formal_solve(F, NormalizedCauchyData(parse("0", vt),
                                                     seed=1.0), 3, 2)
        self.assertAlmostEqual(table.coefficient((2, 2)), 2.0, places=12)
        table = formal_solve(F, NormalizedCauchyData(parse("0", vt),
                                                     seed=-1.0), 3, 2)
        self.assertAlmostEqual(table.coefficient((2, 2)), -2.0, places=12)

    def test_characteristic(self):
        vt = VarTable(2)
        with self.assertRaises(CharacteristicDatum):
            formal_solve(parse("p11", vt),
                         NormalizedCauchyData(parse("x1", vt)), 2, 2)
        with self.assertRaises(CharacteristicDatum):
            formal_solve(parse("p11", vt),
                         NormalizedCauchyData(parse("x1", vt)), 3, 2)

    def test_no_root(self):
        vt = VarTable(2)
        with self.assertRaises(NewtonDivergence):
            formal_solve(parse("p22^2 + 1", vt),
                         NormalizedCauchyData(parse("0", vt)), 2, 2)

    def test_order(self):
        vt = VarTable(2)
        with self.assertRaises(ValueError):
            formal_solve(parse("p22", vt),
                         NormalizedCauchyData(parse("0", vt)), 1, 2)


class ProlongationTest(unittest.TestCase):
    """Linear systems of the prolonged equation."""

    def setUp(self):
        self.vt = VarTable(3)
        self.F = parse("p33 - p11 - p22 + z * p12", self.vt)
        self.table = formal_solve(
            self.F, NormalizedCauchyData(parse("x1 + x2^2", self.vt)), 4, 3)

    def test_free_parameters(self):
        for k in (1, 2):
            system = prolonged_fiber_system(self.F, self.table, k)
            self.assertEqual(len(system.unknowns), 10 if k == 1 else 15)
            self.assertEqual(system.free_parameters(),
                             fiber_dimension(k, 3))

    def test_table_solves_system(self):
        system = prolonged_fiber_system(self.F, self.table, 1)
        x = [self.table.values[name] for name in system.unknowns]
        residual = system.matrix @ x - system.rhs
        self.assertLessEqual(max(abs(residual)), 1e-10)

    def test_incomplete_table(self):
        with self.assertRaises(ValueError):
            prolonged_fiber_system(self.F, JetTable(3, 2), 1)
        with self.assertRaises(ValueError):
            prolonged_fiber_system(self.F, self.table, 0)


class TableTest(unittest.TestCase):

    def test_taylor_table(self):
        vt = VarTable(2)
        u = parse("exp(x1) * sin(x2) + 3", vt)
        table = taylor_table(u, 3, 2)
        self.assertEqual(table.z, 3.0)
        self.assertAlmostEqual(table.coefficient((2,)), 1.0)
        self.assertAlmostEqual(table.coefficient((1, 1, 2)), 1.0)
        self.assertAlmostEqual(table.coefficient((2, 2, 2)), -1.0)
        self.assertEqual(table.coefficient((1, 1)), 0.0)
        self.assertLessEqual(
            check_table(parse("p11 + p22", vt),
                        taylor_table(parse("x1^2 - x2^2 + x1 * x2", vt),
                                     4, 2)), 1e-12)
        self.assertGreater(
            check_table(parse("p11 + p22", vt),
                        taylor_table(parse("x1^2", vt), 2, 2)), 1.0)

    def test_json(self):
        vt = VarTable(2)
        table = taylor_table(parse("x1 * x2", vt), 2, 2)
        loaded = json.loads(table.to_json())
        self.assertEqual(loaded["p12"], 1.0)
        self.assertEqual(loaded["z"], 0.0)

    def test_integrability(self):
        vt = VarTable(2)
        point = taylor_table(parse("x1 * x2", vt), 2, 2).jet_point()
        self.assertTrue(formal_integrability_check(parse("p11 - p22", vt),
                                                   [point]))
        self.assertFalse(formal_integrability_check(parse("z", vt),
                                                    [point]))


if __name__ == "__main__":
    unittest.main()
