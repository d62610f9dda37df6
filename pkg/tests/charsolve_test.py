import os
import tempfile
import unittest

import numpy as np

from contactmae.charsolve import (FlowConfig, MongeConfig, RelationConfig,
                                  compare_closed_form, find_relation, flow,
                                  mae_residual_on_surface, monge_solve,
                                  solve_first_order)
from contactmae.contact import ChartPoint, cauchy_datum, hamiltonian_field
from contactmae.errors import (CharacteristicDatum, DatumNotOnEquation,
                               NoRelationFound, NonGraphicalPatch,
                               NonIntegralSurface)
from contactmae.exprlang import (Const, VarTable, evaluate, free_variables,
                                 parse)
from contactmae.mae import BField


class WorkedExample:
    """Four variables, the pairs (x1, x2) and (x1b, x2b) = (x3, x4)."""

    vt = VarTable(4, aliases={"x1b": "x3", "x2b": "x4"})

    def parse(self, text):
        return parse(text, self.vt)

    def datum(self):
        return cauchy_datum(
            self.vt,
            [self.parse(e) for e in ("t1", "t2", "t3", "exp(t2)")],
            self.parse("exp(t1 + t3)"),
            [self.parse(e) for e in ("exp(t1 + t3)", "-t1 * exp(t2)",
                                     "exp(t1 + t3)", "t1")],
            name="worked")

    def equation(self):
        return self.parse("p13 * p24 - p14 * p23")

    def closed_form(self):
        return self.parse("exp(x1 + x1b) - x1 * exp(x2) + x1 * x2b")


class MongeTest(WorkedExample, unittest.TestCase):
    """Second-order Cauchy problem through an intermediate integral."""

    def test_worked_example(self):
        datum = self.datum()
        f_list = [self.parse(e) for e in ("x1", "x2", "p1", "p2")]
        cfg = MongeConfig(flow=FlowConfig(dt=0.05, t_span=(0.0, 0.5)),
                          relation=RelationConfig(degree=2,
                                                  exp_features=True))
        result = monge_solve(self.equation(), f_list, datum, datum.grid(5),
                             cfg, np.random.default_rng(0))
        self.assertIn(result.side, ("D", "Dperp"))
        self.assertEqual(result.relation.degree, 2)
        self.assertLessEqual(result.relation.residual, 1e-8)
        self.assertLessEqual(compare_closed_form(result.surface,
                                                 self.closed_form()), 1e-5)
        tangent = mae_residual_on_surface(result.surface, self.equation(),
                                          method="tangent")
        self.assertLessEqual(tangent.max_residual, 1e-6)
        report = result.to_dict()
        self.assertIn("intermediate_integral", report)
        self.assertIn("mae_residual_tangent", report)

    def test_worked_example_drift(self):
        datum = self.datum()
        f_list = [self.parse(e) for e in ("x1", "x2", "p1", "p2")]
        f_perp = [self.parse(e) for e in ("x1b", "x2b", "p3", "p4")]
        cfg = MongeConfig(flow=FlowConfig(dt=1e-3, t_span=(0.0, 0.5),
                                          save_every=50),
                          relation=RelationConfig(degree=2,
                                                  exp_features=True))
        result = monge_solve(self.equation(), f_list, datum, datum.grid(5),
                             cfg, np.random.default_rng(1), f_perp)
        drift = result.diagnostics["drift"]
        self.assertEqual(len(drift), 5)
        self.assertEqual(len(result.diagnostics["drift_functions"]), 5)
        self.assertLessEqual(max(drift), 1e-7)
        self.assertLessEqual(result.diagnostics["theta_residual"], 1e-6)
        self.assertLessEqual(compare_closed_form(result.surface,
                                                 self.closed_form()), 1e-5)

    def test_relations_of_both_sides_agree(self):
        datum = self.datum()
        cfg = MongeConfig(flow=FlowConfig(dt=0.05, t_span=(0.0, 0.5)),
                          relation=RelationConfig(degree=2,
                                                  exp_features=True))
        results = []
        for names in (("x1", "x2", "p1", "p2"), ("x1b", "x2b", "p3", "p4")):
            f_list = [self.parse(e) for e in names]
            results.append(monge_solve(self.equation(), f_list, datum,
                                       datum.grid(5), cfg,
                                       np.random.default_rng(2)))
        first, second = results
        self.assertNotEqual(first.side, second.side)
        self.assertNotEqual(free_variables(first.intermediate_integral),
                            free_variables(second.intermediate_integral))
        # each surface lies on the other intermediate integral
        for surface, other in ((first.surface, second), (second.surface,
                                                         first)):
            values = evaluate(other.intermediate_integral, surface.env())
            self.assertLessEqual(np.max(np.abs(values)), 1e-5)
            self.assertLessEqual(compare_closed_form(surface,
                                                     self.closed_form()),
                                 1e-5)

    def test_rk4_order(self):
        datum = self.datum()
        f = self.parse("p2 + x1 * exp(x2)")
        errors = []
        for dt in (0.1, 0.05):
            surface = solve_first_order(f, datum,
                                        FlowConfig(dt=dt, t_span=(0.0, 1.0)),
                                        datum.grid(3))
            errors.append(compare_closed_form(surface, self.closed_form()))
        self.assertGreaterEqual(errors[0] / errors[1], 8.0)

    def test_flat_datum(self):
        vt = VarTable(2)
        B = BField([[Const(0.0)] * 2] * 2, vt)
        datum = cauchy_datum(vt, [parse("t1", vt), parse("0", vt)],
                             parse("0", vt), [parse("0", vt)] * 2,
                             name="flat")
        f_list = [parse("p1", vt), parse("p2", vt)]
        cfg = MongeConfig(flow=FlowConfig(dt=0.1, t_span=(-0.5, 0.5)))
        result = monge_solve(B, f_list, datum, datum.grid(11), cfg,
                             np.random.default_rng(0))
        self.assertEqual(compare_closed_form(result.surface,
                                             parse("0", vt)), 0.0)
        self.assertLessEqual(result.diagnostics["mae_residual"]
                             ["max_residual"], 1e-12)
        # p1 sweeps along the datum itself
        self.assertEqual(free_variables(result.intermediate_integral),
                         frozenset({"p2"}))
        self.assertEqual(len(result.relation.alternatives), 1)

    def test_non_integral_datum(self):
        vt = VarTable(2)
        B = BField([[Const(0.0)] * 2] * 2, vt)
        datum = cauchy_datum(vt, [parse("t1", vt), parse("0", vt)],
                             parse("t1^2", vt), [parse("0", vt)] * 2,
                             name="bent")
        f_list = [parse("p1", vt), parse("p2", vt)]
        cfg = MongeConfig(flow=FlowConfig(dt=0.1, t_span=(-0.5, 0.5)))
        with self.assertRaises(NonIntegralSurface) as caught:
            monge_solve(B, f_list, datum, datum.grid(11), cfg,
                        np.random.default_rng(0))
        self.assertGreater(caught.exception.details["theta_residual"], 1.0)


class FirstOrderTest(unittest.TestCase):
    """Characteristics of a first-order equation."""

    vt = VarTable(2)

    def datum(self):
        vt = self.vt
        return cauchy_datum(vt, [parse("t1", vt), parse("0", vt)],
                            parse("t1^2 / 2", vt),
                            [parse("t1", vt), parse("0", vt)],
                            name="paraboloid")

    def test_paraboloid(self):
        f = parse("p2 - x2", self.vt)
        datum = self.datum()
        surface = solve_first_order(f, datum,
                                    FlowConfig(dt=0.1, t_span=(-1.0, 1.0)),
                                    datum.grid(11))
        closed = parse("(x1^2 + x2^2) / 2", self.vt)
        self.assertLessEqual(compare_closed_form(surface, closed), 1e-12)
        self.assertLessEqual(surface.f_residual, 1e-12)
        self.assertLessEqual(surface.theta_residual, 1e-12)
        F = parse("p11 + p22 - 2", self.vt)
        for method in ("stencil", "tangent"):
            residual = mae_residual_on_surface(surface, F, method)
            self.assertLessEqual(residual.max_residual, 1e-8)
            self.assertEqual(residual.method, method)

    def test_stencil_on_flat_surface(self):
        vt = self.vt
        datum = cauchy_datum(vt, [parse("t1", vt), parse("0", vt)],
                             parse("0", vt), [parse("0", vt)] * 2)
        surface = solve_first_order(parse("p2", vt), datum,
                                    FlowConfig(dt=0.25, t_span=(0.0, 1.0)),
                                    datum.grid(5))
        residual = mae_residual_on_surface(
            surface, parse("p11 * p22 - p12^2 + p11 + p12", vt))
        self.assertLessEqual(residual.max_residual, 1e-12)

    def test_stencil_needs_a_grid(self):
        datum = self.datum()
        surface = solve_first_order(parse("p2 - x2", self.vt), datum,
                                    FlowConfig(dt=0.5, t_span=(0.0, 1.0)),
                                    datum.grid(2))
        with self.assertRaises(NonGraphicalPatch):
            mae_residual_on_surface(surface, parse("p11", self.vt))

    def test_datum_off_equation(self):
        datum = self.datum()
        with self.assertRaises(DatumNotOnEquation):
            solve_first_order(parse("p2 - x2 - 1", self.vt), datum,
                              FlowConfig(), datum.grid(5))

    def test_characteristic_datum(self):
        datum = self.datum()
        with self.assertRaises(CharacteristicDatum):
            solve_first_order(parse("p1 - x1", self.vt), datum,
                              FlowConfig(), datum.grid(5))

    def test_csv(self):
        datum = self.datum()
        surface = solve_first_order(parse("p2 - x2", self.vt), datum,
                                    FlowConfig(dt=0.5, t_span=(0.0, 1.0)),
                                    datum.grid(3))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "surface.csv")
            surface.to_csv(path)
            with open(path) as stream:
                header = stream.readline().strip()
            table = np.loadtxt(path, delimiter=",", skiprows=1)
        self.assertEqual(header, "t,s1,x1,x2,z,p1,p2")
        self.assertEqual(table.shape, (9, 7))

    def test_flow(self):
        vt = self.vt
        trajectory = flow(hamiltonian_field(parse("p1", vt), vt),
                          ChartPoint([0.0, 0.0], 0.0, [2.0, 0.0]),
                          FlowConfig(dt=0.1, t_span=(0.0, 1.0)))
        end = trajectory.point(len(trajectory.times) - 1)
        self.assertAlmostEqual(end.x[0], 1.0, places=12)
        self.assertAlmostEqual(end.z, 2.0, places=12)

    def test_flow_config(self):
        with self.assertRaises(ValueError):
            FlowConfig(dt=0.0)
        with self.assertRaises(ValueError):
            FlowConfig(t_span=(0.5, 1.0))


class RelationTest(unittest.TestCase):
    """Polynomial relations among restricted first integrals."""

    vt = VarTable(2)

    def datum(self, x2):
        vt = self.vt
        return cauchy_datum(vt, [parse("t1", vt), parse(x2, vt)],
                            parse("0", vt), [parse("0", vt)] * 2)

    def test_parabola(self):
        datum = self.datum("t1^2")
        result = find_relation([parse("x1", self.vt), parse("x2", self.vt)],
                               datum, datum.grid(21))
        self.assertEqual(result.degree, 2)
        psi = dict(zip(result.monomials, result.coefficients))
        self.assertAlmostEqual(abs(psi[(1,)]), 0.5, places=10)
        self.assertAlmostEqual(psi[(1,)], -psi[(0, 0)], places=10)
        self.assertEqual(psi[()], 0.0)

    def test_exp_features(self):
        datum = self.datum("exp(t1)")
        f_list = [parse("x1", self.vt), parse("x2", self.vt)]
        with self.assertRaises(NoRelationFound):
            find_relation(f_list, datum, datum.grid(21))
        result = find_relation(f_list, datum, datum.grid(21),
                               RelationConfig(degree=1, exp_features=True))
        self.assertEqual(result.degree, 1)
        self.assertIn("exp(x1)", " ".join(result.monomial_names()))

    def test_single_function(self):
        datum = self.datum("t1")
        with self.assertRaises(ValueError):
            find_relation([parse("x1", self.vt)], datum, datum.grid(5))

    def test_config(self):
        with self.assertRaises(ValueError):
            RelationConfig(degree=0)
        with self.assertRaises(ValueError):
            RelationConfig(holdout=-1)


class CoarseGridRelationTest(WorkedExample, unittest.TestCase):
    """Relations that only hold on the nodes of a coarse grid."""

    def f_list(self):
        return [self.parse(e) for e in ("x1", "x2", "p1", "p2")]

    def test_grid_nodes_alone_admit_false_relations(self):
        datum = self.datum()
        cfg = RelationConfig(degree=2, exp_features=True, random_samples=0,
                             holdout=0)
        result = find_relation(self.f_list(), datum, datum.grid(5), cfg)
        env = datum.sample(np.random.default_rng(4).uniform(
            0.0, 1.0, size=(3, 50))).env()
        off_grid = [np.max(np.abs(evaluate(result.expression(psi), env)))
                    for psi in [result.coefficients] + result.alternatives]
        self.assertGreater(max(off_grid), 1e-6)

    def test_random_points_isolate_the_intermediate_integral(self):
        datum = self.datum()
        cfg = RelationConfig(degree=2, exp_features=True)
        result = find_relation(self.f_list(), datum, datum.grid(5), cfg,
                               np.random.default_rng(0))
        used = {mono for mono, coef in zip(result.monomials,
                                           result.coefficients) if coef}
        # p2 and x1 * exp(x2)
        self.assertEqual(used, {(3,), (0, 5)})
        self.assertLessEqual(result.residual, 1e-8)
        env = datum.sample(np.random.default_rng(5).uniform(
            0.0, 1.0, size=(3, 50))).env()
        values = evaluate(result.expression(), env)
        self.assertLessEqual(np.max(np.abs(values)), 1e-8)


if __name__ == "__main__":
    unittest.main()
