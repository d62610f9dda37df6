import unittest

import numpy as np

from contactmae.contact import ChartPoint, VectorFieldExpr
from contactmae.errors import (InsufficientSamples, NonTransversal,
                               NotGoursatType, ZeroField)
from contactmae.exprlang import Const, VarTable, evaluate, parse
from contactmae.lagrange_grassmann import (JetPoint, tautological_frame,
                                           vector_rank)
from contactmae.mae import (BField, DistFrame, NForm, ReconstructionConfig,
                            Side, adjugate, first_integral_test,
                            frame_fields, frames, goursat_equation,
                            goursat_point_report, goursat_residual,
                            horizontal_equation, horizontalize,
                            lychagin_test, nform_from_frame,
                            reconstruct_distributions, recover_B,
                            sample_fiber)

HYPERBOLIC = "p11 * p22 - p12^2 + 1"


def constant_field(values, vt):
    return BField([[Const(v) for v in row] for row in values], vt)


def random_point(rng, n):
    return ChartPoint.from_array(rng.uniform(-1.0, 1.0, 2 * n + 1))


def symmetric(rng, n):
    A = rng.uniform(-1.0, 1.0, (n, n))
    return A + A.T


def on_equation(P, B):
    """Moves P[0, 0] so that det(P - B) = 0."""
    P = P.copy()
    P[0, 0] = 0.0
    d0 = np.linalg.det(P - B)
    P[0, 0] = 1.0
    d1 = np.linalg.det(P - B)
    P[0, 0] = -d0 / (d1 - d0)
    return P


class AdjugateTest(unittest.TestCase):
    """Cofactors of P - B on random points."""

    rng = np.random.default_rng(5)

    def test_identity(self):
        for _ in range(1000):
            n = int(self.rng.integers(2, 5))
            M = symmetric(self.rng, n) - self.rng.uniform(-1, 1, (n, n))
            lhs = M @ adjugate(M)
            scale = max(1.0, np.linalg.norm(M) ** n)
            self.assertLessEqual(
                np.max(np.abs(lhs - np.linalg.det(M) * np.eye(n))),
                1e-10 * scale)

    def test_small_cases(self):
        np.testing.assert_array_equal(adjugate(np.array([[4.0]])), [[1.0]])
        np.testing.assert_allclose(adjugate(np.array([[1.0, 2.0],
                                                      [3.0, 4.0]])),
                                   [[4.0, -2.0], [-3.0, 1.0]])

    def test_regular_points(self):
        for symmetric_b in (True, False):
            for _ in range(200):
                n = int(self.rng.integers(2, 5))
                vt = VarTable(n)
                B = symmetric(self.rng, n) if symmetric_b \
                    else self.rng.uniform(-1.0, 1.0, (n, n))
                P = on_equation(symmetric(self.rng, n), B)
                m1 = JetPoint(random_point(self.rng, n), P)
                report = goursat_point_report(constant_field(B, vt), m1)
                self.assertEqual(report.classification, "regular")
                self.assertEqual(report.rank, n - 1)
                self.assertEqual(vector_rank(report.metric)[0],
                                 1 if symmetric_b else 2)
                self.assertLessEqual(np.linalg.norm((P - B) @ report.a),
                                     1e-9)
                self.assertLessEqual(np.linalg.norm(report.b @ (P - B)),
                                     1e-9)

    def test_off_equation_and_singular(self):
        vt = VarTable(3)
        B = np.zeros((3, 3))
        B[0, 1] = 1.0
        base = ChartPoint(np.zeros(3), 0.0, np.zeros(3))
        report = goursat_point_report(constant_field(B, vt),
                                      JetPoint(base, np.eye(3)))
        self.assertEqual(report.classification, "off-equation")
        report = goursat_point_report(constant_field(B, vt),
                                      JetPoint(base, np.zeros((3, 3))))
        self.assertEqual(report.classification, "singular")
        self.assertEqual(report.rank, 1)
        np.testing.assert_array_equal(report.metric, 0.0)

    def test_equation_matches_residual(self):
        vt = VarTable(3)
        B = self.rng.uniform(-1.0, 1.0, (3, 3))
        field = constant_field(B, vt)
        F = goursat_equation(field)
        for _ in range(20):
            m1 = JetPoint(random_point(self.rng, 3), symmetric(self.rng, 3))
            self.assertAlmostEqual(evaluate(F, m1.env()),
                                   goursat_residual(field, m1), places=10)


class FrameTest(unittest.TestCase):

    vt = VarTable(2)

    def test_hyperbolic_frames(self):
        B = constant_field([[0.0, 1.0], [-1.0, 0.0]], self.vt)
        m = ChartPoint([0.0, 0.0], 0.0, [2.0, 3.0])
        d, dperp = frames(B, m)
        np.testing.assert_array_equal(d.vectors, [[1, 0, 2, 0, 1],
                                                  [0, 1, 3, -1, 0]])
        np.testing.assert_array_equal(dperp.vectors, [[1, 0, 2, 0, -1],
                                                      [0, 1, 3, 1, 0]])
        np.testing.assert_allclose(d.omega_matrix(dperp), 0.0)
        np.testing.assert_allclose(recover_B(d), B.at(m))
        np.testing.assert_allclose(recover_B(dperp), B.at(m).T)

    def test_frame_must_be_cartan(self):
        m = ChartPoint([0.0, 0.0], 0.0, [0.0, 0.0])
        with self.assertRaises(ValueError):
            DistFrame(m, [[0, 0, 1, 0, 0], [0, 0, 0, 1, 0]])

    def test_non_transversal(self):
        m = ChartPoint([0.0, 0.0], 0.0, [0.0, 0.0])
        with self.assertRaises(NonTransversal):
            recover_B(DistFrame(m, [[1, 0, 0, 0, 0], [0, 0, 0, 1, 0]]))


class NFormTest(unittest.TestCase):
    """Effective n-forms and their horizontalisation."""

    rng = np.random.default_rng(13)

    def test_vertical_frame(self):
        for n in (2, 3):
            vt = VarTable(n)
            fields = []
            for i in range(n):
                comps = ["0"] * (2 * n + 1)
                comps[n + 1 + i] = "1"
                fields.append(VectorFieldExpr([parse(c, vt) for c in comps],
                                              vt))
            omega = nform_from_frame(fields)
            m1 = JetPoint(random_point(self.rng, n), symmetric(self.rng, n))
            self.assertAlmostEqual(horizontalize(omega, m1), (-1.0) ** n)

    def test_frames_give_the_equation(self):
        vt = VarTable(2)
        B = constant_field([[0.0, 1.0], [-1.0, 0.0]], vt)
        F = parse(HYPERBOLIC, vt)
        for perp in (False, True):
            omega = nform_from_frame(frame_fields(B, perp=perp))
            equation = horizontal_equation(omega)
            for _ in range(50):
                m1 = JetPoint(random_point(self.rng, 2),
                              symmetric(self.rng, 2))
                expected = evaluate(F, m1.env())
                self.assertAlmostEqual(horizontalize(omega, m1), expected,
                                       places=10)
                self.assertAlmostEqual(evaluate(equation, m1.env()),
                                       expected, places=10)

    def test_from_terms(self):
        vt = VarTable(2)
        one = parse("1", vt)
        omega = NForm.from_terms({"dp1^dp2": one, "dp1^dx1": one,
                                  "dp2^dx2": one, "dx1^dx2": one}, vt)
        F = parse(HYPERBOLIC, vt)
        for _ in range(20):
            m1 = JetPoint(random_point(self.rng, 2), symmetric(self.rng, 2))
            self.assertAlmostEqual(horizontalize(omega, m1),
                                   evaluate(F, m1.env()), places=10)

    def test_invalid_terms(self):
        vt = VarTable(2)
        with self.assertRaises(ValueError):
            NForm.from_terms({"dx1^dq2": parse("1", vt)}, vt)

    def test_non_normal_frame(self):
        vt = VarTable(3)
        fields = [VectorFieldExpr([parse(c, vt) for c in comps], vt)
                  for comps in (("1", "0", "0", "p1", "0", "x1*p3 + z", "0"),
                                ("0", "0", "0", "0", "1", "0", "0"),
                                ("0", "0", "0", "0", "0", "0", "1"))]
        omega = nform_from_frame(fields)
        F = parse("p12 - x1*p3 - z", vt)
        ratios = []
        for _ in range(100):
            m1 = JetPoint(random_point(self.rng, 3), symmetric(self.rng, 3))
            value = evaluate(F, m1.env())
            if abs(value) > 1e-3:
                ratios.append(horizontalize(omega, m1) / value)
        ratios = np.array(ratios)
        self.assertLessEqual(np.ptp(ratios), 1e-8 * np.max(np.abs(ratios)))
        self.assertAlmostEqual(ratios[0], -1.0, places=10)


class IntermediateIntegralTest(unittest.TestCase):
    """The form test and the first-integral test agree."""

    rng = np.random.default_rng(17)

    def family(self, n):
        """Constant B and a linear f of a chosen kind."""
        B = self.rng.integers(-2, 3, (n, n)) / 2.0
        d = self.rng.integers(1, 4, n) * self.rng.choice([-1.0, 1.0], n)
        kind = self.rng.choice(["d", "dperp", "neither"])
        if kind == "d":
            c = B.T @ d
        elif kind == "dperp":
            c = B @ d
        else:
            c = B.T @ d + self.rng.integers(1, 3, n)
            if np.linalg.norm(c - B @ d) < 0.5:
                c = c + 1.0
        return B, d, c, kind

    def test_agreement(self):
        for _ in range(50):
            n = int(self.rng.integers(2, 4))
            vt = VarTable(n)
            B, d, c, kind = self.family(n)
            f = parse(" + ".join(
                [f"({float(d[i])!r}) * p{i + 1} - ({float(c[i])!r}) * x{i + 1}"
                 for i in range(n)]), vt)
            field = constant_field(B, vt)
            omega = nform_from_frame(frame_fields(field, perp=True))
            m = random_point(self.rng, n)
            side = first_integral_test(f, field, m).side
            self.assertEqual(lychagin_test(f, omega, m), side != Side.NEITHER)
            if kind == "d":
                self.assertEqual(side, Side.IN_D)
            elif kind == "dperp" and not np.allclose(B, B.T):
                self.assertIn(side, (Side.IN_DPERP, Side.IN_D))
            elif kind == "neither":
                self.assertEqual(side, Side.NEITHER)

    def test_flat_distribution(self):
        vt = VarTable(2)
        field = constant_field(np.zeros((2, 2)), vt)
        omega = nform_from_frame(frame_fields(field))
        m = ChartPoint([0.3, -0.2], 0.5, [1.0, 2.0])
        f = parse("p1^2 + p1 * p2", vt)
        self.assertTrue(lychagin_test(f, omega, m))
        self.assertEqual(first_integral_test(f, field, m).side, Side.IN_D)
        g = parse("z", vt)
        self.assertFalse(lychagin_test(g, omega, m))
        self.assertEqual(first_integral_test(g, field, m).side, Side.NEITHER)

    def test_zero_field(self):
        vt = VarTable(2)
        field = constant_field(np.zeros((2, 2)), vt)
        with self.assertRaises(ZeroField):
            first_integral_test(parse("z", vt), field,
                                ChartPoint([1.0, 1.0], 1.0, [0.0, 0.0]))


class PolynomialFieldTest(unittest.TestCase):
    """Random polynomial fields b_ij(x, z, p) around a rotation."""

    vt = VarTable(2)
    rng = np.random.default_rng(31)

    def random_field(self):
        base = [[0.0, 1.0], [-1.0, 0.0]]
        rows = []
        for i in range(2):
            row = []
            for j in range(2):
                c = self.rng.uniform(-0.15, 0.15, 4)
                text = (f"{base[i][j] + c[0]:.6f} + ({c[1]:.6f}) * x1"
                        f" + ({c[2]:.6f}) * p2 + ({c[3]:.6f}) * z * x2")
                row.append(parse(text, self.vt))
            rows.append(row)
        return BField(rows, self.vt)

    def test_reconstruction_recovers_the_field(self):
        for _ in range(5):
            field = self.random_field()
            m = random_point(self.rng, 2)
            found = reconstruct_distributions(
                goursat_equation(field), m, self.rng,
                ReconstructionConfig(samples=200))
            values = field.at(m)
            first, second = recover_B(found.d), recover_B(found.dperp)
            if np.max(np.abs(first - values)) > 1e-4:
                first, second = second, first
            np.testing.assert_allclose(first, values, atol=1e-5)
            np.testing.assert_allclose(second, values.T, atol=1e-5)

    def test_kernel_lines_lie_in_the_distributions(self):
        for _ in range(100):
            field = self.random_field()
            m = random_point(self.rng, 2)
            P = on_equation(symmetric(self.rng, 2), field.at(m))
            m1 = JetPoint(m, P)
            report = goursat_point_report(field, m1)
            self.assertEqual(report.classification, "regular")
            d, dperp = frames(field, m)
            lifted = tautological_frame(m1)
            # bᵀ(P - B) = 0 puts b in D, (P - B)a = 0 puts a in D⊥
            self.assertLessEqual(d.membership_residual(report.b @ lifted),
                                 1e-8)
            self.assertLessEqual(
                dperp.membership_residual(report.a @ lifted), 1e-8)


class ReconstructionTest(unittest.TestCase):
    """Recovering D and D⊥ from the equation alone."""

    def assert_same_space(self, a, b, tol=1e-6):
        self.assertLessEqual(np.max(a.principal_angles(b)), tol)

    def assert_pair(self, found, d, dperp):
        if np.max(found.d.principal_angles(d)) > 1e-3:
            found_d, found_perp = found.dperp, found.d
        else:
            found_d, found_perp = found.d, found.dperp
        self.assert_same_space(found_d, d)
        self.assert_same_space(found_perp, dperp)

    def test_hyperbolic(self):
        vt = VarTable(2)
        F = parse(HYPERBOLIC, vt)
        B = constant_field([[0.0, 1.0], [-1.0, 0.0]], vt)
        rng = np.random.default_rng(23)
        for _ in range(5):
            m = random_point(rng, 2)
            found = reconstruct_distributions(
                F, m, rng, ReconstructionConfig(samples=200))
            self.assert_pair(found, *frames(B, m))
            self.assertEqual(found.samples, 200)

    def test_non_normal_distribution(self):
        vt = VarTable(3)
        F = parse("p12 - x1*p3 - z", vt)
        rng = np.random.default_rng(29)
        m = random_point(rng, 3)
        f = m.x[0] * m.p[2] + m.z
        d = DistFrame(m, [[1, 0, 0, m.p[0], 0, f, 0],
                          [0, 0, 0, 0, 1, 0, 0],
                          [0, 0, 0, 0, 0, 0, 1]])
        dperp = DistFrame(m, [[0, 1, 0, m.p[1], f, 0, 0],
                              [0, 0, 0, 0, 0, 1, 0],
                              [0, 0, 0, 0, 0, 0, 1]])
        found = reconstruct_distributions(F, m, rng)
        self.assert_pair(found, d, dperp)
        with self.assertRaises(NonTransversal):
            recover_B(found.d)

    def test_elliptic(self):
        vt = VarTable(2)
        F = parse("p11 * p22 - p12^2 - 1", vt)
        with self.assertRaises(NotGoursatType):
            reconstruct_distributions(F, random_point(
                np.random.default_rng(1), 2), np.random.default_rng(2))

    def test_empty_fiber(self):
        vt = VarTable(2)
        F = parse("p11^2 + p22^2 + 1", vt)
        m = ChartPoint([0.0, 0.0], 0.0, [0.0, 0.0])
        rng = np.random.default_rng(3)
        self.assertEqual(sample_fiber(F, m, 5, rng), [])
        with self.assertRaises(InsufficientSamples):
            reconstruct_distributions(F, m, rng)

    def test_fiber_samples(self):
        vt = VarTable(2)
        F = parse(HYPERBOLIC, vt)
        m = ChartPoint([0.0, 0.0], 0.0, [0.0, 0.0])
        for m1 in sample_fiber(F, m, 10, np.random.default_rng(4)):
            self.assertLessEqual(abs(evaluate(F, m1.env())), 1e-10)


if __name__ == "__main__":
    unittest.main()
