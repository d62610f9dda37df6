"""Formal power-series solutions of non-characteristic Cauchy problems.

Cauchy data are taken in the normalised chart: the datum is x^n = 0 with
z = 0 and p_h = 0 (h < n) on it, and p_n = Φ_n(x^1, ..., x^{n-1}). The
base point is the origin.
"""
import json
import logging
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .contact import ChartPoint, NewtonConfig, newton_1d
from .errors import CharacteristicDatum, NewtonDivergence
from .exprlang import (Expr, VarTable, compile_expr, diff, evaluate,
                       jet_name, total_derivative, to_string)
from .lagrange_grassmann import JetPoint, metric_of_equation

logger = logging.getLogger(__name__)


def fiber_dimension(k: int, n: int) -> int:
    """d(k, n) = C(n+k+1, k+2) - C(n+k-1, k)."""
    return comb(n + k + 1, k + 2) - comb(n + k - 1, k)


def _indices(n: int, k: int) -> List[Tuple[int, ...]]:
    return list(combinations_with_replacement(range(1, n + 1), k))


@dataclass
class JetTable:
    """Jet of a function at the origin up to order K.

    Attributes:
        n: Number of independent variables.
        order: K.
        z: Value at the origin.
        values: Coefficient of every canonical name p_I, 1 <= |I| <= K.
    """

    n: int
    order: int
    z: float = 0.0
    values: Dict[str, float] = field(default_factory=dict)

    def coefficient(self, indices: Iterable[int]) -> float:
        return self.values[jet_name(indices)]

    def is_complete(self, order: Optional[int] = None) -> bool:
        order = self.order if order is None else order
        return all(jet_name(idx) in self.values
                   for k in range(1, order + 1)
                   for idx in _indices(self.n, k))

    def env(self) -> Dict[str, float]:
        env = {f"x{i}": 0.0 for i in range(1, self.n + 1)}
        env["z"] = self.z
        env.update(self.values)
        return env

    def base_point(self) -> ChartPoint:
        p = [self.values.get(f"p{i}", 0.0) for i in range(1, self.n + 1)]
        return ChartPoint(np.zeros(self.n), self.z, p)

    def jet_point(self) -> JetPoint:
        P = np.array([[self.values[jet_name((i, j))]
                       for j in range(1, self.n + 1)]
                      for i in range(1, self.n + 1)])
        return JetPoint(self.base_point(), P)

    def to_dict(self) -> Dict[str, float]:
        out = {"z": self.z}
        out.update(self.values)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class NormalizedCauchyData:
    """p_n = Φ_n on the datum x^n = 0; ``seed`` starts Newton for p_nn."""

    phi: Expr
    seed: float = 0.0


class _TotalDerivatives:
    """D_I F memoised by the sorted multi-index I."""

    def __init__(self, F: Expr, vt: VarTable) -> None:
        self.vt = vt
        self.cache: Dict[Tuple[int, ...], Expr] = {(): F}

    def __call__(self, indices: Sequence[int]) -> Expr:
        key = tuple(sorted(indices))
        if key not in self.cache:
            self.cache[key] = total_derivative(self(key[:-1]), key[-1],
                                               self.vt)
        return self.cache[key]


def _jet_table_vt(n: int, order: int) -> VarTable:
    return VarTable(n, order=2, max_order=max(order, 2))


def is_noncharacteristic(F: Expr, m1: JetPoint, tol: float = 1e-12) -> bool:
    """|∂F/∂p_nn| > tol at m1."""
    n = m1.n
    return abs(float(evaluate(diff(F, jet_name((n, n))), m1.env()))) > tol


def formal_integrability_check(F: Expr, points: Sequence[JetPoint],
                               tol: float = 1e-12) -> bool:
    """Whether the metric of F is non-zero at every sampled point of F = 0."""
    for index, m1 in enumerate(points):
        metric = metric_of_equation(F, m1)
        scale = max(1.0, float(np.max(np.abs(m1.P))))
        if metric.norm <= tol * scale:
            logger.info("Metric vanishes at sample %d", index)
            return False
    return True


@dataclass
class LinearSystem:
    """Equations D_I F = 0, |I| = k, linear in the order-(k+2) unknowns.

    Row I reads Σ_{a<=b} F_{p_ab} p_{Iab} = c_I.
    """

    order: int
    equations: List[Tuple[int, ...]]
    unknowns: List[str]
    matrix: np.ndarray
    rhs: np.ndarray

    def rank(self, tol: float = 1e-10) -> int:
        if self.matrix.size == 0:
            return 0
        return int(np.linalg.matrix_rank(self.matrix, tol=tol))

    def free_parameters(self, tol: float = 1e-10) -> int:
        return len(self.unknowns) - self.rank(tol)


def prolonged_fiber_system(F: Expr, jt: JetTable, k: int) -> LinearSystem:
    """Linear system for the order-(k+2) coefficients over a table.

    The table must be complete to order k+1.
    """
    if k < 1:
        raise ValueError("The prolonged system starts at k = 1.")
    if not jt.is_complete(k + 1):
        raise ValueError(f"Jet table must be complete to order {k + 1}.")
    n = jt.n
    derivs = _TotalDerivatives(F, _jet_table_vt(n, k + 2))
    unknowns = [jet_name(idx) for idx in _indices(n, k + 2)]
    equations = _indices(n, k)
    env = jt.env()
    env.update({name: 0.0 for name in unknowns})
    matrix = np.zeros((len(equations), len(unknowns)))
    rhs = np.zeros(len(equations))
    for row, idx in enumerate(equations):
        G = derivs(idx)
        rhs[row] = -float(evaluate(G, env))
        for col, name in enumerate(unknowns):
            matrix[row, col] = float(evaluate(diff(G, name), env))
    return LinearSystem(k, equations, unknowns, matrix, rhs)


def _phi_derivative(phi: Expr, J: Sequence[int], env: Dict[str, float]
                    ) -> float:
    e = phi
    for i in J:
        e = diff(e, f"x{i}")
    return float(evaluate(e, env))


def formal_solve(F: Expr, data: NormalizedCauchyData, order: int, n: int,
                 newton: NewtonConfig = NewtonConfig(),
                 tol: float = 1e-12) -> JetTable:
    """Jet of the formal solution of F = 0 through the normalised datum.

    Coefficients p_I with h copies of n in I = (J, n^h) are zero for h = 0,
    ∂^J Φ_n(0) for h = 1, and solve D_J D_n^{h-2} F = 0 for h >= 2; within
    an order they are computed by increasing h, so the top variable is
    the only unknown of its equation.

    Raises:
        NewtonDivergence: F = 0 has no root p_nn near the seed.
        CharacteristicDatum: ∂F/∂p_nn vanishes at the base point.
    """
    if order < 2:
        raise ValueError("Order must be at least 2.")
    vt = _jet_table_vt(n, order)
    derivs = _TotalDerivatives(F, vt)
    origin = {f"x{i}": 0.0 for i in range(1, n + 1)}
    table = JetTable(n, order)
    top_name = jet_name((n, n))
    for k in range(1, order + 1):
        ordered = sorted(_indices(n, k), key=lambda idx: idx.count(n))
        for idx in ordered:
            h = idx.count(n)
            J = idx[:len(idx) - h]
            name = jet_name(idx)
            if h == 0:
                table.values[name] = 0.0
            elif h == 1:
                table.values[name] = _phi_derivative(data.phi, J, origin)
            elif k == 2:
                table.values[name] = _solve_top(F, table, top_name,
                                                data.seed, newton)
            else:
                G = derivs(J + (n,) * (h - 2))
                env = table.env()
                env[name] = 0.0
                coef = float(evaluate(diff(G, name), env))
                if abs(coef) <= tol:
                    raise CharacteristicDatum(
                        "datum is characteristic at the base point",
                        {"coefficient": coef, "variable": name})
                table.values[name] = -float(evaluate(G, env)) / coef
        logger.debug("Jet order %d solved", k)
    if not is_noncharacteristic(F, table.jet_point(), tol):
        raise CharacteristicDatum("datum is characteristic at the base point",
                                  {"F": to_string(F)})
    return table


def _solve_top(F: Expr, table: JetTable, name: str, seed: float,
               newton: NewtonConfig) -> float:
    value_c = compile_expr(F)
    deriv_c = compile_expr(diff(F, name))
    base = table.env()

    def bind(s):
        env = dict(base)
        env[name] = s
        return env

    def func(s):
        return np.broadcast_to(value_c(bind(s)), s.shape)

    def deriv(s):
        return np.broadcast_to(deriv_c(bind(s)), s.shape)

    s, ok = newton_1d(func, deriv, np.array([seed]), newton)
    if not ok[0]:
        raise NewtonDivergence("no root of the equation near the seed",
                               {"variable": name, "seed": seed})
    return float(s[0])


def taylor_table(u: Expr, order: int, n: int) -> JetTable:
    """Derivatives at the origin of an explicit function u(x)."""
    origin = {f"x{i}": 0.0 for i in range(1, n + 1)}
    table = JetTable(n, order, z=float(evaluate(u, origin)))
    for k in range(1, order + 1):
        for idx in _indices(n, k):
            e = u
            for i in idx:
                e = diff(e, f"x{i}")
            table.values[jet_name(idx)] = float(evaluate(e, origin))
    return table


def check_table(F: Expr, jt: JetTable) -> float:
    """max |D_I F| over |I| <= K-2 on the table."""
    derivs = _TotalDerivatives(F, _jet_table_vt(jt.n, jt.order))
    env = jt.env()
    worst = 0.0
    for k in range(0, jt.order - 1):
        for idx in _indices(jt.n, k):
            worst = max(worst, abs(float(evaluate(derivs(idx), env))))
    return worst
