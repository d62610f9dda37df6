"""Pointwise linear algebra on the fiber of Lagrangian planes.

A Lagrangian plane L ⊂ C_m transversal to the fiber is the span of the
tautological frame w_i = ∂̂_{x^i} + p_ij ∂_{p_j}; tangent vectors to the
Lagrangian Grassmannian at L are symmetric matrices Ṗ, read as quadratic
forms on L. A second-order equation F = 0 carries the conformal metric
g = Σ_{i<=j} F_{p_ij} η_i η_j on covectors of L.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .contact import ChartPoint
from .errors import SingularPoint
from .exprlang import Expr, compile_expr, diff, jet_name

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class JetPoint:
    """Point m¹ = (x, z, p, P) of the first prolongation."""

    base: ChartPoint
    P: np.ndarray

    def __post_init__(self) -> None:
        P = np.asarray(self.P, dtype=float)
        n = self.base.n
        if P.shape != (n, n):
            raise ValueError(f"P must be a {n}x{n} matrix.")
        if not np.all(np.isfinite(P)):
            raise ValueError("P entries must be finite.")
        # the upper triangle is authoritative
        upper = np.triu(P)
        object.__setattr__(self, "P", upper + np.triu(P, 1).T)

    @property
    def n(self) -> int:
        return self.base.n

    def env(self) -> Dict[str, float]:
        env = self.base.env()
        for i in range(self.n):
            for j in range(i, self.n):
                env[jet_name((i + 1, j + 1))] = self.P[i, j]
        return env

    def with_P(self, P: np.ndarray) -> "JetPoint":
        return JetPoint(self.base, P)


@dataclass(frozen=True, eq=False)
class TangentSym:
    """Tangent vector Ṗ to the Lagrangian Grassmannian."""

    Pdot: np.ndarray

    def __post_init__(self) -> None:
        Pdot = np.asarray(self.Pdot, dtype=float)
        if Pdot.ndim != 2 or Pdot.shape[0] != Pdot.shape[1]:
            raise ValueError("Ṗ must be a square matrix.")
        object.__setattr__(self, "Pdot", 0.5 * (Pdot + Pdot.T))


@dataclass(frozen=True, eq=False)
class MetricMatrix:
    """Conformal metric in the tautological frame {w_i}."""

    G: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.G), initial=0.0))

    def __call__(self, eta: np.ndarray) -> float:
        eta = np.asarray(eta, dtype=float)
        return float(eta @ self.G @ eta)


MatrixLike = Union[np.ndarray, MetricMatrix, TangentSym]


def _matrix(value: MatrixLike) -> np.ndarray:
    if isinstance(value, MetricMatrix):
        return value.G
    if isinstance(value, TangentSym):
        return value.Pdot
    return np.asarray(value, dtype=float)


def tautological_frame(m1: JetPoint) -> np.ndarray:
    """Rows w_i in chart coordinates, shape (n, 2n+1)."""
    n = m1.n
    return np.hstack([np.eye(n), m1.base.p[:, None], m1.P])


def _jet_partials(F: Expr, n: int) -> List[List[Expr]]:
    return [[diff(F, jet_name((i + 1, j + 1))) for j in range(n)]
            for i in range(n)]


def metric_of_equation(F: Expr, m1: JetPoint) -> MetricMatrix:
    """Matrix of g_(dF): G_ii = F_{p_ii}, G_ij = F_{p_ij} / 2 for i != j.

    With this convention ηᵀGη = Σ_{i<=j} F_{p_ij} η_i η_j.
    """
    n = m1.n
    env = m1.env()
    partials = _jet_partials(F, n)
    G = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            value = float(compile_expr(partials[i][j])(env))
            G[i, j] = G[j, i] = value if i == j else 0.5 * value
    return MetricMatrix(G)


def vector_rank(Pdot: MatrixLike, tol: float = DEFAULT_RANK_TOL
                ) -> Tuple[int, np.ndarray]:
    """Rank of Ṗ and an orthonormal basis of its radical, shape (n, n-k)."""
    matrix = _matrix(Pdot)
    _, sv, vh = np.linalg.svd(matrix)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, np.eye(matrix.shape[0])
    rank = int(np.sum(sv > tol * sv[0]))
    return rank, vh[rank:].T


def is_characteristic_covector(F: Expr, m1: JetPoint, eta: np.ndarray,
                               tol: float = DEFAULT_RANK_TOL) -> bool:
    """Whether G(η, η) vanishes, relative to ‖G‖‖η‖².

    Raises:
        SingularPoint: The metric vanishes at m1.
    """
    eta = np.asarray(eta, dtype=float)
    if not np.any(eta):
        raise ValueError("Covector must be non-zero.")
    metric = metric_of_equation(F, m1)
    if metric.norm == 0.0:
        raise SingularPoint("metric of the equation vanishes",
                            {"P": m1.P.tolist()})
    return abs(metric(eta)) <= tol * metric.norm * float(eta @ eta)


@dataclass(frozen=True, eq=False)
class Zero:
    kind = "Zero"


@dataclass(frozen=True, eq=False)
class Rank1:
    v: np.ndarray
    kind = "Rank1"


@dataclass(frozen=True, eq=False)
class Decomposable:
    """G = v ∨ w = (v wᵀ + w vᵀ) / 2; the pair is unordered."""

    v: np.ndarray
    w: np.ndarray
    kind = "Decomposable"


@dataclass(frozen=True, eq=False)
class NotDecomposable:
    rank: int
    kind = "NotDecomposable"


MetricDecomposition = Union[Zero, Rank1, Decomposable, NotDecomposable]


def decompose_metric(G: MatrixLike, tol: float = DEFAULT_RANK_TOL
                     ) -> MetricDecomposition:
    """Write a symmetric matrix as a product of two real covectors."""
    matrix = _matrix(G)
    matrix = 0.5 * (matrix + matrix.T)
    eigval, eigvec = np.linalg.eigh(matrix)
    scale = float(np.max(np.abs(eigval), initial=0.0))
    if scale == 0.0:
        return Zero()
    keep = np.abs(eigval) > tol * scale
    rank = int(np.sum(keep))
    if rank == 0:
        return Zero()
    if rank == 1:
        k = int(np.argmax(keep))
        return Rank1(np.sqrt(abs(eigval[k])) * eigvec[:, k])
    if rank == 2:
        kept = np.flatnonzero(keep)
        lam = eigval[kept]
        if lam[0] < 0.0 < lam[1]:
            plus = np.sqrt(lam[1]) * eigvec[:, kept[1]]
            minus = np.sqrt(-lam[0]) * eigvec[:, kept[0]]
            return Decomposable(plus + minus, plus - minus)
    return NotDecomposable(rank)


def strong_char_test(F: Expr, m1: JetPoint, eta: np.ndarray,
                     samples: int = 9, tol: float = 1e-9) -> bool:
    """Whether the line P + t ηηᵀ, t in [-1, 1], stays on F = 0.

    η is normalised first so the answer does not depend on its scale.
    """
    eta = np.asarray(eta, dtype=float)
    eta = eta / np.linalg.norm(eta)
    compiled = compile_expr(F)
    direction = np.outer(eta, eta)
    for t in np.linspace(-1.0, 1.0, samples):
        value = float(compiled(m1.with_P(m1.P + t * direction).env()))
        if abs(value) > tol:
            logger.debug("Line leaves the equation at t=%.3f: %.3e",
                         t, value)
            return False
    return True


@dataclass
class CharacteristicReport:
    """Real characteristic covectors of a two-variable equation."""

    discriminant: float
    label: str
    covectors: List[np.ndarray]

    def to_dict(self) -> Dict[str, object]:
        return {"discriminant": self.discriminant, "label": self.label,
                "covectors": [c.tolist() for c in self.covectors]}


def _roots(a: float, b: float, sqrt_disc: Optional[float]) -> List[float]:
    if sqrt_disc is None:
        return []
    if sqrt_disc == 0.0:
        return [-b / (2.0 * a)]
    return [(-b + sqrt_disc) / (2.0 * a), (-b - sqrt_disc) / (2.0 * a)]


def characteristic_covectors_2d(F: Expr, m1: JetPoint,
                                tol: float = DEFAULT_RANK_TOL
                                ) -> CharacteristicReport:
    """Solve F_{p11} η1² + F_{p12} η1 η2 + F_{p22} η2² = 0 for n = 2.

    The sign of Δ = F_{p12}² - 4 F_{p11} F_{p22} gives two, one or no real
    directions (hyperbolic, parabolic, elliptic).

    Raises:
        SingularPoint: All three coefficients vanish.
    """
    if m1.n != 2:
        raise ValueError("Discriminant classification needs n = 2.")
    G = metric_of_equation(F, m1).G
    a, b, c = G[0, 0], 2.0 * G[0, 1], G[1, 1]
    scale = max(abs(a), abs(b), abs(c))
    if scale == 0.0:
        raise SingularPoint("metric of the equation vanishes",
                            {"P": m1.P.tolist()})
    disc = b * b - 4.0 * a * c
    if disc > tol * scale ** 2:
        label, sqrt_disc = "hyperbolic", float(np.sqrt(disc))
    elif disc >= -tol * scale ** 2:
        label, sqrt_disc = "parabolic", 0.0
    else:
        label, sqrt_disc = "elliptic", None
    covectors: List[np.ndarray] = []
    if abs(a) > tol * scale:
        covectors = [np.array([r, 1.0]) for r in _roots(a, b, sqrt_disc)]
    elif abs(c) > tol * scale:
        covectors = [np.array([1.0, r]) for r in _roots(c, b, sqrt_disc)]
    else:
        covectors = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    covectors = [v / np.linalg.norm(v) for v in covectors]
    return CharacteristicReport(float(disc), label, covectors)
