"""Monge-Ampère equations of Goursat type.

An n-dimensional distribution D = ⟨∂̂_{x^i} + b_ij ∂_{p_j}⟩ of the contact
distribution defines the equation det(P - B) = 0: a Lagrangian plane lies
on it when it meets D non-trivially. D⊥, its dθ-orthogonal complement,
is spanned by ∂̂_{x^i} + b_ji ∂_{p_j} and gives the same equation.

Forms are stored by their components on increasing index subsets of the
coframe (dx^1..dx^n, dz, dp_1..dp_n), numbered 0..2n.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .contact import (ChartPoint, NewtonConfig, VectorFieldExpr,
                      hamiltonian_field, newton_1d, omega_matrix)
from .errors import (InsufficientSamples, NonTransversal, NotGoursatType,
                     OrthogonalityViolation, UnknownVariable, ZeroField)
from .exprlang import (Const, Expr, ONE, Var, VarTable, ZERO, add,
                       compile_expr, diff, evaluate, jet_name, mul, neg, sub)
from .lagrange_grassmann import (DEFAULT_RANK_TOL, Decomposable, JetPoint,
                                 NotDecomposable, Rank1, Zero,
                                 decompose_metric, metric_of_equation,
                                 tautological_frame)

logger = logging.getLogger(__name__)

Form = Dict[Tuple[int, ...], float]


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def _jet_matrix(n: int) -> List[List[Expr]]:
    return [[Var(jet_name((i + 1, j + 1))) for j in range(n)]
            for i in range(n)]


def symbolic_det(matrix: Sequence[Sequence[Expr]]) -> Expr:
    """Laplace expansion along rows, memoised on the remaining columns."""
    n = len(matrix)
    memo: Dict[Tuple[int, ...], Expr] = {}

    def minor(row: int, cols: Tuple[int, ...]) -> Expr:
        if row == n:
            return ONE
        if cols in memo:
            return memo[cols]
        total: Expr = ZERO
        for k, col in enumerate(cols):
            entry = matrix[row][col]
            if _is_zero(entry):
                continue
            term = mul(entry, minor(row + 1, cols[:k] + cols[k + 1:]))
            total = add(total, term) if k % 2 == 0 else sub(total, term)
        memo[cols] = total
        return total

    return minor(0, tuple(range(n)))


class BField:
    """Coefficients b_ij of D, expressions in the chart coordinates."""

    def __init__(self, entries: Sequence[Sequence[Expr]],
                 vt: VarTable) -> None:
        if len(entries) != vt.n or any(len(row) != vt.n for row in entries):
            raise ValueError(f"B must be a {vt.n}x{vt.n} matrix.")
        self.entries: Tuple[Tuple[Expr, ...], ...] = tuple(
            tuple(row) for row in entries)
        self.vt = vt

    @property
    def n(self) -> int:
        return self.vt.n

    def at(self, m: ChartPoint) -> np.ndarray:
        env = m.env()
        return np.array([[float(evaluate(e, env)) for e in row]
                         for row in self.entries])

    def transpose(self) -> "BField":
        return BField([list(col) for col in zip(*self.entries)], self.vt)


def adjugate(M: np.ndarray) -> np.ndarray:
    """Classical adjoint by cofactors, M · adj(M) = det(M) I."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n == 1:
        return np.ones((1, 1))
    adj = np.empty_like(M)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(M, i, axis=0), j, axis=1)
            adj[j, i] = (-1) ** (i + j) * np.linalg.det(minor)
    return adj


def goursat_residual(B: BField, m1: JetPoint) -> float:
    """det(P - B(m))."""
    return float(np.linalg.det(m1.P - B.at(m1.base)))


def goursat_equation(B: BField) -> Expr:
    """The equation det(P - B) = 0 as an expression."""
    n = B.n
    P = _jet_matrix(n)
    return symbolic_det([[sub(P[i][j], B.entries[i][j]) for j in range(n)]
                         for i in range(n)])


@dataclass
class GoursatPointReport:
    """Linear algebra of P - B at one point of the fiber."""

    residual: float
    rank: int
    classification: str
    adjugate: np.ndarray
    metric: np.ndarray
    a: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "residual": self.residual,
            "rank": self.rank,
            "classification": self.classification,
            "adjugate": self.adjugate.tolist(),
            "metric": self.metric.tolist(),
        }
        if self.a is not None:
            out["a"] = self.a.tolist()
            out["b"] = self.b.tolist()
        return out


def goursat_point_report(B: BField, m1: JetPoint,
                         tol: float = DEFAULT_RANK_TOL) -> GoursatPointReport:
    """Classify m1 by the rank of P - B.

    Rank n is off the equation, rank n-1 a regular point with kernel lines
    a (right) and b (left) and metric a ∨ b up to scale, lower ranks are
    singular points where the adjugate and the metric vanish.
    """
    n = m1.n
    M = m1.P - B.at(m1.base)
    u, sv, vh = np.linalg.svd(M)
    rank = 0 if sv[0] == 0.0 else int(np.sum(sv > tol * sv[0]))
    adj = adjugate(M)
    residual = float(np.linalg.det(M))
    if rank == n:
        return GoursatPointReport(residual, rank, "off-equation", adj,
                                  0.5 * (adj + adj.T))
    if rank == n - 1:
        return GoursatPointReport(residual, rank, "regular", adj,
                                  0.5 * (adj + adj.T), vh[-1], u[:, -1])
    return GoursatPointReport(residual, rank, "singular", np.zeros((n, n)),
                              np.zeros((n, n)))


@dataclass(frozen=True, eq=False)
class DistFrame:
    """n Cartan vectors at a point, rows of an n x (2n+1) array."""

    point: ChartPoint
    vectors: np.ndarray

    def __post_init__(self) -> None:
        vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        n = self.point.n
        if vectors.shape != (n, 2 * n + 1):
            raise ValueError(f"Frame must have shape ({n}, {2 * n + 1}).")
        theta = vectors[:, n] - vectors[:, :n] @ self.point.p
        scale = max(1.0, float(np.max(np.abs(vectors))))
        if np.max(np.abs(theta)) > 1e-10 * scale:
            raise ValueError("Frame vectors must lie in the contact "
                             "distribution.")
        if np.linalg.matrix_rank(vectors) != n:
            raise ValueError("Frame vectors must be independent.")
        object.__setattr__(self, "vectors", vectors)

    @property
    def n(self) -> int:
        return self.point.n

    def basis(self) -> np.ndarray:
        """Orthonormal rows spanning the frame."""
        _, _, vh = np.linalg.svd(self.vectors, full_matrices=False)
        return vh

    def membership_residual(self, v: np.ndarray) -> float:
        """Relative distance of v from the span of the frame."""
        v = np.asarray(v, dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return 0.0
        q = self.basis()
        return float(np.linalg.norm(v - q.T @ (q @ v)) / norm)

    def principal_angles(self, other: "DistFrame") -> np.ndarray:
        sv = np.linalg.svd(self.basis() @ other.basis().T,
                           compute_uv=False)
        return np.arccos(np.clip(sv, -1.0, 1.0))

    def omega_matrix(self, other: "DistFrame") -> np.ndarray:
        return omega_matrix(self.vectors, other.vectors)

    def to_dict(self) -> Dict[str, object]:
        return {"point": self.point.as_array().tolist(),
                "vectors": self.vectors.tolist()}


def _frame_rows(B: np.ndarray, p: np.ndarray) -> np.ndarray:
    n = p.size
    return np.hstack([np.eye(n), p[:, None], B])


def frames(B: BField, m: ChartPoint) -> Tuple[DistFrame, DistFrame]:
    """Frames of D (rows ∂̂_{x^i} + b_ij ∂_{p_j}) and D⊥ (b_ji) at m."""
    values = B.at(m)
    d = DistFrame(m, _frame_rows(values, m.p))
    dperp = DistFrame(m, _frame_rows(values.T, m.p))
    coupling = float(np.max(np.abs(d.omega_matrix(dperp))))
    if coupling > 1e-9 * max(1.0, float(np.max(np.abs(values)))):
        raise OrthogonalityViolation(
            "frames of D and D-perp are not orthogonal",
            {"coupling": coupling})
    return d, dperp


def frame_fields(B: BField, perp: bool = False) -> List[VectorFieldExpr]:
    """Symbolic frame of D, or of D⊥ when ``perp`` is set."""
    vt = B.vt
    n = vt.n
    fields = []
    for i in range(n):
        dx: List[Expr] = [ONE if k == i else ZERO for k in range(n)]
        dp = [B.entries[j][i] if perp else B.entries[i][j]
              for j in range(n)]
        fields.append(VectorFieldExpr(dx + [Var(vt.p[i])] + dp, vt))
    return fields


# Exterior algebra on coordinate components

def _sort_sign(indices: Sequence[int]) -> Tuple[int, Tuple[int, ...]]:
    inversions = sum(1 for a in range(len(indices))
                     for b in range(a + 1, len(indices))
                     if indices[a] > indices[b])
    return (-1 if inversions % 2 else 1), tuple(sorted(indices))


def wedge(alpha: Form, beta: Form) -> Form:
    out: Form = {}
    for sa, ca in alpha.items():
        if ca == 0.0:
            continue
        for sb, cb in beta.items():
            if cb == 0.0 or set(sa) & set(sb):
                continue
            sign, key = _sort_sign(sa + sb)
            out[key] = out.get(key, 0.0) + sign * ca * cb
    return out


def interior(v: np.ndarray, alpha: Form) -> Form:
    """v ⌟ α."""
    out: Form = {}
    for subset, coef in alpha.items():
        for k, index in enumerate(subset):
            if v[index] == 0.0:
                continue
            key = subset[:k] + subset[k + 1:]
            out[key] = out.get(key, 0.0) + (-1) ** k * v[index] * coef
    return out


def _form_norm(alpha: Form) -> float:
    return max((abs(c) for c in alpha.values()), default=0.0)


class NForm:
    """n-form on the chart.

    Either decomposable, ρ_1 ∧ ... ∧ ρ_n with ρ_k given by 2n+1 coframe
    coefficients, or general, a map from increasing index n-subsets to
    coefficients.
    """

    def __init__(self, vt: VarTable,
                 covectors: Optional[Sequence[Sequence[Expr]]] = None,
                 coefficients: Optional[Mapping[Tuple[int, ...], Expr]]
                 = None) -> None:
        if (covectors is None) == (coefficients is None):
            raise ValueError("NForm needs covectors or coefficients.")
        self.vt = vt
        size = 2 * vt.n + 1
        if covectors is not None:
            if len(covectors) != vt.n or any(len(c) != size
                                              for c in covectors):
                raise ValueError(
                    f"Decomposable form needs {vt.n} covectors of "
                    f"{size} entries.")
            self.covectors = tuple(tuple(c) for c in covectors)
            self.coefficients = None
        else:
            checked = {}
            for subset, coef in coefficients.items():
                if (len(subset) != vt.n or len(set(subset)) != vt.n
                        or not all(0 <= k < size for k in subset)):
                    raise ValueError(f"Invalid index subset {subset}.")
                sign, key = _sort_sign(subset)
                term = coef if sign > 0 else neg(coef)
                checked[key] = add(checked[key], term) if key in checked \
                    else term
            self.covectors = None
            self.coefficients = checked

    @property
    def decomposable(self) -> bool:
        return self.covectors is not None

    @classmethod
    def from_terms(cls, terms: Mapping[str, Expr], vt: VarTable) -> "NForm":
        """General form from keys like ``"dx1^dp2"``."""
        names = vt.chart
        coefficients: Dict[Tuple[int, ...], Expr] = {}
        for key, coef in terms.items():
            factors = [f.strip() for f in key.split("^")]
            subset = []
            for factor in factors:
                try:
                    name = vt.canonical(factor[1:], order=1) \
                        if factor.startswith("d") else None
                except UnknownVariable:
                    name = None
                if name not in names:
                    raise ValueError(f"Invalid coframe element {factor}.")
                subset.append(names.index(name))
            coefficients[tuple(subset)] = coef
        return cls(vt, coefficients=coefficients)

    def covector_values(self, m: ChartPoint) -> np.ndarray:
        env = m.env()
        return np.array([[float(evaluate(e, env)) for e in row]
                         for row in self.covectors])

    def components(self, m: ChartPoint) -> Form:
        """Coefficients on every increasing n-subset (Cauchy-Binet)."""
        if not self.decomposable:
            env = m.env()
            return {k: float(evaluate(e, env))
                    for k, e in self.coefficients.items()}
        R = self.covector_values(m)
        out: Form = {}
        for subset in combinations(range(2 * m.n + 1), m.n):
            value = float(np.linalg.det(R[:, subset]))
            if value != 0.0:
                out[subset] = value
        return out

    def evaluate_on(self, m: ChartPoint, vectors: np.ndarray) -> float:
        """Ω_m(v_1, ..., v_n) for the rows of ``vectors``."""
        vectors = np.asarray(vectors, dtype=float)
        if self.decomposable:
            return float(np.linalg.det(self.covector_values(m) @ vectors.T))
        return sum(c * float(np.linalg.det(vectors[:, list(subset)]))
                   for subset, c in self.components(m).items())


def nform_from_frame(fields: Sequence[VectorFieldExpr]) -> NForm:
    """Ω = ρ_1 ∧ ... ∧ ρ_n with ρ_k = Y_k ⌟ dθ, dθ = Σ dx^i ∧ dp_i."""
    if not fields:
        raise ValueError("Frame is empty.")
    vt = fields[0].vt
    n = vt.n
    if len(fields) != n:
        raise ValueError(f"Frame needs {n} fields.")
    covectors = []
    for y in fields:
        comps = y.components
        dx = [neg(comps[n + 1 + i]) for i in range(n)]
        dp = [comps[i] for i in range(n)]
        covectors.append(dx + [ZERO] + dp)
    return NForm(vt, covectors=covectors)


def horizontalize(omega: NForm, m1: JetPoint) -> float:
    """F(P) = Ω(w_1, ..., w_n) on the tautological frame."""
    return omega.evaluate_on(m1.base, tautological_frame(m1))


def horizontal_equation(omega: NForm) -> Expr:
    """The horizontalisation of Ω as an expression in x, z, p, p_ij."""
    vt = omega.vt
    n = vt.n
    P = _jet_matrix(n)
    frame = [[ONE if k == i else ZERO for k in range(n)] + [Var(vt.p[i])]
             + P[i] for i in range(n)]
    if omega.decomposable:
        matrix = []
        for rho in omega.covectors:
            row = []
            for w in frame:
                entry: Expr = ZERO
                for a, b in zip(rho, w):
                    if not (_is_zero(a) or _is_zero(b)):
                        entry = add(entry, mul(a, b))
                row.append(entry)
            matrix.append(row)
        return symbolic_det(matrix)
    total: Expr = ZERO
    for subset, coef in omega.coefficients.items():
        minor = symbolic_det([[w[k] for k in subset] for w in frame])
        total = add(total, mul(coef, minor))
    return total


def _gradient_form(f: Expr, vt: VarTable, m: ChartPoint) -> Form:
    env = m.env()
    return {(k,): float(evaluate(diff(f, name), env))
            for k, name in enumerate(vt.chart)}


def lychagin_test(f: Expr, omega: NForm, m: ChartPoint,
                  tol: float = 1e-9) -> bool:
    """Whether df ∧ θ ∧ (Y_f ⌟ Ω) vanishes at m.

    The (n+1)-form is evaluated on every increasing (n+1)-subset of the
    coordinate frame, relative to the product of the factor norms.
    """
    vt = omega.vt
    n = vt.n
    df = _gradient_form(f, vt, m)
    if _form_norm(df) == 0.0:
        return True
    theta: Form = {(n,): 1.0}
    theta.update({(i,): -m.p[i] for i in range(n)})
    y = hamiltonian_field(f, vt).at(m).as_array()
    components = omega.components(m)
    contracted = interior(y, components)
    result = wedge(wedge(df, theta), contracted)
    scale = (_form_norm(df) * _form_norm(theta) * float(np.max(np.abs(y)))
             * _form_norm(components))
    value = _form_norm(result)
    logger.debug("Lychagin form at %s: %.3e (scale %.3e)",
                 m.as_array(), value, scale)
    return value <= tol * scale


class Side(Enum):
    IN_D = "InD"
    IN_DPERP = "InDperp"
    NEITHER = "Neither"


@dataclass
class FirstIntegralResult:
    side: Side
    residual_d: float
    residual_dperp: float
    both: bool = False

    def to_dict(self) -> Dict[str, object]:
        return {"side": self.side.value, "residual_d": self.residual_d,
                "residual_dperp": self.residual_dperp, "both": self.both}


def first_integral_test(f: Expr, B: BField, m: ChartPoint,
                        tol: float = 1e-9) -> FirstIntegralResult:
    """Whether Y_f(m) lies in D_m or in D⊥_m.

    Raises:
        ZeroField: Y_f vanishes at m.
    """
    y = hamiltonian_field(f, B.vt).at(m).as_array()
    if not np.any(y):
        raise ZeroField("Hamiltonian field vanishes",
                        {"point": m.as_array().tolist()})
    d, dperp = frames(B, m)
    return classify_field(y, d, dperp, tol)


def classify_field(y: np.ndarray, d: DistFrame, dperp: DistFrame,
                   tol: float = 1e-9) -> FirstIntegralResult:
    res_d = d.membership_residual(y)
    res_perp = dperp.membership_residual(y)
    in_d, in_perp = res_d <= tol, res_perp <= tol
    if in_d:
        side = Side.IN_D
    elif in_perp:
        side = Side.IN_DPERP
    else:
        side = Side.NEITHER
    return FirstIntegralResult(side, res_d, res_perp, in_d and in_perp)


# Reconstruction of D from the equation

@dataclass(frozen=True)
class ReconstructionConfig:
    """Settings of the fiber sampler and the span reconstruction."""

    samples: int = 40
    newton: NewtonConfig = NewtonConfig()
    rank_tol: float = DEFAULT_RANK_TOL
    span_tol: float = 1e-7
    max_directions: int = 20
    max_rounds: int = 3


def sample_fiber(F: Expr, m: ChartPoint, count: int,
                 rng: np.random.Generator,
                 cfg: ReconstructionConfig = ReconstructionConfig()
                 ) -> List[JetPoint]:
    """Random points of the fiber {P : F(m, P) = 0}.

    Each sample starts from P₀ with entries uniform in [-1, 1] and moves
    along random symmetric directions Q, solving F(P₀ + tQ) = 0 by Newton;
    the first converged direction is kept. Samples without a converged
    direction are dropped.
    """
    n = m.n
    tries = cfg.max_directions
    shape = (count, tries)
    upper = np.triu_indices(n)
    start = rng.uniform(-1.0, 1.0, size=shape + (n, n))
    start = np.triu(start) + np.swapaxes(np.triu(start, 1), -1, -2)
    direction = rng.standard_normal(size=shape + (n, n))
    direction = np.triu(direction) + np.swapaxes(np.triu(direction, 1),
                                                 -1, -2)
    base_env = m.env()
    names = [jet_name((i + 1, j + 1)) for i, j in zip(*upper)]
    value_c = compile_expr(F)
    partial_c = [compile_expr(diff(F, name)) for name in names]
    flat_start = start.reshape(-1, n, n)
    flat_dir = direction.reshape(-1, n, n)

    def env_at(t: np.ndarray) -> Dict[str, np.ndarray]:
        env = dict(base_env)
        for name, i, j in zip(names, *upper):
            env[name] = flat_start[:, i, j] + t * flat_dir[:, i, j]
        return env

    def func(t: np.ndarray) -> np.ndarray:
        return np.broadcast_to(value_c(env_at(t)), t.shape)

    def deriv(t: np.ndarray) -> np.ndarray:
        env = env_at(t)
        return sum(np.broadcast_to(c(env), t.shape) * flat_dir[:, i, j]
                   for c, i, j in zip(partial_c, *upper))

    t, ok = newton_1d(func, deriv, np.zeros(count * tries), cfg.newton)
    ok = (ok & np.isfinite(t)).reshape(shape)
    t = t.reshape(shape)
    points = []
    for k in range(count):
        hits = np.flatnonzero(ok[k])
        if hits.size == 0:
            logger.debug("Fiber sample %d: no direction converged", k)
            continue
        d = hits[0]
        points.append(JetPoint(m, start[k, d] + t[k, d] * direction[k, d]))
    if len(points) < count:
        logger.warning("Fiber sampler kept %d of %d samples",
                       len(points), count)
    return points


@dataclass
class Reconstruction:
    """Recovered pair of distributions; the labeling is arbitrary."""

    d: DistFrame
    dperp: DistFrame
    samples: int
    discarded: int
    smallest_singular: Tuple[float, float]
    coupling: float
    lines: int = field(default=0)

    def __iter__(self):
        return iter((self.d, self.dperp))

    def to_dict(self) -> Dict[str, object]:
        return {"d": self.d.vectors.tolist(),
                "dperp": self.dperp.vectors.tolist(),
                "samples": self.samples, "discarded": self.discarded,
                "lines": self.lines,
                "smallest_singular": list(self.smallest_singular),
                "coupling": self.coupling}


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


class _Cluster:
    def __init__(self) -> None:
        self.lines: List[np.ndarray] = []

    def distance(self, u: np.ndarray) -> float:
        if not self.lines:
            return 1.0
        _, sv, vh = np.linalg.svd(np.array(self.lines), full_matrices=False)
        q = vh[sv > 1e-12 * sv[0]]
        return float(np.linalg.norm(u - q.T @ (q @ u)))

    def coupling(self, u: np.ndarray) -> float:
        if not self.lines:
            return 0.0
        return float(np.max(np.abs(omega_matrix(u[None, :],
                                                np.array(self.lines)))))


def _cluster_lines(pairs: List[Tuple[np.ndarray, Optional[np.ndarray]]],
                   tol: float) -> Tuple[_Cluster, _Cluster]:
    """Greedy split of line pairs into two ω-orthogonal clusters.

    The first line seeds the first cluster. Each later pair is assigned
    in the orientation with the smaller ω-coupling to the opposite
    cluster, ties broken by the smaller growth of the spans.
    """
    first, second = _Cluster(), _Cluster()
    for v, w in pairs:
        if w is None:
            first.lines.append(v)
            second.lines.append(v)
            continue
        straight = (first.coupling(w) + second.coupling(v),
                    first.distance(v) + second.distance(w))
        swapped = (first.coupling(v) + second.coupling(w),
                   first.distance(w) + second.distance(v))
        if abs(straight[0] - swapped[0]) > tol:
            keep = straight[0] < swapped[0]
        else:
            keep = straight[1] <= swapped[1]
        if not keep:
            v, w = w, v
        first.lines.append(v)
        second.lines.append(w)
    return first, second


def _span(cluster: _Cluster, n: int, cfg: ReconstructionConfig,
          m: ChartPoint) -> Tuple[DistFrame, float]:
    _, sv, vh = np.linalg.svd(np.array(cluster.lines), full_matrices=False)
    dim = int(np.sum(sv > cfg.span_tol * sv[0]))
    if dim < n:
        raise InsufficientSamples(
            "sampled lines do not fill an n-dimensional space",
            {"dimension": dim, "lines": len(cluster.lines)})
    if dim > n:
        raise NotGoursatType(
            "sampled lines span more than n dimensions",
            {"dimension": dim, "lines": len(cluster.lines)})
    return DistFrame(m, vh[:n]), float(sv[n - 1])


def reconstruct_distributions(F: Expr, m: ChartPoint,
                              rng: np.random.Generator,
                              cfg: ReconstructionConfig
                              = ReconstructionConfig()) -> Reconstruction:
    """Rebuild D and D⊥ at m from the lines of the decomposed metrics.

    Raises:
        NotGoursatType: A sampled metric is not decomposable.
        InsufficientSamples: The lines do not reach dimension n.
        OrthogonalityViolation: The two spans are not ω-orthogonal.
    """
    n = m.n
    pairs: List[Tuple[np.ndarray, Optional[np.ndarray]]] = []
    discarded = 0
    accepted = 0
    for attempt in range(cfg.max_rounds):
        needed = cfg.samples - accepted
        if needed <= 0:
            break
        for m1 in sample_fiber(F, m, needed, rng, cfg):
            metric = metric_of_equation(F, m1)
            result = decompose_metric(metric, cfg.rank_tol)
            if isinstance(result, Zero):
                discarded += 1
                continue
            if isinstance(result, NotDecomposable):
                raise NotGoursatType(
                    "metric of the equation is not decomposable",
                    {"sample": accepted, "rank": result.rank,
                     "P": m1.P.tolist()})
            frame = tautological_frame(m1)
            if isinstance(result, Rank1):
                pairs.append((_unit(result.v @ frame), None))
            elif isinstance(result, Decomposable):
                pairs.append((_unit(result.v @ frame),
                              _unit(result.w @ frame)))
            accepted += 1
        logger.debug("Reconstruction round %d: %d accepted, %d singular",
                     attempt, accepted, discarded)
    if discarded:
        logger.warning("Discarded %d singular fiber samples", discarded)
    if not pairs:
        raise InsufficientSamples("no regular point found on the fiber",
                                  {"samples": cfg.samples,
                                   "discarded": discarded})
    first, second = _cluster_lines(pairs, cfg.span_tol)
    d, sv_d = _span(first, n, cfg, m)
    dperp, sv_perp = _span(second, n, cfg, m)
    coupling = float(np.max(np.abs(d.omega_matrix(dperp))))
    if coupling > cfg.span_tol:
        raise OrthogonalityViolation(
            "recovered spaces are not orthogonal", {"coupling": coupling})
    return Reconstruction(d, dperp, accepted, discarded, (sv_d, sv_perp),
                          coupling, lines=len(first.lines))


def recover_B(frame: DistFrame, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Values b_ij of a frame in the normal form ∂̂_{x^i} + b_ij ∂_{p_j}.

    Raises:
        NonTransversal: The ∂̂_x block of the frame is singular. A chart
            change x^i = x̄^i + ε_i p̄_i makes it regular.
    """
    n = frame.n
    x_block = frame.vectors[:, :n]
    sv = np.linalg.svd(x_block, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= tol * sv[0]:
        raise NonTransversal(
            "frame has no normal form in this chart",
            {"smallest_singular": float(sv[-1]),
             "recommendation": "shift the chart by x = xb + eps * pb"})
    return np.linalg.solve(x_block, frame.vectors[:, n + 1:])
