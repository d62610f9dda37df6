"""Contact geometry in one Darboux chart (x, z, p) with θ = dz - Σ p_i dx^i.

Tangent vectors are written in the coordinate frame (∂_x, ∂_z, ∂_p); the
hat-derivative ∂̂_{x^i} = ∂_{x^i} + p_i ∂_z spans, together with ∂_{p_i},
the contact distribution C = ker θ.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import (Callable, Dict, Iterable, List, Optional, Sequence,
                    Tuple, Union)

import numpy as np

from .errors import (CharacteristicDatum, DatumNotOnEquation, NewtonDivergence,
                     RankDeficientDatum)
from .exprlang import (Expr, Var, VarTable, ZERO, add, compile_expr, diff,
                       evaluate, mul, neg)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ChartPoint:
    """Point (x, z, p) of the contact chart."""

    x: np.ndarray
    z: float
    p: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        if x.shape != p.shape:
            raise ValueError("x and p must have the same length.")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))
                and np.isfinite(self.z)):
            raise ValueError("Chart point entries must be finite.")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "z", float(self.z))

    @property
    def n(self) -> int:
        return self.x.size

    def env(self) -> Dict[str, float]:
        """Variable bindings of the chart coordinates."""
        env = {f"x{i + 1}": v for i, v in enumerate(self.x)}
        env.update({f"p{i + 1}": v for i, v in enumerate(self.p)})
        env["z"] = self.z
        return env

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, [self.z], self.p])

    @classmethod
    def from_array(cls, coords: Sequence[float]) -> "ChartPoint":
        coords = np.asarray(coords, dtype=float)
        n = (coords.size - 1) // 2
        return cls(coords[:n], coords[n], coords[n + 1:])


@dataclass(frozen=True, eq=False)
class TangentAtPoint:
    """Tangent vector in the coordinate frame (∂_x, ∂_z, ∂_p)."""

    dx: np.ndarray
    dz: float
    dp: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "dx", np.asarray(self.dx, float).reshape(-1))
        object.__setattr__(self, "dp", np.asarray(self.dp, float).reshape(-1))
        object.__setattr__(self, "dz", float(self.dz))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.dx, [self.dz], self.dp])

    @classmethod
    def from_array(cls, coords: Sequence[float]) -> "TangentAtPoint":
        coords = np.asarray(coords, dtype=float)
        n = (coords.size - 1) // 2
        return cls(coords[:n], coords[n], coords[n + 1:])


def hat_x(m: ChartPoint, i: int) -> TangentAtPoint:
    """∂̂_{x^i} at m, with 1-based index i."""
    dx = np.zeros(m.n)
    dx[i - 1] = 1.0
    return TangentAtPoint(dx, m.p[i - 1], np.zeros(m.n))


def d_p(n: int, i: int) -> TangentAtPoint:
    """∂_{p_i}, with 1-based index i."""
    dp = np.zeros(n)
    dp[i - 1] = 1.0
    return TangentAtPoint(np.zeros(n), 0.0, dp)


def d_z(n: int) -> TangentAtPoint:
    """Reeb field ∂_z."""
    return TangentAtPoint(np.zeros(n), 1.0, np.zeros(n))


def theta_eval(m: ChartPoint, v: TangentAtPoint) -> float:
    """θ_m(v) = dz(v) - Σ p_i dx^i(v)."""
    return v.dz - float(m.p @ v.dx)


def omega_eval(m: ChartPoint, v: TangentAtPoint, w: TangentAtPoint) -> float:
    """dθ(v, w) = Σ_i dx^i(v) dp_i(w) - dx^i(w) dp_i(v)."""
    return float(v.dx @ w.dp - w.dx @ v.dp)


def omega_matrix(rows_a: np.ndarray, rows_b: np.ndarray) -> np.ndarray:
    """Pairings dθ(a_k, b_l) of two stacks of coordinate vectors."""
    n = (rows_a.shape[-1] - 1) // 2
    ax, ap = rows_a[..., :n], rows_a[..., n + 1:]
    bx, bp = rows_b[..., :n], rows_b[..., n + 1:]
    return ax @ bp.T - ap @ bx.T


class VectorFieldExpr:
    """Vector field with symbolic components on the chart.

    Attributes:
        components: 2n+1 expressions, coefficients of ∂_x, ∂_z, ∂_p.
        vt: Variable table of the chart.
    """

    def __init__(self, components: Sequence[Expr], vt: VarTable) -> None:
        if len(components) != 2 * vt.n + 1:
            raise ValueError(
                f"Expected {2 * vt.n + 1} components, got {len(components)}.")
        self.components: Tuple[Expr, ...] = tuple(components)
        self.vt = vt
        self._jacobian: Optional[List[List[Expr]]] = None

    def __repr__(self) -> str:
        terms = [f"({c})*d{name}" for c, name in
                 zip(self.components, self.vt.chart) if c is not ZERO]
        return "<VectorFieldExpr: " + (" + ".join(terms) or "0") + ">"

    def values(self, env: Dict[str, Union[float, np.ndarray]],
               shape: Tuple[int, ...] = ()) -> np.ndarray:
        """Components evaluated on an environment, shape (2n+1, *shape)."""
        out = np.empty((len(self.components),) + shape)
        for k, comp in enumerate(self.components):
            out[k] = compile_expr(comp)(env)
        return out

    def at(self, m: ChartPoint) -> TangentAtPoint:
        return TangentAtPoint.from_array(self.values(m.env()))

    def apply(self, g: Expr) -> Expr:
        """The derivation Y(g) = Σ_k Y^k ∂g/∂u^k."""
        result: Expr = ZERO
        for comp, name in zip(self.components, self.vt.chart):
            result = add(result, mul(comp, diff(g, name)))
        return result

    def jacobian(self) -> List[List[Expr]]:
        """Symbolic matrix ∂Y^k/∂u^j."""
        if self._jacobian is None:
            self._jacobian = [[diff(comp, name) for name in self.vt.chart]
                              for comp in self.components]
        return self._jacobian


def hamiltonian_field(f: Expr, vt: VarTable) -> VectorFieldExpr:
    """Y_f = Σ ∂_{p_i}(f) ∂̂_{x^i} - ∂̂_{x^i}(f) ∂_{p_i}.

    θ(Y_f) = 0 and Y_f(f) = 0 hold identically.
    """
    f_p = [diff(f, name) for name in vt.p]
    f_z = diff(f, "z")
    x_comp = f_p
    z_comp: Expr = ZERO
    for i, name in enumerate(vt.p):
        z_comp = add(z_comp, mul(Var(name), f_p[i]))
    p_comp = [neg(add(diff(f, vt.x[i]), mul(Var(vt.p[i]), f_z)))
              for i in range(vt.n)]
    return VectorFieldExpr(x_comp + [z_comp] + p_comp, vt)


def bracket(f: Expr, g: Expr, vt: VarTable) -> Expr:
    """{f, g} = Y_f(g). f and g are in involution when it vanishes."""
    return hamiltonian_field(f, vt).apply(g)


def _index_mask(n: int, subset: Iterable[int]) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for alpha in subset:
        if not 1 <= alpha <= n:
            raise ValueError(f"Index {alpha} out of range 1..{n}.")
        mask[alpha - 1] = True
    return mask


def legendre(m: ChartPoint, subset: Iterable[int],
             inverse: bool = False) -> ChartPoint:
    """Partial Legendre transformation on the indices of ``subset``.

    x'^α = p_α, p'_α = -x^α, z' = z - Σ p_α x^α for α in the subset; the
    other coordinates are unchanged. The full subset gives the Legendre
    transformation.
    """
    mask = _index_mask(m.n, subset)
    x, p = m.x.copy(), m.p.copy()
    if inverse:
        x[mask], p[mask] = -m.p[mask], m.x[mask]
        z = m.z - float(m.x[mask] @ m.p[mask])
    else:
        x[mask], p[mask] = m.p[mask], -m.x[mask]
        z = m.z - float(m.p[mask] @ m.x[mask])
    return ChartPoint(x, z, p)


def legendre_inverse(m: ChartPoint, subset: Iterable[int]) -> ChartPoint:
    return legendre(m, subset, inverse=True)


def legendre_pushforward(m: ChartPoint, v: TangentAtPoint,
                         subset: Iterable[int]) -> TangentAtPoint:
    """Differential of the Legendre transformation at m applied to v."""
    mask = _index_mask(m.n, subset)
    dx, dp = v.dx.copy(), v.dp.copy()
    dx[mask], dp[mask] = v.dp[mask], -v.dx[mask]
    dz = v.dz - float(v.dp[mask] @ m.x[mask] + m.p[mask] @ v.dx[mask])
    return TangentAtPoint(dx, dz, dp)


@dataclass(frozen=True)
class NewtonConfig:
    """Damped Newton iteration settings."""

    max_iter: int = 50
    tol: float = 1e-12
    damping: float = 0.5
    max_halvings: int = 30


def newton_1d(func: Callable[[np.ndarray], np.ndarray],
              deriv: Callable[[np.ndarray], np.ndarray],
              s0: np.ndarray,
              cfg: NewtonConfig = NewtonConfig()
              ) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised scalar Newton iteration with step damping.

    Each entry of ``s0`` is an independent problem. A step is scaled by
    ``cfg.damping`` while it increases the residual.

    Returns:
        The iterates and a mask of converged entries.
    """
    s = np.array(s0, dtype=float, copy=True)
    with np.errstate(all="ignore"):
        value = np.broadcast_to(func(s), s.shape).astype(float)
        converged = np.abs(value) <= cfg.tol
        for iteration in range(cfg.max_iter):
            active = ~converged & np.isfinite(value)
            if not np.any(active):
                break
            slope = np.broadcast_to(deriv(s), s.shape)
            step = np.where(active & (slope != 0.0), -value / slope, 0.0)
            step = np.where(np.isfinite(step), step, 0.0)
            scale = np.ones_like(s)
            trial = s + step
            trial_value = np.broadcast_to(func(trial), s.shape)
            for _ in range(cfg.max_halvings):
                worse = active & ~(np.abs(trial_value) <= np.abs(value))
                if not np.any(worse):
                    break
                scale = np.where(worse, scale * cfg.damping, scale)
                trial = s + scale * step
                trial_value = np.broadcast_to(func(trial), s.shape)
            s = np.where(active, trial, s)
            value = np.where(active, trial_value, value)
            converged = np.abs(value) <= cfg.tol
            logger.debug("Newton iteration %d: max residual %.3e",
                         iteration, float(np.max(np.abs(value), initial=0.0)))
    return s, converged


@dataclass(frozen=True)
class ParameterGrid:
    """Tensor grid on the parameter box [a, b]^dim."""

    dim: int
    lower: float = 0.0
    upper: float = 1.0
    points_per_axis: int = 11

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("Parameter dimension must be positive.")
        if self.points_per_axis < 1 or self.upper < self.lower:
            raise ValueError("Invalid parameter grid.")

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def spacing(self) -> float:
        if self.points_per_axis == 1:
            return 0.0
        return (self.upper - self.lower) / (self.points_per_axis - 1)

    def points(self) -> np.ndarray:
        """Grid points, shape (dim, size), C order over the axes."""
        axis = np.linspace(self.lower, self.upper, self.points_per_axis)
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh])


@dataclass
class DatumSample:
    """Cauchy datum evaluated on parameter values.

    Attributes:
        t: Parameters, shape (n-1, N).
        x: Shape (n, N).
        z: Shape (N,).
        p: Shape (n, N).
        tangents: ∂(x, z, p)/∂t_h, shape (n-1, 2n+1, N).
    """

    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    p: np.ndarray
    tangents: np.ndarray

    @property
    def states(self) -> np.ndarray:
        """Chart coordinates, shape (2n+1, N)."""
        return np.concatenate([self.x, self.z[None, :], self.p])

    def env(self) -> Dict[str, np.ndarray]:
        n = self.x.shape[0]
        env = {f"x{i + 1}": self.x[i] for i in range(n)}
        env.update({f"p{i + 1}": self.p[i] for i in range(n)})
        env["z"] = self.z
        return env

    def point(self, k: int) -> ChartPoint:
        return ChartPoint(self.x[:, k], self.z[k], self.p[:, k])


@dataclass
class _Lift:
    f: Expr
    p_seed: np.ndarray
    newton: NewtonConfig
    rank_tol: float


class CauchyDatum:
    """(n-1)-dimensional integral submanifold of the contact distribution.

    X and Z are expressions in the parameters t1..t_{n-1}. P is either given
    symbolically or lifted numerically from a first-order equation f = 0.
    """

    def __init__(self, vt: VarTable, X: Sequence[Expr], Z: Expr,
                 P: Optional[Sequence[Expr]] = None,
                 box: Tuple[float, float] = (0.0, 1.0),
                 lift: Optional[_Lift] = None,
                 name: str = "datum") -> None:
        if len(X) != vt.n or (P is not None and len(P) != vt.n):
            raise ValueError(f"Datum needs {vt.n} components for X and P.")
        if (P is None) == (lift is None):
            raise ValueError("Datum needs either P or a lifting equation.")
        self.vt = vt
        self.X = tuple(X)
        self.Z = Z
        self.P = None if P is None else tuple(P)
        self.box = (float(box[0]), float(box[1]))
        self.name = name
        self._lift = lift

    @property
    def dim(self) -> int:
        return self.vt.n - 1

    @property
    def lifted(self) -> bool:
        return self._lift is not None

    def grid(self, points_per_axis: int) -> ParameterGrid:
        return ParameterGrid(self.dim, self.box[0], self.box[1],
                             points_per_axis)

    def _param_env(self, t: np.ndarray) -> Dict[str, np.ndarray]:
        return {f"t{h + 1}": t[h] for h in range(self.dim)}

    def _eval(self, e: Expr, env, size: int) -> np.ndarray:
        return np.broadcast_to(evaluate(e, env), (size,)).astype(float)

    def _xz_jets(self, t: np.ndarray):
        env = self._param_env(t)
        size = t.shape[1]
        tn = self.vt.t
        x = np.stack([self._eval(e, env, size) for e in self.X])
        z = self._eval(self.Z, env, size)
        jx = np.stack([[self._eval(diff(e, th), env, size) for e in self.X]
                       for th in tn])
        jz = np.stack([self._eval(diff(self.Z, th), env, size) for th in tn])
        return env, x, z, jx, jz

    def sample(self, t: np.ndarray) -> DatumSample:
        """Evaluate the datum and its parameter tangents.

        Args:
            t: Parameter values, shape (n-1, N).

        Raises:
            RankDeficientDatum: ∂X/∂t is not of full rank (lifted data).
            NewtonDivergence: The lifting equation has no root near the seed.
        """
        t = np.atleast_2d(np.asarray(t, dtype=float))
        size = t.shape[1]
        env, x, z, jx, jz = self._xz_jets(t)
        tn = self.vt.t
        if self.P is not None:
            p = np.stack([self._eval(e, env, size) for e in self.P])
            jp = np.stack([[self._eval(diff(e, th), env, size)
                            for e in self.P] for th in tn])
        else:
            p = self._lift_momenta(t, x, z, jx, jz)
            jp = self._lift_tangents(env, x, z, p, jx, jz)
        tangents = np.concatenate([jx, jz[:, None, :], jp], axis=1)
        return DatumSample(t, x, z, p, tangents)

    def sample_grid(self, grid: ParameterGrid) -> DatumSample:
        return self.sample(grid.points())

    def _lift_momenta(self, t, x, z, jx, jz) -> np.ndarray:
        lift = self._lift
        n = self.vt.n
        jac = np.moveaxis(jx, 2, 0)             # (N, n-1, n)
        rhs = np.moveaxis(jz, 1, 0)             # (N, n-1)
        _, sv, vh = np.linalg.svd(jac, full_matrices=True)
        bad = (sv[:, 0] == 0.0) | (sv[:, -1] <= lift.rank_tol * sv[:, 0])
        if np.any(bad):
            k = int(np.argmax(bad))
            raise RankDeficientDatum(
                "parameter Jacobian of the datum is rank deficient",
                {"t": t[:, k].tolist()})
        particular = np.einsum("kij,kj->ki", np.linalg.pinv(jac), rhs)
        kernel = vh[:, -1, :]                   # (N, n)
        env = {f"x{i + 1}": x[i] for i in range(n)}
        env["z"] = z
        f_c = compile_expr(lift.f)
        fp_c = [compile_expr(diff(lift.f, name)) for name in self.vt.p]

        def momenta(s):
            return particular + s[:, None] * kernel

        def bind(s):
            full = dict(env)
            pm = momenta(s)
            full.update({f"p{i + 1}": pm[:, i] for i in range(n)})
            return full

        def func(s):
            return np.broadcast_to(f_c(bind(s)), s.shape)

        def deriv(s):
            full = bind(s)
            return sum(np.broadcast_to(fp(full), s.shape) * kernel[:, i]
                       for i, fp in enumerate(fp_c))

        s0 = np.einsum("ki,ki->k", lift.p_seed[None, :] - particular, kernel)
        s, ok = newton_1d(func, deriv, s0, lift.newton)
        if not np.all(ok):
            k = int(np.argmin(ok))
            raise NewtonDivergence(
                "lifting equation did not converge on the datum",
                {"t": t[:, k].tolist()})
        return momenta(s).T

    def _lift_tangents(self, env, x, z, p, jx, jz) -> np.ndarray:
        """∂P/∂t from the differentiated contact and lifting equations."""
        n, dim = self.vt.n, self.dim
        size = x.shape[1]
        tn = self.vt.t
        f = self._lift.f
        full = dict(env)
        full.update({f"x{i + 1}": x[i] for i in range(n)})
        full.update({f"p{i + 1}": p[i] for i in range(n)})
        full["z"] = z
        f_x = np.stack([self._eval(diff(f, v), full, size) for v in self.vt.x])
        f_z = self._eval(diff(f, "z"), full, size)
        f_p = np.stack([self._eval(diff(f, v), full, size) for v in self.vt.p])
        matrix = np.zeros((size, n, n))
        matrix[:, :dim, :] = np.moveaxis(jx, 2, 0)
        matrix[:, dim, :] = f_p.T
        rhs = np.zeros((size, n, dim))
        for k, tk in enumerate(tn):
            for h, th in enumerate(tn):
                zz = self._eval(diff(diff(self.Z, th), tk), env, size)
                xx = np.stack([self._eval(diff(diff(e, th), tk), env, size)
                               for e in self.X])
                rhs[:, h, k] = zz - np.einsum("ik,ik->k", p, xx)
            rhs[:, dim, k] = -(np.einsum("ik,ik->k", f_x, jx[k])
                               + f_z * jz[k])
        try:
            jp = np.linalg.solve(matrix, rhs)    # (N, n, dim)
        except np.linalg.LinAlgError as err:
            raise CharacteristicDatum(
                "f_p lies in the span of the datum tangents",
                {"datum": self.name}) from err
        return np.moveaxis(jp, 0, 2).transpose(1, 0, 2)

    def residual_on(self, f: Expr, sample: DatumSample) -> float:
        """max |f| over a datum sample."""
        values = np.broadcast_to(evaluate(f, sample.env()),
                                 sample.z.shape)
        return float(np.max(np.abs(values)))


def cauchy_datum(vt: VarTable, X: Sequence[Expr], Z: Expr,
                 P: Sequence[Expr], box: Tuple[float, float] = (0.0, 1.0),
                 name: str = "datum") -> CauchyDatum:
    """Datum with all components given symbolically."""
    return CauchyDatum(vt, X, Z, P=P, box=box, name=name)


def lift_cauchy_datum(X: Sequence[Expr], Z: Expr, f: Expr,
                      t0: Sequence[float], p_seed: Sequence[float],
                      vt: VarTable, box: Tuple[float, float] = (0.0, 1.0),
                      newton: NewtonConfig = NewtonConfig(),
                      rank_tol: float = 1e-9,
                      name: str = "datum",
                      tol: float = 1e-8) -> CauchyDatum:
    """Prolong (X, Z) to a Cauchy datum of f = 0.

    P(t) solves the n-1 contact conditions ∂Z/∂t_h = Σ P_i ∂X^i/∂t_h and
    f(X, Z, P) = 0, by Newton from ``p_seed`` along the kernel of ∂X/∂t.
    The lift is solved at ``t0`` immediately and on demand elsewhere.

    Raises:
        RankDeficientDatum: ∂X/∂t is not of full rank at t0.
        NewtonDivergence: No root of f near the seed at t0.
        DatumNotOnEquation: θ or f exceeds ``tol`` on the lift at t0.
    """
    lift = _Lift(f, np.asarray(p_seed, dtype=float).reshape(-1), newton,
                 rank_tol)
    if lift.p_seed.size != vt.n:
        raise ValueError(f"p_seed must have {vt.n} entries.")
    datum = CauchyDatum(vt, X, Z, lift=lift, box=box, name=name)
    check = datum.sample(np.asarray(t0, dtype=float).reshape(-1, 1))
    integral = verify_integral_sample(check)
    on_equation = datum.residual_on(f, check)
    logger.debug("Lifted datum %s at t0: θ residual %.3e, f residual %.3e",
                 name, integral, on_equation)
    if integral > tol or on_equation > tol:
        raise DatumNotOnEquation(
            "lifted datum misses the contact condition or the equation",
            {"theta_residual": integral, "f_residual": on_equation,
             "tol": tol})
    return datum


def verify_integral_sample(sample: DatumSample) -> float:
    """max_h |∂Z/∂t_h - Σ P_i ∂X^i/∂t_h| over a sample."""
    n = sample.x.shape[0]
    jx = sample.tangents[:, :n, :]
    jz = sample.tangents[:, n, :]
    residual = jz - np.einsum("ik,hik->hk", sample.p, jx)
    return float(np.max(np.abs(residual), initial=0.0))


@dataclass
class IntegralReport:
    """Outcome of :func:`verify_integral`."""

    max_residual: float
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self) -> None:
        self.passed = bool(self.max_residual <= self.tol)


def verify_integral(datum: CauchyDatum, grid: ParameterGrid,
                    tol: float = 1e-10) -> IntegralReport:
    """Check that θ pulls back to zero on the datum over a grid."""
    report = IntegralReport(verify_integral_sample(datum.sample_grid(grid)),
                            tol)
    if not report.passed:
        logger.warning("Datum %s is not integral: residual %.3e > %.1e",
                       datum.name, report.max_residual, tol)
    return report
