"""Method of characteristics and the generalised Monge method.

Datum grids are integrated all at once: states are arrays of shape
(2n+1, N) holding the chart coordinates of N grid nodes, tangents along
the datum parameters are carried by the variational equation.
"""
import logging
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, product
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .contact import (CauchyDatum, ChartPoint, DatumSample, ParameterGrid,
                      VectorFieldExpr, hamiltonian_field)
from .errors import (CharacteristicDatum, ContactMaeError,
                     DatumNotOnEquation, NoRelationFound, NonFiniteState,
                     NonGraphicalPatch, NonIntegralSurface, NotFirstIntegral,
                     SideMismatch)
from .exprlang import (Const, Expr, ZERO, add, compile_expr, diff, evaluate,
                       exp, jet_name, mul, to_string)
from .mae import (BField, DistFrame, ReconstructionConfig, frames,
                  goursat_equation, reconstruct_distributions)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FlowConfig:
    """Fixed-step RK4 settings.

    Attributes:
        dt: Step size.
        t_span: Flow times (t-, t+) with t- <= 0 <= t+.
        save_every: Keep every k-th step (the last step is always kept).
        tangents: Propagate datum tangents with the variational equation.
    """

    dt: float = 1e-3
    t_span: Tuple[float, float] = (0.0, 1.0)
    save_every: int = 1
    tangents: bool = True

    def __post_init__(self) -> None:
        lower, upper = self.t_span
        if self.dt <= 0.0:
            raise ValueError("dt must be positive.")
        if not lower <= 0.0 <= upper or lower == upper:
            raise ValueError("t_span must contain 0 and be non-empty.")
        if self.dt > upper - lower:
            raise ValueError("dt must not exceed the length of t_span.")
        if self.save_every < 1:
            raise ValueError("save_every must be positive.")


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


class _Field:
    """Compiled vector field and, on demand, its Jacobian."""

    def __init__(self, vf: VectorFieldExpr, jacobian: bool) -> None:
        self.names = vf.vt.chart
        self.components = [compile_expr(c) for c in vf.components]
        self.jacobian = []
        if jacobian:
            self.jacobian = [(k, j, compile_expr(e))
                             for k, row in enumerate(vf.jacobian())
                             for j, e in enumerate(row) if not _is_zero(e)]

    def env(self, u: np.ndarray) -> Dict[str, np.ndarray]:
        return {name: u[k] for k, name in enumerate(self.names)}

    def rate(self, u: np.ndarray) -> Tuple[np.ndarray, Dict]:
        env = self.env(u)
        out = np.empty_like(u)
        for k, comp in enumerate(self.components):
            out[k] = comp(env)
        return out, env

    def tangent_rate(self, env: Dict, xi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(xi)
        for k, j, entry in self.jacobian:
            out[:, k] += entry(env) * xi[:, j]
        return out


def _rk4_step(fld: _Field, u: np.ndarray, xi: Optional[np.ndarray],
              h: float) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    k1, env = fld.rate(u)
    k2, env2 = fld.rate(u + 0.5 * h * k1)
    k3, env3 = fld.rate(u + 0.5 * h * k2)
    k4, env4 = fld.rate(u + h * k3)
    u_next = u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if xi is None:
        return u_next, None
    l1 = fld.tangent_rate(env, xi)
    l2 = fld.tangent_rate(env2, xi + 0.5 * h * l1)
    l3 = fld.tangent_rate(env3, xi + 0.5 * h * l2)
    l4 = fld.tangent_rate(env4, xi + h * l3)
    return u_next, xi + h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)


def _integrate_half(fld, u, xi, t_end, cfg):
    times, states, tangents = [], [], []
    steps = int(round(abs(t_end) / cfg.dt))
    if steps == 0:
        return times, states, tangents
    h = t_end / steps
    for step in range(1, steps + 1):
        u, xi = _rk4_step(fld, u, xi, h)
        if not np.all(np.isfinite(u)) or \
                (xi is not None and not np.all(np.isfinite(xi))):
            raise NonFiniteState("integration produced a non-finite state",
                                 {"step": step, "t": step * h})
        if step % cfg.save_every == 0 or step == steps:
            times.append(step * h)
            states.append(u)
            tangents.append(xi)
    return times, states, tangents


def integrate(vf: VectorFieldExpr, states: np.ndarray, cfg: FlowConfig,
              tangents: Optional[np.ndarray] = None
              ) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """RK4 flow of many initial states.

    Args:
        vf: The vector field.
        states: Initial states, shape (2n+1, N).
        cfg: Flow settings.
        tangents: Initial tangents, shape (H, 2n+1, N), or None.

    Returns:
        Times (T,), states (T, 2n+1, N) and tangents (T, H, 2n+1, N) or
        None, ordered by time.

    Raises:
        NonFiniteState: A state or tangent became infinite or NaN.
    """
    fld = _Field(vf, jacobian=tangents is not None)
    u0 = np.asarray(states, dtype=float)
    lower, upper = cfg.t_span
    fwd = _integrate_half(fld, u0, tangents, upper, cfg)
    bwd = _integrate_half(fld, u0, tangents, lower, cfg)
    times = bwd[0][::-1] + [0.0] + fwd[0]
    traj = bwd[1][::-1] + [u0] + fwd[1]
    logger.debug("Integrated %d states over %d saved times",
                 u0.shape[-1] if u0.ndim > 1 else 1, len(times))
    if tangents is None:
        return np.array(times), np.stack(traj), None
    tang = bwd[2][::-1] + [tangents] + fwd[2]
    return np.array(times), np.stack(traj), np.stack(tang)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def point(self, k: int) -> ChartPoint:
        return ChartPoint.from_array(self.states[k])


def flow(vf: VectorFieldExpr, m0: ChartPoint,
         cfg: FlowConfig = FlowConfig()) -> Trajectory:
    """Integral curve of a vector field through m0."""
    times, states, _ = integrate(vf, m0.as_array()[:, None], cfg)
    return Trajectory(times, states[:, :, 0])


@dataclass
class SolutionSurface:
    """Flow of a datum grid.

    Attributes:
        times: Saved flow times (T,).
        params: Datum parameters of the nodes, shape (n-1, N).
        grid_shape: Shape of the datum grid, product N.
        states: Shape (T, 2n+1, N).
        tangents: Datum tangents, shape (T, n-1, 2n+1, N), or None.
        char_field: Characteristic field that produced the surface.
        f: First-order equation whose characteristics were followed.
        datum: Name of the datum.
        f_residual: max |f| over the surface.
        theta_residual: max |θ| on the datum tangents, None without them.
    """

    times: np.ndarray
    params: np.ndarray
    grid_shape: Tuple[int, ...]
    states: np.ndarray
    tangents: Optional[np.ndarray]
    char_field: VectorFieldExpr
    f: Expr
    datum: str
    f_residual: float = 0.0
    theta_residual: Optional[float] = None

    @property
    def n(self) -> int:
        return (self.states.shape[1] - 1) // 2

    @property
    def flat_states(self) -> np.ndarray:
        """Shape (2n+1, T*N), node index t * N + k."""
        return np.moveaxis(self.states, 1, 0).reshape(self.states.shape[1],
                                                      -1)

    def env(self) -> Dict[str, np.ndarray]:
        flat = self.flat_states
        names = self.char_field.vt.chart
        return {name: flat[k] for k, name in enumerate(names)}

    def to_csv(self, path: str) -> None:
        """Write columns t, s1.., x1.., z, p1.. for every node."""
        n = self.n
        count = self.params.shape[1]
        t_col = np.repeat(self.times, count)
        s_cols = np.tile(self.params, len(self.times))
        table = np.column_stack([t_col, s_cols.T, self.flat_states.T])
        header = ",".join(["t"] + [f"s{h + 1}" for h in range(n - 1)]
                          + self.char_field.vt.chart)
        np.savetxt(path, table, delimiter=",", header=header, comments="",
                   fmt="%.17g")
        logger.info("Surface written to %s", path)

    def to_dict(self) -> Dict[str, object]:
        return {"datum": self.datum, "f": to_string(self.f),
                "times": len(self.times), "nodes": int(self.params.shape[1]),
                "t_span": [float(self.times[0]), float(self.times[-1])],
                "f_residual": self.f_residual,
                "theta_residual": self.theta_residual}


def _theta_residual(states: np.ndarray, tangents: np.ndarray) -> float:
    n = (states.shape[1] - 1) // 2
    p = states[:, None, n + 1:, :]
    xi_x = tangents[:, :, :n, :]
    xi_z = tangents[:, :, n, :]
    residual = xi_z - np.sum(p * xi_x, axis=2)
    return float(np.max(np.abs(residual), initial=0.0))


def solve_first_order(f: Expr, datum: CauchyDatum, cfg: FlowConfig,
                      grid: ParameterGrid, datum_tol: float = 1e-8,
                      transversality_tol: float = 1e-8) -> SolutionSurface:
    """Sweep a Cauchy datum of f = 0 along the characteristics Y_f.

    Raises:
        DatumNotOnEquation: max |f| on the datum exceeds ``datum_tol``.
        CharacteristicDatum: Y_f is tangent to the datum at a node.
    """
    vt = datum.vt
    sample = datum.sample_grid(grid)
    residual = datum.residual_on(f, sample)
    if residual > datum_tol:
        raise DatumNotOnEquation(
            "datum does not lie on the first-order equation",
            {"residual": residual, "tol": datum_tol})
    vf = hamiltonian_field(f, vt)
    states0 = sample.states
    y0 = vf.values(sample.env(), shape=states0.shape[1:])
    stacked = np.concatenate([np.moveaxis(sample.tangents, 2, 0),
                              np.moveaxis(y0, 1, 0)[:, None, :]], axis=1)
    sv = np.linalg.svd(stacked, compute_uv=False)
    ratio = sv[:, -1] / np.where(sv[:, 0] > 0.0, sv[:, 0], 1.0)
    if np.any(ratio <= transversality_tol):
        k = int(np.argmin(ratio))
        raise CharacteristicDatum(
            "characteristic field is tangent to the datum",
            {"s": sample.t[:, k].tolist(), "ratio": float(ratio[k])})
    tangents0 = sample.tangents if cfg.tangents else None
    times, states, tangents = integrate(vf, states0, cfg, tangents0)
    env = {name: np.moveaxis(states, 1, 0)[k].reshape(-1)
           for k, name in enumerate(vt.chart)}
    f_values = np.broadcast_to(evaluate(f, env), env["z"].shape)
    surface = SolutionSurface(
        times, sample.t, grid.shape, states, tangents, vf, f, datum.name,
        f_residual=float(np.max(np.abs(f_values))),
        theta_residual=None if tangents is None
        else _theta_residual(states, tangents))
    logger.info("Swept datum %s: f residual %.2e, theta residual %s",
                datum.name, surface.f_residual, surface.theta_residual)
    return surface


def compare_closed_form(surface: SolutionSurface, closed_form: Expr) -> float:
    """max |z - u(x)| over the surface."""
    env = surface.env()
    values = np.broadcast_to(evaluate(closed_form, env), env["z"].shape)
    return float(np.max(np.abs(env["z"] - values)))


# Second-order residual on a surface

@dataclass
class SurfaceResidual:
    max_residual: float
    condition: float
    nodes: int
    method: str

    def to_dict(self) -> Dict[str, object]:
        return {"max_residual": self.max_residual,
                "condition": self.condition, "nodes": self.nodes,
                "method": self.method}


def _evaluate_second_order(F: Expr, n: int, x, z, p, hessian) -> np.ndarray:
    env = {f"x{i + 1}": x[:, i] for i in range(n)}
    env.update({f"p{i + 1}": p[:, i] for i in range(n)})
    env["z"] = z
    for i in range(n):
        for j in range(i, n):
            env[jet_name((i + 1, j + 1))] = hessian[:, i, j]
    return np.broadcast_to(evaluate(F, env), z.shape)


def _stencil_hessians(surface: SolutionSurface, max_nodes: int):
    n = surface.n
    full_shape = (len(surface.times),) + tuple(surface.grid_shape)
    if min(full_shape) < 3:
        raise NonGraphicalPatch("surface grid too small for a stencil",
                                {"shape": list(full_shape)})
    interior = tuple(s - 2 for s in full_shape)
    total = int(np.prod(interior))
    chosen = np.unique(np.linspace(0, total - 1, min(total, max_nodes))
                       .astype(int))
    centers = np.stack(np.unravel_index(chosen, interior), axis=1) + 1
    offsets = np.array(list(product((-1, 0, 1), repeat=len(full_shape))))
    neighbours = centers[:, None, :] + offsets[None, :, :]
    flat_index = np.ravel_multi_index(
        tuple(np.moveaxis(neighbours, 2, 0)), full_shape)
    centre_index = np.ravel_multi_index(tuple(centers.T), full_shape)
    flat = surface.flat_states
    x_nb = flat[:n, flat_index].transpose(1, 2, 0)         # (K, S, n)
    p_nb = flat[n + 1:, flat_index].transpose(1, 2, 0)
    x_c = flat[:n, centre_index].T
    dx = x_nb - x_c[:, None, :]
    sv = np.linalg.svd(dx, compute_uv=False)
    if np.any(sv[:, -1] <= 1e-10 * sv[:, 0]):
        k = int(np.argmin(sv[:, -1] / sv[:, 0]))
        raise NonGraphicalPatch("surface is not a graph over x",
                                {"node": centers[k].tolist()})
    design = np.concatenate([np.ones(dx.shape[:2] + (1,)), dx], axis=2)
    coef = np.linalg.pinv(design) @ p_nb                   # (K, n+1, n)
    slope = coef[:, 1:, :]
    hessian = 0.5 * (slope + np.swapaxes(slope, 1, 2))
    condition = float(np.max(np.linalg.cond(design)))
    return (x_c, flat[n, centre_index], flat[n + 1:, centre_index].T,
            hessian, condition)


def _tangent_hessians(surface: SolutionSurface, max_nodes: int):
    if surface.tangents is None:
        raise ValueError("Surface was integrated without tangents.")
    n = surface.n
    flat = surface.flat_states
    total = flat.shape[1]
    chosen = np.unique(np.linspace(0, total - 1, min(total, max_nodes))
                       .astype(int))
    env = {name: flat[k, chosen]
           for k, name in enumerate(surface.char_field.vt.chart)}
    y = surface.char_field.values(env, shape=(chosen.size,))     # (D, K)
    t_idx, node = np.divmod(chosen, surface.states.shape[2])
    xi = surface.tangents[t_idx, :, :, node]                     # (K, H, D)
    vectors = np.concatenate([xi, y.T[:, None, :]], axis=1)      # (K, n, D)
    x_block = vectors[:, :, :n]
    p_block = vectors[:, :, n + 1:]
    sv = np.linalg.svd(x_block, compute_uv=False)
    if np.any(sv[:, -1] <= 1e-10 * sv[:, 0]):
        raise NonGraphicalPatch("surface is not a graph over x", {})
    hessian = np.swapaxes(np.linalg.solve(x_block, p_block), 1, 2)
    hessian = 0.5 * (hessian + np.swapaxes(hessian, 1, 2))
    condition = float(np.max(sv[:, 0] / sv[:, -1]))
    return (flat[:n, chosen].T, flat[n, chosen], flat[n + 1:, chosen].T,
            hessian, condition)


def mae_residual_on_surface(surface: SolutionSurface, F: Expr,
                            method: str = "stencil",
                            max_nodes: int = 4096) -> SurfaceResidual:
    """max |F| on the second-order jets of a surface.

    ``stencil`` fits p as an affine function of x over the 3^n grid
    neighbours of interior nodes; ``tangent`` solves dp = P dx on the
    propagated tangents and the characteristic field.

    Raises:
        NonGraphicalPatch: x does not parametrise the surface near a node.
    """
    if method == "stencil":
        parts = _stencil_hessians(surface, max_nodes)
    elif method == "tangent":
        parts = _tangent_hessians(surface, max_nodes)
    else:
        raise ValueError(f"Unknown residual method {method}.")
    x, z, p, hessian, condition = parts
    values = _evaluate_second_order(F, surface.n, x, z, p, hessian)
    return SurfaceResidual(float(np.max(np.abs(values))), condition,
                           int(z.size), method)


# Functional relations among restricted first integrals

@dataclass(frozen=True)
class RelationConfig:
    """Relation search settings.

    Attributes:
        degree: Highest total degree of the monomials.
        exp_features: Add exp(f_i) to the features.
        tol: Accepted relation residual.
        prune: Coefficients below prune * max are dropped.
        random_samples: Random datum points added to the grid nodes when
            fitting. Grid nodes repeat each parameter value, so functions
            of a single parameter satisfy spurious relations there.
        holdout: Further random datum points every relation is checked on.
    """

    degree: int = 2
    exp_features: bool = False
    tol: float = 1e-8
    prune: float = 1e-8
    random_samples: int = 64
    holdout: int = 32

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise ValueError("Relation degree must be positive.")
        if self.random_samples < 0 or self.holdout < 0:
            raise ValueError("Sample counts cannot be negative.")


@dataclass
class RelationResult:
    """ψ with Σ |ψ| = 1 and ψ · basis(g) = 0 on the datum.

    Attributes:
        features: Feature functions, f_i and optionally exp(f_i).
        monomials: Feature index tuples; the empty tuple is the constant.
        coefficients: ψ.
        residual: max of |ψ · basis(g)| over the fitting and held-out points.
        degree: Degree at which the relation was found.
        alternatives: Further independent relations, same normalisation.
    """

    features: List[Expr]
    monomials: List[Tuple[int, ...]]
    coefficients: np.ndarray
    residual: float
    degree: int
    alternatives: List[np.ndarray] = field(default_factory=list)

    def monomial_names(self) -> List[str]:
        names = [to_string(f) for f in self.features]
        return ["*".join(f"({names[k]})" for k in mono) or "1"
                for mono in self.monomials]

    def expression(self, coefficients: Optional[np.ndarray] = None) -> Expr:
        """f* = Σ ψ_k m_k(f_1, ..., f_n)."""
        coefficients = self.coefficients if coefficients is None \
            else coefficients
        result: Expr = ZERO
        for coef, mono in zip(coefficients, self.monomials):
            if coef == 0.0:
                continue
            term: Expr = Const(coef)
            for k in mono:
                term = mul(term, self.features[k])
            result = add(result, term)
        return result

    def to_dict(self) -> Dict[str, object]:
        return {"basis": self.monomial_names(),
                "coefficients": self.coefficients.tolist(),
                "residual": self.residual, "degree": self.degree,
                "alternatives": len(self.alternatives)}


def _reduced_rows(rows: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Reduced row echelon form with pivots taken from the left."""
    rows = rows.copy()
    scale = float(np.max(np.abs(rows), initial=0.0))
    r = 0
    for col in range(rows.shape[1]):
        if r == rows.shape[0]:
            break
        pivot = r + int(np.argmax(np.abs(rows[r:, col])))
        if abs(rows[pivot, col]) <= tol * scale:
            continue
        rows[[r, pivot]] = rows[[pivot, r]]
        rows[r] /= rows[r, col]
        for other in range(rows.shape[0]):
            if other != r:
                rows[other] -= rows[other, col] * rows[r]
        r += 1
    return rows[:r]


def _random_parameters(datum: CauchyDatum, count: int,
                       rng: np.random.Generator) -> np.ndarray:
    lower, upper = datum.box
    return rng.uniform(lower, upper, size=(datum.dim, count))


def _basis_matrix(columns: Sequence[np.ndarray],
                  monomials: Sequence[Tuple[int, ...]],
                  size: int) -> np.ndarray:
    return np.column_stack([
        np.prod([columns[k] for k in mono], axis=0) if mono
        else np.ones(size) for mono in monomials])


def find_relation(f_list: Sequence[Expr], datum: CauchyDatum,
                  grid: ParameterGrid,
                  cfg: RelationConfig = RelationConfig(),
                  rng: Optional[np.random.Generator] = None
                  ) -> RelationResult:
    """Search a polynomial relation ψ(g_1, ..., g_k) = 0, g_i = f_i|_datum.

    The fitting points are the grid nodes and ``cfg.random_samples``
    uniform points of the datum box. Degrees are tried in increasing order;
    columns are scaled to unit maximum before the singular value
    decomposition. A relation is kept only if it also vanishes on
    ``cfg.holdout`` further random points.

    Raises:
        NoRelationFound: No relation up to ``cfg.degree`` meets ``cfg.tol``.
    """
    if len(f_list) < 2:
        raise ValueError("A relation needs at least two functions.")
    rng = np.random.default_rng(0) if rng is None else rng
    params = grid.points()
    if cfg.random_samples:
        params = np.concatenate(
            [params, _random_parameters(datum, cfg.random_samples, rng)],
            axis=1)
    samples = [datum.sample(params)]
    if cfg.holdout:
        samples.append(datum.sample(_random_parameters(datum, cfg.holdout,
                                                       rng)))
    sizes = [s.z.size for s in samples]
    envs = [s.env() for s in samples]
    features = list(f_list)
    if cfg.exp_features:
        features += [exp(f) for f in f_list]
    columns: List[List[np.ndarray]] = [[] for _ in samples]
    kept = []
    with np.errstate(over="ignore", invalid="ignore"):
        for feat in features:
            values = [np.broadcast_to(evaluate(feat, env), (size,))
                      .astype(float) for env, size in zip(envs, sizes)]
            if all(np.all(np.isfinite(v)) for v in values):
                for target, v in zip(columns, values):
                    target.append(v)
                kept.append(feat)
            else:
                logger.warning("Dropped non-finite feature %s",
                               to_string(feat))
    size = sizes[0]
    best = np.inf
    for degree in range(1, cfg.degree + 1):
        monomials = [()] + [mono for d in range(1, degree + 1) for mono in
                            combinations_with_replacement(range(len(kept)),
                                                          d)]
        if size < 2 * len(monomials):
            logger.warning("Datum sample of %d points too small for degree %d",
                           size, degree)
            break
        matrix, *held = [_basis_matrix(cols, monomials, n)
                         for cols, n in zip(columns, sizes)]
        scale = np.max(np.abs(matrix), axis=0)
        scale[scale == 0.0] = 1.0
        _, sv, vh = np.linalg.svd(matrix / scale, full_matrices=False)
        null = vh[sv <= max(1e-10 * sv[0], sv[-1])]
        candidates = []
        for row in _reduced_rows(null):
            psi = row / scale
            psi[np.abs(psi) < cfg.prune * np.max(np.abs(psi))] = 0.0
            psi /= np.sum(np.abs(psi))
            residual = max(float(np.max(np.abs(m @ psi)))
                           for m in [matrix] + held)
            best = min(best, residual)
            if residual <= cfg.tol:
                candidates.append((residual, psi))
        logger.debug("Degree %d: %d monomials, smallest singular %.3e",
                     degree, len(monomials), sv[-1])
        candidates.sort(key=lambda item: item[0])
        if candidates:
            result = RelationResult(kept, monomials, candidates[0][1],
                                    candidates[0][0], degree,
                                    [c[1] for c in candidates[1:]])
            logger.info("Relation found at degree %d, residual %.2e",
                        degree, result.residual)
            return result
    raise NoRelationFound("no functional relation among the integrals",
                          {"best_residual": best, "degree": cfg.degree})


# Generalised Monge method

@dataclass(frozen=True)
class MongeConfig:
    flow: FlowConfig = FlowConfig()
    relation: RelationConfig = RelationConfig()
    reconstruction: ReconstructionConfig = ReconstructionConfig()
    side_tol: float = 1e-8
    side_samples: int = 3
    datum_tol: float = 1e-8
    transversality_tol: float = 1e-8
    theta_tol: float = 1e-6


@dataclass
class MongeResult:
    surface: SolutionSurface
    relation: RelationResult
    intermediate_integral: Expr
    side: str
    diagnostics: Dict[str, object]

    def to_dict(self) -> Dict[str, object]:
        out = {"surface": self.surface.to_dict(),
               "relation": self.relation.to_dict(),
               "intermediate_integral": to_string(self.intermediate_integral),
               "side": self.side}
        out.update(self.diagnostics)
        return out


def _compatible_sides(f_list: Sequence[Expr], vt, d: DistFrame,
                      dperp: DistFrame, tol: float) -> Set[str]:
    """Sides of the point holding every Y_f of the list.

    Raises:
        NotFirstIntegral: Some Y_f lies in neither distribution.
    """
    m = d.point
    sides = {"D", "Dperp"}
    for index, f in enumerate(f_list):
        y = hamiltonian_field(f, vt).at(m).as_array()
        if not np.any(y):
            continue
        own = set()
        if d.membership_residual(y) <= tol:
            own.add("D")
        if dperp.membership_residual(y) <= tol:
            own.add("Dperp")
        if not own:
            raise NotFirstIntegral(
                "function is not a first integral of D or D-perp",
                {"index": index, "function": to_string(f),
                 "point": m.as_array().tolist()})
        sides &= own
    return sides


def _check_sides(equation: Union[BField, Expr], f_list: Sequence[Expr],
                 f_list_perp: Optional[Sequence[Expr]],
                 datum: CauchyDatum, grid: ParameterGrid, cfg: MongeConfig,
                 rng: np.random.Generator) -> str:
    """Verify the side condition at a few datum nodes.

    Returns:
        Side of ``f_list`` at the first checked node.
    """
    sample = datum.sample_grid(grid)
    size = sample.z.size
    nodes = np.unique(np.linspace(0, size - 1, cfg.side_samples)
                      .astype(int))
    label = None
    for k in nodes:
        m = sample.point(int(k))
        if isinstance(equation, BField):
            d, dperp = frames(equation, m)
        else:
            d, dperp = reconstruct_distributions(equation, m, rng,
                                                 cfg.reconstruction)
        sides = _compatible_sides(f_list, datum.vt, d, dperp, cfg.side_tol)
        if not sides:
            raise SideMismatch("first integrals straddle D and D-perp",
                               {"node": int(k)})
        if f_list_perp is not None:
            other = _compatible_sides(f_list_perp, datum.vt, d, dperp,
                                      cfg.side_tol)
            if not any(a != b for a in sides for b in other):
                raise SideMismatch(
                    "both integral lists lie on the same side",
                    {"node": int(k)})
        if label is None:
            label = "D" if "D" in sides else "Dperp"
    return label


def _drift(functions: Sequence[Expr],
           surface: SolutionSurface) -> List[float]:
    """max |f - f(datum)| along the flow, per function."""
    origin = int(np.argmin(np.abs(surface.times)))
    env = surface.env()
    count = surface.states.shape[2]
    drift = []
    for f in functions:
        values = np.broadcast_to(evaluate(f, env), env["z"].shape)
        values = values.reshape(len(surface.times), count)
        drift.append(float(np.max(np.abs(values - values[origin]))))
    return drift


def _check_graphical(f: Expr, sample: DatumSample, vt,
                     tol: float) -> None:
    """Require the x-parts of the datum tangents and of Y_f to span R^n.

    Raises:
        NonGraphicalPatch: The swept surface projects degenerately to x.
    """
    n = vt.n
    size = sample.z.size
    env = sample.env()
    f_p = np.stack([np.broadcast_to(evaluate(diff(f, v), env), (size,))
                    for v in vt.p]).astype(float)
    stacked = np.concatenate([np.moveaxis(sample.tangents[:, :n, :], 2, 0),
                              f_p.T[:, None, :]], axis=1)
    sv = np.linalg.svd(stacked, compute_uv=False)
    ratio = sv[:, -1] / np.where(sv[:, 0] > 0.0, sv[:, 0], 1.0)
    if np.any(ratio <= tol):
        k = int(np.argmin(ratio))
        raise NonGraphicalPatch(
            "characteristics of the relation do not leave the datum in x",
            {"s": sample.t[:, k].tolist(), "ratio": float(ratio[k])})


def _surface_residuals(F: Expr, surface: SolutionSurface
                       ) -> Dict[str, object]:
    out: Dict[str, object] = {}
    methods = ["stencil"] + (["tangent"] if surface.tangents is not None
                             else [])
    for method in methods:
        key = "mae_residual" if method == "stencil" \
            else "mae_residual_tangent"
        try:
            out[key] = mae_residual_on_surface(surface, F, method).to_dict()
        except ContactMaeError as err:
            logger.warning("Second-order residual (%s) not available: %s",
                           method, err)
            out[key] = err.to_dict()
    return out


def monge_solve(equation: Union[BField, Expr], f_list: Sequence[Expr],
                datum: CauchyDatum, grid: ParameterGrid,
                cfg: MongeConfig = MongeConfig(),
                rng: Optional[np.random.Generator] = None,
                f_list_perp: Optional[Sequence[Expr]] = None
                ) -> MongeResult:
    """Extend a Cauchy datum of a Goursat-type equation to a solution.

    The supplied first integrals must lie on one side, D or D⊥. A relation
    ψ among their restrictions to the datum gives the intermediate
    integral f* = ψ(f_1, ..., f_n), whose characteristics sweep the datum.
    When integrals of both sides are given, the side with the smaller
    relation residual is used, ties going to ``f_list``. Relations are
    tried in turn until one sweeps a graphical surface that satisfies the
    contact condition to ``cfg.theta_tol``.

    The reported drift covers f* and the integrals of the other side, which
    are in involution with f*.

    Raises:
        NotFirstIntegral: A supplied function is in neither distribution.
        SideMismatch: The integrals straddle D and D⊥.
        NoRelationFound: No relation on either side.
        CharacteristicDatum: Every relation is characteristic on the datum.
        NonGraphicalPatch: Every relation sweeps a surface degenerate in x.
        NonIntegralSurface: The θ residual exceeds ``cfg.theta_tol``.
    """
    rng = np.random.default_rng() if rng is None else rng
    side = _check_sides(equation, f_list, f_list_perp, datum, grid, cfg,
                        rng)
    options = [(side, f_list)]
    if f_list_perp is not None:
        options.append(("Dperp" if side == "D" else "D", f_list_perp))
    found = []
    failure: Optional[NoRelationFound] = None
    for label, functions in options:
        try:
            found.append((find_relation(functions, datum, grid,
                                        cfg.relation, rng),
                          label, functions))
        except NoRelationFound as err:
            logger.warning("No relation on side %s", label)
            failure = failure or err
    if not found:
        raise failure
    relation, side, chosen = min(found, key=lambda item: item[0].residual)
    sample = datum.sample_grid(grid)
    relations = [relation.coefficients] + relation.alternatives
    surface = None
    error: Optional[ContactMaeError] = None
    for index, psi in enumerate(relations):
        candidate = relation.expression(psi)
        try:
            _check_graphical(candidate, sample, datum.vt,
                             cfg.transversality_tol)
            swept = solve_first_order(
                candidate, datum, cfg.flow, grid, datum_tol=cfg.datum_tol,
                transversality_tol=cfg.transversality_tol)
            if swept.theta_residual is not None \
                    and swept.theta_residual > cfg.theta_tol:
                raise NonIntegralSurface(
                    "swept surface violates the contact condition",
                    {"theta_residual": swept.theta_residual,
                     "tol": cfg.theta_tol})
        except (CharacteristicDatum, NonGraphicalPatch,
                NonIntegralSurface) as err:
            logger.warning("Relation %s rejected: %s", to_string(candidate),
                           err)
            error = err
            continue
        surface = swept
        relation.coefficients = psi
        relation.alternatives = relations[:index] + relations[index + 1:]
        break
    if surface is None:
        raise error
    F = goursat_equation(equation) if isinstance(equation, BField) \
        else equation
    opposite = f_list if chosen is not f_list else (f_list_perp or [])
    conserved = [surface.f] + list(opposite)
    diagnostics: Dict[str, object] = {
        "drift": _drift(conserved, surface),
        "drift_functions": [to_string(f) for f in conserved],
        "theta_residual": surface.theta_residual,
        "f_residual": surface.f_residual,
    }
    diagnostics.update(_surface_residuals(F, surface))
    return MongeResult(surface, relation, surface.f, side, diagnostics)
