"""Command-line front end.

    contactmae analyze|reconstruct|solve|jet <problem> [--out dir]
    contactmae template <file>

Every command writes ``report.json`` into the output folder; ``solve``
adds ``surface.csv`` and ``jet`` adds ``jets.json``. Exit codes: 0 on
success, 2 for usage and problem-file errors, 3 when a computation fails.
"""
import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import log  # noqa: F401  package handler
from .charsolve import (compare_closed_form, monge_solve,
                        solve_first_order)
from .contact import ChartPoint, NewtonConfig
from .errors import (ContactMaeError, InsufficientSamples, NonTransversal,
                     ProblemError)
from .exprlang import evaluate, to_string
from .jets import (check_table, fiber_dimension, formal_integrability_check,
                   formal_solve, prolonged_fiber_system, taylor_table)
from .lagrange_grassmann import (JetPoint, characteristic_covectors_2d,
                                 decompose_metric, is_characteristic_covector,
                                 metric_of_equation, strong_char_test,
                                 vector_rank)
from .mae import (DistFrame, first_integral_test, frame_fields, frames,
                  goursat_point_report, lychagin_test, nform_from_frame,
                  reconstruct_distributions, recover_B, sample_fiber)
from .problem import Problem

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PROBLEM = 2
EXIT_FAILURE = 3

# independent random streams of one invocation
N_STREAMS = 4
PARABOLIC_ANGLE = 1e-6


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"{type(value).__name__} is not serializable")


@dataclass
class Report:
    """Body of report.json."""

    command: str
    problem: str
    config: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    results: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        out = {"command": self.command, "problem": self.problem,
               "config": self.config, "seed": self.seed,
               "results": self.results, "warnings": self.warnings,
               "timings": self.timings}
        if self.error is not None:
            out["error"] = self.error
        return out

    def body(self) -> Dict[str, Any]:
        """Report without timings, identical for identical inputs."""
        out = self.to_dict()
        out.pop("timings")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True,
                          default=_plain)

    def write(self, folder: str) -> str:
        path = os.path.join(folder, "report.json")
        with open(path, 'w', encoding="utf-8") as file:
            file.write(self.to_json() + "\n")
        return path


class _WarningCollector(logging.Handler):
    """Copy package warnings into the report."""

    def __init__(self, report: Report) -> None:
        super().__init__(level=logging.WARNING)
        self.report = report

    def emit(self, record: logging.LogRecord) -> None:
        self.report.warnings.append(record.getMessage())


def random_streams(seed: int, count: int = N_STREAMS
                   ) -> List[np.random.Generator]:
    """Independent generators split from one seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


def _second_order(problem: Problem, command: str) -> None:
    if not problem.equation.second_order:
        raise ProblemError(f"{command} needs a second-order equation.",
                           {"command": command})


def _fiber_point(problem: Problem, index: int,
                 rng: np.random.Generator) -> JetPoint:
    """Given jet point, or one sampled from the fiber of F.

    Raises:
        InsufficientSamples: The fiber over the point is empty.
    """
    point = problem.points[index]
    m1 = point.jet_point()
    if m1 is not None:
        return m1
    cfg = problem.reconstruction.config()
    found = sample_fiber(problem.equation.F(), point.chart_point(), 1, rng,
                         cfg)
    if not found:
        raise InsufficientSamples("no point of the equation over the chart "
                                  "point; give P explicitly",
                                  {"point": index})
    return found[0]


def _analyze_point(problem: Problem, index: int,
                   rng: np.random.Generator) -> Dict[str, Any]:
    F = problem.equation.F()
    tol = problem.tol
    point = problem.points[index]
    m1 = _fiber_point(problem, index, rng)
    metric = metric_of_equation(F, m1)
    rank, _ = vector_rank(metric.G, tol)
    out: Dict[str, Any] = {
        "P": m1.P.tolist(),
        "residual": float(evaluate(F, m1.env())),
        "metric": metric.G.tolist(),
        "rank": rank,
        "decomposition": decompose_metric(metric, tol).kind,
        "singular": metric.norm == 0.0,
    }
    if m1.n == 2 and metric.norm > 0.0:
        report = characteristic_covectors_2d(F, m1, tol)
        out.update(report.to_dict())
    if point.eta is not None and metric.norm > 0.0:
        characteristic = is_characteristic_covector(F, m1, point.eta, tol)
        out["eta"] = {"characteristic": characteristic,
                      "strong": characteristic and
                      strong_char_test(F, m1, point.eta, tol=tol)}
    bfield = problem.equation.bfield()
    if bfield is not None:
        out["goursat"] = goursat_point_report(bfield, m1, tol).to_dict()
        d, dperp = frames(bfield, m1.base)
        angle = float(np.max(d.principal_angles(dperp)))
        out["frame_angle"] = angle
        if m1.n == 2 and angle <= PARABOLIC_ANGLE:
            out["label"] = "parabolic"
        if problem.first_integrals:
            omega = nform_from_frame(frame_fields(bfield, perp=True))
            out["first_integrals"] = [
                dict(first_integral_test(f, bfield, m1.base,
                                         problem.side_tol).to_dict(),
                     lychagin=lychagin_test(f, omega, m1.base))
                for f in problem.first_integrals]
    return out


def cmd_analyze(problem: Problem,
                rngs: Sequence[np.random.Generator]) -> Dict[str, Any]:
    """Pointwise analysis of the equation at the listed points."""
    _second_order(problem, "analyze")
    if not problem.points:
        raise ProblemError("analyze needs at least one point.",
                           {"key": "points"})
    F = problem.equation.F()
    points = [_analyze_point(problem, k, rngs[0])
              for k in range(len(problem.points))]
    logger.info("Analyzed %d points", len(points))
    return {"F": to_string(F), "points": points}


def _base_points(problem: Problem,
                 rng: np.random.Generator) -> List[ChartPoint]:
    bases = [point.chart_point() for point in problem.points]
    block = problem.reconstruction
    n = problem.n
    for _ in range(block.random_points):
        coords = rng.uniform(block.box[0], block.box[1], 2 * n + 1)
        bases.append(ChartPoint.from_array(coords))
    return bases


def _reference_angles(problem: Problem, m: ChartPoint, d: DistFrame,
                      dperp: DistFrame) -> Optional[Dict[str, Any]]:
    reference = problem.reference.frames
    if reference is None:
        return None
    ref_d = DistFrame(m, reference.vectors(m))
    ref_perp = DistFrame(m, reference.vectors(m, perp=True))
    direct = max(np.max(d.principal_angles(ref_d)),
                 np.max(dperp.principal_angles(ref_perp)))
    swapped = max(np.max(d.principal_angles(ref_perp)),
                  np.max(dperp.principal_angles(ref_d)))
    return {"max_angle": float(min(direct, swapped)),
            "swapped": bool(swapped < direct)}


def cmd_reconstruct(problem: Problem,
                    rngs: Sequence[np.random.Generator]) -> Dict[str, Any]:
    """Rebuild D and D⊥ from the equation at the listed points."""
    _second_order(problem, "reconstruct")
    F = problem.equation.F()
    cfg = problem.reconstruction.config()
    bases = _base_points(problem, rngs[1])
    if not bases:
        raise ProblemError("reconstruct needs points or random_points.",
                           {"key": "points"})
    out = []
    for m in bases:
        rec = reconstruct_distributions(F, m, rngs[0], cfg)
        entry: Dict[str, Any] = {"point": m.as_array().tolist()}
        entry.update(rec.to_dict())
        for label, frame in (("b", rec.d), ("b_perp", rec.dperp)):
            try:
                entry[label] = recover_B(frame, problem.tol).tolist()
            except NonTransversal as err:
                logger.warning("No normal form at %s: %s",
                               m.as_array().tolist(), err)
                entry[label] = err.to_dict()
        angles = _reference_angles(problem, m, rec.d, rec.dperp)
        if angles is not None:
            entry["reference"] = angles
        out.append(entry)
    logger.info("Reconstructed distributions at %d points", len(out))
    return {"F": to_string(F), "points": out}


def _error_ratios(errors: List[float]) -> List[Optional[float]]:
    return [errors[k] / errors[k + 1] if errors[k + 1] > 0.0 else None
            for k in range(len(errors) - 1)]


def cmd_solve(problem: Problem, rngs: Sequence[np.random.Generator],
              out_dir: str) -> Dict[str, Any]:
    """Characteristic solution of the Cauchy problem, one run per flow."""
    block = problem.datum
    if block is None:
        raise ProblemError("solve needs a datum block.", {"key": "datum"})
    datum = block.datum()
    grid = block.parameter_grid()
    equation = problem.equation
    closed_form = problem.reference.closed_form
    if equation.second_order and not problem.first_integrals:
        raise ProblemError("solve of a second-order equation needs "
                           "first_integrals.", {"key": "first_integrals"})
    runs = []
    for index, flow in enumerate(problem.flow.all()):
        if equation.second_order:
            target = equation.bfield()
            if target is None:
                target = equation.F()
            result = monge_solve(target, problem.first_integrals, datum,
                                 grid, problem.monge_config(flow), rngs[0],
                                 problem.first_integrals_perp)
            surface = result.surface
            run = result.to_dict()
        else:
            surface = solve_first_order(equation.first_order, datum,
                                        flow.config(), grid)
            run = surface.to_dict()
        run["dt"] = flow.dt
        if closed_form is not None:
            run["closed_form_error"] = compare_closed_form(surface,
                                                           closed_form)
        name = "surface.csv" if index == 0 else f"surface__{index}.csv"
        surface.to_csv(os.path.join(out_dir, name))
        run["csv"] = name
        logger.info("Solved run %d with dt=%g", index, flow.dt)
        runs.append(run)
    out: Dict[str, Any] = {"runs": runs}
    if closed_form is not None and len(runs) > 1:
        out["error_ratios"] = _error_ratios(
            [run["closed_form_error"] for run in runs])
    return out


def cmd_jet(problem: Problem, rngs: Sequence[np.random.Generator],
            out_dir: str) -> Dict[str, Any]:
    """Formal solution of the normalised Cauchy problem."""
    _second_order(problem, "jet")
    block = problem.jet
    if block is None:
        raise ProblemError("jet needs a jet block.", {"key": "jet"})
    F = problem.equation.F()
    n = problem.n
    table = formal_solve(F, block.data(), block.order, n,
                         NewtonConfig(tol=problem.reconstruction.newton_tol))
    points = [table.jet_point()]
    if block.integrability_samples:
        points += sample_fiber(F, table.base_point(),
                               block.integrability_samples, rngs[0],
                               problem.reconstruction.config())
    systems = []
    for k in range(1, block.order - 1):
        system = prolonged_fiber_system(F, table, k)
        systems.append({"k": k, "rank": system.rank(),
                        "free_parameters": system.free_parameters(),
                        "fiber_dimension": fiber_dimension(k, n)})
    out: Dict[str, Any] = {
        "order": block.order,
        "jets": table.to_dict(),
        "check": check_table(F, table),
        "formally_integrable": formal_integrability_check(F, points),
        "prolonged_systems": systems,
    }
    closed_form = problem.reference.closed_form
    if closed_form is not None:
        expected = taylor_table(closed_form, block.order, n)
        out["closed_form_error"] = max(
            abs(expected.values[name] - value)
            for name, value in table.values.items())
    with open(os.path.join(out_dir, "jets.json"), 'w',
              encoding="utf-8") as file:
        file.write(table.to_json() + "\n")
    logger.info("Jet of order %d solved", block.order)
    return out


COMMANDS: Dict[str, Callable[..., Dict[str, Any]]] = {
    "analyze": lambda problem, rngs, out: cmd_analyze(problem, rngs),
    "reconstruct": lambda problem, rngs, out: cmd_reconstruct(problem, rngs),
    "solve": cmd_solve,
    "jet": cmd_jet,
}


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="contactmae",
        description="Contact geometry of second-order PDEs.")
    parser.add_argument("command", choices=sorted(COMMANDS) + ["template"])
    parser.add_argument("problem",
                        help="Problem file (.json or .yaml); the output "
                             "file for 'template'.")
    parser.add_argument("--out", default=".",
                        help="Folder receiving report.json and outputs.")
    return parser.parse_args(argv)


def run(command: str, path: str, out_dir: str) -> Report:
    """Load the problem, run the command and write the report."""
    os.makedirs(out_dir, exist_ok=True)
    report = Report(command=command, problem=os.path.basename(path))
    collector = _WarningCollector(report)
    package_logger = logging.getLogger("contactmae")
    package_logger.addHandler(collector)
    try:
        start = time.perf_counter()
        try:
            problem = Problem.load(path)
            report.config = problem.to_dict()
            report.seed = problem.seed
        except ContactMaeError as err:
            report.error = dict(err.to_dict(), exit_code=EXIT_PROBLEM)
            return report
        report.timings["load"] = time.perf_counter() - start
        start = time.perf_counter()
        try:
            report.results = COMMANDS[command](
                problem, random_streams(problem.seed), out_dir)
        except ProblemError as err:
            report.error = dict(err.to_dict(), exit_code=EXIT_PROBLEM)
        except ContactMaeError as err:
            report.error = dict(err.to_dict(), exit_code=EXIT_FAILURE)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as err:
            report.error = {"type": type(err).__name__, "message": str(err),
                            "details": {}, "exit_code": EXIT_FAILURE}
        except Exception as err:
            logger.exception("Command %s crashed", command)
            report.error = {"type": type(err).__name__, "message": str(err),
                            "details": {}, "exit_code": EXIT_FAILURE}
        report.timings["command"] = time.perf_counter() - start
        return report
    finally:
        package_logger.removeHandler(collector)
        report.write(out_dir)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    if args.command == "template":
        Problem.create_template_file(os.path.basename(args.problem),
                                     os.path.dirname(args.problem) or ".")
        return EXIT_OK
    report = run(args.command, args.problem, args.out)
    if report.error is not None:
        logger.error("%s: %s", report.error["type"], report.error["message"])
        return report.error["exit_code"]
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
