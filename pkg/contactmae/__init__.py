# flake8: noqa
from . import log
from .errors import ContactMaeError, ProblemError
from .exprlang import VarTable, parse, evaluate, diff, to_string
from .contact import ChartPoint, hamiltonian_field, bracket, legendre
from .lagrange_grassmann import JetPoint, metric_of_equation, decompose_metric
from .mae import (BField, NForm, frames, goursat_equation,
                  reconstruct_distributions)
from .charsolve import monge_solve, solve_first_order
from .jets import formal_solve
from .problem import Problem, ProblemElement, Variation
