"""Problem files as trees of annotated configuration blocks.

A block declares its keys as class annotations. The loader walks the
annotations: blocks become child blocks, ``List`` and ``Dict`` annotations
are converted element-wise, ``Variation`` annotations collect sweeps
written as ``key__1: {sub.key: value}``, ``Expr`` values are parsed with
the variable table of the problem. Missing keys are searched in the
parents, then in the class defaults.
"""
import json
import logging
import os
from copy import copy, deepcopy
from typing import (Any, Dict, Generic, List, Optional, Tuple,
                    TypeVar, Union, final, get_args, get_origin)

import numpy as np
import yaml

from .contact import (CauchyDatum, ChartPoint, NewtonConfig, ParameterGrid,
                      cauchy_datum, lift_cauchy_datum)
from .charsolve import FlowConfig, MongeConfig, RelationConfig
from .errors import ContactMaeError, ImplementationError, ProblemError
from .exprlang import Expr, VarTable, evaluate, parse, to_string
from .jets import NormalizedCauchyData
from .lagrange_grassmann import JetPoint
from .mae import (BField, NForm, ReconstructionConfig, goursat_equation,
                  horizontal_equation)

logger = logging.getLogger(__name__)

PROBLEM_SUFFIXES = (".json", ".yaml", ".yml")


def deep_update(
        base_dict: Dict[str, Any],
        update: Dict[str, Any]
) -> Dict[str, Any]:
    """Update nested dictionaries."""
    for key, value in update.items():
        if hasattr(value, 'get'):
            base_dict[key] = deep_update(
                base_dict.get(key, {}), value)
        else:
            base_dict[key] = value
    return base_dict


def _unwrap_optional(annotation: Any) -> Any:
    if get_origin(annotation) is Union:
        args = [a for a in get_args(annotation) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return annotation


def _is_block(annotation: Any) -> bool:
    return isinstance(annotation, type) and \
        issubclass(annotation, ProblemElement)


class ProblemElement:
    """Block of a problem file.

    Attributes:
        _folder: The folder where sub-files are looked up.
        _parent: Parent block.
        _name: Name of the block.
        Keys declared as annotations in the subclass.

    Methods:
        children: Names of the child blocks.
        parent: Returns parent.
        name: Returns name.
        vt: Variable table of the problem.
        create_template_file: Write an empty problem file.
        to_dict: Resolved configuration, defaults included.
        _validate: To be redefined in blocks with cross-key rules.
        validate: Validate the whole tree.
    """

    __annotations__: Dict[str, Any]
    _folder: str
    _parent: Optional["ProblemElement"] = None
    _name: str

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}: {self._name}>"

    def __init__(
        self,
        folder: str,
        params: Union[Dict[str, Any], str],
        name: str,
        parent: Optional["ProblemElement"] = None
    ) -> None:
        """Init.

        Parameters:
            folder: The folder containing the problem files.
            params: Dictionary of the block or path to a problem file.
            name: Name of the block.
            parent: Parent of the block.
        """
        if type(self).validate is not ProblemElement.validate:
            raise ImplementationError(
                f"Class {type(self).__name__} should not override validate; "
                "it should implement _validate instead.")

        logger.debug("Initializing %s", name)

        self._folder = folder
        self._name = name
        self._parent = parent

        if isinstance(params, str):
            dict_params = self._load_dict_from_file(params)
        else:
            dict_params = params
        if dict_params is None:
            dict_params = {}
        if not isinstance(dict_params, dict):
            raise ProblemError(f"Block {name} must be a mapping.",
                               {"block": name})

        if self._parent is None:
            self._dict_params = self._load_files(dict_params)
        else:
            self._dict_params = dict_params

        unknown = [key for key in self._dict_params
                   if key.split("__")[0] not in self._annotations()]
        if unknown:
            raise ProblemError(
                f"Unknown keys {unknown} in block {name}.",
                {"block": name, "keys": unknown})

        attrs_to_set, vars_to_set = self._parse_dict_params()

        for attr, cls in attrs_to_set:
            setattr(self, attr, cls(
                folder=self._folder,
                params=self._dict_params[attr],
                name=self._name + "_" + attr,
                parent=self))

        for attr, cls in vars_to_set:
            original = cls(
                folder=self._folder,
                params=self._dict_params[attr],
                name=self._name + "_" + attr,
                parent=self)
            setattr(self, attr, Variation(variation=[], original=original))

        for attr, sub_dict in self._dict_params.items():
            splt = attr.split("__")
            if splt[-1].isdigit():
                self._create_variation(sub_dict, "__".join(splt[:-1]),
                                       int(splt[-1]))

    @classmethod
    def _annotations(cls) -> Dict[str, Any]:
        annotations: Dict[str, Any] = {}
        for klass in reversed(cls.__mro__):
            annotations.update(getattr(klass, "__annotations__", {}))
        return {k: v for k, v in annotations.items()
                if not k.startswith("_")}

    @classmethod
    def load(cls, path: str) -> "ProblemElement":
        """Load and validate a problem file."""
        folder, filename = os.path.split(os.path.abspath(path))
        element = cls(folder=folder, params=filename,
                      name=os.path.splitext(filename)[0])
        element.validate()
        return element

    def _load_files(self, dict_params: Dict[str, Any]) -> Dict[str, Any]:
        for k, v in dict_params.items():
            if isinstance(v, str) and v.endswith(PROBLEM_SUFFIXES):
                dict_params[k] = self._load_dict_from_file(v)
        for k, v in dict_params.items():
            if isinstance(v, dict):
                dict_params[k] = self._load_files(v)
        return dict_params

    def _parse_dict_params(self) -> Tuple[List[Tuple[str, type]],
                                          List[Tuple[str, type]]]:
        """Assign values from self._dict_params to attributes.

        Returns:
            attr_to_set: Child blocks to build.
            vars_to_set: Variations to build.
        """
        attr_to_set = []
        variations_to_set = []
        for key, annotation in self._annotations().items():
            cls_name = _unwrap_optional(annotation)
            if key not in self._dict_params:
                if not self._search_in_parents(key):
                    self._set_default(key, cls_name)
                if not (isinstance(getattr(self, key), dict)
                        and self._is_nested(cls_name)):
                    continue
                self._dict_params[key] = deepcopy(getattr(self, key))
            origin = get_origin(cls_name)
            if origin is Variation:
                variations_to_set.append((key, get_args(cls_name)[0]))
            elif _is_block(cls_name):
                attr_to_set.append((key, cls_name))
            else:
                setattr(self, key, self._convert(
                    cls_name, self._dict_params[key], key))
        return attr_to_set, variations_to_set

    @staticmethod
    def _is_nested(cls_name: Any) -> bool:
        return get_origin(cls_name) is Variation or _is_block(cls_name)

    def _convert(self, cls_name: Any, value: Any, key: str) -> Any:
        """Convert a raw value to the annotated type.

        Args:
            cls_name: Annotation of the key.
            value: Value read from the problem file.
            key: Dotted path of the value, for error messages.
        """
        origin = get_origin(cls_name)
        if origin is list:
            if not isinstance(value, list):
                raise ProblemError(f"Key {key} of {self._name} must be a "
                                   "list.", {"key": key})
            return [self._convert(get_args(cls_name)[0], elm, f"{key}.{i}")
                    for i, elm in enumerate(value)]
        if origin is dict:
            if not isinstance(value, dict):
                raise ProblemError(f"Key {key} of {self._name} must be a "
                                   "mapping.", {"key": key})
            return {str(k): self._convert(get_args(cls_name)[1], v,
                                          f"{key}.{k}")
                    for k, v in value.items()}
        if _is_block(cls_name):
            return cls_name(folder=self._folder, params=value,
                            name=f"{self._name}_{key}", parent=self)
        return self._set_element(key, cls_name, value)

    def _set_element(self, key: str, cls_name: type, value: Any) -> Any:
        """Check and coerce one primitive or expression value."""
        if value is None:
            return None
        try:
            if cls_name is Expr:
                return parse(str(value), self.vt)
            if cls_name is bool:
                if isinstance(value, str) and \
                        value.lower() in ("true", "false"):
                    return value.lower() == "true"
                if not isinstance(value, bool):
                    raise TypeError
                return value
            if cls_name in (int, float):
                if isinstance(value, bool):
                    raise TypeError
                converted = cls_name(value)
                if cls_name is int and converted != float(value):
                    raise TypeError
                return converted
            if cls_name is str:
                if not isinstance(value, str):
                    raise TypeError
                return value
        except (TypeError, ValueError) as err:
            raise ProblemError(
                f"Key {key} of {self._name} expects {cls_name.__name__}, "
                f"got {value!r}.", {"key": key}) from err
        except ContactMaeError as err:
            raise ProblemError(
                f"Key {key} of {self._name}: {err}",
                {"key": key, "cause": err.to_dict()}) from err
        raise ImplementationError(f"Unknown type {cls_name} for key {key}.")

    def _search_in_parents(self, key: str) -> bool:
        """Recursively run through the parents to find an attribute."""
        local_parent = copy(self._parent)
        while local_parent is not None:
            if key in local_parent.__dict__:
                setattr(self, key, local_parent.__dict__[key])
                return True
            local_parent = local_parent.parent
        return False

    def _set_default(self, key: str, cls_name: Any) -> None:
        if key in self._class_defaults():
            setattr(self, key, deepcopy(self._class_defaults()[key]))
            return
        raise ProblemError(
            f"Key {key} should be defined in the problem file "
            f"in {self._name} or in its parents.", {"key": key})

    @classmethod
    def _class_defaults(cls) -> Dict[str, Any]:
        defaults: Dict[str, Any] = {}
        for klass in reversed(cls.__mro__):
            for key in getattr(klass, "__annotations__", {}):
                if key in vars(klass):
                    defaults[key] = vars(klass)[key]
        return defaults

    def _load_dict_from_file(self, file_path: str) -> Dict[str, Any]:
        """Load a JSON or YAML file of block parameters.

        Raises:
            ProblemError: If the file has another suffix or cannot be read.
        """
        if not file_path.endswith(PROBLEM_SUFFIXES):
            raise ProblemError(
                f"Block {self._name} has params file that does not end "
                f"with {PROBLEM_SUFFIXES}: {file_path}",
                {"file": file_path})
        path = os.path.join(self._folder, file_path)
        try:
            with open(path, 'r', encoding="utf-8") as file:
                if file_path.endswith(".json"):
                    return json.load(file)
                return yaml.safe_load(file.read())
        except (OSError, json.JSONDecodeError, yaml.YAMLError) as err:
            raise ProblemError(f"Cannot read {path}: {err}",
                               {"file": path}) from err

    @staticmethod
    def _complete_dict(sub_dict: Dict[str, Any]) -> Dict[str, Any]:
        """Reformat flatten dict with '.' in keys into a tree structure.

        Examples:
            {'a': 1, 'b.c': 3} -> {'a': 1, 'b': {'c': 3}}
        """
        sub_dict = deepcopy(sub_dict)
        full_dict: Dict[str, Any] = {}

        for key, val in list(sub_dict.items()):
            if "." not in key:
                full_dict[key] = val
                continue
            splt = key.split(".")
            local = full_dict
            for k in splt[:-1]:
                local = local.setdefault(k, {})
            local[splt[-1]] = val
        return full_dict

    def _create_variation(self, sub_dict: Dict[str, Any], kv: str,
                          indv: int) -> None:
        """Append a copy of block ``kv`` updated by ``sub_dict``.

        Raises:
            ProblemError: When ``kv`` is not a variation of this block.
        """
        var_lst = getattr(self, kv, None)
        if not isinstance(var_lst, Variation):
            raise ProblemError(
                f"To have variation '{kv}__{indv}', the attribute "
                f"'{kv}' should be a variation of {self._name}.",
                {"key": f"{kv}__{indv}"})
        variation = deepcopy(self._dict_params[kv])
        if sub_dict is not None:
            variation = deep_update(variation, self._complete_dict(sub_dict))
        cls = get_args(_unwrap_optional(self._annotations()[kv]))[0]
        var_lst.append(cls(
            folder=self._folder,
            params=variation,
            name=self._name + f"_{kv}_{indv}",
            parent=self))

    @property
    def children(self) -> List[str]:
        """Return the names of the child blocks."""
        return [key for key, value in self.__dict__.items()
                if isinstance(value, (ProblemElement, Variation))
                and not key.startswith("_")]

    @property
    def parent(self) -> Optional["ProblemElement"]:
        return self._parent

    @property
    def name(self) -> str:
        return self._name

    @property
    def vt(self) -> VarTable:
        if self._parent is None:
            raise ImplementationError(
                f"{type(self).__name__} has no variable table.")
        return self._parent.vt

    @classmethod
    def _create_dictionary(cls) -> Dict[str, Any]:
        """Empty dictionary with the keys of the class.

        Helper function to write the template file.
        """
        params: Dict[str, Any] = {}
        for key, annotation in cls._annotations().items():
            cls_name = _unwrap_optional(annotation)
            if get_origin(cls_name) is Variation:
                cls_name = get_args(cls_name)[0]
            if get_origin(cls_name) is list and \
                    _is_block(get_args(cls_name)[0]):
                params[key] = [get_args(cls_name)[0]._create_dictionary()]
            elif _is_block(cls_name):
                params[key] = cls_name._create_dictionary()
            else:
                params[key] = ""
        return params

    @classmethod
    def create_template_file(cls, filename: str, folder: str = ".") -> str:
        """Write an empty problem file, JSON or YAML by suffix."""
        path = os.path.join(folder, filename)
        with open(path, 'w', encoding="utf-8") as file:
            if filename.endswith(".json"):
                json.dump(cls._create_dictionary(), file, indent=2)
            else:
                yaml.safe_dump(cls._create_dictionary(), file)
        logger.info("Template written to %s", path)
        return path

    def to_dict(self) -> Dict[str, Any]:
        """Resolved values of the block, defaults included."""
        return {key: _echo(self.__dict__[key])
                for key in self._annotations() if key in self.__dict__}

    def _validate(self) -> None:
        """Can be overwritten to check rules between keys."""

    @final
    def validate(self) -> None:
        """Validate the block and every child block."""
        self._validate()
        for key in self._annotations():
            for child in _blocks_in(self.__dict__.get(key)):
                child.validate()


def _blocks_in(value: Any) -> List[ProblemElement]:
    if isinstance(value, ProblemElement):
        return [value]
    if isinstance(value, Variation):
        return [value.original] + list(value.variations)
    if isinstance(value, list):
        return [b for elm in value for b in _blocks_in(elm)]
    return []


def _echo(value: Any) -> Any:
    if isinstance(value, ProblemElement):
        return value.to_dict()
    if isinstance(value, Variation):
        return {"original": value.original.to_dict(),
                "variations": [v.to_dict() for v in value.variations]}
    if isinstance(value, Expr):
        return to_string(value)
    if isinstance(value, list):
        return [_echo(v) for v in value]
    if isinstance(value, dict):
        return {k: _echo(v) for k, v in value.items()}
    return value


_Tvar = TypeVar("_Tvar", bound=ProblemElement)


class Variation(Generic[_Tvar]):
    """Block with its swept copies."""

    variations: List[_Tvar]

    _len: int
    _n_iter: int = 0

    def __init__(
        self,
        variation: List[_Tvar],
        original: _Tvar,
    ):
        self.variations = variation
        self.original = original
        self._len = len(self.variations)
        for attr, value in original.__dict__.items():
            if not attr.startswith('_'):
                setattr(self, attr, value)

    def __iter__(self) -> "Variation":
        self._n_iter = 0
        return self

    def __getitem__(self, item):
        return self.variations[item]

    def __next__(self) -> _Tvar:
        if self._n_iter < self._len:
            result = self.variations[self._n_iter]
            self._n_iter += 1
            return result
        raise StopIteration

    def __len__(self):
        return self._len

    def append(self, elm: _Tvar) -> None:
        self._len += 1
        self.variations.append(elm)

    def all(self) -> List[_Tvar]:
        """The original block followed by its variations."""
        return [self.original] + list(self.variations)


# Blocks of a problem file

class NFormTerm(ProblemElement):
    basis: str
    coef: Expr


class NFormBlock(ProblemElement):
    """Decomposable form by covectors or general form by terms."""

    covectors: Optional[List[List[Expr]]] = None
    terms: Optional[List[NFormTerm]] = None

    def _validate(self) -> None:
        if (self.covectors is None) == (self.terms is None):
            raise ProblemError("nform needs exactly one of covectors, terms.",
                               {"block": self.name})

    def form(self) -> NForm:
        if self.covectors is not None:
            return NForm(self.vt, covectors=self.covectors)
        try:
            return NForm.from_terms({t.basis: t.coef for t in self.terms},
                                    self.vt)
        except ValueError as err:
            raise ProblemError(str(err), {"block": self.name}) from err


class EquationBlock(ProblemElement):
    """Exactly one representation of the equation."""

    expr: Optional[Expr] = None
    b_matrix: Optional[List[List[Expr]]] = None
    nform: Optional[NFormBlock] = None
    first_order: Optional[Expr] = None

    def _validate(self) -> None:
        given = [key for key in ("expr", "b_matrix", "nform", "first_order")
                 if getattr(self, key) is not None]
        if len(given) != 1:
            raise ProblemError(
                "equation needs exactly one of expr, b_matrix, nform, "
                f"first_order; got {given}.", {"block": self.name})
        if self.b_matrix is not None:
            n = self.vt.n
            if len(self.b_matrix) != n or \
                    any(len(row) != n for row in self.b_matrix):
                raise ProblemError(f"b_matrix must be {n}x{n}.",
                                   {"block": self.name})

    @property
    def second_order(self) -> bool:
        return self.first_order is None

    def bfield(self) -> Optional[BField]:
        if self.b_matrix is None:
            return None
        return BField(self.b_matrix, self.vt)

    def F(self) -> Expr:
        """Residual F of the second-order equation."""
        if self.expr is not None:
            return self.expr
        if self.b_matrix is not None:
            return goursat_equation(self.bfield())
        if self.nform is not None:
            return horizontal_equation(self.nform.form())
        raise ProblemError("first-order problems have no second-order "
                           "residual.", {"block": self.name})


class PointBlock(ProblemElement):
    x: List[float]
    z: float = 0.0
    p: List[float]
    P: Optional[List[List[float]]] = None
    eta: Optional[List[float]] = None

    def _validate(self) -> None:
        n = self.vt.n
        if len(self.x) != n or len(self.p) != n:
            raise ProblemError(f"Point {self.name} needs {n} x and p values.",
                               {"block": self.name})
        if self.P is not None and (len(self.P) != n or
                                   any(len(r) != n for r in self.P)):
            raise ProblemError(f"P of {self.name} must be {n}x{n}.",
                               {"block": self.name})

    def chart_point(self) -> ChartPoint:
        return ChartPoint(self.x, self.z, self.p)

    def jet_point(self) -> Optional[JetPoint]:
        if self.P is None:
            return None
        return JetPoint(self.chart_point(), np.array(self.P))


class DatumBlock(ProblemElement):
    """Cauchy datum in the parameters t1..t_{n-1}."""

    X: List[Expr]
    Z: Expr
    P: Optional[List[Expr]] = None
    lift_f: Optional[Expr] = None
    t0: Optional[List[float]] = None
    p_seed: Optional[List[float]] = None
    box: List[float] = [0.0, 1.0]
    grid: int = 11

    def _validate(self) -> None:
        n = self.vt.n
        if len(self.X) != n:
            raise ProblemError(f"datum needs {n} components X.",
                               {"block": self.name})
        if (self.P is None) == (self.lift_f is None):
            raise ProblemError("datum needs exactly one of P, lift_f.",
                               {"block": self.name})
        if self.P is not None and len(self.P) != n:
            raise ProblemError(f"datum needs {n} components P.",
                               {"block": self.name})
        if self.lift_f is not None and (self.t0 is None or
                                        self.p_seed is None):
            raise ProblemError("lifted datum needs t0 and p_seed.",
                               {"block": self.name})
        if len(self.box) != 2 or self.box[0] > self.box[1] or self.grid < 1:
            raise ProblemError("datum box must be [a, b] with a <= b.",
                               {"block": self.name})

    def datum(self) -> CauchyDatum:
        box = (self.box[0], self.box[1])
        if self.P is not None:
            return cauchy_datum(self.vt, self.X, self.Z, self.P, box,
                                name=self.name)
        return lift_cauchy_datum(self.X, self.Z, self.lift_f, self.t0,
                                 self.p_seed, self.vt, box=box,
                                 name=self.name)

    def parameter_grid(self) -> ParameterGrid:
        return ParameterGrid(self.vt.n - 1, self.box[0], self.box[1],
                             self.grid)


class FlowBlock(ProblemElement):
    dt: float = 1e-3
    t_span: List[float] = [0.0, 1.0]
    save_every: int = 1
    tangents: bool = True

    def _validate(self) -> None:
        try:
            self.config()
        except ValueError as err:
            raise ProblemError(str(err), {"block": self.name}) from err

    def config(self) -> FlowConfig:
        return FlowConfig(self.dt, (self.t_span[0], self.t_span[-1]),
                          self.save_every, self.tangents)


class RelationBlock(ProblemElement):
    degree: int = 2
    exp_features: bool = False
    residual_tol: float = 1e-8
    prune: float = 1e-8
    random_samples: int = 64
    holdout: int = 32

    def _validate(self) -> None:
        try:
            self.config()
        except ValueError as err:
            raise ProblemError(str(err), {"block": self.name}) from err

    def config(self) -> RelationConfig:
        return RelationConfig(self.degree, self.exp_features,
                              self.residual_tol, self.prune,
                              self.random_samples, self.holdout)


class ReconstructionBlock(ProblemElement):
    samples: int = 40
    rank_tol: float = 1e-9
    span_tol: float = 1e-7
    max_directions: int = 20
    newton_tol: float = 1e-12
    random_points: int = 0
    box: List[float] = [-1.0, 1.0]

    def config(self) -> ReconstructionConfig:
        return ReconstructionConfig(
            samples=self.samples, newton=NewtonConfig(tol=self.newton_tol),
            rank_tol=self.rank_tol, span_tol=self.span_tol,
            max_directions=self.max_directions)


class JetBlock(ProblemElement):
    order: int = 5
    phi: Expr
    p_nn_seed: float = 0.0
    integrability_samples: int = 0

    def _validate(self) -> None:
        if self.order < 2 or self.order > self.vt.max_order:
            raise ProblemError(
                f"jet order must lie in [2, {self.vt.max_order}].",
                {"block": self.name})

    def data(self) -> NormalizedCauchyData:
        return NormalizedCauchyData(self.phi, self.p_nn_seed)


class FramesBlock(ProblemElement):
    """Vectors written as {hx1: coef, p2: coef} in the chart frame.

    ``hxi`` is the hat-derivative ∂̂_{x^i}; ``xi``, ``z``, ``pi`` are
    coordinate derivatives.
    """

    d: List[Dict[str, Expr]]
    dperp: List[Dict[str, Expr]]

    def _validate(self) -> None:
        for vectors in (self.d, self.dperp):
            for vector in vectors:
                for key in vector:
                    self._slot(key)

    def _slot(self, key: str) -> Tuple[int, bool]:
        hat = key.startswith("h")
        try:
            name = self.vt.canonical(key[1:] if hat else key, order=1)
            index = self.vt.chart.index(name)
        except (ContactMaeError, ValueError) as err:
            raise ProblemError(f"Unknown frame component {key}.",
                               {"block": self.name}) from err
        if hat and index >= self.vt.n:
            raise ProblemError(f"Hat-derivative {key} needs an x index.",
                               {"block": self.name})
        return index, hat

    def vectors(self, m: ChartPoint, perp: bool = False) -> np.ndarray:
        n = self.vt.n
        env = m.env()
        rows = []
        for vector in (self.dperp if perp else self.d):
            row = np.zeros(2 * n + 1)
            for key, coef in vector.items():
                index, hat = self._slot(key)
                value = float(evaluate(coef, env))
                row[index] += value
                if hat:
                    row[n] += value * m.p[index]
            rows.append(row)
        return np.array(rows)


class ReferenceBlock(ProblemElement):
    frames: Optional[FramesBlock] = None
    closed_form: Optional[Expr] = None


class Problem(ProblemElement):
    """Root block of a problem file."""

    n: int
    seed: int = 0
    tol: float = 1e-9
    aliases: Dict[str, str] = {}
    equation: EquationBlock
    points: List[PointBlock] = []
    datum: Optional[DatumBlock] = None
    first_integrals: Optional[List[Expr]] = None
    first_integrals_perp: Optional[List[Expr]] = None
    reconstruction: ReconstructionBlock = {}
    relation: RelationBlock = {}
    flow: Variation[FlowBlock] = {}
    jet: Optional[JetBlock] = None
    reference: ReferenceBlock = {}
    side_tol: float = 1e-8
    theta_tol: float = 1e-6

    _vt: Optional[VarTable] = None

    @property
    def vt(self) -> VarTable:
        if self._vt is None:
            try:
                self._vt = VarTable(self.n, aliases=dict(self.aliases))
            except ValueError as err:
                raise ProblemError(str(err), {"key": "n"}) from err
        return self._vt

    def monge_config(self, flow: FlowBlock) -> MongeConfig:
        return MongeConfig(flow=flow.config(),
                           relation=self.relation.config(),
                           reconstruction=self.reconstruction.config(),
                           side_tol=self.side_tol,
                           theta_tol=self.theta_tol)
