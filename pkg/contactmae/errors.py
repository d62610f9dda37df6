"""Error hierarchy shared by every contactmae module."""
from typing import Any, Dict, Optional


class ContactMaeError(Exception):
    """Base class of all errors raised by contactmae.

    Attributes:
        details: Machine-readable context of the failure.
    """

    def __init__(self, message: str,
                 details: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.details: Dict[str, Any] = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Return the error object written into reports."""
        return {
            "type": self.__class__.__name__,
            "message": str(self),
            "details": self.details,
        }


class ImplementationError(ContactMaeError):
    """Raise on an implementation error using the problem classes."""


class ProblemError(ContactMaeError, ValueError):
    """Problem file does not match its schema."""


# exprlang

class ExprSyntaxError(ContactMaeError):
    """Expression text is not in the grammar."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} at position {position}",
                         {"position": position})
        self.position = position


class UnknownVariable(ContactMaeError):
    """Identifier is not admitted by the variable table."""

    def __init__(self, name: str) -> None:
        super().__init__(f"unknown variable '{name}'", {"name": name})
        self.name = name


class UnboundVariable(ContactMaeError):
    """Evaluation environment does not bind a variable."""

    def __init__(self, name: str) -> None:
        super().__init__(f"variable '{name}' is not bound", {"name": name})
        self.name = name


class DomainError(ContactMaeError, ArithmeticError):
    """Function evaluated outside its real domain."""


class JetOrderOverflow(ContactMaeError):
    """Total derivative would exceed the configured jet order."""


# contact

class RankDeficientDatum(ContactMaeError):
    """Parameter Jacobian of a Cauchy datum is not of full rank."""


class NewtonDivergence(ContactMaeError):
    """Newton iteration did not reach the requested residual."""


# lagrange_grassmann

class SingularPoint(ContactMaeError):
    """Metric of the equation vanishes at the point."""


# mae

class ReconstructionFailure(ContactMaeError):
    """Distributions could not be rebuilt from the equation."""


class NotGoursatType(ReconstructionFailure):
    """A sampled metric is not decomposable."""


class InsufficientSamples(ReconstructionFailure):
    """Sampled lines do not fill n-dimensional spaces."""


class OrthogonalityViolation(ReconstructionFailure):
    """Recovered spaces are not mutually ω-orthogonal."""


class NonTransversal(ContactMaeError):
    """Frame cannot be written in the normal form with identity x-block."""


class ZeroField(ContactMaeError):
    """Hamiltonian field vanishes at the point."""


# charsolve

class NonFiniteState(ContactMaeError):
    """Integration produced a non-finite state."""


class DatumNotOnEquation(ContactMaeError):
    """Cauchy datum does not lie on the first-order equation."""


class CharacteristicDatum(ContactMaeError):
    """Hamiltonian field is tangent to the datum."""


class NoRelationFound(ContactMaeError):
    """No functional relation among the restricted integrals."""


class SideMismatch(ContactMaeError):
    """First integrals straddle D and its orthogonal complement."""


class NotFirstIntegral(ContactMaeError):
    """A supplied function is not a first integral of either distribution."""


class NonGraphicalPatch(ContactMaeError):
    """Surface is not a graph over x near a grid node."""


class NonIntegralSurface(ContactMaeError):
    """Swept surface violates the contact condition beyond tolerance."""
