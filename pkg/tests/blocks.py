import logging

from contactmae.errors import ProblemError
from contactmae.problem import ProblemElement, Variation

logger = logging.getLogger("contactmae.tests")


class Sampler(ProblemElement):
    """Leaf block."""

    samples: int
    label: str
    scale: float = 2.0


class Study(ProblemElement):
    """Holds a sampler; shares ``samples`` with it."""

    sampler: Sampler
    samples: int
    budget: int


class Sweep(ProblemElement):
    sampler: Variation[Sampler]
    tag: str = "sweep"


class Checked(ProblemElement):
    """Rejects negative values."""

    value: int

    def _validate(self) -> None:
        if self.value < 0:
            raise ProblemError("value must be non-negative")
        logger.info("checked value %d", self.value)


class Overriding(ProblemElement):
    value: int

    def validate(self) -> None:
        pass
