"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


# --- workspace partitioning ---

class RegionMisaligned(PipelineError):
    """A labeled region boundary does not lie on grid lines (it would split a cell)."""


class EmptyPartition(PipelineError):
    """The partition contains no cells."""


# --- controller synthesis / transition timing ---

class Infeasible(PipelineError):
    """No admissible affine controller exists for the requested facet transition."""


class VelocityVanishes(PipelineError):
    """The worst-case exit velocity is not strictly positive over the travel range."""


# --- formulas and automata ---

class FormulaSyntaxError(PipelineError):
    """Formula text could not be parsed; carries the offending position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class IntervalError(PipelineError):
    """A temporal operator interval has a lower bound above its upper bound."""


class UnsupportedFragment(PipelineError):
    """The formula falls outside the pattern fragment the automaton compiler supports."""


class SchemaError(PipelineError):
    """A JSON artifact does not match its documented schema."""


class DanglingReference(PipelineError):
    """An automaton edge names an unknown location or clock."""


class AlphabetMismatch(PipelineError):
    """An automaton references propositions the transition system does not declare."""


class EmptyProduct(PipelineError):
    """A product construction has no initial states (labels never match)."""


# --- search ---

class NoAcceptingRun(PipelineError):
    """The run search exhausted its candidates without a clock-feasible accepting lasso."""


class DepthExceeded(PipelineError):
    """The exhaustive search hit its depth limit before deciding the instance."""


# --- simulation ---

class BoundViolated(PipelineError):
    """A simulated facet crossing took longer than its worst-case bound."""


class Escape(PipelineError):
    """A simulated trajectory left the source cell through a non-exit facet."""


# --- reporting ---

class MissingArtifact(PipelineError):
    """A pipeline artifact required by this command has not been produced yet."""
