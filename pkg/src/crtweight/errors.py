"""Exception hierarchy.

Every error that can surface through the CLI carries an ``exit_code`` so
subcommands can map failures onto distinct process statuses:

    2  usage / bad invocation
    3  input parsing and data validation
    4  optimizer non-convergence or separation
    5  numerical degeneracy (empty weighted arms, unstable ratios, ...)
    6  acceptance-suite failure (set by the CLI, not an exception)
"""


class CrtWeightError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class UsageError(CrtWeightError):
    """Invalid invocation: bad flags, unknown scenario label, missing inputs."""

    exit_code = 2


class ParseError(CrtWeightError):
    """Malformed input file: missing columns, non-numeric cells, bad values."""

    exit_code = 3


class ConsistencyError(ParseError):
    """Rows contradict the cluster design, e.g. treatment varies within a cluster."""


class DesignError(ParseError):
    """Data incompatible with a two-arm cluster randomized design."""


class ConvergenceError(CrtWeightError):
    """Optimizer failed to reach the requested tolerance."""

    exit_code = 4


class SeparationError(ConvergenceError):
    """Pseudo-likelihood maximized on the boundary (parameter norm diverged)."""


class DegenerateArmError(CrtWeightError):
    """A treatment arm is empty or has zero total weight."""

    exit_code = 5


class NoIncentivizedError(DegenerateArmError):
    """nu is too close to 1: no incentivized-recruited mass to estimate on."""


class NumericalDegeneracyError(DegenerateArmError):
    """Near-singular denominator in a variance or ratio computation."""


class GenerationError(CrtWeightError):
    """Simulation coefficients imply an invalid probability for some unit."""

    exit_code = 5


class BootstrapUnreliableError(CrtWeightError):
    """Too many bootstrap replicates failed for the resample SE to be trusted."""

    exit_code = 5
