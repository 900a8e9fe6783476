"""Exception hierarchy for the execution engine.

Every module raises subclasses of EngineError so callers (and the CLI exit-code
mapping) can distinguish data problems from calibration problems.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


# --- order book / aggregation ---

class EmptyBook(EngineError):
    """Cumulative-volume split received no orders."""


class MissingSide(EngineError):
    """A spread was requested for a cell with only one populated side."""


class ArrivalAfterCutoff(EngineError):
    """Arrival time leaves no tradable minute bucket before the 30-minute stop."""


# --- ingest ---

class ParseError(EngineError):
    """Malformed row in a LOB CSV file."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class SchemaVersionMismatch(EngineError):
    """LOB file declares an unsupported schema version."""


# --- impact model ---

class OutOfRange(EngineError):
    """Minute bucket index outside 1..N."""


class InsufficientWindow(EngineError):
    """Post-trade observation window extends past the grid horizon."""


class DegenerateInput(EngineError):
    """Too few distinct abscissae to fit a spline."""


class InsufficientData(EngineError):
    """A regime/kind stratum has too few usable observations."""

    def __init__(self, stratum: str, count: int, required: int):
        super().__init__(
            f"stratum {stratum}: {count} positive observations, {required} required"
        )
        self.stratum = stratum
        self.count = count
        self.required = required


class NotFitted(EngineError):
    """Impact model evaluated before fitting."""


# --- strategies / optimizer ---

class InfeasibleTick(EngineError):
    """Requested volume is not a multiple of the 0.1 MWh tick."""


class LengthMismatch(EngineError):
    """Volume profile length does not match the bucket count."""


class AllZeroVolume(EngineError):
    """Training grid carries no traded volume at all."""


# --- backtest ---

class MissingCell(EngineError):
    """Out-of-sample grid has no data for a (k, r) cell hit by a trajectory."""

    def __init__(self, k: int, r: int):
        super().__init__(f"empty grid cell k={k}, r={r}")
        self.k = k
        self.r = r


class DegenerateSample(EngineError):
    """Statistic requires at least two observations."""


class EmptySample(EngineError):
    """Subsampling removed every day from the sample."""


# --- cli ---

class ConfigError(EngineError):
    """Run configuration is missing, malformed, or inconsistent."""
