"""Exception types raised by the numerical routines."""


class AnalysisError(Exception):
    """Base class; the CLI maps these to machine-readable error lines."""

    code = "analysis_error"


class GridError(AnalysisError, ValueError):
    code = "grid_error"


class BallOffGrid(AnalysisError, ValueError):
    code = "ball_off_grid"


class DegenerateBall(AnalysisError, ValueError):
    code = "degenerate_ball"


class FieldFormatError(AnalysisError, ValueError):
    code = "field_format"


class RhoExceedsDomain(AnalysisError):
    code = "rho_exceeds_domain"


class ShenEstimateFailed(AnalysisError):
    code = "shen_failed"


class NormOverflow(AnalysisError):
    code = "norm_overflow"


class InvalidIntegrand(AnalysisError, ValueError):
    code = "invalid_integrand"


class CoverageHole(AnalysisError):
    code = "coverage_hole"


class SupportViolation(AnalysisError, ValueError):
    code = "support_violation"


class DegenerateInput(AnalysisError, ValueError):
    code = "degenerate_input"


class UnknownLemma(AnalysisError, ValueError):
    code = "unknown_lemma"


class ConfigError(AnalysisError, ValueError):
    code = "config_error"
