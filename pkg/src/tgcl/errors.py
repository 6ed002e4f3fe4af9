"""Error types shared across the package.

DataError covers everything wrong with inputs or configuration (malformed
files, degenerate timespans, infeasible sampler settings). NumericError
covers numerical breakdown at runtime (non-finite losses or gradients).
The CLI maps them to distinct exit codes.
"""


class DataError(Exception):
    """Invalid or degenerate input data / configuration."""


class NumericError(Exception):
    """Non-finite value encountered during a numeric computation."""
