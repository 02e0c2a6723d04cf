"""Exception hierarchy shared across the package.

``ValidationError`` marks bad inputs (configs, parameter domains) and maps to
CLI exit code 2; ``NumericalError`` and its subclasses mark runtime numerical
failures and map to exit code 3.
"""


class DriftmcError(Exception):
    pass


class ValidationError(DriftmcError):
    """A parameter or configuration violates its stated domain."""


class NumericalError(DriftmcError):
    """A computation produced an invalid numerical result."""


class ArbitrageError(NumericalError):
    """The volatility surface admits arbitrage (non-positive Dupire denominator
    or variance) at some (t, k)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class TrainingDivergedError(NumericalError):
    """The training loss became non-finite; usually the learning rate is too
    large for the payoff/diffusion at hand."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
