"""Exceptions mapped to CLI exit codes."""


class NumericalDivergenceError(RuntimeError):
    """An optimization loop produced NaN/inf; carries the iteration index."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class TopologyCorrectionError(RuntimeError):
    """Level-set extraction failed to reach genus 0 within the retry ladder."""

    def __init__(self, message: str, tau: float | None = None):
        super().__init__(message)
        self.tau = tau
