"""Failure taxonomy shared by all evaluation topologies."""


class ExecutorError(ValueError):
    """The run failed; no partial results are emitted."""


class RefusalError(ExecutorError):
    """A principal refused to proceed (policy or verification failure)."""


class ExecutorAbort(ExecutorError):
    """A protocol abort with a step identifier."""

    def __init__(self, step: str, message: str):
        super().__init__(f"abort at {step}: {message}")
        self.step = step
