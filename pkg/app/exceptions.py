class SelfStereoError(Exception):
    """Base error; `exit_code` is what the command line returns for it."""

    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class UsageError(SelfStereoError):
    exit_code = 1


class DataError(SelfStereoError):
    """Unreadable, malformed or mismatched input data."""

    exit_code = 2


class NumericalError(SelfStereoError):
    """Non-finite values, typically a diverged training run."""

    exit_code = 3
