"""Run-validity signalling shared by norms, radius and solver."""


class ValidityError(RuntimeError):
    """A validity monitor tripped (overflow, NaN, tail leakage, expired band)."""

    def __init__(self, cause: str, detail: str = ""):
        self.cause = cause
        self.detail = detail
        super().__init__(f"{cause}: {detail}" if detail else cause)
