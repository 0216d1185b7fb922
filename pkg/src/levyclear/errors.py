"""Exception hierarchy. Every error carries a module-qualified code."""


class LevyClearError(Exception):
    code = "levyclear.error"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code

    def record(self):
        return {"code": self.code, "message": str(self)}


class DomainError(LevyClearError, ValueError):
    code = "levyclear.domain"


class ModelError(LevyClearError, ValueError):
    """Invalid Lévy model (monotone paths, unstable, bad parameters)."""

    code = "levy_model.invalid"


class UnsupportedModelError(LevyClearError):
    code = "levyclear.unsupported_model"


class PoleError(LevyClearError, ArithmeticError):
    code = "steady_state.pole"


class ConvergenceError(LevyClearError, ArithmeticError):
    code = "levyclear.convergence"


class TruncationError(LevyClearError):
    code = "embedded_chain.truncation"


class PreconditionError(LevyClearError, ValueError):
    code = "levyclear.precondition"


class ConfigError(LevyClearError, ValueError):
    code = "cli.config"

    def __init__(self, issues):
        if isinstance(issues, str):
            issues = [issues]
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))

    def record(self):
        return {"code": self.code, "message": str(self), "issues": self.issues}
