"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid mesh, gripper, keypoint or estimator configuration."""


class SolverDivergenceError(RuntimeError):
    """Quasi-static solve did not reach the force tolerance."""

    def __init__(self, residual, iterations):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(
            f"equilibrium solve failed: residual {self.residual:.3e} N "
            f"after {self.iterations} iterations"
        )


class BarrierViolationError(ValueError):
    """An error channel reached or left its performance boundary."""

    def __init__(self, channels, xi):
        self.channels = [int(c) for c in channels]
        self.xi = xi
        super().__init__(f"barrier violated on channels {self.channels}")


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate; ``path`` names the field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
