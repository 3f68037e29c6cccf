from typing import Iterable, Optional


class JacobicastError(Exception):
    """Base class for every error raised by jacobicast"""


class DomainError(JacobicastError, ValueError):
    """Exception for values outside the model state space or parameter domain"""
    def __init__(self, message: str):
        super().__init__(f"Value outside the model domain: {message}")


class SingularityError(DomainError):
    """Exception for evaluating the Lamperti-space drift at a boundary point"""
    def __init__(self, message: str):
        super().__init__(f"singular Lamperti drift, {message}")


class DataError(JacobicastError):
    """Exception for malformed or insufficient input data"""
    def __init__(self, message: str, path: Optional[str] = None, line_numbers: Optional[Iterable[int]] = None):
        self.path = path
        self.line_numbers = sorted(line_numbers) if line_numbers else []
        where = f" ({path})" if path else ""
        lines = ""
        if self.line_numbers:
            shown = ", ".join(str(n) for n in self.line_numbers[:20])
            more = "..." if len(self.line_numbers) > 20 else ""
            lines = f" [lines {shown}{more}]"
        super().__init__(f"Invalid input data{where}: {message}{lines}")


class DegenerateDataError(DataError):
    """Exception for data carrying no information for an estimator (e.g. all-zero errors)"""


class InfeasibleMomentsError(JacobicastError):
    """Exception for a (mean, variance) pair no Beta on the error support can match"""
    def __init__(self, mu: float, sigma2: float, epsilon: float):
        self.mu = mu
        self.sigma2 = sigma2
        super().__init__(
            f"Moments cannot be matched by a Beta on [{-1 + epsilon:g}, {1 - epsilon:g}]: mean={mu!r}, variance={sigma2!r}"
        )


class IntegrationError(JacobicastError):
    """Exception for a non-finite state while integrating an ODE or SDE"""
    def __init__(self, message: str):
        super().__init__(f"Numerical integration failed: {message}")


class ConfigError(JacobicastError):
    """Exception for invalid settings or command-line usage"""
    def __init__(self, message: str):
        super().__init__(f"Invalid jacobicast configuration: {message}")
