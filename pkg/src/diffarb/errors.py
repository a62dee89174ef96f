"""Exception types shared across the package.

Every error that carries a witness point stores it on the exception object so
callers can fold failures into reports instead of losing them in tracebacks.
"""

from __future__ import annotations


class DiffarbError(Exception):
    """Base class for all package errors."""


class ParseError(DiffarbError):
    """Malformed expression source.

    Attributes:
        position: 0-based character offset of the offending token.
        expected: short description of what the parser wanted there.
    """

    def __init__(self, position: int, expected: str, found: str = ""):
        self.position = position
        self.expected = expected
        self.found = found
        what = f"expected {expected}" + (f", found {found!r}" if found else "")
        super().__init__(f"parse error at position {position}: {what}")


class UnknownIdentifier(DiffarbError):
    """Identifier outside the known variable/function vocabulary."""

    def __init__(self, name: str, position: int = -1):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r}")


class ArityError(DiffarbError):
    """Function called with the wrong number of arguments."""

    def __init__(self, function: str, got: int, want: int):
        self.function = function
        self.got = got
        self.want = want
        super().__init__(f"{function}() takes {want} argument(s), got {got}")


class BindError(DiffarbError):
    """Expression references variables outside its declared scope."""

    def __init__(self, name: str, reason: str):
        self.name = name
        super().__init__(f"cannot bind {name!r}: {reason}")


class EvalError(DiffarbError):
    """Evaluation failure carrying the offending point.

    t and x may each be None when not applicable (radial certificates take a
    single scalar argument, reported through x).
    """

    def __init__(self, message: str, t=None, x=None):
        self.t = t
        self.x = x
        at = []
        if t is not None:
            at.append(f"t={t!r}")
        if x is not None:
            at.append(f"x={x!r}")
        where = (" at " + ", ".join(at)) if at else ""
        super().__init__(message + where)


class DomainError(EvalError):
    """Math domain violation: log/sqrt of a negative, 0^negative, x/0,
    non-integer power of a negative base, or a non-finite result."""


class NotSymmetric(DiffarbError):
    pass


class NotPSD(DiffarbError):
    """Matrix has an eigenvalue below the negative tolerance."""

    def __init__(self, message: str, min_eigenvalue: float | None = None):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(message)


class SingularDiffusion(EvalError):
    """Diffusion matrix not invertible (condition number over threshold)."""


class SingularSigma(DiffarbError):
    """Scalar diffusion coefficient vanishes inside the integration range."""

    def __init__(self, point: float):
        self.point = point
        super().__init__(f"sigma^2 vanishes near x={point!r}")


class MaxDepthExceeded(DiffarbError):
    """Adaptive bisection hit its depth limit without converging."""

    def __init__(self, lo: float, hi: float, depth: int):
        self.lo = lo
        self.hi = hi
        self.depth = depth
        super().__init__(
            f"quadrature depth {depth} exceeded on [{lo!r}, {hi!r}]"
        )


class OscillationDetected(DiffarbError):
    """Integrand changes sign; tail classification only supports f >= 0."""

    def __init__(self, point: float):
        self.point = point
        super().__init__(f"integrand changes sign near z={point!r}")


class MissingCertificate(DiffarbError):
    def __init__(self, condition_id: str, missing: str):
        self.condition_id = condition_id
        self.missing = missing
        super().__init__(f"{condition_id} requires certificate {missing!r}")


class DimensionMismatch(DiffarbError):
    pass


class UnknownPreset(DiffarbError):
    def __init__(self, name: str, known: tuple[str, ...]):
        self.name = name
        super().__init__(
            f"unknown preset {name!r}; known presets: {', '.join(known)}"
        )


class ConfigError(DiffarbError):
    """Configuration file rejected.

    line is 1-based when the error has a textual location, else None.
    """

    def __init__(self, path, line, message: str):
        self.path = path
        self.line = line
        self.message = message
        loc = f"{path}" + (f":{line}" if line else "")
        super().__init__(f"{loc}: {message}")


class ContradictionError(DiffarbError):
    """Two rules derived Exists and NotExists for the same flag."""

    def __init__(self, flag: str, rule_a: str, rule_b: str):
        self.flag = flag
        self.rule_a = rule_a
        self.rule_b = rule_b
        super().__init__(
            f"contradiction on {flag}: rule {rule_a!r} vs rule {rule_b!r}"
        )
