from dataclasses import dataclass, fields, replace

from .errors import ConfigError


@dataclass(frozen=True)
class NumericsConfig:
    """Numerical knobs shared by every solver in the package."""

    ode_steps: int = 200
    quad_order: int = 32
    shooting_tol: float = 1e-10
    max_iters: int = 50
    jac_step: float = 1e-6
    fd_step: float = 1e-5
    curvature_step: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.ode_steps < 1:
            raise ConfigError("ode_steps must be positive")
        if self.quad_order < 2 or self.quad_order % 2:
            raise ConfigError("quad_order must be an even integer >= 2")
        if self.shooting_tol <= 0 or self.fd_step <= 0:
            raise ConfigError("tolerances and steps must be positive")

    def with_overrides(self, **overrides):
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown numerics keys: {sorted(unknown)}")
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **clean)


DEFAULT = NumericsConfig()
