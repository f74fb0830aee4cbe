"""Experiment description: surface, lambda field, attenuations, sources, gauges."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .flow import LambdaField
from .geometry import ConformalSurface


@dataclass(frozen=True)
class Numerics:
    """Numerical knobs.  ``None`` means "derive from the disk size"."""

    h: float | None = None  # RK4 step; default 1e-3 * diameter
    time_cap: float | None = None  # trapping cap; default 100 * diameter
    N_theta: int = 256
    h_fd: float = 1e-4
    delta: float = 0.2
    eps_glance: float = 1e-3
    K_trunc: int = 64
    quad_nodes: int = 128  # Simpson intervals per ray for integral representations
    tolerances: dict = field(default_factory=dict)

    def step(self, surface: ConformalSurface) -> float:
        return 1e-3 * surface.diameter if self.h is None else self.h

    def cap(self, surface: ConformalSurface) -> float:
        return 100.0 * surface.diameter if self.time_cap is None else self.time_cap


@dataclass(frozen=True)
class Scenario:
    surface: ConformalSurface = field(default_factory=ConformalSurface)
    lam: LambdaField = field(default_factory=LambdaField)
    pairs: dict = field(default_factory=dict)
    sources: dict = field(default_factory=dict)
    gauges: dict = field(default_factory=dict)
    numerics: Numerics = field(default_factory=Numerics)
    seed: int = 0

    def with_surface(self, surface: ConformalSurface) -> "Scenario":
        return replace(self, surface=surface)

    def with_lambda(self, lam: LambdaField) -> "Scenario":
        return replace(self, lam=lam)

    def with_numerics(self, **kw) -> "Scenario":
        return replace(self, numerics=replace(self.numerics, **kw))
