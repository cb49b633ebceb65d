"""Adapted hyperparameters of the inner optimizer and their legal ranges."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class Range:
    """Closed-interval metadata (lo, hi). lo == hi pins the value (test use)."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ConfigError(f"range lower bound {self.lo} > upper bound {self.hi}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains_strict(self, value: float) -> bool:
        if self.lo == self.hi:
            return value == self.lo
        return self.lo < value < self.hi


@dataclass(frozen=True)
class HyperRanges:
    """Configured intervals for the adapted quantities (sigma, alpha)."""

    sigma: Range = Range(0.01, 0.10)
    alpha: Range = Range(0.016, 0.024)

    def as_tuple(self):
        return (self.sigma, self.alpha)


@dataclass(frozen=True)
class HyperParams:
    """Current perturbation scale sigma and inner learning rate alpha."""

    sigma: float
    alpha: float

    def validate(self, ranges: HyperRanges) -> "HyperParams":
        for name, value, rng in (
            ("sigma", self.sigma, ranges.sigma),
            ("alpha", self.alpha, ranges.alpha),
        ):
            if not rng.contains_strict(value):
                raise ConfigError(
                    f"{name}={value} outside configured range ({rng.lo}, {rng.hi})"
                )
        return self
