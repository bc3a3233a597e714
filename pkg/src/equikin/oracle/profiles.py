"""Smooth scalar time functions with closed-form first and second derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ..errors import InputError


@dataclass(frozen=True)
class Bump:
    """Periodic von Mises bump ``amplitude * exp(kappa * (cos(w (t - center)) - 1))``."""

    amplitude: float
    center: float
    period: float
    kappa: float = 4.0

    def evaluate(self, t: np.ndarray):
        w = 2.0 * math.pi / self.period
        ph = w * (t - self.center)
        c, s = np.cos(ph), np.sin(ph)
        e = self.amplitude * np.exp(self.kappa * (c - 1.0))
        d1 = -self.kappa * w * s * e
        d2 = e * ((self.kappa * w * s) ** 2 - self.kappa * w * w * c)
        return e, d1, d2


@dataclass(frozen=True)
class Profile:
    """``offset + slope*t + sum(a sin(2 pi f t + phi)) + sum(bumps)``.

    Every term is infinitely differentiable, so sampled values, rates and
    accelerations are exact.
    """

    offset: float = 0.0
    slope: float = 0.0
    sines: tuple[tuple[float, float, float], ...] = ()
    bumps: tuple[Bump, ...] = field(default_factory=tuple)

    def evaluate(self, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value, first and second derivative at ``times``."""
        t = np.asarray(times, dtype=float)
        v = np.full(t.shape, self.offset) + self.slope * t
        d1 = np.full(t.shape, self.slope)
        d2 = np.zeros(t.shape)
        for amp, freq, phase in self.sines:
            w = 2.0 * math.pi * freq
            s, c = np.sin(w * t + phase), np.cos(w * t + phase)
            v = v + amp * s
            d1 = d1 + amp * w * c
            d2 = d2 - amp * w * w * s
        for bump in self.bumps:
            e, e1, e2 = bump.evaluate(t)
            v, d1, d2 = v + e, d1 + e1, d2 + e2
        return v, d1, d2

    def value(self, t: float) -> float:
        """Scalar evaluation, cheap enough for an integrator's inner loop."""
        v = self.offset + self.slope * t
        for amp, freq, phase in self.sines:
            v += amp * math.sin(2.0 * math.pi * freq * t + phase)
        for b in self.bumps:
            v += b.amplitude * math.exp(b.kappa * (math.cos(2.0 * math.pi * (t - b.center) / b.period) - 1.0))
        return v

    def scaled(self, k: float) -> "Profile":
        return Profile(k * self.offset, k * self.slope,
                       tuple((k * a, f, p) for a, f, p in self.sines),
                       tuple(Bump(k * b.amplitude, b.center, b.period, b.kappa) for b in self.bumps))

    @property
    def is_zero(self) -> bool:
        return (self.offset == 0 and self.slope == 0 and all(a == 0 for a, _, _ in self.sines)
                and all(b.amplitude == 0 for b in self.bumps))

    def to_config(self) -> dict[str, Any]:
        out: dict[str, Any] = {"offset": self.offset}
        if self.slope:
            out["slope"] = self.slope
        if self.sines:
            out["sines"] = [list(s) for s in self.sines]
        if self.bumps:
            out["bumps"] = [{"amplitude": b.amplitude, "center": b.center, "period": b.period,
                             "kappa": b.kappa} for b in self.bumps]
        return out


ZERO = Profile()


def profile_from_config(spec: Any) -> Profile:
    """Build a profile from a number or a mapping.

    Mapping keys: ``offset``, ``slope``, ``sines`` (list of
    ``[amplitude, frequency_hz, phase_rad]``) and ``bumps`` (list of
    mappings with ``amplitude``, ``center``, ``period`` and optional ``kappa``).
    """
    if spec is None:
        return ZERO
    if isinstance(spec, (int, float)):
        return Profile(offset=float(spec))
    if not isinstance(spec, Mapping):
        raise InputError(f"profile must be a number or a mapping, got {type(spec).__name__}")
    unknown = set(spec) - {"offset", "slope", "sines", "bumps"}
    if unknown:
        raise InputError(f"unknown profile keys: {sorted(unknown)}")
    try:
        sines = tuple((float(a), float(f), float(p)) for a, f, p in spec.get("sines", ()))
        bumps = tuple(Bump(float(b["amplitude"]), float(b["center"]), float(b["period"]),
                           float(b.get("kappa", 4.0))) for b in spec.get("bumps", ()))
    except (TypeError, ValueError, KeyError) as exc:
        raise InputError(f"malformed profile: {exc}") from exc
    for b in bumps:
        if b.period <= 0:
            raise InputError("bump period must be positive")
    return Profile(float(spec.get("offset", 0.0)), float(spec.get("slope", 0.0)), sines, bumps)
