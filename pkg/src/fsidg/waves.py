"""Incident acoustic fields driving the interface load.

Every wave exposes ``value``, ``dt`` and ``grad`` evaluated at points of
shape (..., 2) and a scalar time.
"""
from dataclasses import dataclass

import numpy as np

PLANE = "plane"
PULSE = "pulse"
ZERO = "zero"


@dataclass(frozen=True)
class PlaneWave:
    """cos(x . d) cos(t) with unit direction d."""

    direction: tuple
    kind: str = PLANE

    def value(self, x, t):
        return np.cos(np.asarray(x) @ np.asarray(self.direction)) * np.cos(t)

    def dt(self, x, t):
        return -np.cos(np.asarray(x) @ np.asarray(self.direction)) * np.sin(t)

    def grad(self, x, t):
        d = np.asarray(self.direction)
        s = -np.sin(np.asarray(x) @ d) * np.cos(t)
        return s[..., None] * d


def plane_wave(d=(1.0, 0.0)):
    d = np.asarray(d, dtype=float)
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise ValueError("plane wave direction must be nonzero")
    return PlaneWave(tuple(float(c) for c in d / norm))


def _window(t):
    return (t >= 0.0) & (t <= 0.5)


def _pulse(t):
    t = np.asarray(t, dtype=float)
    return np.where(_window(t), np.sin(2 * np.pi * t), 0.0)


def _pulse_dt(t):
    t = np.asarray(t, dtype=float)
    return np.where(_window(t), 2 * np.pi * np.cos(2 * np.pi * t), 0.0)


@dataclass(frozen=True)
class PulseWave:
    """Windowed sine sin(2 pi t) on 0 <= t <= 0.5, zero afterwards.

    ``mode="as-written"`` uses the same value everywhere in space.
    ``mode="cylindrical"`` radiates it from ``source`` as
    g(t - r/c) / sqrt(max(r, eps)) with r = |x - source|.
    """

    source: tuple = (2.0, 0.0)
    mode: str = "as-written"
    c: float = 1.0
    eps: float = 1e-6
    kind: str = PULSE

    def _geometry(self, x):
        diff = np.asarray(x, dtype=float) - np.asarray(self.source)
        r = np.linalg.norm(diff, axis=-1)
        return diff, r

    def value(self, x, t):
        x = np.asarray(x, dtype=float)
        if self.mode == "as-written":
            return np.full(x.shape[:-1], float(_pulse(t)))
        _, r = self._geometry(x)
        return _pulse(t - r / self.c) / np.sqrt(np.maximum(r, self.eps))

    def dt(self, x, t):
        x = np.asarray(x, dtype=float)
        if self.mode == "as-written":
            return np.full(x.shape[:-1], float(_pulse_dt(t)))
        _, r = self._geometry(x)
        return _pulse_dt(t - r / self.c) / np.sqrt(np.maximum(r, self.eps))

    def grad(self, x, t):
        x = np.asarray(x, dtype=float)
        if self.mode == "as-written":
            return np.zeros(x.shape)
        diff, r = self._geometry(x)
        rr = np.maximum(r, self.eps)
        tau = t - r / self.c
        g, gp = _pulse(tau), _pulse_dt(tau)
        # amplitude decay only acts where r > eps
        dr = np.where(r > self.eps, -g / (2 * rr**1.5), 0.0)
        radial = -gp / (self.c * np.sqrt(rr)) + dr
        unit = diff / np.where(r > 0, r, 1.0)[..., None]
        return radial[..., None] * unit


def pulse_wave(x_s=(2.0, 0.0), mode="as-written", c=1.0):
    if mode not in ("as-written", "cylindrical"):
        raise ValueError(f"unknown pulse mode {mode!r}")
    return PulseWave(tuple(float(v) for v in x_s), mode, float(c))


@dataclass(frozen=True)
class ZeroWave:
    kind: str = ZERO

    def value(self, x, t):
        return np.zeros(np.asarray(x).shape[:-1])

    dt = value

    def grad(self, x, t):
        return np.zeros(np.asarray(x).shape)
