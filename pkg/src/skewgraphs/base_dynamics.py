"""Base systems: the expanding circle map, the toral baker map and solenoid points.

A solenoid point is stored as its present coordinate ``t0`` plus the
branch digits of its pre-orbit, ``digits[k] = floor(4 * t_{-k-1})``, so
that ``t_{-k-1} = (t_{-k} + digits[k]) / 4``.  Baker coordinates ``(t, s)``
are the same object with ``s = 0.d0 d1 d2 ...`` in base 4.

A double-precision coordinate resolves only ``RESOLVED_DIGITS`` base-4
digits.  Orbits that run past that resolution are continued either with
zero digits (the exact dyadic point) or with uniformly random digits drawn
from a generator, which is the Lebesgue-typical continuation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

B = 4
RESOLVED_DIGITS = 27
_BITS = 2 * RESOLVED_DIGITS
_MASK = (1 << _BITS) - 1


class UnsupportedVariant(TypeError):
    """Operation needs a pre-orbit but the base point carries none."""


@dataclass(frozen=True)
class Circle:
    t: float


@dataclass(frozen=True)
class Baker:
    t: float
    s: float


@dataclass(frozen=True)
class Solenoid:
    digits: tuple
    t0: float

    @property
    def t(self):
        return self.t0

    @property
    def s(self):
        return digits_to_s(self.digits)

    @property
    def depth(self):
        return len(self.digits)


BasePoint = Union[Circle, Baker, Solenoid]


def _frac(x):
    return x - np.floor(x)


def circle_step(t):
    out = _frac(B * np.asarray(t, dtype=float))
    return out if np.ndim(out) else float(out)


def baker_step_arrays(t, s):
    t = np.asarray(t, dtype=float)
    d = np.floor(B * t)
    return _frac(B * t), (np.asarray(s, dtype=float) + d) / B


def baker_inverse_arrays(t, s):
    s = np.asarray(s, dtype=float)
    d = np.floor(B * s)
    return (np.asarray(t, dtype=float) + d) / B, _frac(B * s)


def baker_step(p: Baker) -> Baker:
    t, s = baker_step_arrays(p.t, p.s)
    return Baker(float(t), float(s))


def baker_inverse(p: Baker) -> Baker:
    t, s = baker_inverse_arrays(p.t, p.s)
    return Baker(float(t), float(s))


def step(p: BasePoint) -> BasePoint:
    """Advance a base point one step, keeping its variant."""
    if isinstance(p, Circle):
        return Circle(circle_step(p.t))
    if isinstance(p, Baker):
        return baker_step(p)
    d = int(np.floor(B * p.t0))
    return Solenoid((d,) + tuple(p.digits), circle_step(p.t0))


def s_digits(s, count: int, rng: Optional[np.random.Generator] = None):
    """First ``count`` base-4 digits of ``s`` (array input, shape ``(N,)``).

    Digits past the double's resolution are zero, or random when ``rng`` is
    given.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    n_res = min(count, RESOLVED_DIGITS)
    w = np.floor(s * 2.0**_BITS).astype(np.uint64)
    out = np.zeros((s.size, count), dtype=np.uint8)
    for k in range(n_res):
        shift = np.uint64(_BITS - 2 * (k + 1))
        out[:, k] = ((w >> shift) & np.uint64(3)).astype(np.uint8)
    if count > n_res and rng is not None:
        out[:, n_res:] = rng.integers(0, B, size=(s.size, count - n_res), dtype=np.uint8)
    return out


def digits_to_s(digits) -> float:
    s = 0.0
    for d in reversed(tuple(digits)):
        s = (s + d) / B
    return s


def preorbit_arrays(t0, digits):
    """``t_0, t_{-1}, ..., t_{-depth}`` for arrays ``t0 (N,)`` and ``digits (N, depth)``."""
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    digits = np.atleast_2d(digits)
    out = np.empty((t0.size, digits.shape[1] + 1))
    out[:, 0] = t0
    for k in range(digits.shape[1]):
        out[:, k + 1] = (out[:, k] + digits[:, k]) / B
    return out


def point_digits(p: BasePoint, depth: int, rng=None):
    """Pre-orbit digits of a single point, to the requested depth."""
    if isinstance(p, Circle):
        raise UnsupportedVariant("circle points carry no pre-orbit")
    if isinstance(p, Solenoid):
        if len(p.digits) < depth:
            raise ValueError(f"solenoid point has depth {len(p.digits)} < {depth}")
        return np.asarray(p.digits[:depth], dtype=np.uint8)
    return s_digits(p.s, depth, rng)[0]


def preorbit(p: BasePoint, depth: int):
    """``[t_0, t_{-1}, ..., t_{-depth}]`` of a baker or solenoid point."""
    d = point_digits(p, depth)
    return preorbit_arrays(p.t, d[None, :])[0]


def baker_to_solenoid(p: Baker, depth: int = 60) -> Solenoid:
    return Solenoid(tuple(int(d) for d in point_digits(p, depth)), float(p.t))


def solenoid_to_baker(p: Solenoid) -> Baker:
    return Baker(float(p.t0), p.s)


class ForwardStream:
    """Forward base orbit ``t_k`` (and baker ``s_k``) for a batch of starts.

    The next 27 base-4 digits of each ``t`` are kept in a 54-bit window; each
    step shifts one digit out and one in, zero or drawn from ``rng``.  With
    zero fill it follows the double orbit of ``4t mod 1`` up to the initial
    truncation to 54 bits, an error that grows by 4 per step.
    """

    def __init__(self, t0, s0=None, rng: Optional[np.random.Generator] = None):
        t0 = np.atleast_1d(np.asarray(t0, dtype=float))
        self.rng = rng
        self.window = np.floor(t0 * 2.0**_BITS).astype(np.uint64)
        self.s = None if s0 is None else np.atleast_1d(np.asarray(s0, dtype=float)).copy()
        self.t = t0.copy()

    def lead_digit(self):
        return (self.window >> np.uint64(_BITS - 2)).astype(np.uint8)

    def advance(self):
        d = self.lead_digit()
        fresh = (self.rng.integers(0, B, size=self.window.size).astype(np.uint64)
                 if self.rng is not None else np.zeros(self.window.size, dtype=np.uint64))
        self.window = ((self.window << np.uint64(2)) & np.uint64(_MASK)) | fresh
        self.t = (self.window >> np.uint64(1)).astype(float) * 2.0 ** -(_BITS - 1)
        if self.s is not None:
            self.s = (self.s + d) / B
        return self.t


class BaseMeasureSampler:
    """Lebesgue samples on the base, reproducible per ``(seed, stream)``."""

    def __init__(self, seed: int, stream=0):
        self.seed = int(seed)
        self.stream = stream
        key = stream if isinstance(stream, tuple) else (int(stream),)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=key)
        self.rng = np.random.Generator(np.random.PCG64(self._seq))

    def child(self, j: int) -> "BaseMeasureSampler":
        key = self.stream if isinstance(self.stream, tuple) else (int(self.stream),)
        return BaseMeasureSampler(self.seed, key + (int(j),))

    def circle(self, count):
        return self.rng.random(count)

    def baker(self, count):
        return self.rng.random(count), self.rng.random(count)

    def solenoid(self, count, depth):
        t0 = self.rng.random(count)
        digits = self.rng.integers(0, B, size=(count, depth), dtype=np.uint8)
        return t0, digits

    def special(self, count, depth):
        """Points whose pre-orbit digits are all 0 (the branch fixing ``t = 0``)."""
        return self.rng.random(count), np.zeros((count, depth), dtype=np.uint8)


def sample_base(sampler: BaseMeasureSampler, variant: str, count: int, depth: int = 60):
    if count < 1:
        raise ValueError("count must be >= 1")
    if variant == "circle":
        return [Circle(float(t)) for t in sampler.circle(count)]
    if variant == "baker":
        t, s = sampler.baker(count)
        return [Baker(float(a), float(b)) for a, b in zip(t, s)]
    if variant == "solenoid":
        t, d = sampler.solenoid(count, depth)
        return [Solenoid(tuple(int(x) for x in row), float(a)) for a, row in zip(t, d)]
    if variant == "special":
        t, d = sampler.special(count, depth)
        return [Solenoid(tuple(int(x) for x in row), float(a)) for a, row in zip(t, d)]
    raise ValueError(f"unknown base variant {variant!r}")


def points_to_arrays(points, depth: int, rng=None):
    """Stack base points into ``(t0, digits)`` arrays for vectorized pullbacks."""
    t0 = np.array([p.t for p in points], dtype=float)
    digits = np.stack([point_digits(p, depth, rng) for p in points]) if depth else \
        np.zeros((len(points), 0), dtype=np.uint8)
    return t0, digits
