"""Phasor algebra, three-phase sets, Clarke/Park transforms and the SOGI.

Conventions used throughout the package:

* Phasors are rms and cosine-referenced: ``x(t) = sqrt(2)*|X|*cos(w*t + angle(X))``.
* Clarke/Park are amplitude invariant. A balanced positive-sequence set of peak
  ``A`` whose phase-a angle equals ``theta`` maps to ``d = A, q = 0``; the
  complex space vector is ``alpha + j*beta`` and ``d + j*q = (alpha + j*beta) * exp(-j*theta)``.
  A current lagging its voltage therefore has negative ``q``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
ALPHA = cmath.exp(2j * math.pi / 3)  # 1∠120°


def canonical_angle(rad: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(rad, 2 * math.pi)
    if a <= -math.pi:
        a += 2 * math.pi
    return a


@dataclass(frozen=True)
class Phasor:
    re: float
    im: float

    @classmethod
    def from_complex(cls, z: complex) -> "Phasor":
        z = complex(z)
        return cls(z.real, z.imag)

    @classmethod
    def polar(cls, magnitude: float, angle_deg: float = 0.0) -> "Phasor":
        return cls.from_complex(cmath.rect(magnitude, math.radians(angle_deg)))

    def __complex__(self) -> complex:
        return complex(self.re, self.im)

    @property
    def magnitude(self) -> float:
        return math.hypot(self.re, self.im)

    @property
    def angle(self) -> float:
        """Angle in radians, canonicalised to (-pi, pi]."""
        if self.re == 0.0 and self.im == 0.0:
            return 0.0
        return canonical_angle(math.atan2(self.im, self.re))

    @property
    def angle_deg(self) -> float:
        return math.degrees(self.angle)

    def __repr__(self) -> str:
        return f"Phasor({self.magnitude:.6g}∠{self.angle_deg:.4f}°)"


@dataclass(frozen=True)
class ThreePhaseSet:
    a: Phasor
    b: Phasor
    c: Phasor

    @classmethod
    def from_complex(cls, a: complex, b: complex, c: complex) -> "ThreePhaseSet":
        return cls(Phasor.from_complex(a), Phasor.from_complex(b), Phasor.from_complex(c))

    @classmethod
    def balanced(cls, magnitude: float, angle_deg: float = 0.0) -> "ThreePhaseSet":
        return cls(
            Phasor.polar(magnitude, angle_deg),
            Phasor.polar(magnitude, angle_deg - 120.0),
            Phasor.polar(magnitude, angle_deg + 120.0),
        )

    def as_complex(self) -> tuple[complex, complex, complex]:
        return complex(self.a), complex(self.b), complex(self.c)


@dataclass(frozen=True)
class SequenceSet:
    pos: Phasor
    neg: Phasor
    zero: Phasor


@dataclass(frozen=True)
class DqSample:
    d: float
    q: float


def sequence_decompose(v: ThreePhaseSet) -> SequenceSet:
    """Fortescue transform of a three-phase phasor set."""
    a, b, c = v.as_complex()
    a2 = ALPHA * ALPHA
    return SequenceSet(
        pos=Phasor.from_complex((a + ALPHA * b + a2 * c) / 3),
        neg=Phasor.from_complex((a + a2 * b + ALPHA * c) / 3),
        zero=Phasor.from_complex((a + b + c) / 3),
    )


def sequence_compose(s: SequenceSet) -> ThreePhaseSet:
    """Inverse Fortescue transform."""
    p, n, z = complex(s.pos), complex(s.neg), complex(s.zero)
    a2 = ALPHA * ALPHA
    return ThreePhaseSet.from_complex(z + p + n, z + a2 * p + ALPHA * n, z + ALPHA * p + a2 * n)


def abc_to_alphabeta(a: float, b: float, c: float) -> tuple[float, float]:
    alpha = (2.0 / 3.0) * (a - 0.5 * b - 0.5 * c)
    beta = (b - c) / SQRT3
    return alpha, beta


def abc_to_dq(a: float, b: float, c: float, theta: float) -> DqSample:
    if not math.isfinite(theta):
        raise ValueError("theta must be finite")
    alpha, beta = abc_to_alphabeta(a, b, c)
    cs, sn = math.cos(theta), math.sin(theta)
    return DqSample(alpha * cs + beta * sn, -alpha * sn + beta * cs)


def dq_to_abc(dq: DqSample, theta: float) -> tuple[float, float, float]:
    cs, sn = math.cos(theta), math.sin(theta)
    alpha = dq.d * cs - dq.q * sn
    beta = dq.d * sn + dq.q * cs
    return alpha, -0.5 * alpha + 0.5 * SQRT3 * beta, -0.5 * alpha - 0.5 * SQRT3 * beta


# --------------------------------------------------------------------------- SOGI


@dataclass(frozen=True)
class SogiState:
    v_filt: float = 0.0
    v_quad: float = 0.0
    k_gain: float = SQRT2
    omega: float = 2 * math.pi * 50.0
    v_in_prev: float = 0.0


def _sogi_coefficients(k: float, omega: float, dt: float) -> tuple[float, ...]:
    """Tustin discretisation of x' = A x + B u with A = [[-kw, -w], [w, 0]], B = [kw, 0].

    Returns the entries of M = (I - A h)^-1 (I + A h) and N = (I - A h)^-1 B h,
    h = dt/2, flattened as (m11, m12, m21, m22, n1, n2).
    """
    h = 0.5 * dt
    kw = k * omega
    # I - A h = [[1 + kw h, w h], [-w h, 1]]
    a11, a12, a21, a22 = 1 + kw * h, omega * h, -omega * h, 1.0
    det = a11 * a22 - a12 * a21
    i11, i12, i21, i22 = a22 / det, -a12 / det, -a21 / det, a11 / det
    # I + A h = [[1 - kw h, -w h], [w h, 1]]
    p11, p12, p21, p22 = 1 - kw * h, -omega * h, omega * h, 1.0
    m11 = i11 * p11 + i12 * p21
    m12 = i11 * p12 + i12 * p22
    m21 = i21 * p11 + i22 * p21
    m22 = i21 * p12 + i22 * p22
    n1 = i11 * kw * h
    n2 = i21 * kw * h
    return m11, m12, m21, m22, n1, n2


def _check_step(omega: float, dt: float) -> None:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt * omega >= 0.5:
        raise ValueError(f"dt*omega = {dt * omega:.3g} exceeds the 0.5 stability margin")


def sogi_step(state: SogiState, v_in: float, dt: float) -> SogiState:
    """Advance a SOGI by one step (trapezoidal integration, input held as a ramp)."""
    _check_step(state.omega, dt)
    m11, m12, m21, m22, n1, n2 = _sogi_coefficients(state.k_gain, state.omega, dt)
    u = state.v_in_prev + v_in
    x1 = m11 * state.v_filt + m12 * state.v_quad + n1 * u
    x2 = m21 * state.v_filt + m22 * state.v_quad + n2 * u
    return SogiState(x1, x2, state.k_gain, state.omega, v_in)


class Sogi:
    """Mutable SOGI with cached coefficients, for use inside simulation loops.

    Numerically identical to repeated :func:`sogi_step` calls.
    """

    __slots__ = ("k", "omega", "dt", "v", "qv", "u_prev", "_c")

    def __init__(self, omega: float, dt: float, k: float = SQRT2):
        _check_step(omega, dt)
        self.k, self.omega, self.dt = k, omega, dt
        self.v = self.qv = self.u_prev = 0.0
        self._c = _sogi_coefficients(k, omega, dt)

    def step(self, u: float) -> tuple[float, float]:
        m11, m12, m21, m22, n1, n2 = self._c
        s = self.u_prev + u
        v, qv = self.v, self.qv
        self.v = m11 * v + m12 * qv + n1 * s
        self.qv = m21 * v + m22 * qv + n2 * s
        self.u_prev = u
        return self.v, self.qv

    @property
    def space_vector(self) -> complex:
        """``v' + j*qv'``: rotates as ``A*exp(j*(w*t + phi))`` for a cosine input."""
        return complex(self.v, self.qv)

    def state(self) -> SogiState:
        return SogiState(self.v, self.qv, self.k, self.omega, self.u_prev)


def sogi_bandpass_gain(k: float, omega: float, freq_rad: float) -> complex:
    """Continuous in-phase transfer ``k*w*s / (s^2 + k*w*s + w^2)`` at ``s = j*freq_rad``."""
    s = 1j * freq_rad
    return k * omega * s / (s * s + k * omega * s + omega * omega)


# ------------------------------------------------------------------ trace phasors


def phasor_of_trace(t: Sequence[float], x: Sequence[float], f: float, cycles: float = 1.0) -> Phasor:
    """Rms phasor of the ``f`` component over the last ``cycles`` periods of a uniform trace.

    Angles refer to absolute time, so phasors of different channels of the same
    trace are directly comparable.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if t.shape != x.shape or t.ndim != 1 or t.size < 2:
        raise ValueError("t and x must be 1-D arrays of equal length")
    step = (t[-1] - t[0]) / (t.size - 1)
    n = int(round(cycles / (f * step)))
    if n < 2 or n > t.size:
        raise ValueError(
            f"insufficient samples: {cycles} cycle(s) at {f} Hz need {n} samples, have {t.size}"
        )
    if cycles < 1.0 - 1e-12:
        raise ValueError("window must cover at least one full cycle")
    tw, xw = t[-n:], x[-n:]
    z = SQRT2 / n * np.sum(xw * np.exp(-2j * np.pi * f * tw))
    return Phasor.from_complex(complex(z))
