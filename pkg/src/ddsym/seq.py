"""Pulse-sequence values, the XY-n / CPMG / CDD builders and their symmetry transforms.

Pulses are ideal-timed pi rotations (no width).  Phases are radians; X is 0 and Y is pi/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

TWO_PI = 2 * math.pi
_TIME_RTOL = 1e-12


# phases live on a binary grid of turns so that adding half a turn is exact
_PHASE_GRID = 2.0**44


def wrap_phase(phase: float) -> float:
    """Reduce to [0, 2 pi) on a grid of 2**-44 turns (about 3.6e-13 rad).

    Multiples of pi/2 land exactly on 0, pi/2, pi and 3 pi/2, and
    wrap_phase(wrap_phase(p) + pi) is exact, so phase inversion is an involution.
    """
    turns = round(float(phase) / TWO_PI * _PHASE_GRID) % int(_PHASE_GRID)
    return turns / _PHASE_GRID * TWO_PI


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        d = float(self.duration)
        if not math.isfinite(d) or d < 0:
            raise ValueError(f"delay duration must be finite and >= 0, got {self.duration}")
        object.__setattr__(self, "duration", d)


@dataclass(frozen=True)
class Pulse:
    phase: float = 0.0
    nominal_angle: float = math.pi

    def __post_init__(self):
        if not math.isfinite(self.phase):
            raise ValueError("pulse phase must be finite")
        object.__setattr__(self, "phase", wrap_phase(self.phase))
        if self.nominal_angle != math.pi:
            raise ValueError("only pi pulses are supported")

    @property
    def name(self) -> str:
        return {0.0: "X", math.pi / 2: "Y", math.pi: "-X", 3 * math.pi / 2: "-Y"}.get(
            self.phase, f"P{math.degrees(self.phase):g}"
        )


X = Pulse(0.0)
Y = Pulse(math.pi / 2)

Element = Union[Delay, Pulse]


@dataclass(frozen=True)
class PulseSequence:
    elements: tuple[Element, ...]
    label: str = ""

    def __post_init__(self):
        elements = tuple(self.elements)
        for el in elements:
            if not isinstance(el, (Delay, Pulse)):
                raise TypeError(f"sequence elements must be Delay or Pulse, got {el!r}")
        object.__setattr__(self, "elements", elements)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __add__(self, other: PulseSequence) -> PulseSequence:
        return concat(self, other)

    def __eq__(self, other) -> bool:
        # labels are descriptive only
        return isinstance(other, PulseSequence) and self.elements == other.elements

    def __hash__(self) -> int:
        return hash(self.elements)

    @property
    def cycle_time(self) -> float:
        return math.fsum(el.duration for el in self.elements if isinstance(el, Delay))

    @property
    def pulses(self) -> list[Pulse]:
        return [el for el in self.elements if isinstance(el, Pulse)]

    @property
    def n_pulses(self) -> int:
        return len(self.pulses)

    @property
    def delays(self) -> list[float]:
        return [el.duration for el in self.elements if isinstance(el, Delay)]

    def pulse_times(self) -> np.ndarray:
        t, times = 0.0, []
        for el in self.elements:
            if isinstance(el, Delay):
                t += el.duration
            else:
                times.append(t)
        return np.array(times)

    def gaps(self) -> np.ndarray:
        """Free-evolution time between consecutive pulses."""
        return np.diff(self.pulse_times())

    def relabel(self, label: str) -> PulseSequence:
        return PulseSequence(self.elements, label)

    def __str__(self) -> str:
        parts = []
        for el in self.elements:
            parts.append(f"{el.duration:g}" if isinstance(el, Delay) else el.name)
        return f"{self.label or 'sequence'}: " + " ".join(parts)


def concat(*seqs: PulseSequence, label: str = "") -> PulseSequence:
    elements: list[Element] = []
    for s in seqs:
        elements.extend(s.elements)
    return PulseSequence(tuple(elements), label)


def repeat(s: PulseSequence, n: int, label: str = "") -> PulseSequence:
    return PulseSequence(s.elements * n, label or s.label)


def time_reverse(s: PulseSequence) -> PulseSequence:
    label = f"{s.label}^T" if s.label else ""
    return PulseSequence(tuple(reversed(s.elements)), label)


def phase_invert(s: PulseSequence) -> PulseSequence:
    elements = tuple(
        Pulse(el.phase + math.pi) if isinstance(el, Pulse) else el for el in s.elements
    )
    return PulseSequence(elements, f"bar({s.label})" if s.label else "")


def split_at(s: PulseSequence, t: float) -> tuple[PulseSequence, PulseSequence]:
    """Cut the timeline at ``t``; a delay straddling ``t`` is divided in two.

    Raises if a pulse sits exactly at ``t``, since it would belong to neither half.
    """
    total = s.cycle_time
    tol = _TIME_RTOL * max(total, 1.0)
    if not -tol <= t <= total + tol:
        raise ValueError(f"split time {t} outside [0, {total}]")
    head: list[Element] = []
    elapsed = 0.0
    for i, el in enumerate(s.elements):
        if isinstance(el, Pulse):
            if abs(elapsed - t) <= tol:
                raise ValueError(f"split at t={t} lands on a pulse")
            head.append(el)
            continue
        end = elapsed + el.duration
        if end < t - tol:
            head.append(el)
            elapsed = end
            continue
        if abs(end - t) <= tol:
            head.append(el)
            tail = list(s.elements[i + 1 :])
        else:
            head.append(Delay(t - elapsed))
            tail = [Delay(end - t), *s.elements[i + 1 :]]
        if tail and isinstance(tail[0], Pulse) and abs(end - t) <= tol:
            raise ValueError(f"split at t={t} lands on a pulse")
        return PulseSequence(tuple(head)), PulseSequence(tuple(tail))
    return PulseSequence(tuple(head)), PulseSequence(())


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not math.isfinite(tau) or tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return tau


def _tag(symmetric: bool) -> str:
    return "S" if symmetric else "A"


def build_xy4(tau: float, symmetric: bool = True) -> PulseSequence:
    tau = _check_tau(tau)
    if symmetric:
        half = (Delay(tau / 2), X, Delay(tau), Y, Delay(tau / 2))
    else:
        half = (Delay(tau), X, Delay(tau), Y)
    return PulseSequence(half * 2, f"XY-4({_tag(symmetric)})")


def build_cpmg(
    n_pulses: int, tau: float, symmetric: bool = True, pulse_phase: float = math.pi / 2
) -> PulseSequence:
    tau = _check_tau(tau)
    if int(n_pulses) != n_pulses or n_pulses < 1:
        raise ValueError(f"n_pulses must be a positive integer, got {n_pulses}")
    P = Pulse(pulse_phase)
    if symmetric:
        elements: list[Element] = [Delay(tau / 2)]
        for i in range(int(n_pulses)):
            elements += [P, Delay(tau / 2 if i == n_pulses - 1 else tau)]
    else:
        elements = [Delay(tau), P] * int(n_pulses)
    return PulseSequence(tuple(elements), f"CPMG-{n_pulses}({_tag(symmetric)})")


def build_xy8(tau: float, block_symmetric: bool = True) -> PulseSequence:
    block = build_xy4(tau, block_symmetric)
    return concat(block, time_reverse(block), label=f"XY-8({_tag(block_symmetric)})")


def build_xy16(tau: float, block_symmetric: bool = True) -> PulseSequence:
    xy8 = build_xy8(tau, block_symmetric)
    return concat(xy8, phase_invert(xy8), label=f"XY-16({_tag(block_symmetric)})")


def build_cdd(n: int, tau: float, symmetric: bool = True) -> PulseSequence:
    """Concatenated XY-4.

    Asymmetric: [C X C Y]^2.  Symmetric: [H X C Y H]^2 where H is the first
    temporal half of the level-(n-1) cycle C, which keeps every pulse gap at tau.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"CDD level must be >= 1, got {n}")
    tau = _check_tau(tau)
    if n == 1:
        return build_xy4(tau, symmetric).relabel(f"CDD-1({_tag(symmetric)})")
    child = build_cdd(n - 1, tau, symmetric)
    C = child.elements
    if symmetric:
        head, _ = split_at(child, child.cycle_time / 2)
        H = head.elements
        block = (*H, X, *C, Y, *H)
    else:
        block = (*C, X, *C, Y)
    return PulseSequence(block * 2, f"CDD-{n}({_tag(symmetric)})")


BUILDERS = {
    "xy4": lambda tau, symmetric=True: build_xy4(tau, symmetric),
    "xy8": lambda tau, symmetric=True: build_xy8(tau, symmetric),
    "xy16": lambda tau, symmetric=True: build_xy16(tau, symmetric),
    "cpmg": lambda tau, symmetric=True, n_pulses=2, pulse_phase=math.pi / 2: build_cpmg(
        n_pulses, tau, symmetric, pulse_phase
    ),
    "cdd": lambda tau, symmetric=True, level=2: build_cdd(level, tau, symmetric),
}


def build_named(name: str, **params) -> PulseSequence:
    """Look up a builder by name; ``symmetric`` selects the block variant for every family."""
    try:
        builder = BUILDERS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown sequence builder {name!r}; known: {sorted(BUILDERS)}") from None
    return builder(**params)


def from_elements(items: Iterable[Element], label: str = "") -> PulseSequence:
    return PulseSequence(tuple(items), label)
