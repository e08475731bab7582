"""Exact amplitude machinery for four spin-1/2 particles.

States live in a dense 16-entry complex array.  Index bit ``i`` is set when
particle ``i + 1`` has spin ``-`` along the line-charge axis, so ``|++++>``
is index 0 and ``|---->`` is index 15.

Two-particle coupled states use the pair order given by the grouping::

    S  = (|+-> - |-+>) / sqrt(2)
    T0 = (|+-> + |-+>) / sqrt(2)
    Tp = |++>
    Tm = |-->
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import product
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import InvalidGroupingError, UnnormalizedStateError

N_PARTICLES = 4
DIM = 2 ** N_PARTICLES
NORM_TOLERANCE = 1e-9

_INV_SQRT2 = 1.0 / math.sqrt(2.0)

LabelLike = Union[str, Sequence[int], Sequence[str], int]


class CoupledLabel(enum.Enum):
    S = "S"
    T0 = "T0"
    TP = "Tp"
    TM = "Tm"

    @classmethod
    def parse(cls, value: "CoupledLabel | str") -> "CoupledLabel":
        if isinstance(value, cls):
            return value
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        raise ValueError(f"unknown coupled label {value!r}")


# (sign of first particle, sign of second particle) -> coefficient
_PAIR_COMPONENTS: dict[CoupledLabel, tuple[tuple[int, int, float], ...]] = {
    CoupledLabel.S: ((+1, -1, _INV_SQRT2), (-1, +1, -_INV_SQRT2)),
    CoupledLabel.T0: ((+1, -1, _INV_SQRT2), (-1, +1, _INV_SQRT2)),
    CoupledLabel.TP: ((+1, +1, 1.0),),
    CoupledLabel.TM: ((-1, -1, 1.0),),
}

COUPLED_ORDER = (CoupledLabel.S, CoupledLabel.T0, CoupledLabel.TP, CoupledLabel.TM)


def label_to_index(label: LabelLike) -> int:
    """Map a basis label (``"+-+-"``, ``(1, -1, 1, -1)`` or an index) to its index."""
    if isinstance(label, (int, np.integer)):
        if not 0 <= int(label) < DIM:
            raise ValueError(f"basis index {label} out of range")
        return int(label)
    signs = list(label)
    if len(signs) != N_PARTICLES:
        raise ValueError(f"basis label needs {N_PARTICLES} entries, got {label!r}")
    index = 0
    for i, s in enumerate(signs):
        if s in ("+", 1, +1.0):
            continue
        if s in ("-", "−", -1):
            index |= 1 << i
        else:
            raise ValueError(f"bad spin sign {s!r} in label {label!r}")
    return index


def index_to_label(index: int) -> str:
    return "".join("-" if (index >> i) & 1 else "+" for i in range(N_PARTICLES))


def basis_labels() -> list[str]:
    return [index_to_label(i) for i in range(DIM)]


def _sign(index: int, particle: int) -> int:
    return -1 if (index >> (particle - 1)) & 1 else +1


@dataclass(frozen=True)
class PairGrouping:
    """Split of particles 1..4 into two ordered pairs."""

    first_pair: tuple[int, int]
    second_pair: tuple[int, int]

    def __post_init__(self):
        first = tuple(int(i) for i in self.first_pair)
        second = tuple(int(i) for i in self.second_pair)
        if len(first) != 2 or len(second) != 2:
            raise InvalidGroupingError("each pair must hold exactly two particles")
        if sorted(first + second) != [1, 2, 3, 4]:
            raise InvalidGroupingError(
                f"grouping {first}, {second} is not a permutation of particles 1..4"
            )
        object.__setattr__(self, "first_pair", first)
        object.__setattr__(self, "second_pair", second)

    @classmethod
    def of(cls, grouping: "PairGrouping | Sequence[Sequence[int]]") -> "PairGrouping":
        if isinstance(grouping, cls):
            return grouping
        first, second = grouping
        return cls(tuple(first), tuple(second))


SOURCE_GROUPING = PairGrouping((1, 2), (3, 4))
MEETING_GROUPING = PairGrouping((1, 4), (2, 3))


class StateVector:
    """Immutable 16-amplitude state of particles 1..4."""

    __slots__ = ("_amps",)

    def __init__(self, amplitudes):
        amps = np.array(amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape != (DIM,):
            raise ValueError(f"state needs {DIM} amplitudes, got {amps.size}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("state amplitudes must be finite")
        amps.flags.writeable = False
        self._amps = amps

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amps

    def amplitude(self, label: LabelLike) -> complex:
        return complex(self._amps[label_to_index(label)])

    def __getitem__(self, label: LabelLike) -> complex:
        return self.amplitude(label)

    def items(self) -> Iterator[tuple[str, complex]]:
        for i in range(DIM):
            yield index_to_label(i), complex(self._amps[i])

    def allclose(self, other: "StateVector", atol: float = 1e-12) -> bool:
        return bool(np.allclose(self._amps, other._amps, rtol=0.0, atol=atol))

    def __repr__(self):
        nz = ", ".join(f"{lab}: {amp:.6g}" for lab, amp in self.items() if abs(amp) > 1e-15)
        return f"StateVector({{{nz}}})"


def _expansion(grouping, first, second) -> Iterator[tuple[int, float]]:
    """Product-basis (index, coefficient) terms of a coupled product state."""
    g = PairGrouping.of(grouping)
    first, second = CoupledLabel.parse(first), CoupledLabel.parse(second)
    (p, q), (r, s) = g.first_pair, g.second_pair
    for (sp, sq, c1), (sr, ss, c2) in product(_PAIR_COMPONENTS[first], _PAIR_COMPONENTS[second]):
        index = 0
        for particle, sgn in ((p, sp), (q, sq), (r, sr), (s, ss)):
            if sgn < 0:
                index |= 1 << (particle - 1)
        yield index, c1 * c2


def coupled_basis_state(grouping, first: CoupledLabel, second: CoupledLabel) -> StateVector:
    """Product of two coupled pair states as a 16-amplitude vector."""
    amps = np.zeros(DIM, dtype=np.complex128)
    for index, coeff in _expansion(grouping, first, second):
        amps[index] += coeff
    return StateVector(amps)


def build_singlet_product(grouping) -> StateVector:
    """Normalized product of singlets on both pairs of ``grouping``."""
    return coupled_basis_state(grouping, CoupledLabel.S, CoupledLabel.S)


_PLUS_MASKS = np.array(
    [[_sign(i, k) for i in range(DIM)] for k in range(1, N_PARTICLES + 1)], dtype=float
)


def apply_local_phase(state: StateVector, particle: int, phi: float) -> StateVector:
    """Multiply ``|+>`` of ``particle`` by e^{+i phi} and ``|->`` by e^{-i phi}."""
    if particle not in (1, 2, 3, 4):
        raise ValueError(f"particle must be in 1..4, got {particle!r}")
    phi = float(phi)
    if not math.isfinite(phi):
        raise ValueError(f"phase must be finite, got {phi!r}")
    factors = np.exp(1j * phi * _PLUS_MASKS[particle - 1])
    return StateVector(state.amplitudes * factors)


def apply_phases(state: StateVector, phases: Sequence[float]) -> StateVector:
    """Apply one local phase per particle, particle 1 first."""
    if len(phases) != N_PARTICLES:
        raise ValueError(f"need {N_PARTICLES} phases, got {len(phases)}")
    for particle, phi in enumerate(phases, start=1):
        state = apply_local_phase(state, particle, phi)
    return state


def coupled_amplitude(state: StateVector, grouping, first, second) -> complex:
    """Overlap <first (x) second | state> in the coupled basis of ``grouping``."""
    amps = state.amplitudes
    # coefficients are real, so conjugation is a no-op
    return complex(sum(coeff * amps[index] for index, coeff in _expansion(grouping, first, second)))


def coupled_amplitudes(state: StateVector, grouping) -> dict[tuple[CoupledLabel, CoupledLabel], complex]:
    """All 16 coupled amplitudes, keyed by (first, second) in S, T0, Tp, Tm order."""
    return {
        (a, b): coupled_amplitude(state, grouping, a, b)
        for a in COUPLED_ORDER
        for b in COUPLED_ORDER
    }


def state_norm(state: StateVector) -> float:
    return float(np.sqrt(np.sum(np.abs(state.amplitudes) ** 2)))


def check_normalized(state: StateVector, tol: float = NORM_TOLERANCE) -> None:
    norm2 = state_norm(state) ** 2
    if abs(norm2 - 1.0) > tol:
        raise UnnormalizedStateError(f"state norm^2 = {norm2!r} deviates from 1 by more than {tol}")


def probability_of(state: StateVector, grouping, first, second) -> float:
    """Projective probability of the coupled outcome (first, second)."""
    check_normalized(state)
    return abs(coupled_amplitude(state, grouping, first, second)) ** 2
