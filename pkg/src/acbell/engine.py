"""Four-particle AC Bell experiment: layout -> phases -> state -> CHSH.

Particles 1, 2 leave source C and particles 3, 4 leave source D, each pair
in a singlet.  Particles 1 and 4 meet at A, particles 2 and 3 at B.  The
contours and their moments are::

    phi1: C -> A (moment 1)    phi2: C -> B (moment 2)
    phi3: D -> B (moment 3)    phi4: D -> A (moment 4)

and the station phases are ``phi_a = phi1 - phi4``, ``phi_b = phi2 - phi3``.
At each station the pair's total spin is measured in the coupled basis;
outcome 1 is the m = 0 triplet, outcome 0 the singlet.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

from . import geometry as geo
from .errors import (
    ComputationError,
    PathValidationError,
    ScanError,
    UndefinedCorrelationError,
)
from .geometry import LineCharge, MagneticMoment, Point, Polyline
from .spin import (
    COUPLED_ORDER,
    MEETING_GROUPING,
    SOURCE_GROUPING,
    CoupledLabel,
    StateVector,
    apply_phases,
    build_singlet_product,
    check_normalized,
    coupled_amplitudes,
)

NO_PARALLEL_ENV = "AC_BELL_NO_PARALLEL"
TSIRELSON = 2.0 * math.sqrt(2.0)
CLASSICAL_BOUND = 2.0

# (contour name, particle, start attribute, end attribute)
CONTOURS = (
    ("C->A", 1, "source_c", "meeting_a"),
    ("C->B", 2, "source_c", "meeting_b"),
    ("D->B", 3, "source_d", "meeting_b"),
    ("D->A", 4, "source_d", "meeting_a"),
)
CONTOUR_NAMES = tuple(c[0] for c in CONTOURS)
ENDPOINT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ExperimentLayout:
    source_c: Point
    source_d: Point
    meeting_a: Point
    meeting_b: Point
    moments: tuple[MagneticMoment, MagneticMoment, MagneticMoment, MagneticMoment]
    charge: LineCharge
    paths: Optional[tuple[Polyline, Polyline, Polyline, Polyline]] = None
    exclusion_radius: float = geo.DEFAULT_EXCLUSION_RADIUS

    def __post_init__(self):
        for name in ("source_c", "source_d", "meeting_a", "meeting_b"):
            object.__setattr__(self, name, geo.as_point(getattr(self, name)))
        moments = tuple(self.moments)
        if len(moments) != 4:
            raise ValueError(f"need 4 magnetic moments, got {len(moments)}")
        object.__setattr__(self, "moments", moments)
        if not (math.isfinite(self.exclusion_radius) and self.exclusion_radius >= 0):
            raise ValueError(f"exclusion radius must be finite and >= 0, got {self.exclusion_radius!r}")
        if self.paths is not None:
            paths = tuple(self.paths)
            if len(paths) != 4:
                raise ValueError(f"need 4 explicit paths ({', '.join(CONTOUR_NAMES)}), got {len(paths)}")
            for path, (name, _, start, end) in zip(paths, CONTOURS):
                for which, attr in (("start", start), ("end", end)):
                    want = getattr(self, attr)
                    got = getattr(path, which)
                    if math.dist(want, got) > ENDPOINT_TOLERANCE:
                        raise ValueError(f"path {name} {which}s at {got}, expected {attr} {want}")
            object.__setattr__(self, "paths", paths)

    def contour(self, particle: int) -> Polyline:
        """Trajectory of ``particle`` (explicit path or straight segment)."""
        if self.paths is not None:
            return self.paths[particle - 1]
        _, _, start, end = CONTOURS[particle - 1]
        return Polyline.straight(getattr(self, start), getattr(self, end))

    def validate(self) -> dict[str, geo.PathReport]:
        return {
            name: geo.validate_path(self.contour(particle), self.charge, self.exclusion_radius)
            for name, particle, _, _ in CONTOURS
        }

    def with_meetings(self, meeting_a: Sequence[float], meeting_b: Sequence[float]) -> "ExperimentLayout":
        """Same experiment with moved meeting points and straight trajectories."""
        return replace(self, meeting_a=tuple(meeting_a), meeting_b=tuple(meeting_b), paths=None)


@dataclass(frozen=True)
class PhaseQuadruple:
    phi1: float
    phi2: float
    phi3: float
    phi4: float

    @property
    def phi_a(self) -> float:
        return self.phi1 - self.phi4

    @property
    def phi_b(self) -> float:
        return self.phi2 - self.phi3

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.phi1, self.phi2, self.phi3, self.phi4)

    @classmethod
    def from_station_phases(cls, phi_a: float, phi_b: float) -> "PhaseQuadruple":
        """Quadruple realizing the given station phases with phi3 = phi4 = 0."""
        return cls(float(phi_a), float(phi_b), 0.0, 0.0)


def _checked_contour(layout: ExperimentLayout, particle: int, label: str = "") -> Polyline:
    name = CONTOUR_NAMES[particle - 1]
    path = layout.contour(particle)
    report = geo.validate_path(path, layout.charge, layout.exclusion_radius)
    if not report.ok:
        detail = ", ".join(f"segment {i} at distance {d:.6g}" for i, d in report.violations)
        raise PathValidationError(
            f"{name}{label}",
            f"path enters the exclusion radius {layout.exclusion_radius:g} of the line charge ({detail})",
        )
    return path


def compute_phases(layout: ExperimentLayout) -> PhaseQuadruple:
    phis = []
    for particle in (1, 2, 3, 4):
        path = _checked_contour(layout, particle)
        phis.append(geo.ac_phase_analytic(path, layout.moments[particle - 1], layout.charge))
    return PhaseQuadruple(*phis)


def quadrature_phases(layout: ExperimentLayout, nodes_per_segment: int = geo.DEFAULT_NODES) -> PhaseQuadruple:
    """Same as :func:`compute_phases` but integrating the field numerically."""
    phis = []
    for particle in (1, 2, 3, 4):
        path = _checked_contour(layout, particle)
        phis.append(
            geo.ac_phase_quadrature(path, layout.moments[particle - 1], layout.charge, nodes_per_segment)
        )
    return PhaseQuadruple(*phis)


def assemble_total_state(phases: PhaseQuadruple) -> StateVector:
    return apply_phases(build_singlet_product(SOURCE_GROUPING), phases.as_tuple())


def closed_form_coupled_amplitudes(phases: PhaseQuadruple) -> dict[tuple[CoupledLabel, CoupledLabel], complex]:
    """Coupled amplitudes on the meeting grouping ((1,4),(2,3)), written out by hand."""
    S, T0, TP, TM = COUPLED_ORDER
    chi = phases.phi1 - phases.phi2 - phases.phi3 + phases.phi4
    delta = phases.phi_a - phases.phi_b
    amps = {(a, b): 0j for a in COUPLED_ORDER for b in COUPLED_ORDER}
    amps[TP, TM] = -0.5 * complex(math.cos(chi), math.sin(chi))
    amps[TM, TP] = -0.5 * complex(math.cos(chi), -math.sin(chi))
    amps[T0, T0] = 0.5 * math.cos(delta)
    amps[S, S] = -0.5 * math.cos(delta)
    amps[S, T0] = 0.5j * math.sin(delta)
    amps[T0, S] = -0.5j * math.sin(delta)
    return amps


@dataclass(frozen=True)
class JointDistribution:
    """m = 0 joint outcome probabilities at A and B (1 = triplet, 0 = singlet)."""

    p11: float
    p00: float
    p10: float
    p01: float
    residual: float

    @property
    def m0_mass(self) -> float:
        return self.p11 + self.p00 + self.p10 + self.p01

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.p11, self.p00, self.p10, self.p01, self.residual)


def joint_probabilities(state: StateVector) -> JointDistribution:
    check_normalized(state)
    S, T0 = CoupledLabel.S, CoupledLabel.T0
    probs = {key: abs(amp) ** 2 for key, amp in coupled_amplitudes(state, MEETING_GROUPING).items()}
    m0 = {(T0, T0), (S, S), (T0, S), (S, T0)}
    residual = math.fsum(p for key, p in probs.items() if key not in m0)
    return JointDistribution(
        p11=probs[T0, T0],
        p00=probs[S, S],
        p10=probs[T0, S],
        p01=probs[S, T0],
        residual=residual,
    )


def correlation(dist: JointDistribution) -> float:
    total = dist.m0_mass
    if not total > 0.0:
        raise UndefinedCorrelationError(f"no probability mass in the m = 0 sector ({dist})")
    return (dist.p11 + dist.p00 - dist.p10 - dist.p01) / total


def closed_form_correlation(phi_a: float, phi_b: float) -> float:
    return math.cos(2.0 * (phi_a - phi_b))


def pipeline_correlation(phases: PhaseQuadruple) -> tuple[float, JointDistribution]:
    """Correlation and distribution via the full state-vector pipeline."""
    dist = joint_probabilities(assemble_total_state(phases))
    return correlation(dist), dist


# -- CHSH ---------------------------------------------------------------------


@dataclass(frozen=True)
class ChshSettings:
    """Either four meeting points (A, A', B, B') or four station phases."""

    meetings: Optional[tuple[Point, Point, Point, Point]] = None
    phases: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self):
        if (self.meetings is None) == (self.phases is None):
            raise ValueError("exactly one of meetings or phases must be given")
        if self.meetings is not None:
            pts = tuple(geo.as_point(p) for p in self.meetings)
            if len(pts) != 4:
                raise ValueError("geometric settings need meeting points A, A', B, B'")
            object.__setattr__(self, "meetings", pts)
        else:
            phases = tuple(float(p) for p in self.phases)
            if len(phases) != 4 or not all(math.isfinite(p) for p in phases):
                raise ValueError("direct settings need four finite phases phi_a, phi_a', phi_b, phi_b'")
            object.__setattr__(self, "phases", phases)

    @classmethod
    def direct(cls, phi_a, phi_a_prime, phi_b, phi_b_prime) -> "ChshSettings":
        return cls(phases=(phi_a, phi_a_prime, phi_b, phi_b_prime))

    @classmethod
    def geometric(cls, meeting_a, meeting_a_prime, meeting_b, meeting_b_prime) -> "ChshSettings":
        return cls(meetings=(meeting_a, meeting_a_prime, meeting_b, meeting_b_prime))

    @property
    def mode(self) -> str:
        return "direct" if self.phases is not None else "geometric"


@dataclass(frozen=True)
class CorrelationRecord:
    settings: ChshSettings
    # phi_a, phi_a', phi_b, phi_b'
    phases: tuple[float, float, float, float]
    # E(a,b), E(a,b'), E(a',b), E(a',b')
    correlations: tuple[float, float, float, float]
    distributions: tuple[JointDistribution, JointDistribution, JointDistribution, JointDistribution]
    s: float
    indices: Optional[tuple[int, int, int, int]] = None

    @property
    def violates_classical_bound(self) -> bool:
        return abs(self.s) > CLASSICAL_BOUND


def chsh_combination(e_ab: float, e_abp: float, e_apb: float, e_apbp: float) -> float:
    return e_ab - e_abp + e_apb + e_apbp


# Station values are the two single-particle phases reaching a meeting point:
# A -> (phi1, phi4), B -> (phi2, phi3).
def _quadruple(station_a: tuple[float, float], station_b: tuple[float, float]) -> PhaseQuadruple:
    return PhaseQuadruple(station_a[0], station_b[0], station_b[1], station_a[1])


def station_phases(
    layout: ExperimentLayout, station: str, point: Sequence[float], variant: Optional[str] = None
) -> tuple[float, float]:
    """Phases of the two trajectories ending at a meeting point.

    Explicit paths are used only if ``point`` is the layout's own meeting
    point; any other candidate is reached by straight segments.
    """
    point = geo.as_point(point)
    if station == "A":
        particles, key = (1, 4), "meeting_a"
    elif station == "B":
        particles, key = (2, 3), "meeting_b"
    else:
        raise ValueError(f"station must be 'A' or 'B', got {station!r}")
    moved = layout
    if point != getattr(layout, key):
        # explicit paths end at the old meeting point; a moved one is reached straight
        moved = replace(layout, paths=None, **{key: point})
    label = f" (meeting {variant or station} at {point})"
    return tuple(
        geo.ac_phase_analytic(_checked_contour(moved, k, label), moved.moments[k - 1], moved.charge)
        for k in particles
    )


def _record(settings, station_a, station_b, indices=None) -> CorrelationRecord:
    es, dists = [], []
    for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)):
        e, dist = pipeline_correlation(_quadruple(station_a[i], station_b[j]))
        es.append(e)
        dists.append(dist)
    phases = (
        station_a[0][0] - station_a[0][1],
        station_a[1][0] - station_a[1][1],
        station_b[0][0] - station_b[0][1],
        station_b[1][0] - station_b[1][1],
    )
    return CorrelationRecord(
        settings=settings,
        phases=phases,
        correlations=tuple(es),
        distributions=tuple(dists),
        s=chsh_combination(*es),
        indices=indices,
    )


def chsh_value(settings: ChshSettings, layout: Optional[ExperimentLayout] = None) -> CorrelationRecord:
    """CHSH combination E(a,b) - E(a,b') + E(a',b) + E(a',b') via the full pipeline."""
    if settings.mode == "direct":
        pa, pa2, pb, pb2 = settings.phases
        return _record(settings, ((pa, 0.0), (pa2, 0.0)), ((pb, 0.0), (pb2, 0.0)))
    if layout is None:
        raise ValueError("geometric CHSH settings need an experiment layout")
    a, a2, b, b2 = settings.meetings
    station_a, station_b = [], []
    for variant, station, point, out in (
        ("A", "A", a, station_a),
        ("A'", "A", a2, station_a),
        ("B", "B", b, station_b),
        ("B'", "B", b2, station_b),
    ):
        out.append(station_phases(layout, station, point, variant))
    return _record(settings, station_a, station_b)


# -- scans --------------------------------------------------------------------


class ScanRow(NamedTuple):
    a_index: int
    a_prime_index: int
    b_index: int
    b_prime_index: int
    phi_a: float
    phi_a_prime: float
    phi_b: float
    phi_b_prime: float
    E_ab: float
    E_abp: float
    E_apb: float
    E_apbp: float
    S: float


SCAN_COLUMNS = ScanRow._fields


@dataclass(frozen=True)
class ScanResult:
    """Best CHSH record plus the data behind the full (lazy) scan table."""

    best: CorrelationRecord
    station_a: tuple[Optional[tuple[float, float]], ...]
    station_b: tuple[Optional[tuple[float, float]], ...]
    e_matrix: np.ndarray
    distinct: bool

    @property
    def valid_a(self) -> list[int]:
        return [i for i, v in enumerate(self.station_a) if v is not None]

    @property
    def valid_b(self) -> list[int]:
        return [j for j, v in enumerate(self.station_b) if v is not None]

    def _pairs(self, valid):
        return [(i, k) for i in valid for k in valid if not (self.distinct and i == k)]

    def __len__(self):
        return len(self._pairs(self.valid_a)) * len(self._pairs(self.valid_b))

    def rows(self) -> Iterator[ScanRow]:
        """All evaluated (A, A', B, B') combinations in lexicographic index order."""
        phi_a = [v[0] - v[1] if v is not None else math.nan for v in self.station_a]
        phi_b = [v[0] - v[1] if v is not None else math.nan for v in self.station_b]
        e = self.e_matrix
        pairs_b = self._pairs(self.valid_b)
        for i, i2 in self._pairs(self.valid_a):
            for j, j2 in pairs_b:
                es = (float(e[i, j]), float(e[i, j2]), float(e[i2, j]), float(e[i2, j2]))
                yield ScanRow(
                    i, i2, j, j2, phi_a[i], phi_a[i2], phi_b[j], phi_b[j2], *es, chsh_combination(*es)
                )


def _parallel_enabled(parallel: Optional[bool]) -> bool:
    if os.environ.get(NO_PARALLEL_ENV, "") == "1":
        return False
    return True if parallel is None else parallel


def _ordered_map(fn: Callable, items: Sequence, parallel: Optional[bool]) -> list:
    # executor.map yields in submission order, so results never depend on scheduling
    if _parallel_enabled(parallel) and len(items) > 1:
        with ThreadPoolExecutor(max_workers=min(8, os.cpu_count() or 1)) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _best_of(station_a, station_b, distinct: bool, settings_factory, parallel):
    valid_a = [i for i, v in enumerate(station_a) if v is not None]
    valid_b = [j for j, v in enumerate(station_b) if v is not None]
    need = 2 if distinct else 1
    if len(valid_a) < need or len(valid_b) < need:
        raise ScanError(
            f"not enough valid candidates: {len(valid_a)} for A and {len(valid_b)} for B (need {need} each)"
        )

    pairs = [(i, j) for i in valid_a for j in valid_b]
    es = _ordered_map(
        lambda ij: pipeline_correlation(_quadruple(station_a[ij[0]], station_b[ij[1]]))[0], pairs, parallel
    )
    e = np.full((len(station_a), len(station_b)), np.nan)
    for (i, j), value in zip(pairs, es):
        e[i, j] = value

    na, nb = e.shape
    best_score, best_index = -np.inf, None
    # one A index at a time keeps memory at na * nb**2
    for i in valid_a:
        # s[i2, j, j2] = E(i,j) - E(i,j2) + E(i2,j) + E(i2,j2)
        s = e[i, None, :, None] - e[i, None, None, :] + e[:, :, None] + e[:, None, :]
        score = np.abs(s)
        score[np.isnan(score)] = -1.0
        if distinct:
            score[i, :, :] = -1.0
            score[:, np.arange(nb), np.arange(nb)] = -1.0
        # argmax gives the first maximum in C order; strict > keeps the earliest block
        flat = int(np.argmax(score))
        if score.flat[flat] > best_score:
            best_score = score.flat[flat]
            best_index = (i, *np.unravel_index(flat, score.shape))
    i, i2, j, j2 = (int(k) for k in best_index)
    best = _record(
        settings_factory(i, i2, j, j2),
        (station_a[i], station_a[i2]),
        (station_b[j], station_b[j2]),
        indices=(i, i2, j, j2),
    )
    return best, e


def scan_chsh_over_locations(
    layout: ExperimentLayout,
    locus_a: Sequence[Sequence[float]],
    locus_b: Sequence[Sequence[float]],
    parallel: Optional[bool] = None,
) -> ScanResult:
    """Search meeting-point candidates for the largest |S|.

    Every ordered combination (A, A', B, B') with A != A' and B != B' is
    considered.  Candidates whose trajectories violate the exclusion radius
    are skipped; the scan fails only when fewer than two remain per station.
    """
    locus_a = [geo.as_point(p) for p in locus_a]
    locus_b = [geo.as_point(p) for p in locus_b]
    if len(locus_a) < 2 or len(locus_b) < 2:
        raise ValueError("each locus needs at least two candidate points")

    def evaluate(job):
        station, point = job
        try:
            return station_phases(layout, station, point)
        except ComputationError:
            return None

    jobs = [("A", p) for p in locus_a] + [("B", p) for p in locus_b]
    values = _ordered_map(evaluate, jobs, parallel)
    station_a, station_b = tuple(values[: len(locus_a)]), tuple(values[len(locus_a):])

    def settings_factory(i, i2, j, j2):
        return ChshSettings.geometric(locus_a[i], locus_a[i2], locus_b[j], locus_b[j2])

    best, e = _best_of(station_a, station_b, True, settings_factory, parallel)
    return ScanResult(best, station_a, station_b, e, True)


def scan_chsh_over_phases(
    phases_a: Sequence[float],
    phases_b: Sequence[float],
    distinct: bool = False,
    parallel: Optional[bool] = None,
) -> ScanResult:
    """Grid search of direct station-phase settings."""
    phases_a = [float(p) for p in phases_a]
    phases_b = [float(p) for p in phases_b]
    station_a = tuple((p, 0.0) for p in phases_a)
    station_b = tuple((p, 0.0) for p in phases_b)

    def settings_factory(i, i2, j, j2):
        return ChshSettings.direct(phases_a[i], phases_a[i2], phases_b[j], phases_b[j2])

    best, e = _best_of(station_a, station_b, distinct, settings_factory, parallel)
    return ScanResult(best, station_a, station_b, e, distinct)


# -- classical baseline -------------------------------------------------------


def deterministic_chsh(alice: Sequence[int], bob: Sequence[int]) -> int:
    """S for fixed +/-1 responses to the two settings on each side."""
    a0, a1 = alice
    b0, b1 = bob
    return a0 * b0 - a0 * b1 + a1 * b0 + a1 * b1


def deterministic_strategies() -> list[tuple[int, int]]:
    return [(a0, a1) for a0 in (1, -1) for a1 in (1, -1)]


def exhaustive_lhv_bound() -> int:
    """max |S| over every pair of deterministic local strategies."""
    return max(
        abs(deterministic_chsh(alice, bob))
        for alice in deterministic_strategies()
        for bob in deterministic_strategies()
    )


def lhv_reference_bound(samples: int, seed: int = 0) -> float:
    """Largest |S| over randomly drawn deterministic local strategies."""
    if int(samples) < 1:
        raise ValueError(f"samples must be >= 1, got {samples!r}")
    rng = np.random.default_rng(seed)
    alice = rng.choice(np.array([1, -1]), size=(int(samples), 2))
    bob = rng.choice(np.array([1, -1]), size=(int(samples), 2))
    s = (
        alice[:, 0] * bob[:, 0]
        - alice[:, 0] * bob[:, 1]
        + alice[:, 1] * bob[:, 0]
        + alice[:, 1] * bob[:, 1]
    )
    return float(np.max(np.abs(s)))
