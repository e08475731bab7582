import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from acbell import engine
from acbell.engine import (
    ChshSettings,
    ExperimentLayout,
    JointDistribution,
    PhaseQuadruple,
    assemble_total_state,
    chsh_value,
    closed_form_correlation,
    closed_form_coupled_amplitudes,
    compute_phases,
    correlation,
    deterministic_chsh,
    exhaustive_lhv_bound,
    joint_probabilities,
    lhv_reference_bound,
    quadrature_phases,
    scan_chsh_over_locations,
    scan_chsh_over_phases,
    station_phases,
)
from acbell.errors import PathValidationError, ScanError, UndefinedCorrelationError, UnnormalizedStateError
from acbell.geometry import LineCharge, MagneticMoment, Polyline
from acbell.spin import COUPLED_ORDER, MEETING_GROUPING, StateVector, coupled_amplitudes

from _builders import homotopic_path, principal_sweep, random_charge, random_moment, random_point_on_ring

S, T0, TP, TM = COUPLED_ORDER
SQRT2 = math.sqrt(2)
seeds = st.integers(0, 2**32 - 1)


def square_layout(mu=1.0, lam=1.0, radius=1.0, theta0=0.0, puncture=(0.0, 0.0)):
    """C, A, D, B at successive quarter turns, so C->A->D->B->C winds once CCW."""
    px, py = puncture

    def at(k):
        a = theta0 + k * math.pi / 2
        return (px + radius * math.cos(a), py + radius * math.sin(a))

    return ExperimentLayout(
        source_c=at(0),
        meeting_a=at(1),
        source_d=at(2),
        meeting_b=at(3),
        moments=(MagneticMoment(mu),) * 4,
        charge=LineCharge(lam, puncture),
    )


def far_layout():
    return ExperimentLayout(
        source_c=(-1.0, 10.0),
        source_d=(1.0, 10.0),
        meeting_a=(-3.0, 12.0),
        meeting_b=(3.0, 12.0),
        moments=(MagneticMoment(1.0),) * 4,
        charge=LineCharge(2 * math.pi),
    )


def random_layout(rng):
    while True:
        charge = random_charge(rng)
        pts = [random_point_on_ring(rng, center=charge.puncture) for _ in range(4)]
        layout = ExperimentLayout(
            source_c=pts[0],
            source_d=pts[1],
            meeting_a=pts[2],
            meeting_b=pts[3],
            moments=tuple(random_moment(rng) for _ in range(4)),
            charge=charge,
            exclusion_radius=0.05,
        )
        if all(r.ok for r in layout.validate().values()):
            return layout


# -- compute_phases ----------------------------------------------------------


def test_charge_outside_the_circuit_gives_no_relative_phase():
    phases = compute_phases(far_layout())
    assert phases.phi_a - phases.phi_b == pytest.approx(0.0, abs=1e-15)
    assert phases.phi1 != 0.0


def test_single_ccw_circuit_gives_mu_lambda():
    phases = compute_phases(square_layout(mu=0.7, lam=1.9))
    assert phases.phi_a - phases.phi_b == pytest.approx(0.7 * 1.9, abs=1e-14)


def test_station_phase_definitions():
    phases = PhaseQuadruple(0.1, 0.2, 0.4, 0.8)
    assert phases.phi_a == 0.1 - 0.8
    assert phases.phi_b == 0.2 - 0.4


@settings(max_examples=50)
@given(seeds)
def test_quadrature_phases_agree(seed):
    layout = random_layout(np.random.default_rng(seed))
    exact, quad = compute_phases(layout), quadrature_phases(layout, 64)
    np.testing.assert_allclose(quad.as_tuple(), exact.as_tuple(), atol=1e-6)


def test_invalid_contour_is_named():
    layout = ExperimentLayout(
        source_c=(-1.0, 0.0),
        source_d=(0.0, 5.0),
        meeting_a=(1.0, 0.0),
        meeting_b=(1.0, 5.0),
        moments=(MagneticMoment(1.0),) * 4,
        charge=LineCharge(1.0),
    )
    with pytest.raises(PathValidationError) as info:
        compute_phases(layout)
    assert info.value.contour.startswith("C->A")


def test_explicit_path_endpoints_must_match():
    base = square_layout()
    good = tuple(base.contour(k) for k in (1, 2, 3, 4))
    ExperimentLayout(**{**base.__dict__, "paths": good})
    bad = (Polyline(((5.0, 5.0), base.meeting_a)),) + good[1:]
    with pytest.raises(ValueError, match="C->A"):
        ExperimentLayout(**{**base.__dict__, "paths": bad})


def _detour_layout():
    """square_layout with a detour for C->A that still sweeps the chord's angle."""
    base = square_layout(mu=0.7, lam=1.9)
    paths = [base.contour(k) for k in (1, 2, 3, 4)]
    paths[0] = Polyline((base.source_c, (2.0, 0.5), (1.5, 1.5), base.meeting_a))
    return ExperimentLayout(**{**base.__dict__, "paths": tuple(paths)})


def test_moved_meeting_point_drops_explicit_paths():
    layout = _detour_layout()
    point = (-0.5, 2.0)
    got = station_phases(layout, "A", point)
    expected = tuple(
        0.7 * 1.9 * principal_sweep(start, point, (0.0, 0.0)) / (2 * math.pi)
        for start in (layout.source_c, layout.source_d)
    )
    assert got == pytest.approx(expected, abs=1e-12)
    assert station_phases(layout, "A", layout.meeting_a)[0] == pytest.approx(compute_phases(layout).phi1, abs=0)


def test_geometric_chsh_and_scan_accept_explicit_paths():
    layout = _detour_layout()
    settings = ChshSettings.geometric(layout.meeting_a, (-0.5, 2.0), layout.meeting_b, (0.5, -2.0))
    assert abs(chsh_value(settings, layout).s) <= engine.TSIRELSON + 1e-9
    result = scan_chsh_over_locations(layout, [layout.meeting_a, (-0.5, 2.0)], [layout.meeting_b, (0.5, -2.0)])
    assert len(result) == 4


# -- assemble_total_state ----------------------------------------------------


def test_total_state_at_zero_phase():
    amps = coupled_amplitudes(assemble_total_state(PhaseQuadruple(0, 0, 0, 0)), MEETING_GROUPING)
    expected = {(TP, TM): -0.5, (TM, TP): -0.5, (T0, T0): 0.5, (S, S): -0.5}
    for key, value in amps.items():
        assert value == pytest.approx(expected.get(key, 0.0), abs=1e-15)


def test_total_state_with_quarter_phase_on_particle_one():
    phases = PhaseQuadruple(math.pi / 2, 0, 0, 0)
    amps = coupled_amplitudes(assemble_total_state(phases), MEETING_GROUPING)
    assert amps[T0, T0] == pytest.approx(0.0, abs=1e-15)
    assert amps[S, S] == pytest.approx(0.0, abs=1e-15)
    assert amps[S, T0] == pytest.approx(0.5j, abs=1e-15)
    assert amps[T0, S] == pytest.approx(-0.5j, abs=1e-15)
    # phi1 - phi2 - phi3 + phi4 = pi/2
    assert amps[TP, TM] == pytest.approx(-0.5j, abs=1e-15)
    assert amps[TM, TP] == pytest.approx(0.5j, abs=1e-15)


@settings(max_examples=200)
@given(st.tuples(*[st.floats(-10, 10)] * 4))
def test_closed_form_matches_pipeline(phis):
    phases = PhaseQuadruple(*phis)
    pipeline = coupled_amplitudes(assemble_total_state(phases), MEETING_GROUPING)
    closed = closed_form_coupled_amplitudes(phases)
    for key in pipeline:
        assert abs(pipeline[key] - closed[key]) < 1e-12


# -- joint_probabilities / correlation ---------------------------------------


@pytest.mark.parametrize(
    "delta, expected",
    [
        (0.0, (0.25, 0.25, 0.0, 0.0, 0.5)),
        (math.pi / 2, (0.0, 0.0, 0.25, 0.25, 0.5)),
        (math.pi / 4, (0.125, 0.125, 0.125, 0.125, 0.5)),
    ],
)
def test_joint_probability_examples(delta, expected):
    dist = joint_probabilities(assemble_total_state(PhaseQuadruple.from_station_phases(delta, 0.0)))
    np.testing.assert_allclose(dist.as_tuple(), expected, atol=1e-15)


def test_joint_probabilities_reject_unnormalized():
    with pytest.raises(UnnormalizedStateError):
        joint_probabilities(StateVector(np.full(16, 0.5)))


def test_correlation_examples():
    assert correlation(JointDistribution(0.25, 0.25, 0, 0, 0.5)) == 1.0
    assert correlation(JointDistribution(0, 0, 0.25, 0.25, 0.5)) == -1.0
    dist = joint_probabilities(assemble_total_state(PhaseQuadruple.from_station_phases(math.pi / 8, 0.0)))
    assert correlation(dist) == pytest.approx(math.cos(math.pi / 4), abs=1e-15)


def test_correlation_undefined_without_m0_mass():
    with pytest.raises(UndefinedCorrelationError):
        correlation(JointDistribution(0, 0, 0, 0, 1.0))


def test_closed_form_correlation_examples():
    assert closed_form_correlation(0, 0) == 1.0
    assert closed_form_correlation(math.pi / 2, 0) == pytest.approx(-1.0, abs=1e-15)


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_closed_form_correlation_matches_pipeline(phi_a, phi_b):
    e, _ = engine.pipeline_correlation(PhaseQuadruple.from_station_phases(phi_a, phi_b))
    assert abs(e - closed_form_correlation(phi_a, phi_b)) < 1e-12


# -- invariants --------------------------------------------------------------


def test_pipeline_identity_on_random_layouts():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        phases = compute_phases(random_layout(rng))
        e, _ = engine.pipeline_correlation(phases)
        assert abs(e - math.cos(2 * (phases.phi_a - phases.phi_b))) < 1e-9


@given(st.tuples(*[st.floats(-5, 5)] * 4), st.floats(-5, 5))
def test_distribution_depends_only_on_phase_difference(phis, shift):
    base = PhaseQuadruple(*phis)
    # adding `shift` to phi1 and phi2 shifts phi_a and phi_b together
    moved = PhaseQuadruple(phis[0] + shift, phis[1] + shift, phis[2], phis[3])
    one = joint_probabilities(assemble_total_state(base)).as_tuple()
    two = joint_probabilities(assemble_total_state(moved)).as_tuple()
    np.testing.assert_allclose(one, two, atol=1e-12)


@given(st.tuples(*[st.floats(-10, 10)] * 4))
def test_residual_is_half_and_structure_holds(phis):
    dist = joint_probabilities(assemble_total_state(PhaseQuadruple(*phis)))
    assert abs(dist.residual - 0.5) < 1e-12
    assert abs(sum(dist.as_tuple()) - 1.0) < 1e-12
    assert abs(dist.p11 - dist.p00) < 1e-12 and abs(dist.p10 - dist.p01) < 1e-12
    assert min(dist.as_tuple()) >= 0.0


@settings(max_examples=100)
@given(seeds)
def test_homotopic_contour_leaves_probabilities_unchanged(seed):
    rng = np.random.default_rng(seed)
    layout = random_layout(rng)
    k = int(rng.integers(1, 5))
    original = layout.contour(k)
    bent = homotopic_path(rng, original.start, original.end, layout.charge.puncture)
    paths = [layout.contour(j) for j in (1, 2, 3, 4)]
    paths[k - 1] = bent
    deformed = ExperimentLayout(**{**layout.__dict__, "paths": tuple(paths), "exclusion_radius": 1e-3})
    one = joint_probabilities(assemble_total_state(compute_phases(layout))).as_tuple()
    two = joint_probabilities(assemble_total_state(compute_phases(deformed))).as_tuple()
    np.testing.assert_allclose(one, two, atol=1e-9)


# -- CHSH --------------------------------------------------------------------


def cos_chsh(a, a2, b, b2):
    c = lambda x, y: math.cos(2 * (x - y))
    return c(a, b) - c(a, b2) + c(a2, b) + c(a2, b2)


def test_grid_oracle_confirms_tsirelson_settings():
    # independent brute force over the closed-form cosines
    grid = np.linspace(0, math.pi, 48, endpoint=False)
    best = max(abs(cos_chsh(*combo)) for combo in itertools.product(grid[::2], grid[::2], grid, grid))
    assert best == pytest.approx(2 * SQRT2, abs=1e-12)
    assert cos_chsh(0, math.pi / 4, math.pi / 8, 3 * math.pi / 8) == pytest.approx(2 * SQRT2, abs=1e-15)


def test_chsh_direct_tsirelson():
    rec = chsh_value(ChshSettings.direct(0, math.pi / 4, math.pi / 8, 3 * math.pi / 8))
    assert rec.s == pytest.approx(2 * SQRT2, abs=1e-12)
    assert rec.violates_classical_bound
    assert len(rec.correlations) == 4


def test_chsh_equal_settings_sit_on_the_bound():
    rec = chsh_value(ChshSettings.direct(0.3, 0.3, 0.3, 0.3))
    assert rec.s == pytest.approx(2.0, abs=1e-15)
    assert not rec.violates_classical_bound


def test_chsh_matches_direct_formula():
    settings = (0, math.pi / 4, math.pi / 8, -3 * math.pi / 8)
    rec = chsh_value(ChshSettings.direct(*settings))
    assert rec.s == pytest.approx(cos_chsh(*settings), abs=1e-12)


def test_chsh_settings_need_exactly_one_mode():
    with pytest.raises(ValueError):
        ChshSettings()
    with pytest.raises(ValueError):
        ChshSettings(meetings=((0, 0),) * 4, phases=(0, 0, 0, 0))


def _engineered_layout():
    # unequal moments on the two pairs make station phases continuous in the meeting angle
    return ExperimentLayout(
        source_c=(1.0, 0.0),
        source_d=(0.8 * math.cos(0.3), 0.8 * math.sin(0.3)),
        meeting_a=(2.0, 0.0),
        meeting_b=(0.0, 2.0),
        moments=(MagneticMoment(1.0), MagneticMoment(1.0), MagneticMoment(0.5), MagneticMoment(0.5)),
        charge=LineCharge(2 * math.pi),
    )


def _place(layout, station, target):
    """Meeting point on the radius-2 circle whose station phase equals target."""
    def point(alpha):
        return (2 * math.cos(alpha), 2 * math.sin(alpha))

    def f(alpha):
        first, second = station_phases(layout, station, point(alpha))
        return first - second - target

    return point(brentq(f, -0.6, 2.5, xtol=1e-14))


def test_chsh_geometric_engineered_points():
    layout = _engineered_layout()
    a, a2 = _place(layout, "A", 0.0), _place(layout, "A", math.pi / 4)
    b, b2 = _place(layout, "B", math.pi / 8), _place(layout, "B", 3 * math.pi / 8)
    rec = chsh_value(ChshSettings.geometric(a, a2, b, b2), layout)
    assert rec.s == pytest.approx(2 * SQRT2, abs=1e-9)
    np.testing.assert_allclose(rec.phases, (0, math.pi / 4, math.pi / 8, 3 * math.pi / 8), atol=1e-9)


def test_chsh_geometric_names_failing_variant():
    layout = _engineered_layout()
    with pytest.raises(PathValidationError, match="A'"):
        chsh_value(ChshSettings.geometric((2, 0), (-2, 0), (0, 2), (1, 2)), layout)


def test_scan_recovers_tsirelson_from_engineered_loci():
    layout = _engineered_layout()
    locus_a = [(1.5, 1.5), _place(layout, "A", 0.0), (0.3, 2.5), _place(layout, "A", math.pi / 4)]
    locus_b = [_place(layout, "B", math.pi / 8), (2.2, 0.9), _place(layout, "B", 3 * math.pi / 8)]
    result = scan_chsh_over_locations(layout, locus_a, locus_b)
    assert abs(result.best.s) == pytest.approx(2 * SQRT2, abs=1e-6)
    assert len(result) == 4 * 3 * 3 * 2
    assert len(list(result.rows())) == len(result)
    assert max(abs(r.S) for r in result.rows()) == pytest.approx(abs(result.best.s), abs=1e-15)


def test_scan_with_constant_phases_finds_two():
    layout = far_layout()
    locus = [(-3.0, 12.0), (-2.0, 13.0), (-4.0, 11.5)]
    result = scan_chsh_over_locations(layout, locus, [(3.0, 12.0), (2.5, 14.0)])
    assert abs(result.best.s) == pytest.approx(2.0, abs=1e-9)
    # every candidate ties, so the lexicographically first combination wins
    assert result.best.indices == (0, 1, 0, 1)


def test_scan_table_size_and_order():
    layout = _engineered_layout()
    locus_a = [(2.0, 0.0), (1.5, 1.5), (0.3, 2.5)]
    locus_b = [(0.0, 2.0), (2.2, 0.9)]
    rows = list(scan_chsh_over_locations(layout, locus_a, locus_b).rows())
    assert len(rows) == 3 * 2 * 2 * 1
    keys = [r[:4] for r in rows]
    assert keys == sorted(keys)
    assert all(r.a_index != r.a_prime_index and r.b_index != r.b_prime_index for r in rows)


def test_scan_is_schedule_independent(monkeypatch):
    layout = _engineered_layout()
    locus_a = [(2.0, 0.0), (1.5, 1.5), (0.3, 2.5), (1.9, 0.7)]
    locus_b = [(0.0, 2.0), (2.2, 0.9), (1.0, 1.0)]
    par = scan_chsh_over_locations(layout, locus_a, locus_b, parallel=True)
    monkeypatch.setenv(engine.NO_PARALLEL_ENV, "1")
    seq = scan_chsh_over_locations(layout, locus_a, locus_b, parallel=True)
    assert list(par.rows()) == list(seq.rows())
    assert par.best == seq.best


def test_scan_skips_invalid_candidates_and_fails_when_none_left():
    layout = _engineered_layout()
    # (-2, 0) puts C->A straight through the line charge
    result = scan_chsh_over_locations(layout, [(2.0, 0.0), (-2.0, 0.0), (1.5, 1.5)], [(0, 2), (2.2, 0.9)])
    assert result.station_a[1] is None
    assert all(1 not in (r.a_index, r.a_prime_index) for r in result.rows())
    with pytest.raises(ScanError):
        scan_chsh_over_locations(layout, [(-2.0, 0.0), (-3.0, 0.0)], [(0, 2), (2.2, 0.9)])


def test_scan_needs_two_candidates():
    with pytest.raises(ValueError):
        scan_chsh_over_locations(_engineered_layout(), [(2.0, 0.0)], [(0, 2), (2.2, 0.9)])


@settings(max_examples=30)
@given(seeds)
def test_scans_respect_tsirelson(seed):
    rng = np.random.default_rng(seed)
    phases = rng.uniform(-math.pi, math.pi, size=12)
    result = scan_chsh_over_phases(phases[:6], phases[6:])
    assert abs(result.best.s) <= 2 * SQRT2 + 1e-9
    assert all(abs(r.S) <= 2 * SQRT2 + 1e-9 for r in result.rows())


# -- classical baseline ------------------------------------------------------


def test_always_plus_one_strategy_gives_two():
    assert deterministic_chsh((1, 1), (1, 1)) == 2


def test_exhaustive_deterministic_strategies():
    values = [
        deterministic_chsh(a, b)
        for a in itertools.product((1, -1), repeat=2)
        for b in itertools.product((1, -1), repeat=2)
    ]
    assert max(abs(v) for v in values) == 2
    assert exhaustive_lhv_bound() == 2


@pytest.mark.parametrize("seed", range(5))
def test_sampled_strategies_never_beat_two(seed):
    assert lhv_reference_bound(10_000, seed) <= 2 + 1e-12


def test_lhv_sampler_is_deterministic_and_validates():
    assert lhv_reference_bound(50, 9) == lhv_reference_bound(50, 9)
    with pytest.raises(ValueError):
        lhv_reference_bound(0, 1)
