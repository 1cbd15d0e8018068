import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from globaldrive.coupling import DriveAmplitudes, amplitudes_from_phases, full_coupling
from globaldrive.drive import (
    SINGLE_PAIR_RATIO,
    TWO_PAIR_KAPPA,
    Tone,
    ToneCollisionError,
    ToneTable,
    build_tone_table,
    force_components,
    loop_integrals,
    phase_ramp_schedule,
    read_tone_table,
    verify_loop_closure,
    write_tone_table,
)
from globaldrive.spin_sim import (
    apply_ising_matrix,
    apply_z_field,
    fidelity,
    zero_state,
)

XI = 2 * np.pi * 7500
CARRIER = 2 * np.pi * 80e6
RABI = 2 * np.pi * 1e5
RING_PHASES = np.array([0.0, 0.0397, -0.0726, -0.1123])


def ring_table(modes4, **kw):
    amps = amplitudes_from_phases(RING_PHASES, modes4, XI, RABI, TWO_PAIR_KAPPA)
    return build_tone_table(amps, modes4, XI, CARRIER, **kw), amps


def test_ring_table_has_twelve_tones_without_com(modes4):
    table, _ = ring_table(modes4)
    assert len(table.tones) == 12
    offs = np.abs(table.offsets())
    com = modes4.freqs[0]
    assert np.all(np.abs(offs - com) > 4 * XI)
    assert table.block_duration == pytest.approx(2 * np.pi / XI)
    assert [t.freq for t in table.tones] == sorted(t.freq for t in table.tones)


def test_zero_amplitudes_give_empty_table(modes4):
    amps = DriveAmplitudes(np.zeros(4), np.ones(4, dtype=int), RABI, xi=XI)
    table = build_tone_table(amps, modes4, XI, CARRIER)
    assert table.tones == []
    alpha, phase = verify_loop_closure(table, modes4)
    assert np.all(alpha == 0) and np.all(phase == 0)


def test_red_blue_symmetric_about_carrier(modes4):
    table, _ = ring_table(modes4)
    offs = np.sort(table.offsets())
    np.testing.assert_allclose(offs, -offs[::-1], atol=1e-6)


def test_block_phase_shifts_every_tone(modes4):
    a, _ = ring_table(modes4)
    b, _ = ring_table(modes4, block_phase=np.pi / 2)
    for ta, tb in zip(a.tones, b.tones):
        assert tb.freq == ta.freq
        assert np.angle(np.exp(1j * (tb.phase - ta.phase - np.pi / 2))) == pytest.approx(0, abs=1e-12)


def test_three_xi_pair_offset_by_pi(modes4):
    table, amps = ring_table(modes4)
    nu, s = modes4.freqs[1], amps.detuning_signs[1]
    by_offset = {round(o): t for o, t in zip(table.offsets(), table.tones)}
    t1 = by_offset[round(nu + s * XI)]
    t3 = by_offset[round(nu + 3 * s * XI)]
    assert np.mod(t3.phase - t1.phase, 2 * np.pi) == pytest.approx(np.pi)


def test_collision_with_dense_modes(modes4):
    amps = amplitudes_from_phases(RING_PHASES, modes4, XI, RABI)
    # xi comparable to the mode spacing makes pairs of adjacent modes overlap
    xi = (modes4.freqs[2] - modes4.freqs[1]) / 2
    with pytest.raises(ToneCollisionError):
        build_tone_table(amps, modes4, xi, CARRIER)


def test_bad_xi_and_tone_amplitude(modes4):
    amps = amplitudes_from_phases(RING_PHASES, modes4, XI, RABI)
    with pytest.raises(ValueError):
        build_tone_table(amps, modes4, 0.0, CARRIER)
    with pytest.raises(ValueError):
        Tone(1.0, 1.5, 0.0)


def test_loop_closes_and_phase_matches_request(modes4):
    table, _ = ring_table(modes4)
    alpha, phase = verify_loop_closure(table, modes4)
    assert alpha.max() < 1e-9
    np.testing.assert_allclose(phase, RING_PHASES, rtol=1e-9, atol=1e-15)


def test_loop_open_at_half_block(modes4):
    table, _ = ring_table(modes4)
    alpha, _ = verify_loop_closure(table, modes4, T=table.block_duration / 2)
    assert alpha[1:].min() > 1e-3


def _numeric(components, T):
    def F(t):
        return sum(c * np.exp(1j * d * t) for c, d in components)

    re = quad(lambda t: F(t).real, 0, T, limit=200)[0]
    im = quad(lambda t: F(t).imag, 0, T, limit=200)[0]

    def integrand(t):
        a = sum(c * (t if d == 0 else (np.exp(1j * d * t) - 1) / (1j * d)) for c, d in components)
        return (F(t) * np.conj(a)).imag

    return complex(re, im), quad(integrand, 0, T, limit=200, epsrel=1e-11)[0]


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
                  st.integers(-4, 4)),
        min_size=1, max_size=3,
    ),
    st.floats(0.3, 2.0),
)
def test_closed_form_matches_quadrature(comps, T):
    comps = [(c, 1.7 * k) for c, k in comps]
    alpha, phase = loop_integrals(comps, T)
    a_num, p_num = _numeric(comps, T)
    assert abs(alpha - a_num) < 1e-8
    assert phase == pytest.approx(p_num, abs=1e-8)


def test_single_pair_ms_phase():
    # one pair detuned by xi: closed loop phase 2 pi |c|^2 / xi^2
    c, xi = 0.3, 2.0
    alpha, phase = loop_integrals([(c, xi)], 2 * np.pi / xi)
    assert abs(alpha) < 1e-12
    assert phase == pytest.approx(2 * np.pi * c**2 / xi**2)


def test_two_pair_kappa_and_single_pair_ratio():
    # unit-amplitude pairs at xi and 3 xi with opposite sign
    eta_rabi_r, xi = 1.0, 1.0
    c = eta_rabi_r / 2
    _, two = loop_integrals([(c, xi), (-c, 3 * xi)], 2 * np.pi / xi)
    assert two == pytest.approx(TWO_PAIR_KAPPA * (eta_rabi_r / xi) ** 2)
    _, single = loop_integrals([(np.sqrt(2) * c, xi)], 2 * np.pi / xi)
    assert single / two == pytest.approx(SINGLE_PAIR_RATIO)


def test_negative_detuning_sign_gives_negative_phase(modes4):
    table, _ = ring_table(modes4)
    _, phase = verify_loop_closure(table, modes4)
    assert np.all(np.sign(phase[1:]) == np.sign(RING_PHASES[1:]))


def test_force_components_pairs_per_mode(modes4):
    table, _ = ring_table(modes4)
    comps = force_components(table, modes4)
    assert comps[0] == []
    assert all(len(comps[j]) == 2 for j in (1, 2, 3))


def test_unpaired_tone_rejected(modes4):
    table, _ = ring_table(modes4)
    lone = ToneTable(table.tones[-1:], table.block_duration, CARRIER, XI, table.rabi_freq)
    with pytest.raises(ValueError):
        force_components(lone, modes4)


@pytest.mark.parametrize(
    "delta,n,T,expected",
    [(0.0, 3, 1.0, [0, 0, 0]), (1.0, 4, 0.5, [0, 1, 2, 3]), (-2.0, 2, 0.25, [0, -1])],
)
def test_phase_ramp_examples(delta, n, T, expected):
    np.testing.assert_allclose(phase_ramp_schedule(delta, n, T), expected)


def test_phase_ramp_rejects_zero_blocks():
    with pytest.raises(ValueError):
        phase_ramp_schedule(1.0, 0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.5, 1.5), st.integers(1, 5), st.integers(0, 2**31))
def test_phase_ramp_equals_interleaved_z_field(modes4, delta_t, blocks, seed):
    # ramped blocks == U, Z(-delta T), U, ... up to a final frame rotation
    rng = np.random.default_rng(seed)
    J = full_coupling(rng.normal(scale=0.3, size=4), modes4)
    ramp = phase_ramp_schedule(delta_t, blocks, 1.0)
    a = zero_state(4)
    for phi in ramp:
        a = apply_ising_matrix(a, J, phi)
    b = zero_state(4)
    for k in range(blocks):
        if k:
            b = apply_z_field(b, -delta_t)
        b = apply_ising_matrix(b, J, 0.0)
    b = apply_z_field(b, delta_t * (blocks - 1))
    assert fidelity(a, b) == pytest.approx(1.0, abs=1e-10)


def test_tone_table_round_trip(modes4, tmp_path):
    table, _ = ring_table(modes4)
    path = tmp_path / "tones.csv"
    write_tone_table(table, path)
    back = read_tone_table(path)
    assert len(back.tones) == len(table.tones)
    for a, b in zip(table.tones, back.tones):
        assert b.amp == a.amp and b.phase == a.phase
        assert b.freq == pytest.approx(a.freq, rel=1e-15)
    assert back.xi == pytest.approx(table.xi, rel=1e-15)
    assert back.rabi_freq == pytest.approx(table.rabi_freq, rel=1e-15)
    # writing the re-read table reproduces the file byte for byte
    path2 = tmp_path / "again.csv"
    write_tone_table(back, path2)
    assert path2.read_bytes() == path.read_bytes()
    _, phase = verify_loop_closure(back, modes4)
    np.testing.assert_allclose(phase, RING_PHASES, rtol=1e-8, atol=1e-15)
