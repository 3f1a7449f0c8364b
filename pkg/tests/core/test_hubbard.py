import math

import numpy as np
import pytest

from oqmem.core.errors import DegenerateGeometryError, IncompleteModelError, InvalidParameterError
from oqmem.core.hubbard import (
    EffectiveCouplings,
    HubbardSystem,
    Orbital,
    approximate_joe,
    coulomb_integral,
    cz_duration,
    cz_duration_bound,
    dipole_dipole_shift,
    doubly_occupied_weight,
    effective_couplings,
    exact_diagonalize,
    exchange_energy,
    exchange_slope,
    mixing_angle,
    point_charge_energy,
    singlet_triplet_gap,
    wkb_barrier_modulation,
    zz_coupling,
)
from oqmem.core.units import COULOMB_CONSTANT, HBAR


# --- closed forms ---

@pytest.mark.parametrize("t", [1.0, 20.0, 82.7, 500.0])
def test_exchange_at_zero_detuning_equals_tunnel_coupling(t):
    assert exchange_energy(0.0, t) == pytest.approx(t, rel=1e-15)


def test_exchange_large_detuning_limit():
    t = 82.7
    epsilon = 100.0 * t
    expected = t * t / epsilon
    assert abs(exchange_energy(epsilon, t) - expected) / expected < 1e-4


def test_exchange_is_monotone_in_detuning():
    epsilons = np.linspace(-500.0, 500.0, 1001)
    values = np.array([exchange_energy(e, 82.7) for e in epsilons])
    assert np.all(np.diff(values) < 0)
    assert np.all(values > 0)


def test_exchange_stays_accurate_far_in_the_tail():
    # the cancellation-free branch keeps full relative precision
    assert exchange_energy(1e9, 1.0) == pytest.approx(1e-9, rel=1e-12)


@pytest.mark.parametrize("epsilon", [-400.0, -50.0, 0.0, 30.0, 800.0])
def test_mixing_angle_and_weight_agree(epsilon):
    t = 40.0
    theta = mixing_angle(epsilon, t)
    assert 0.0 < theta < math.pi
    assert doubly_occupied_weight(epsilon, t) == pytest.approx(math.sin(theta / 2.0) ** 2, rel=1e-12)


def test_mixing_angle_at_zero_detuning():
    assert mixing_angle(0.0, 10.0) == pytest.approx(math.pi / 2.0)


@pytest.mark.parametrize("epsilon", [-300.0, 0.0, 150.0])
def test_exchange_slope_matches_finite_difference(epsilon):
    t, h = 60.0, 1e-4
    numeric = (exchange_energy(epsilon + h, t) - exchange_energy(epsilon - h, t)) / (2.0 * h)
    assert exchange_slope(epsilon, t) == pytest.approx(numeric, rel=1e-6)


@pytest.mark.parametrize("func", [exchange_energy, mixing_angle, doubly_occupied_weight])
@pytest.mark.parametrize("t", [0.0, -1.0])
def test_non_positive_tunnel_coupling_is_rejected(func, t):
    with pytest.raises(InvalidParameterError):
        func(0.0, t)


def test_cz_duration_for_one_microvolt():
    assert cz_duration(1.0) == pytest.approx(1033.9, abs=0.1)
    assert cz_duration(-1.0) == cz_duration(1.0)


def test_cz_duration_rejects_zero_coupling():
    with pytest.raises(InvalidParameterError):
        cz_duration(0.0)


def test_cz_duration_bound_is_picoseconds_at_one_millielectronvolt():
    assert cz_duration_bound(1000.0) == pytest.approx(HBAR / 1000.0)
    assert 0.6 < cz_duration_bound(-1000.0) < 0.7


def test_approximate_joe():
    assert approximate_joe(1000.0, 2000.0, 82.7) == pytest.approx(1000.0 * 82.7 ** 2 / (4.0 * 2000.0 ** 2))
    with pytest.raises(InvalidParameterError):
        approximate_joe(1000.0, 0.0, 82.7)


def test_wkb_barrier_modulation():
    assert wkb_barrier_modulation(5000.0, 200.0, 0.0) == 1.0
    assert wkb_barrier_modulation(5000.0, 200.0, 50.0) == pytest.approx(math.exp(-math.pi / 4.0))
    # independent of the barrier height
    assert wkb_barrier_modulation(1.0, 200.0, 50.0) == wkb_barrier_modulation(9000.0, 200.0, 50.0)
    with pytest.raises(InvalidParameterError):
        wkb_barrier_modulation(5000.0, 0.0, 1.0)


# --- Coulomb integrals ---

def test_point_charge_limit_of_coulomb_integral():
    a = Orbital.isotropic((0.0, 0.0, 0.0), 1e-3)
    b = Orbital.isotropic((0.0, 0.0, 30.0), 1e-3)
    expected = COULOMB_CONSTANT / (12.9 * 30.0)
    assert expected == pytest.approx(3720.8, abs=0.5)
    assert coulomb_integral(a, b, 12.9) == pytest.approx(expected, rel=1e-4)


@pytest.mark.parametrize("sigma", [2.0, 5.0, 12.0])
def test_on_site_integral_of_isotropic_gaussian(sigma):
    a = Orbital.isotropic((3.0, -1.0, 7.0), sigma)
    assert coulomb_integral(a, a, 12.9) == pytest.approx(COULOMB_CONSTANT / (12.9 * math.sqrt(math.pi) * sigma),
                                                           rel=1e-6)


def test_coulomb_integral_is_symmetric():
    a = Orbital((0.0, 0.0, 30.0), (6.0, 6.0, 2.0))
    b = Orbital((100.0, 0.0, 0.0), (15.0, 15.0, 4.0))
    assert coulomb_integral(a, b, 12.9) == pytest.approx(coulomb_integral(b, a, 12.9), rel=1e-10)


@pytest.mark.parametrize("distance", [15.0, 40.0, 120.0])
def test_isotropic_orbitals_stay_below_point_charge(distance):
    a = Orbital.isotropic((0.0, 0.0, 0.0), 6.0)
    b = Orbital.isotropic((distance, 0.0, 0.0), 9.0)
    # x ~ N(d, σ²) averages 1/|x| to erf(d/√2σ)/d
    sigma = math.hypot(6.0, 9.0)
    expected = COULOMB_CONSTANT * math.erf(distance / (math.sqrt(2.0) * sigma)) / (12.9 * distance)
    u_ab = coulomb_integral(a, b, 12.9)
    assert u_ab == pytest.approx(expected, rel=1e-6)
    assert u_ab < point_charge_energy(a.center, b.center, 12.9)


def test_in_plane_spread_along_separation_exceeds_point_charge():
    # density stretched along the separation axis has a positive quadrupole correction
    a = Orbital((0.0, 0.0, 30.0), (6.0, 6.0, 2.0))
    b = Orbital((100.0, 0.0, 0.0), (15.0, 15.0, 4.0))
    assert coulomb_integral(a, b, 12.9) > point_charge_energy(a.center, b.center, 12.9)


@pytest.mark.parametrize("widths_a,widths_b", [
    ((5.0, 5.0, 5.0), (5.0, 5.0, 5.0)),
    ((5.0, 5.0, 2.0), (5.0, 5.0, 3.0)),
])
def test_coulomb_integral_matches_sampled_average(widths_a, widths_b):
    a = Orbital((0.0, 0.0, 0.0), widths_a)
    b = Orbital((30.0, 10.0, 5.0), widths_b)
    rng = np.random.default_rng(7)
    r_a = rng.normal(a.center, a.widths, size=(200_000, 3))
    r_b = rng.normal(b.center, b.widths, size=(200_000, 3))
    sampled = float(np.mean(point_charge_energy(r_a, r_b, 12.9)))
    assert coulomb_integral(a, b, 12.9) == pytest.approx(sampled, rel=1e-2)


def test_coincident_point_charges_are_degenerate():
    with pytest.raises(DegenerateGeometryError):
        point_charge_energy((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 12.9)


def test_orbital_widths_must_be_positive():
    with pytest.raises(InvalidParameterError):
        Orbital((0.0, 0.0, 0.0), (1.0, 0.0, 1.0))


# --- system construction ---

def test_reduced_couplings_use_half_prefactor(hubbard_system):
    assert hubbard_system.t_O == pytest.approx(82.7)
    assert hubbard_system.t("T", "B") == pytest.approx(82.7 * math.sqrt(2.0))
    updated = hubbard_system.with_tunneling(t_E=10.0, t_23=0.0)
    assert updated.t_E == pytest.approx(10.0)
    assert updated.t_23 == 0.0
    assert updated.t_O == pytest.approx(hubbard_system.t_O)


def test_with_detunings_keeps_unset_values(hubbard_system):
    moved = hubbard_system.with_detunings(epsilon_O=-100.0)
    assert moved.epsilon_O == -100.0
    assert moved.epsilon_E == hubbard_system.epsilon_E
    assert moved.epsilon_23 == hubbard_system.epsilon_23


def test_tunneling_between_molecules_is_rejected(coulomb_table):
    system = HubbardSystem.from_parameters(t_O=10.0, t_E=10.0, coulomb=coulomb_table)
    tunnel = np.array(system.tunnel)
    tunnel[0, 2] = tunnel[2, 0] = 1.0
    with pytest.raises(InvalidParameterError):
        HubbardSystem(tunnel, system.coulomb)


def test_on_site_repulsion_must_dominate(coulomb_table):
    table = dict(coulomb_table)
    table[("T", "B")] = 25000.0
    with pytest.raises(InvalidParameterError):
        HubbardSystem.from_parameters(t_O=10.0, t_E=10.0, coulomb=table)


def test_incomplete_model_has_no_dipole_shift():
    system = HubbardSystem.from_parameters(t_O=10.0, t_E=10.0,
                                           coulomb={("T", "T"): 1e4, ("B", "B"): 1e4, ("T", "B"): 5e3})
    with pytest.raises(IncompleteModelError):
        dipole_dipole_shift(system)


def test_dipole_shift_of_table(hubbard_system):
    assert dipole_dipole_shift(hubbard_system) == pytest.approx(2790.0 - 1030.0 - 3720.0 + 1070.0)


def test_system_from_document(system_document):
    system = HubbardSystem.from_document(system_document)
    assert system.t("T", "B") == pytest.approx(117.0)
    assert system.epsilon_O == 2000.0
    assert system.epsilon_E == 1500.0
    assert set(system.dots) == {"T", "B", "1", "2", "3"}
    assert -1500.0 < dipole_dipole_shift(system) < -100.0


def test_document_overrides_replace_computed_elements(system_document):
    document = dict(system_document, coulomb=[{"pair": ["T", "1"], "value": 2500.0}])
    assert HubbardSystem.from_document(document).u("T", "1") == 2500.0


# --- effective couplings ---

def test_joe_is_the_product_formula(hubbard_system):
    couplings = effective_couplings(hubbard_system)
    s_O = doubly_occupied_weight(hubbard_system.epsilon_O, hubbard_system.t_O)
    s_E = doubly_occupied_weight(hubbard_system.epsilon_E, hubbard_system.t_E)
    assert couplings.J_OE == pytest.approx(s_O * s_E * couplings.delta_dd / 4.0, rel=1e-12)
    assert couplings.delta_J_O == 0.0


def test_emission_configuration_sets_delta_j_o(hubbard_system):
    emission = hubbard_system.with_detunings(epsilon_O=2500.0)
    couplings = effective_couplings(hubbard_system, emission)
    assert couplings.delta_J_O == pytest.approx(couplings.J_O - effective_couplings(emission).J_O)
    assert couplings.delta_J_O > 0


def test_corrected_exchange_adds_first_order_coulomb_terms(hubbard_system):
    couplings = effective_couplings(hubbard_system)
    s_O = couplings.weight_O
    shift = 0.5 * (2790.0 + 1030.0 - 3720.0 - 1070.0)
    expected = exchange_energy(2000.0, 82.7) + s_O * (shift + couplings.delta_dd * couplings.weight_E / 4.0)
    assert couplings.J_O == pytest.approx(expected, rel=1e-12)


def test_shifted_couplings_match_recomputed_device(hubbard_system):
    couplings = effective_couplings(hubbard_system)
    assert couplings.shifted(0.0, 0.0) is couplings
    moved = couplings.shifted(d_epsilon_O=3.0, d_epsilon_E=-2.0)
    direct = effective_couplings(hubbard_system.with_detunings(epsilon_O=2003.0, epsilon_E=1498.0))
    assert moved.J_O == pytest.approx(direct.J_O, rel=1e-12)
    assert moved.J_E == pytest.approx(direct.J_E, rel=1e-12)
    assert moved.J_OE == pytest.approx(direct.J_OE, rel=1e-12)
    assert moved.delta_J_O == pytest.approx(direct.J_O - couplings.J_O, rel=1e-12)


def test_shifted_couplings_linearise_without_detunings():
    couplings = EffectiveCouplings.with_coupling(1.0, J_O=82.7, J_E=5.0)
    moved = couplings.shifted(d_epsilon_O=2.0)
    assert moved.J_O == pytest.approx(82.7 - 0.5 * 2.0)
    assert moved.delta_J_O == pytest.approx(-1.0)
    assert moved.J_E == couplings.J_E


def test_with_coupling_prescribes_joe():
    couplings = EffectiveCouplings.with_coupling(2.5, theta_O=1.0, theta_E=2.0)
    assert couplings.J_OE == pytest.approx(2.5, rel=1e-12)
    with pytest.raises(InvalidParameterError):
        EffectiveCouplings.with_coupling(1.0, theta_O=0.0)


# --- exact diagonalization ---

def test_sector_dimensions_and_spin_labels(hubbard_system):
    o = exact_diagonalize(hubbard_system, "O")
    e = exact_diagonalize(hubbard_system, "E")
    assert len(o.energies) == 4
    assert np.sum(np.isclose(o.spin, 2.0)) == 1
    assert np.sum(np.isclose(o.spin, 0.0)) == 3
    assert len(e.energies) == 9
    assert np.sum(np.isclose(e.spin, 3.75)) == 1
    assert np.sum(np.isclose(e.spin, 0.75)) == 8
    assert np.all(np.diff(o.energies) >= 0)
    assert o.densities.sum(axis=1) == pytest.approx(np.full(4, 2.0))
    assert e.densities.sum(axis=1) == pytest.approx(np.full(9, 3.0))


def test_unknown_molecule_is_rejected(hubbard_system):
    with pytest.raises(InvalidParameterError):
        exact_diagonalize(hubbard_system, "X")


def _two_dot_system(t_O, epsilon_O, u_TT, u_BB, u_TB):
    return HubbardSystem.from_parameters(
        t_O=t_O, t_E=1.0, epsilon_O=epsilon_O,
        coulomb={("T", "T"): u_TT, ("B", "B"): u_BB, ("T", "B"): u_TB},
    )


def test_gap_at_zero_detuning_with_suppressed_top_double_occupancy():
    system = _two_dot_system(50.0, 0.0, 1e7, 1e4, 5e3)
    assert singlet_triplet_gap(system) == pytest.approx(50.0, rel=1e-2)


def test_gap_matches_exchange_formula_over_random_systems():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        t_O = rng.uniform(5.0, 200.0)
        u_TT = t_O * rng.uniform(50.0, 500.0)
        u_BB = rng.uniform(5e3, 3e4)
        u_TB = rng.uniform(0.1, 0.9) * u_BB
        epsilon = rng.uniform(-5.0, 5.0) * t_O
        system = _two_dot_system(t_O, epsilon, max(u_TT, 1.01 * u_TB), u_BB, u_TB)
        bound = 3.0 * 2.0 * (t_O / system.u("T", "T")) * t_O
        assert abs(singlet_triplet_gap(system) - exchange_energy(epsilon, t_O)) <= bound


def _linear_response_system(rng):
    cross = {}
    while True:
        for o in ("T", "B"):
            for e in ("1", "2", "3"):
                cross[(o, e)] = rng.uniform(500.0, 4000.0)
        delta = cross[("T", "1")] - cross[("T", "2")] - cross[("B", "1")] + cross[("B", "2")]
        if 50.0 < abs(delta) <= 900.0:
            break
    table = {
        ("T", "T"): 5e4, ("B", "B"): 5e4, ("T", "B"): 11000.0,
        ("1", "1"): 5e4, ("2", "2"): 5e4, ("3", "3"): 5e4,
        ("1", "2"): 1100.0, ("2", "3"): 1100.0, ("1", "3"): 560.0,
        **cross,
    }
    return HubbardSystem.from_parameters(t_O=rng.uniform(100.0, 400.0), t_E=rng.uniform(100.0, 400.0),
                                         coulomb=table, t_23=50.0, epsilon_O=9000.0, epsilon_E=9000.0)


def test_zz_extraction_matches_product_formula():
    rng = np.random.default_rng(11)
    for _ in range(50):
        system = _linear_response_system(rng)
        formula = effective_couplings(system).J_OE
        assert zz_coupling(system) == pytest.approx(formula, rel=0.1)
