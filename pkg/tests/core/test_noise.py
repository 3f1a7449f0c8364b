import math

import numpy as np
import pytest

from oqmem.core.errors import InvalidParameterError, InvalidSequenceError
from oqmem.core.hubbard import EffectiveCouplings
from oqmem.core.noise import (
    DFS_ONE,
    DFS_ZERO,
    EchoSequence,
    NoiseModel,
    NoiseRealization,
    apply_echo,
    cpmg_sequence,
    dephasing_envelope,
    echo_ensemble,
    echo_unitary,
    exchange_evolution,
    field_evolution,
    free_induction,
    hahn_sequence,
    logical_rotation_angle,
    noisy_protocol_fidelity,
    permutation_sequence,
    quasistatic_evolution,
    sample_envelope,
    sample_quasistatic,
    sigma_for_t2_star,
    t2_star,
)
from oqmem.core.register import ProtocolParams
from oqmem.core.units import HBAR


def test_t2_star_round_trip():
    assert t2_star(sigma_for_t2_star(2000.0)) == pytest.approx(2000.0)
    assert t2_star(0.0) == math.inf
    with pytest.raises(InvalidParameterError):
        t2_star(-1.0)
    with pytest.raises(InvalidParameterError):
        sigma_for_t2_star(0.0)


def test_plausible_model_dephasing_times():
    model = NoiseModel.plausible()
    assert t2_star(model.hyperfine_sigma("O")) == pytest.approx(2000.0)
    assert t2_star(model.hyperfine_sigma("E")) == pytest.approx(10000.0)
    assert model.leakage_rate == pytest.approx(1e-3)
    assert not model.is_silent
    assert NoiseModel().is_silent


@pytest.mark.parametrize("kwargs", [
    {"hyperfine_sigma_O": -0.1},
    {"charge_sigma_E": math.nan},
    {"leakage_rate": 1.5},
])
def test_noise_model_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        NoiseModel(**kwargs)


def test_noise_model_document():
    model = NoiseModel.from_document({"hyperfine_sigma_O": 0.3, "leakage_rate": 0.01, "unrelated": 5})
    assert model.hyperfine_sigma_O == 0.3
    assert model.leakage_rate == 0.01
    assert NoiseModel.from_document(model.to_dict()) == model


def test_realizations_share_random_numbers_across_models():
    small = sample_quasistatic(NoiseModel(hyperfine_sigma_O=0.1, charge_sigma_E=1.0), 9)
    large = sample_quasistatic(NoiseModel(hyperfine_sigma_O=0.3, charge_sigma_E=2.0), 9)
    assert large.hyperfine_O == pytest.approx(3.0 * small.hyperfine_O)
    assert large.d_epsilon_E == pytest.approx(2.0 * small.d_epsilon_E)


def test_silent_model_draws_zero_realization():
    realization = sample_quasistatic(NoiseModel(), 1)
    assert realization.is_zero
    assert not realization.has_hyperfine


def test_realization_shifts_couplings():
    couplings = EffectiveCouplings.with_coupling(1.0, J_O=80.0)
    realization = NoiseRealization(d_epsilon_O=2.0)
    assert realization.apply(couplings).J_O == pytest.approx(80.0 - 0.5 * 2.0)


def test_envelope_at_t2_star_is_one_over_e():
    model = NoiseModel(hyperfine_sigma_O=sigma_for_t2_star(2000.0))
    envelope = dephasing_envelope(model, [0.0, 2000.0])
    assert envelope.coherence == pytest.approx([1.0, math.exp(-1.0)])
    assert envelope.t2_star == pytest.approx(2000.0)


def test_sampled_envelope_matches_gaussian_decay():
    model = NoiseModel.plausible()
    times = [0.0, 500.0, 1000.0, 2000.0, 4000.0]
    sampled = sample_envelope(model, times, 100_000, seed=2024)
    exact = dephasing_envelope(model, times)
    assert sampled.coherence[0] == pytest.approx(1.0)
    for k in range(1, len(times)):
        assert abs(sampled.coherence[k] - exact.coherence[k]) < 4.0 * sampled.stderr[k]


def test_sampled_envelope_is_independent_of_threads():
    model = NoiseModel.plausible()
    one = sample_envelope(model, [1000.0, 3000.0], 5000, seed=1, threads=1, block_size=500)
    four = sample_envelope(model, [1000.0, 3000.0], 5000, seed=1, threads=4, block_size=500)
    assert np.array_equal(one.coherence, four.coherence)


# --- sequences ---

def test_sequence_segments():
    sequence = cpmg_sequence(1000.0, 4)
    assert sequence.pulse_times == pytest.approx((125.0, 375.0, 625.0, 875.0))
    assert sum(sequence.segments) == pytest.approx(1000.0)
    assert hahn_sequence(800.0).pulse_times == (400.0,)
    assert free_induction(10.0).segments == [10.0]
    assert sequence.to_dict()["pulse_axis"] == "X_O"


@pytest.mark.parametrize("args", [
    ((200.0, 100.0), 300.0, "X_O"),
    ((400.0,), 300.0, "X_O"),
    ((-1.0,), 300.0, "X_O"),
    ((100.0,), 0.0, "X_O"),
    ((100.0,), 300.0, "Y_O"),
])
def test_invalid_sequences(args):
    with pytest.raises(InvalidSequenceError):
        EchoSequence(*args)


def test_cpmg_needs_a_pulse():
    with pytest.raises(InvalidSequenceError):
        cpmg_sequence(100.0, 0)


def test_free_induction_oscillates_with_splitting():
    realization = NoiseRealization(hyperfine_O=0.5)
    coherence = apply_echo(quasistatic_evolution(realization), free_induction(3000.0))
    assert coherence == pytest.approx(math.cos(0.5 * 3000.0 / HBAR), abs=1e-12)


@pytest.mark.parametrize("sequence", [hahn_sequence(5000.0), cpmg_sequence(5000.0, 1), cpmg_sequence(5000.0, 2),
                                      cpmg_sequence(5000.0, 5)])
@pytest.mark.parametrize("splitting", [-1.3, 0.02, 0.7, 4.0])
def test_echo_refocuses_every_static_realization(sequence, splitting):
    realization = NoiseRealization(hyperfine_O=splitting)
    assert apply_echo(quasistatic_evolution(realization), sequence) == pytest.approx(1.0, abs=1e-10)


def test_exchange_shift_adds_to_splitting():
    couplings = EffectiveCouplings(J_O=80.0, J_E=0.0, J_23=0.0, delta_dd=-900.0, theta_O=math.pi / 2,
                                   theta_E=math.pi / 2)
    realization = NoiseRealization(d_epsilon_O=1.0)
    evolve = quasistatic_evolution(realization, "O", couplings)
    # ∂J/∂ε = −½ at θ = π/2
    expected = np.diag([np.exp(-0.25j * 100.0 / HBAR), np.exp(0.25j * 100.0 / HBAR)])
    assert np.allclose(evolve(100.0), expected)


def test_echo_ensemble_recovers_coherence():
    model = NoiseModel.plausible()
    hahn = echo_ensemble(model, hahn_sequence(4000.0), 2000, seed=3)
    assert hahn.mean == pytest.approx(1.0, abs=1e-10)
    fid = echo_ensemble(model, free_induction(4000.0), 20_000, seed=3)
    expected = dephasing_envelope(model, [4000.0]).coherence[0]
    assert abs(fid.mean - expected) < 4.0 * fid.stderr


def test_swap_pulses_need_three_spins():
    with pytest.raises(InvalidSequenceError):
        apply_echo(quasistatic_evolution(NoiseRealization()), permutation_sequence(300.0))
    with pytest.raises(InvalidSequenceError):
        apply_echo(field_evolution([0.1, 0.2, 0.3]), hahn_sequence(300.0))


def test_dfs_states_are_orthonormal():
    assert np.vdot(DFS_ZERO, DFS_ZERO) == pytest.approx(1.0)
    assert np.vdot(DFS_ONE, DFS_ONE) == pytest.approx(1.0)
    assert abs(np.vdot(DFS_ZERO, DFS_ONE)) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("fields", [(0.3, -0.1, 0.05), (2.0, 0.0, -1.0), (0.01, 0.02, 0.5)])
def test_permutation_sequence_cancels_static_field_differences(fields):
    evolution = field_evolution(fields)
    interval = 20_000.0
    assert apply_echo(evolution, free_induction(interval)) < 1.0 - 1e-3
    assert apply_echo(evolution, permutation_sequence(interval)) == pytest.approx(1.0, abs=1e-10)
    assert logical_rotation_angle(echo_unitary(evolution, permutation_sequence(interval))) < 1e-6
    assert logical_rotation_angle(evolution(interval)) > 1e-3


@pytest.mark.parametrize("fields", [(0.3, -0.1, 0.05), (2.0, 0.0, -1.0)])
def test_free_induction_of_three_spins_follows_field_difference(fields):
    interval = 20_000.0
    expected = math.cos((fields[0] - fields[1]) * interval / (2.0 * HBAR)) ** 2
    assert apply_echo(field_evolution(fields), free_induction(interval)) == pytest.approx(expected, abs=1e-12)


def test_exchange_pulse_rotates_the_logical_qubit():
    gate = exchange_evolution((4.0, 0.0))(0.5 * math.pi * HBAR / 4.0)
    assert np.allclose(gate.conj().T @ gate, np.eye(8))
    assert logical_rotation_angle(gate) == pytest.approx(0.5 * math.pi, abs=1e-10)
    with pytest.raises(InvalidParameterError):
        exchange_evolution((1.0, 2.0, 3.0))


@pytest.mark.parametrize("fields", [(0.3, -0.1, 0.05), (2.0, 0.0, -1.0), (0.01, 0.02, 0.5)])
@pytest.mark.parametrize("angle", [0.25 * math.pi, 0.5 * math.pi, 2.0])
def test_permutation_sequence_keeps_exchange_rotation(fields, angle):
    coupling = 5.0
    gate = exchange_evolution((coupling, 0.0))(angle * HBAR / coupling)
    echoed = echo_unitary(field_evolution(fields), permutation_sequence(20_000.0)) @ gate
    assert logical_rotation_angle(echoed) == pytest.approx(angle, abs=1e-8)


def test_static_fields_spoil_exchange_rotation_without_echo():
    gate = exchange_evolution((5.0, 0.0))(0.5 * math.pi * HBAR / 5.0)
    bare = field_evolution((2.0, 0.0, -1.0))(20_000.0) @ gate
    assert abs(logical_rotation_angle(bare) - 0.5 * math.pi) > 0.1


def test_logical_rotation_angle_checks_shape():
    assert logical_rotation_angle(np.eye(8)) == pytest.approx(0.0, abs=1e-7)
    with pytest.raises(InvalidParameterError):
        logical_rotation_angle(np.eye(4))


def test_noisy_protocol_fidelity_without_noise_is_ideal():
    params = ProtocolParams.ideal()
    estimate = noisy_protocol_fidelity(params, NoiseModel(), 200, seed=4)
    assert estimate.mean == pytest.approx(1.0, abs=1e-9)
    assert estimate.extras["heralded"] == 200.0
    assert estimate.extras["leaked_fraction"] == 0.0
    assert 0.35 < estimate.extras["success_probability"] < 0.65


def test_noisy_protocol_fidelity_degrades_with_noise():
    params = ProtocolParams.ideal(J_E=2.0, delta_J_O=1.0)
    strong = NoiseModel(hyperfine_sigma_O=0.5, hyperfine_sigma_E=0.2, charge_sigma_O=5.0, charge_sigma_E=5.0)
    estimate = noisy_protocol_fidelity(params, strong, 200, seed=4)
    assert 0.0 < estimate.mean < 0.999
    assert estimate.to_dict()["n_shots"] == 200
    with pytest.raises(InvalidParameterError):
        noisy_protocol_fidelity(params, strong, 50)
