import math

import numpy as np
import pytest

from collapsesim.core.errors import MaxStepsExceeded, NonPhysical
from collapsesim.core.rng import RngStream
from collapsesim.dynamics.csl import (
    NoiseSequence,
    SseParams,
    SseState,
    adversarial_increment,
    detect_nonphysical,
    ensemble_stats,
    perturbation_scan,
    replay_trajectory,
    run_trajectory,
    sse_step,
)

P = SseParams()
HALF = SseState.from_weights([0.5, 0.5])
THIRD = SseState.from_weights([1 / 3, 2 / 3])


def test_eigenstate_is_fixed():
    s = SseState.from_weights([1.0, 0.0])
    for dW in (-0.3, 0.0, 0.05):
        out = sse_step(s, P, dW)
        assert np.allclose(out.probabilities, [1.0, 0.0], atol=1e-15)


def test_zero_noise_keeps_balanced_state():
    out = sse_step(HALF, P, 0.0)
    assert np.allclose(out.probabilities, [0.5, 0.5], atol=1e-15)
    assert out.time == pytest.approx(P.dt)


def test_positive_increment_favours_upper_eigenvalue():
    out = sse_step(HALF, P, 0.03)
    assert out.probabilities[0] > 0.5


def test_step_renormalizes():
    state = THIRD
    rng = RngStream(3)
    for _ in range(200):
        state = sse_step(state, P, rng.normal(math.sqrt(P.dt)))
        assert abs(np.linalg.norm(state.amplitudes) - 1.0) < 1e-9


def test_adversarial_increment_is_nonphysical():
    dW = adversarial_increment(THIRD, P)
    with pytest.raises(NonPhysical) as err:
        sse_step(THIRD, P, dW, step=7)
    assert err.value.step == 7


def test_eigenstate_has_no_adversarial_increment():
    with pytest.raises(ValueError):
        adversarial_increment(SseState.from_weights([0.0, 1.0]), P)


def test_params_validation():
    with pytest.raises(ValueError):
        SseParams(lam=0.0)
    with pytest.raises(ValueError):
        SseParams(eps_conv=0.7)


def test_evenly_spaced_spectrum():
    assert SseParams.evenly_spaced(3).eigenvalues == (1.0, 0.0, -1.0)


def test_run_then_replay_is_identical():
    result = run_trajectory(THIRD, P, RngStream(42))
    assert result.outcome in (0, 1)
    assert result.steps == len(result.noise)
    replayed = replay_trajectory(THIRD, P, result.noise_sequence)
    assert replayed == result


def test_same_seed_same_trajectory():
    assert run_trajectory(HALF, P, RngStream(7)) == run_trajectory(HALF, P, RngStream(7))


def test_trajectory_step_limit():
    with pytest.raises(MaxStepsExceeded) as err:
        run_trajectory(HALF, SseParams(max_steps=5), RngStream(1))
    assert err.value.steps == 5


def test_ensemble_follows_born_weights():
    stats = ensemble_stats(THIRD, P, 2000, RngStream(2024), checkpoints=[0, 100, 1000])
    assert stats.converged == 2000
    assert stats.error_counts == {"nonphysical": 0, "max_steps": 0}
    sigma = math.sqrt((1 / 3) * (2 / 3) / 2000)
    assert abs(stats.frequencies[0] - 1 / 3) < 5 * sigma
    assert sum(stats.frequencies) == pytest.approx(1.0)


def test_ensemble_is_a_martingale():
    stats = ensemble_stats(THIRD, P, 2000, RngStream(99), checkpoints=[0, 100, 300, 1000])
    assert stats.checkpoint_steps == [0, 100, 300, 1000]
    assert stats.martingale_means[0][0] == pytest.approx(1 / 3, abs=1e-12)
    for means, sems in zip(stats.martingale_means[1:], stats.martingale_sem[1:]):
        assert abs(means[0] - 1 / 3) <= 5 * sems[0] + 1e-12


def test_ensemble_needs_enough_trajectories():
    with pytest.raises(ValueError):
        ensemble_stats(HALF, P, 10, RngStream(1))


def test_ensemble_three_levels():
    p = SseParams.evenly_spaced(3)
    stats = ensemble_stats(SseState.from_weights([0.2, 0.3, 0.5]), p, 2000, RngStream(5))
    assert len(stats.frequencies) == 3
    for freq, weight in zip(stats.frequencies, [0.2, 0.3, 0.5]):
        assert abs(freq - weight) < 5 * math.sqrt(weight * (1 - weight) / 2000)


def test_detect_adversarial_sequence():
    noise = NoiseSequence([adversarial_increment(HALF, P)] + [0.0] * 10)
    diagnosis = detect_nonphysical(noise, HALF, P)
    assert diagnosis.status == "nonphysical"
    assert diagnosis.step == 1


def test_detect_exhausted_sequence():
    diagnosis = detect_nonphysical(NoiseSequence([0.0] * 100), HALF, P)
    assert diagnosis.status == "diverged"
    assert diagnosis.step == 100


def test_detect_reports_flip_scale():
    noise = NoiseSequence([0.04] * 200)
    diagnosis = detect_nonphysical(noise, HALF, P)
    assert diagnosis.status == "ok"
    assert diagnosis.outcome == 0
    # dW = 0.8 only flips the lower amplitude once <A> has drifted above 1/4
    assert diagnosis.flip_scale == 20.0
    assert diagnosis.flip_step > 1


def test_flip_search_replays_the_remaining_increments():
    noise = NoiseSequence([-0.01, -0.9] + [-0.05] * 100)
    assert detect_nonphysical(noise, HALF, P).outcome == 1
    # x10 on the first increment is harmless locally; the shifted <A> breaks step 2
    assert sse_step(HALF, P, -0.1, 1).probabilities[1] > 0.5
    assert perturbation_scan(noise, HALF, P, 0, 10.0).step == 2
    diagnosis = detect_nonphysical(noise, HALF, P, scales=(10.0,))
    assert diagnosis.status == "ok"
    assert diagnosis.flip_step == 1
    assert diagnosis.flip_scale == 10.0


def test_large_perturbation_breaks_the_replay():
    noise = NoiseSequence([0.04] * 200)
    assert perturbation_scan(noise, HALF, P, 0, 1.0).status == "ok"
    scanned = perturbation_scan(noise, HALF, P, 0, 50.0)
    assert scanned.status == "nonphysical"
    assert scanned.step == 1
    assert noise.increments[0] == 0.04


def test_noise_sequence_csv(tmp_path):
    noise = run_trajectory(THIRD, P, RngStream(8)).noise_sequence
    path = tmp_path / "noise.csv"
    noise.to_csv(str(path))
    assert NoiseSequence.from_csv(str(path)).increments == noise.increments


def test_noise_sequence_bytes():
    noise = NoiseSequence([0.1, -2.5e-3, 1e-300])
    assert NoiseSequence.from_bytes(noise.to_bytes()) == noise
    assert len(noise.to_bytes()) == 24


def final_state(initial, p, noise):
    state = initial
    for step, dW in enumerate(noise, start=1):
        state = sse_step(state, p, dW, step)
    return state


def test_selected_eigenstate_dominates():
    p = SseParams.evenly_spaced(3)
    initial = SseState.from_weights([0.2, 0.3, 0.5])
    result = run_trajectory(initial, p, RngStream(17))
    probs = final_state(initial, p, result.noise).probabilities
    assert probs[result.outcome] >= 1 - p.eps_conv
    others = np.delete(probs, result.outcome)
    assert np.all(others <= p.eps_conv)


def test_balanced_pair_selects_each_half_the_time():
    stats = ensemble_stats(HALF, P, 10000, RngStream(31))
    assert stats.converged == 10000
    assert stats.frequencies[0] == pytest.approx(0.5, abs=0.02)


@pytest.mark.parametrize("weights,outcome", [([1.0, 0.0], 0), ([0.0, 1.0], 1)])
def test_eigenstate_is_selected_in_one_step(weights, outcome):
    result = run_trajectory(SseState.from_weights(weights), P, RngStream(4))
    assert result.outcome == outcome
    assert result.steps == 1
