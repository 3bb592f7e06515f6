import math
from dataclasses import replace

import pytest

from collapsesim.chains.detector import (
    Branch,
    ChainState,
    amplify,
    amplify_until,
    cross_branch_amplitude,
    seed,
    threshold_collapse,
)
from collapsesim.core.errors import (
    InvariantViolation,
    NotMacroscopic,
    PoolExhausted,
    UnsupportedTopology,
)
from collapsesim.core.optics import evolve, photon_ket, source_ket, which_way_circuit
from collapsesim.core.rng import RngStream


def which_way_photon(phi=0.0):
    return evolve(source_ket("s"), which_way_circuit(phi))[-1]


def test_seed_puts_early_packet_on_the_detector():
    cs = seed(which_way_photon(0.3), 3)
    assert [b.label for b in cs.branches] == ["a", "b"]
    a, b = cs.branch("a"), cs.branch("b")
    assert (a.perturbed_a, a.perturbed_b) == (3, 0)
    assert (b.perturbed_a, b.perturbed_b) == (0, 0)
    assert cs.weight == pytest.approx(1.0, abs=1e-12)


def test_seed_rejects_three_packets():
    with pytest.raises(UnsupportedTopology):
        seed(photon_ket({"a": 1.0, "b": 1.0, "c": 1.0}), 3)


def test_seed_rejects_foreign_packet():
    with pytest.raises(UnsupportedTopology):
        seed(photon_ket({"a": 1.0, "z": 1.0}), 3)


def test_avalanche_counts():
    cs = amplify(seed(which_way_photon(), 3), 4, growth=2, late_arrival_step=2, k_initial=3)
    assert cs.step == 4
    assert cs.branch("a").perturbed_a == 48
    assert cs.branch("a").perturbed_b == 0
    assert cs.branch("b").perturbed_b == 12
    assert cs.branch("b").perturbed_a == 0


def test_amplitudes_ride_along_unchanged():
    start = seed(which_way_photon(1.1), 3)
    cs = amplify(start, 4, growth=2, late_arrival_step=2, k_initial=3)
    for before, after in zip(start.branches, cs.branches):
        assert after.amplitude == before.amplitude
    assert cs.weight == pytest.approx(start.weight)


def test_zero_steps_is_identity():
    cs = seed(which_way_photon(), 3)
    assert amplify(cs, 0) == cs


def test_growth_rounds_up():
    cs = amplify(seed(photon_ket({"a": 1.0}), 3), 1, growth=1.5)
    assert cs.branch("a").perturbed_a == 5


def test_pool_exhausted():
    cs = replace(seed(which_way_photon(), 3), pool_a=10)
    with pytest.raises(PoolExhausted) as err:
        amplify(cs, 5)
    assert err.value.step == 2


def test_branch_with_both_sets_is_rejected():
    with pytest.raises(InvariantViolation):
        ChainState((Branch("a", 1.0, 4, 5),))


def test_duplicate_branches_are_rejected():
    with pytest.raises(InvariantViolation):
        ChainState((Branch("a", 0.5, 1), Branch("a", 0.5, 1)))


def test_no_cross_branch_amplitude():
    cs = amplify(seed(which_way_photon(0.7), 3), 10, growth=2, late_arrival_step=1, k_initial=2)
    assert cross_branch_amplitude(cs) == 0


def test_amplify_until_both_macroscopic():
    cs = amplify_until(seed(which_way_photon(), 3), 10**6)
    assert cs.step == 20
    assert all(b.perturbed >= 10**6 for b in cs.branches)


def test_amplify_until_gives_up():
    with pytest.raises(NotMacroscopic):
        amplify_until(seed(which_way_photon(), 3), 10**6, max_steps=5)


def test_threshold_needs_a_macroscopic_branch():
    with pytest.raises(NotMacroscopic):
        threshold_collapse(seed(which_way_photon(), 3), 10**6, RngStream(1))


@pytest.mark.parametrize(
    "weight_a",
    [0.5, 1 / 3],
)
def test_threshold_selection_follows_weights(weight_a):
    photon = photon_ket({"a": math.sqrt(weight_a), "b": 1j * math.sqrt(1 - weight_a)})
    cs = amplify_until(seed(photon, 3), 10**6)
    rng = RngStream(2024)
    trials = 20000
    reports = [threshold_collapse(cs, 10**6, rng) for _ in range(trials)]
    freq = sum(r.selected_branch == "a" for r in reports) / trials
    sigma = math.sqrt(weight_a * (1 - weight_a) / trials)
    assert abs(freq - weight_a) < 5 * sigma
    assert all(r.losing_perturbed == 0 for r in reports)
    assert all(r.steps_to_threshold == cs.step for r in reports)
