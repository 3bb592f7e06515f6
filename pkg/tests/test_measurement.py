import math

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from collapsesim.core.errors import BadPartition, ImpossibleOutcome
from collapsesim.core.frames import hardy_partition
from collapsesim.core.measurement import (
    CollapsePolicy,
    ObservablePartition,
    born_probabilities,
    collapse,
    conditional_state,
    joint_born_probabilities,
    sample,
)
from collapsesim.core.optics import (
    MINUS,
    PHOTON,
    PLUS,
    evolve,
    hardy_circuit,
    hardy_frame_partial,
    hardy_source,
    photon_ket,
    source_ket,
    triple_circuit,
)
from collapsesim.core.rng import RngStream
from collapsesim.core.statevec import (
    BasisLabel,
    basis_ket,
    equal_up_to_global_phase,
    make_ket,
    tensor,
)

WEIGHTED = photon_ket({"a": 1 / math.sqrt(3), "b": math.sqrt(2 / 3)})
AB = ObservablePartition.by_mode(PHOTON, ["a", "b"])
DETECTOR_B = ObservablePartition(PHOTON, {"click": {"b"}, "no-click": {"a", "c"}})


def hardy_final():
    return evolve(hardy_source(), hardy_circuit())[-1]


def test_partition_rejects_overlap():
    with pytest.raises(BadPartition):
        ObservablePartition(PHOTON, {"x": {"a", "b"}, "y": {"b"}})


def test_joint_hardy_table():
    table = joint_born_probabilities(hardy_final(), [hardy_partition(PLUS), hardy_partition(MINUS)])
    assert table["C+,C-"] == pytest.approx(3 / 4, abs=1e-12)
    assert table["C+,D-"] == pytest.approx(1 / 12, abs=1e-12)
    assert table["D+,C-"] == pytest.approx(1 / 12, abs=1e-12)
    assert table["D+,D-"] == pytest.approx(1 / 12, abs=1e-12)


def test_weighted_born_probabilities():
    probabilities = born_probabilities(WEIGHTED, AB)
    assert probabilities == pytest.approx({"a": 1 / 3, "b": 2 / 3}, abs=1e-12)


def test_triple_detector_probabilities():
    final = evolve(source_ket("s"), triple_circuit(0.0, 0.0))[-1]
    probabilities = born_probabilities(final, DETECTOR_B)
    assert probabilities["click"] == pytest.approx(1 / 3, abs=1e-12)
    assert probabilities["no-click"] == pytest.approx(2 / 3, abs=1e-12)


def test_non_exhaustive_partition():
    with pytest.raises(BadPartition):
        born_probabilities(WEIGHTED, ObservablePartition.by_mode(PHOTON, ["a"]))


def test_no_click_collapse_keeps_a_and_c():
    theta1, theta3 = 0.4, -0.9
    final = evolve(source_ket("s"), triple_circuit(theta1, theta3))[-1]
    post = collapse(final, DETECTOR_B, "no-click")
    expected = photon_ket(
        {
            "a": complex(math.cos(theta1), math.sin(theta1)) / math.sqrt(2),
            "c": complex(math.cos(theta3), math.sin(theta3)) / math.sqrt(2),
        }
    )
    assert equal_up_to_global_phase(expected, post)


def test_collapse_is_repeatable():
    post = collapse(WEIGHTED, AB, "b")
    assert born_probabilities(post, AB)["b"] == pytest.approx(1.0, abs=1e-12)


def test_collapse_eigenstate_unchanged():
    k = photon_ket({"a": 1.0})
    assert collapse(k, AB, "a").terms == k.terms


def test_impossible_outcome():
    with pytest.raises(ImpossibleOutcome):
        collapse(photon_ket({"a": 1.0}), AB, "b")


def test_plus_only_condition_on_d_plus_leaves_u_minus():
    partial = hardy_frame_partial(hardy_source(), "plus-only")
    remaining = conditional_state(partial, PLUS, hardy_partition(PLUS), "D+")
    assert remaining.subsystems == {MINUS}
    assert equal_up_to_global_phase(remaining, basis_ket(BasisLabel(((MINUS, "u"),))))


def test_minus_only_condition_on_d_minus_leaves_u_plus():
    partial = hardy_frame_partial(hardy_source(), "minus-only")
    remaining = conditional_state(partial, MINUS, hardy_partition(MINUS), "D-")
    assert equal_up_to_global_phase(remaining, basis_ket(BasisLabel(((PLUS, "u"),))))


def test_conditional_state_of_product():
    product = tensor(photon_ket({"a": 1.0}), basis_ket(BasisLabel.of(other="x")))
    remaining = conditional_state(product, PHOTON, AB, "a")
    assert remaining.terms == {BasisLabel.of(other="x"): 1.0}


def test_conditional_state_wrong_subsystem():
    with pytest.raises(BadPartition):
        conditional_state(WEIGHTED, "other", AB, "a")


def test_marginal_of_d_plus_is_order_independent():
    after_both = born_probabilities(hardy_final(), hardy_partition(PLUS))["D+"]
    plus_only = born_probabilities(hardy_frame_partial(hardy_source(), "plus-only"), hardy_partition(PLUS))["D+"]
    assert after_both == pytest.approx(1 / 6, abs=1e-12)
    assert plus_only == pytest.approx(1 / 6, abs=1e-12)


def test_sample_frequencies():
    rng = RngStream(7)
    n = 30000
    hits = sum(sample(WEIGHTED, AB, CollapsePolicy.COLLAPSE, rng).outcome == "a" for _ in range(n))
    assert abs(hits / n - 1 / 3) < 3 * math.sqrt(2 / 9 / n)


def test_sample_deterministic_ket():
    rng = RngStream(1)
    k = photon_ket({"a": 1.0})
    for _ in range(50):
        outcome = sample(k, AB, CollapsePolicy.COLLAPSE, rng)
        assert outcome.outcome == "a"
        assert outcome.probability == 1.0


def test_sample_replays_with_same_seed():
    a, b = RngStream(3), RngStream(3)
    seq_a = [sample(WEIGHTED, AB, CollapsePolicy.COLLAPSE, a).outcome for _ in range(100)]
    seq_b = [sample(WEIGHTED, AB, CollapsePolicy.COLLAPSE, b).outcome for _ in range(100)]
    assert seq_a == seq_b


def test_unitary_only_keeps_all_branches():
    outcome = sample(WEIGHTED, AB, CollapsePolicy.UNITARY_ONLY, RngStream(5))
    assert outcome.post_state is WEIGHTED


def test_collapse_policy_post_state_on_outcome_class():
    outcome = sample(WEIGHTED, AB, CollapsePolicy.COLLAPSE, RngStream(5))
    assert outcome.post_state.modes(PHOTON) == {outcome.outcome}


@given(
    st.lists(st.floats(0.05, 1.0), min_size=2, max_size=5),
    st.integers(0, 2**32),
)
@settings(max_examples=3, deadline=None)
def test_sampled_frequencies_converge(weights, seed):
    modes = [f"m{i}" for i in range(len(weights))]
    total = sum(weights)
    k = make_ket(
        [(BasisLabel(((PHOTON, m),)), math.sqrt(w / total)) for m, w in zip(modes, weights)]
    )
    partition = ObservablePartition.by_mode(PHOTON, modes)
    probabilities = born_probabilities(k, partition)
    rng = RngStream(seed)
    n = 100_000
    counts = {m: 0 for m in modes}
    for _ in range(n):
        counts[sample(k, partition, CollapsePolicy.UNITARY_ONLY, rng).outcome] += 1
    for m in modes:
        p = probabilities[m]
        assert abs(counts[m] / n - p) <= 4 * math.sqrt(p * (1 - p) / n) + 1e-12


NO_CLICK_ON_B = ObservablePartition(PHOTON, {"click": {"b"}, "no-click": {"a", "c"}})


def test_degenerate_outcome_on_product_leaves_partner():
    k = make_ket(
        [
            (BasisLabel(((PHOTON, "a"), ("partner", "x"))), 1 / math.sqrt(2)),
            (BasisLabel(((PHOTON, "c"), ("partner", "x"))), -1 / math.sqrt(2)),
        ]
    )
    remaining = conditional_state(k, PHOTON, NO_CLICK_ON_B, "no-click")
    assert remaining.subsystems == {"partner"}
    assert remaining.amplitude(BasisLabel.of(partner="x")) == pytest.approx(1.0, abs=1e-12)


def test_degenerate_outcome_keeps_entangled_subsystem():
    k = make_ket(
        [
            (BasisLabel(((PHOTON, "a"), ("partner", "x"))), 0.6),
            (BasisLabel(((PHOTON, "c"), ("partner", "y"))), 0.6),
            (BasisLabel(((PHOTON, "b"), ("partner", "x"))), math.sqrt(0.28)),
        ]
    )
    remaining = conditional_state(k, PHOTON, NO_CLICK_ON_B, "no-click")
    assert remaining.subsystems == {PHOTON, "partner"}
    assert equal_up_to_global_phase(remaining, collapse(k, NO_CLICK_ON_B, "no-click"))
    assert remaining.modes(PHOTON) == {"a", "c"}
