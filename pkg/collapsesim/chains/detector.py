import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from pydantic import BaseModel, Field

from collapsesim.core.errors import (
    InvariantViolation,
    NotMacroscopic,
    PoolExhausted,
    UnsupportedTopology,
)
from collapsesim.core.rng import RngStream
from collapsesim.core.statevec import Ket

logger = logging.getLogger(__name__)

DEFAULT_POOL = 10**12
DEFAULT_N_MACRO = 10**6


@dataclass(frozen=True)
class Branch:
    """One packet's branch: perturbed_a counts A-particles (set hit by packet a),
    perturbed_b counts B-particles (set hit by packet b)."""

    label: str
    amplitude: complex
    perturbed_a: int = 0
    perturbed_b: int = 0

    @property
    def perturbed(self) -> int:
        return self.perturbed_a + self.perturbed_b


@dataclass(frozen=True)
class ChainState:
    branches: Tuple[Branch, ...]
    early: str = "a"
    late: str = "b"
    pool_a: int = DEFAULT_POOL
    pool_b: int = DEFAULT_POOL
    step: int = 0

    def __post_init__(self):
        labels = [b.label for b in self.branches]
        if len(labels) > 2 or len(set(labels)) != len(labels):
            raise InvariantViolation(f"chain branches {labels} must be distinct, at most 2")
        for b in self.branches:
            if b.label not in (self.early, self.late):
                raise InvariantViolation(f"unknown branch {b.label!r}")
            # the two sets of perturbed particles are disjoint
            if b.label == self.early and b.perturbed_b != 0:
                raise InvariantViolation(f"branch {b.label} has B-particles perturbed")
            if b.label == self.late and b.perturbed_a != 0:
                raise InvariantViolation(f"branch {b.label} has A-particles perturbed")
            if b.perturbed_a > self.pool_a or b.perturbed_b > self.pool_b:
                raise InvariantViolation(f"branch {b.label} exceeds its particle pool")

    def branch(self, label: str) -> Optional[Branch]:
        for b in self.branches:
            if b.label == label:
                return b
        return None

    @property
    def weight(self) -> float:
        return sum(abs(b.amplitude) ** 2 for b in self.branches)


class CollapseReport(BaseModel):
    selected_branch: str
    steps_to_threshold: int
    final_perturbed_a: int
    final_perturbed_b: int
    losing_perturbed: int = Field(
        description="Perturbed particles left by the packet that did not trigger"
    )


def seed(photon: Ket, n_initial: int, early: str = "a", late: str = "b") -> ChainState:
    if n_initial < 1:
        raise ValueError("n_initial must be at least 1")
    labels = list(photon.terms)
    if len(labels) > 2:
        raise UnsupportedTopology(f"{len(labels)} wave-packets; the chain handles at most 2")
    branches = []
    for label in labels:
        if len(label.factors) != 1:
            raise UnsupportedTopology(f"photon label {label} is not single-particle")
        mode = label.factors[0][1]
        if mode not in (early, late):
            raise UnsupportedTopology(f"packet {mode!r} is neither {early!r} nor {late!r}")
        amp = photon.terms[label]
        # packet a has reached the detector; b has not yet arrived
        branches.append(Branch(mode, amp, n_initial if mode == early else 0, 0))
    return ChainState(tuple(sorted(branches, key=lambda b: b.label)), early, late)


def _grow(count: int, growth: float, pool: int, step: int, name: str) -> int:
    grown = math.ceil(count * growth)
    if grown > pool:
        raise PoolExhausted(f"{name} pool of {pool} particles exhausted", step)
    return grown


def amplify(
    cs: ChainState,
    steps: int,
    growth: float = 2.0,
    late_arrival_step: Optional[int] = None,
    k_initial: int = 1,
) -> ChainState:
    """Geometric avalanche: each branch multiplies its own perturbed count by
    growth per step. The late packet starts perturbing k_initial B-particles at
    absolute step late_arrival_step.
    """
    if growth <= 1.0:
        raise ValueError("growth must exceed 1")
    branches = {b.label: b for b in cs.branches}
    step = cs.step
    for _ in range(steps):
        late = branches.get(cs.late)
        if late is not None and late.perturbed_b == 0 and late_arrival_step == step:
            branches[cs.late] = replace(late, perturbed_b=k_initial)
        for label, b in branches.items():
            branches[label] = replace(
                b,
                perturbed_a=_grow(b.perturbed_a, growth, cs.pool_a, step + 1, "A")
                if b.perturbed_a
                else 0,
                perturbed_b=_grow(b.perturbed_b, growth, cs.pool_b, step + 1, "B")
                if b.perturbed_b
                else 0,
            )
        step += 1
    logger.debug("amplified to step %d: %s", step, list(branches.values()))
    return replace(cs, branches=tuple(branches[k] for k in sorted(branches)), step=step)


def amplify_until(
    cs: ChainState,
    n_macro: int,
    growth: float = 2.0,
    late_arrival_step: Optional[int] = None,
    k_initial: int = 1,
    max_steps: int = 10_000,
) -> ChainState:
    """Steps until every branch holds at least n_macro perturbed particles."""
    if late_arrival_step is None:
        late_arrival_step = cs.step
    while any(b.perturbed < n_macro for b in cs.branches):
        if cs.step >= max_steps:
            raise NotMacroscopic(f"no macroscopic avalanche within {max_steps} steps")
        cs = amplify(cs, 1, growth, late_arrival_step, k_initial)
    return cs


def cross_branch_amplitude(cs: ChainState) -> complex:
    """Amplitude of configurations with both particle sets perturbed together."""
    return sum(
        (b.amplitude for b in cs.branches if b.perturbed_a > 0 and b.perturbed_b > 0),
        0j,
    )


def threshold_collapse(cs: ChainState, n_macro: int, rng: RngStream) -> CollapseReport:
    if not any(b.perturbed >= n_macro for b in cs.branches):
        raise NotMacroscopic(f"no branch has reached {n_macro} perturbed particles")
    total = cs.weight
    u = rng.random() * total
    cumulative = 0.0
    selected = cs.branches[-1]
    for b in cs.branches:
        cumulative += abs(b.amplitude) ** 2
        if u < cumulative:
            selected = b
            break
    # counts the losing packet left inside the surviving branch
    losing = selected.perturbed_b if selected.label == cs.early else selected.perturbed_a
    return CollapseReport(
        selected_branch=selected.label,
        steps_to_threshold=cs.step,
        final_perturbed_a=selected.perturbed_a,
        final_perturbed_b=selected.perturbed_b,
        losing_perturbed=losing,
    )
