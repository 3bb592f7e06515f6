import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Sequence, Set, Tuple, Union

from collapsesim.core.errors import ImpossibleOutcome, InvariantViolation
from collapsesim.core.measurement import (
    ObservablePartition,
    born_probabilities,
    conditional_state,
)
from collapsesim.core.optics import (
    MINUS,
    PLUS,
    Element,
    apply_element,
    hardy_splitter,
)
from collapsesim.core.statevec import BasisLabel, Ket, marginal, support

logger = logging.getLogger(__name__)

FORCED_TOLERANCE = 1e-10

LAB = "lab"
FRAME_PLUS = "frame-plus"
FRAME_MINUS = "frame-minus"


@dataclass(frozen=True)
class ApplyElement:
    element: Element


@dataclass(frozen=True)
class MeasureSubsystem:
    partition: ObservablePartition

    @property
    def subsystem(self) -> str:
        return self.partition.subsystem


Step = Union[ApplyElement, MeasureSubsystem]


@dataclass(frozen=True)
class MeasurementOrdering:
    name: str
    event_sequence: Tuple[Step, ...]

    def __post_init__(self):
        object.__setattr__(self, "event_sequence", tuple(self.event_sequence))
        measured = [s.subsystem for s in self.event_sequence if isinstance(s, MeasureSubsystem)]
        if len(set(measured)) != len(measured):
            raise InvariantViolation(f"ordering {self.name} measures a subsystem twice")
        elements = [s.element for s in self.event_sequence if isinstance(s, ApplyElement)]
        if len(set(elements)) != len(elements):
            raise InvariantViolation(f"ordering {self.name} applies an element twice")

    @property
    def elements(self) -> FrozenSet[Element]:
        return frozenset(s.element for s in self.event_sequence if isinstance(s, ApplyElement))

    @property
    def measured(self) -> List[str]:
        return [s.subsystem for s in self.event_sequence if isinstance(s, MeasureSubsystem)]


@dataclass(frozen=True)
class OrderedRun:
    state: Ket
    probability: float
    # (subsystem, mode) pairs of unmeasured subsystems held with probability 1
    # right after each conditioning step
    forced: FrozenSet[Tuple[str, str]]
    conditional_support: FrozenSet[BasisLabel]


@dataclass
class RetrodictionReport:
    conditional_supports: Dict[str, Set[BasisLabel]] = field(default_factory=dict)
    forced: Dict[str, Set[Tuple[str, str]]] = field(default_factory=dict)
    joint_required: Set[BasisLabel] = field(default_factory=set)
    missing_from_initial: Set[BasisLabel] = field(default_factory=set)

    @property
    def contradiction(self) -> bool:
        return bool(self.missing_from_initial)


def _run_ordering(
    initial: Ket, ordering: MeasurementOrdering, conditioned_outcomes: Mapping[str, str]
) -> OrderedRun:
    state = initial
    probability = 1.0
    forced: Set[Tuple[str, str]] = set()
    first_support: FrozenSet[BasisLabel] = frozenset()
    for step in ordering.event_sequence:
        if isinstance(step, ApplyElement):
            if step.element.subsystem in state.subsystems:
                state = apply_element(state, step.element)
            continue
        subsystem = step.subsystem
        if subsystem not in conditioned_outcomes:
            continue
        outcome = conditioned_outcomes[subsystem]
        p_outcome = born_probabilities(state, step.partition).get(outcome, 0.0)
        if p_outcome <= 0.0:
            raise ImpossibleOutcome(
                f"{ordering.name}: outcome {outcome!r} on {subsystem} has zero probability"
            )
        probability *= p_outcome
        state = conditional_state(state, subsystem, step.partition, outcome)
        if not first_support:
            first_support = frozenset(support(state))
        for other in state.subsystems:
            for mode, weight in marginal(state, other).items():
                if weight >= 1.0 - FORCED_TOLERANCE:
                    forced.add((other, mode))
        logger.debug(
            "%s: conditioned %s=%s (p=%.6g) -> %s", ordering.name, subsystem, outcome, p_outcome, state
        )
    return OrderedRun(state, probability, frozenset(forced), first_support)


def evolve_ordered(
    initial: Ket, ordering: MeasurementOrdering, conditioned_outcomes: Mapping[str, str]
) -> Ket:
    return _run_ordering(initial, ordering, conditioned_outcomes).state


def conditioning_probability(
    initial: Ket, ordering: MeasurementOrdering, conditioned_outcomes: Mapping[str, str]
) -> float:
    """Probability of observing every conditioned outcome along the ordering."""
    try:
        return _run_ordering(initial, ordering, conditioned_outcomes).probability
    except ImpossibleOutcome:
        return 0.0


def marginal_probability(
    initial: Ket, ordering: MeasurementOrdering, subsystem: str, outcome: str
) -> float:
    """Sums the path probability over all outcomes of the other measured subsystems."""
    partitions = {
        s.subsystem: s.partition
        for s in ordering.event_sequence
        if isinstance(s, MeasureSubsystem)
    }
    others = [name for name in ordering.measured if name != subsystem]
    total = 0.0
    for combo in itertools.product(*(partitions[o].outcome_classes for o in others)):
        outcomes = dict(zip(others, combo))
        outcomes[subsystem] = outcome
        total += conditioning_probability(initial, ordering, outcomes)
    return total


def _initial_subsystem_modes(initial: Ket, forced: Set[Tuple[str, str]]):
    by_subsystem: Dict[str, Set[str]] = {}
    for subsystem, mode in forced:
        if subsystem in initial.subsystems and mode in initial.modes(subsystem):
            by_subsystem.setdefault(subsystem, set()).add(mode)
    return by_subsystem


def retrodiction_report(
    initial: Ket,
    orderings: Sequence[MeasurementOrdering],
    conditioned_outcomes: Mapping[str, str],
) -> RetrodictionReport:
    report = RetrodictionReport()
    all_forced: Set[Tuple[str, str]] = set()
    for ordering in orderings:
        try:
            run = _run_ordering(initial, ordering, conditioned_outcomes)
        except ImpossibleOutcome as e:
            logger.debug("ordering %s cannot produce the outcomes: %s", ordering.name, e)
            report.conditional_supports[ordering.name] = set()
            report.forced[ordering.name] = set()
            continue
        report.conditional_supports[ordering.name] = set(run.conditional_support)
        report.forced[ordering.name] = set(run.forced)
        all_forced |= run.forced

    by_subsystem = _initial_subsystem_modes(initial, all_forced)
    names = sorted(initial.subsystems)
    if names and all(name in by_subsystem for name in names):
        for modes in itertools.product(*(sorted(by_subsystem[n]) for n in names)):
            report.joint_required.add(BasisLabel(tuple(zip(names, modes))))
    initial_support = support(initial)
    report.missing_from_initial = {
        label for label in report.joint_required if label not in initial_support
    }
    return report


# Hardy orderings


def hardy_partition(subsystem: str) -> ObservablePartition:
    sign = subsystem[-1]
    return ObservablePartition(subsystem, {f"C{sign}": {"c"}, f"D{sign}": {"d"}})


def hardy_orderings(
    reflectivity_plus: float = 0.5, reflectivity_minus: float = 0.5
) -> Dict[str, MeasurementOrdering]:
    bs_plus = ApplyElement(hardy_splitter(PLUS, reflectivity_plus))
    bs_minus = ApplyElement(hardy_splitter(MINUS, reflectivity_minus))
    measure_plus = MeasureSubsystem(hardy_partition(PLUS))
    measure_minus = MeasureSubsystem(hardy_partition(MINUS))
    return {
        LAB: MeasurementOrdering(LAB, (bs_plus, bs_minus, measure_plus, measure_minus)),
        # p+ is detected while p- has not yet met BS-
        FRAME_PLUS: MeasurementOrdering(
            FRAME_PLUS, (bs_plus, measure_plus, bs_minus, measure_minus)
        ),
        FRAME_MINUS: MeasurementOrdering(
            FRAME_MINUS, (bs_minus, measure_minus, bs_plus, measure_plus)
        ),
    }
