import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, Mapping, Optional

from collapsesim.core.errors import BadPartition, ImpossibleOutcome
from collapsesim.core.rng import RngStream
from collapsesim.core.statevec import BasisLabel, Ket, inner, normalize, project

logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-12
FACTOR_TOLERANCE = 1e-12


class CollapsePolicy(str, Enum):
    COLLAPSE = "collapse"
    UNITARY_ONLY = "unitary"


@dataclass(frozen=True)
class ObservablePartition:
    """Outcome classes over the modes of one subsystem."""

    subsystem: str
    outcome_classes: Mapping[str, FrozenSet[str]] = field(default_factory=dict)

    def __post_init__(self):
        classes = {k: frozenset(v) for k, v in self.outcome_classes.items()}
        seen: set = set()
        for outcome, modes in classes.items():
            if seen & modes:
                raise BadPartition(
                    f"outcome {outcome!r} overlaps another class on {sorted(seen & modes)}"
                )
            seen |= modes
        object.__setattr__(self, "outcome_classes", dict(sorted(classes.items())))

    @classmethod
    def by_mode(cls, subsystem: str, modes: Iterable[str]) -> "ObservablePartition":
        return cls(subsystem, {m: {m} for m in modes})

    @property
    def modes(self) -> FrozenSet[str]:
        out: set = set()
        for modes in self.outcome_classes.values():
            out |= modes
        return frozenset(out)

    def outcome_of(self, mode: Optional[str]) -> Optional[str]:
        for outcome, modes in self.outcome_classes.items():
            if mode in modes:
                return outcome
        return None

    def check_exhaustive(self, k: Ket):
        uncovered = {
            label.mode(self.subsystem)
            for label in k.terms
            if self.outcome_of(label.mode(self.subsystem)) is None
        }
        if uncovered:
            raise BadPartition(
                f"partition on {self.subsystem} does not cover modes "
                f"{sorted(str(m) for m in uncovered)}"
            )


@dataclass(frozen=True)
class MeasurementOutcome:
    outcome: str
    probability: float
    post_state: Ket


def _outcome_projection(k: Ket, p: ObservablePartition, outcome: str) -> Ket:
    if outcome not in p.outcome_classes:
        raise ImpossibleOutcome(f"{outcome!r} is not an outcome of {p.subsystem}")
    modes = p.outcome_classes[outcome]
    return project(k, lambda label: label.mode(p.subsystem) in modes)


def born_probabilities(k: Ket, p: ObservablePartition) -> Dict[str, float]:
    p.check_exhaustive(k)
    total = sum(abs(a) ** 2 for a in k.terms.values())
    probabilities = {outcome: 0.0 for outcome in p.outcome_classes}
    for label, amp in k.terms.items():
        outcome = p.outcome_of(label.mode(p.subsystem))
        probabilities[outcome] += abs(amp) ** 2 / total
    return probabilities


def collapse(k: Ket, p: ObservablePartition, outcome: str) -> Ket:
    projected = _outcome_projection(k, p, outcome)
    if projected.norm() ** 2 <= PROBABILITY_TOLERANCE * k.norm() ** 2:
        raise ImpossibleOutcome(
            f"outcome {outcome!r} on {p.subsystem} has zero probability"
        )
    return normalize(projected)


def _factor_out(k: Ket, subsystem: str) -> Optional[Ket]:
    """State of the other subsystems when k = |s> (x) |rest>, else None."""
    by_mode: Dict[Optional[str], Dict[BasisLabel, complex]] = {}
    for label, amp in k.terms.items():
        by_mode.setdefault(label.mode(subsystem), {})[label.without(subsystem)] = amp
    rests = [Ket(terms) for terms in by_mode.values()]
    reference = normalize(rests[0])
    for rest in rests[1:]:
        # Cauchy-Schwarz is tight only for parallel partner states
        if rest.norm() - abs(inner(reference, rest)) > FACTOR_TOLERANCE * rest.norm():
            return None
    return reference


def conditional_state(
    k: Ket, subsystem: str, p: ObservablePartition, outcome: str
) -> Ket:
    """Lüders projection on one subsystem, returning the state of the others.

    When the outcome class spans several modes that stay entangled with the
    rest, no pure conditional state of the others exists and the Lüders state
    is returned with the measured subsystem kept. A fully measured system
    leaves the vacuum ket.
    """
    if subsystem != p.subsystem:
        raise BadPartition(f"partition addresses {p.subsystem}, not {subsystem}")
    if subsystem not in k.subsystems:
        raise BadPartition(f"ket has no subsystem {subsystem!r}")
    collapsed = collapse(k, p, outcome)
    remaining = _factor_out(collapsed, subsystem)
    if remaining is None:
        logger.debug("%s stays entangled within outcome %s; keeping it", subsystem, outcome)
        return collapsed
    return remaining


def sample(
    k: Ket, p: ObservablePartition, policy: CollapsePolicy, rng: RngStream
) -> MeasurementOutcome:
    probabilities = born_probabilities(k, p)
    # inverse CDF over lexicographically sorted outcomes
    u = rng.random()
    cumulative = 0.0
    chosen = None
    for outcome in sorted(probabilities):
        if probabilities[outcome] <= 0.0:
            continue
        chosen = outcome
        cumulative += probabilities[outcome]
        if u < cumulative:
            break
    logger.debug("sampled %s on %s (u=%.6f)", chosen, p.subsystem, u)
    if CollapsePolicy(policy) is CollapsePolicy.COLLAPSE:
        post_state = collapse(k, p, chosen)
    else:
        post_state = k
    return MeasurementOutcome(chosen, probabilities[chosen], post_state)


def joint_born_probabilities(
    k: Ket, partitions: Iterable[ObservablePartition]
) -> Dict[str, float]:
    """Joint outcome table; keys join per-subsystem outcomes with ','."""
    partitions = list(partitions)
    for p in partitions:
        p.check_exhaustive(k)
    total = sum(abs(a) ** 2 for a in k.terms.values())
    table: Dict[str, float] = {}
    for outcomes in _outcome_grid(partitions):
        table[",".join(outcomes)] = 0.0
    for label, amp in k.terms.items():
        key = ",".join(p.outcome_of(label.mode(p.subsystem)) for p in partitions)
        table[key] += abs(amp) ** 2 / total
    return table


def _outcome_grid(partitions):
    grid = [()]
    for p in partitions:
        grid = [prefix + (o,) for prefix in grid for o in p.outcome_classes]
    return grid
