import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Set, Tuple

from collapsesim.core.errors import EmptyState, SubsystemClash, ZeroNorm

DROP_TOLERANCE = 1e-14
NORM_TOLERANCE = 1e-12


@dataclass(frozen=True, order=True)
class BasisLabel:
    """Tensor-product basis state: one (subsystem, mode) factor per subsystem.

    Factors are kept sorted by subsystem name so equality ignores the order
    they were given in.
    """

    factors: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted((str(s), str(m)) for s, m in self.factors))
        names = [s for s, _ in ordered]
        if len(set(names)) != len(names):
            raise SubsystemClash(f"duplicate subsystem in label: {names}")
        object.__setattr__(self, "factors", ordered)

    @classmethod
    def of(cls, **modes: str) -> "BasisLabel":
        return cls(tuple(modes.items()))

    @property
    def subsystems(self) -> frozenset:
        return frozenset(s for s, _ in self.factors)

    def mode(self, subsystem: str) -> Optional[str]:
        for s, m in self.factors:
            if s == subsystem:
                return m
        return None

    def replace(self, subsystem: str, mode: str) -> "BasisLabel":
        return BasisLabel(
            tuple((s, mode if s == subsystem else m) for s, m in self.factors)
        )

    def without(self, subsystem: str) -> "BasisLabel":
        return BasisLabel(tuple((s, m) for s, m in self.factors if s != subsystem))

    def join(self, other: "BasisLabel") -> "BasisLabel":
        return BasisLabel(self.factors + other.factors)

    def __str__(self) -> str:
        if not self.factors:
            return "|vac>"
        return "|" + ",".join(f"{s}:{m}" for s, m in self.factors) + ">"


VACUUM = BasisLabel()


@dataclass(frozen=True)
class Ket:
    terms: Mapping[BasisLabel, complex] = field(default_factory=dict)

    def __post_init__(self):
        cleaned = {
            label: complex(amp)
            for label, amp in self.terms.items()
            if abs(amp) >= DROP_TOLERANCE
        }
        object.__setattr__(self, "terms", dict(sorted(cleaned.items())))

    def __iter__(self):
        return iter(self.terms.items())

    def __len__(self) -> int:
        return len(self.terms)

    def amplitude(self, label: BasisLabel) -> complex:
        return self.terms.get(label, 0j)

    @property
    def subsystems(self) -> frozenset:
        names: Set[str] = set()
        for label in self.terms:
            names |= label.subsystems
        return frozenset(names)

    def modes(self, subsystem: str) -> frozenset:
        return frozenset(
            m for label in self.terms if (m := label.mode(subsystem)) is not None
        )

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self.terms.values()))

    def scale(self, factor: complex) -> "Ket":
        return Ket({label: factor * amp for label, amp in self.terms.items()})

    def map_labels(self, fn) -> "Ket":
        """Rebuilds the ket through fn(label, amp) -> iterable of (label, amp)."""
        out: Dict[BasisLabel, complex] = {}
        for label, amp in self.terms.items():
            for new_label, new_amp in fn(label, amp):
                out[new_label] = out.get(new_label, 0j) + new_amp
        return Ket(out)

    def __add__(self, other: "Ket") -> "Ket":
        out = dict(self.terms)
        for label, amp in other.terms.items():
            out[label] = out.get(label, 0j) + amp
        return Ket(out)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(
            f"({a.real:+.6g}{a.imag:+.6g}j){label}" for label, a in self.terms.items()
        )


def make_ket(terms: Iterable[Tuple[BasisLabel, complex]]) -> Ket:
    merged: Dict[BasisLabel, complex] = {}
    for label, amp in terms:
        merged[label] = merged.get(label, 0j) + complex(amp)
    ket = Ket(merged)
    if not ket.terms:
        raise EmptyState("ket needs at least one nonzero amplitude")
    return ket


def basis_ket(label: BasisLabel, amplitude: complex = 1.0) -> Ket:
    return make_ket([(label, amplitude)])


def vacuum_ket() -> Ket:
    return basis_ket(VACUUM)


def tensor(k1: Ket, k2: Ket) -> Ket:
    clash = k1.subsystems & k2.subsystems
    if clash:
        raise SubsystemClash(f"subsystems addressed by both kets: {sorted(clash)}")
    return Ket(
        {
            l1.join(l2): a1 * a2
            for l1, a1 in k1.terms.items()
            for l2, a2 in k2.terms.items()
        }
    )


def inner(k1: Ket, k2: Ket) -> complex:
    small, large = (k1, k2) if len(k1) <= len(k2) else (k2, k1)
    total = 0j
    for label in small.terms:
        if label in large.terms:
            total += k1.terms[label].conjugate() * k2.terms[label]
    return total


def normalize(k: Ket) -> Ket:
    n = k.norm()
    if n == 0.0:
        raise ZeroNorm("cannot normalize the zero ket")
    return k.scale(1.0 / n)


def equal_up_to_global_phase(k1: Ket, k2: Ket, tol: float = 1e-12) -> bool:
    return abs(inner(k1, k2)) >= 1.0 - tol


def support(k: Ket, tol: float = 0.0) -> Set[BasisLabel]:
    return {label for label, amp in k.terms.items() if abs(amp) > tol}


def project(k: Ket, keep) -> Ket:
    """Keeps the terms whose label satisfies keep(label); no renormalization."""
    return Ket({label: amp for label, amp in k.terms.items() if keep(label)})


def marginal(k: Ket, subsystem: str) -> Dict[str, float]:
    """Mode distribution of one subsystem; labels without it count as mode None."""
    weights: Dict[str, float] = {}
    total = sum(abs(a) ** 2 for a in k.terms.values())
    if total == 0.0:
        return weights
    for label, amp in k.terms.items():
        mode = label.mode(subsystem)
        weights[mode] = weights.get(mode, 0.0) + abs(amp) ** 2 / total
    return weights
