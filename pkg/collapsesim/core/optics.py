import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple, Union

import numpy as np

from collapsesim.core.errors import InvariantViolation, ModeMissing
from collapsesim.core.statevec import BasisLabel, Ket, make_ket

logger = logging.getLogger(__name__)

# Hardy interferometer subsystem names (two particles p+ and p-).
PLUS = "p+"
MINUS = "p-"
PHOTON = "photon"


@dataclass(frozen=True)
class BeamSplitter:
    """Two-port splitter: in_modes[0] transmits to out_modes[0] and reflects to
    out_modes[1]; in_modes[1] reflects to out_modes[0] and transmits to
    out_modes[1]. Transmission sqrt(1-R), reflection i*sqrt(R).
    """

    subsystem: str
    in_modes: Tuple[str, str]
    out_modes: Tuple[str, str]
    reflectivity: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.reflectivity <= 1.0:
            raise InvariantViolation(f"reflectivity {self.reflectivity} not in [0, 1]")
        if self.in_modes[0] == self.in_modes[1] or self.out_modes[0] == self.out_modes[1]:
            raise InvariantViolation("beam splitter ports must be distinct")

    def matrix(self) -> np.ndarray:
        t = math.sqrt(1.0 - self.reflectivity)
        r = 1j * math.sqrt(self.reflectivity)
        # rows: out_modes, columns: in_modes
        return np.array([[t, r], [r, t]], dtype=complex)


@dataclass(frozen=True)
class PhaseShifter:
    subsystem: str
    mode: str
    phase: float


@dataclass(frozen=True)
class Mirror:
    subsystem: str
    from_mode: str
    to_mode: str


Element = Union[BeamSplitter, PhaseShifter, Mirror]


@dataclass(frozen=True)
class OpticalCircuit:
    """Ordered stages of elements; within a stage elements touch disjoint modes.

    alphabet declares the modes each subsystem may occupy at the input,
    vacuum input ports included.
    """

    stages: Tuple[Tuple[Element, ...], ...]
    alphabet: Mapping[str, FrozenSet[str]] = field(default_factory=dict)
    name: str = "circuit"

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(tuple(s) for s in self.stages))
        object.__setattr__(
            self, "alphabet", {k: frozenset(v) for k, v in self.alphabet.items()}
        )
        for index, stage in enumerate(self.stages):
            touched = set()
            for element in stage:
                modes = set(_element_modes(element))
                if touched & modes:
                    raise InvariantViolation(
                        f"stage {index} of {self.name} addresses {sorted(touched & modes)} twice"
                    )
                touched |= modes


def _element_modes(element: Element) -> List[Tuple[str, str]]:
    if isinstance(element, BeamSplitter):
        return [(element.subsystem, m) for m in element.in_modes]
    if isinstance(element, PhaseShifter):
        return [(element.subsystem, element.mode)]
    return [(element.subsystem, element.from_mode)]


def _advance_alphabet(
    alphabet: Dict[str, FrozenSet[str]], element: Element
) -> Dict[str, FrozenSet[str]]:
    modes = set(alphabet.get(element.subsystem, frozenset()))
    if isinstance(element, BeamSplitter):
        modes -= set(element.in_modes)
        modes |= set(element.out_modes)
    elif isinstance(element, Mirror) and element.from_mode in modes:
        modes.discard(element.from_mode)
        modes.add(element.to_mode)
    updated = dict(alphabet)
    updated[element.subsystem] = frozenset(modes)
    return updated


def apply_element(
    k: Ket, e: Element, alphabet: Optional[Mapping[str, FrozenSet[str]]] = None
) -> Ket:
    if isinstance(e, BeamSplitter):
        return _apply_beam_splitter(k, e, alphabet)
    if isinstance(e, PhaseShifter):
        phase = complex(math.cos(e.phase), math.sin(e.phase))
        return k.map_labels(
            lambda label, amp: [
                (label, amp * phase if label.mode(e.subsystem) == e.mode else amp)
            ]
        )
    if isinstance(e, Mirror):
        return k.map_labels(
            lambda label, amp: [
                (label.replace(e.subsystem, e.to_mode), 1j * amp)
                if label.mode(e.subsystem) == e.from_mode
                else (label, amp)
            ]
        )
    raise TypeError(f"unknown optical element {e!r}")


def _apply_beam_splitter(
    k: Ket, bs: BeamSplitter, alphabet: Optional[Mapping[str, FrozenSet[str]]]
) -> Ket:
    if alphabet is not None:
        declared = alphabet.get(bs.subsystem, frozenset())
        missing = [m for m in bs.in_modes if m not in declared]
        if missing:
            raise ModeMissing(
                f"beam splitter on {bs.subsystem} needs modes {list(bs.in_modes)}, "
                f"alphabet lacks {missing}"
            )
    elif not (k.modes(bs.subsystem) & set(bs.in_modes)):
        raise ModeMissing(
            f"no amplitude on {bs.subsystem} modes {list(bs.in_modes)}; "
            f"ket has {sorted(k.modes(bs.subsystem))}"
        )

    u = bs.matrix()

    def split(label: BasisLabel, amp: complex):
        mode = label.mode(bs.subsystem)
        if mode not in bs.in_modes:
            return [(label, amp)]
        column = bs.in_modes.index(mode)
        return [
            (label.replace(bs.subsystem, out), complex(u[row, column]) * amp)
            for row, out in enumerate(bs.out_modes)
        ]

    return k.map_labels(split)


def evolve(k: Ket, c: OpticalCircuit) -> List[Ket]:
    alphabet = dict(c.alphabet)
    for subsystem in k.subsystems:
        alphabet[subsystem] = alphabet.get(subsystem, frozenset()) | k.modes(subsystem)
    states = []
    current = k
    for index, stage in enumerate(c.stages):
        for element in stage:
            current = apply_element(current, element, alphabet)
            alphabet = _advance_alphabet(alphabet, element)
        logger.debug("%s stage %d: %s", c.name, index, current)
        states.append(current)
    return states


# Standard setups


def hardy_source() -> Ket:
    """Path-entangled pair (i|u+ v-> + |v+ v-> + i|v+ u->)/sqrt(3)."""
    s = 1.0 / math.sqrt(3.0)
    return make_ket(
        [
            (BasisLabel(((PLUS, "u"), (MINUS, "v"))), 1j * s),
            (BasisLabel(((PLUS, "v"), (MINUS, "v"))), s),
            (BasisLabel(((PLUS, "v"), (MINUS, "u"))), 1j * s),
        ]
    )


def hardy_splitter(subsystem: str, reflectivity: float = 0.5) -> BeamSplitter:
    return BeamSplitter(subsystem, ("u", "v"), ("c", "d"), reflectivity)


def hardy_circuit(
    reflectivity_plus: float = 0.5, reflectivity_minus: float = 0.5
) -> OpticalCircuit:
    return OpticalCircuit(
        stages=(
            (
                hardy_splitter(PLUS, reflectivity_plus),
                hardy_splitter(MINUS, reflectivity_minus),
            ),
        ),
        alphabet={PLUS: {"u", "v"}, MINUS: {"u", "v"}},
        name="hardy",
    )


def hardy_frame_partial(k0: Ket, which: str) -> Ket:
    """Applies BS+ only ("plus-only"), BS- only ("minus-only") or both."""
    splitters = {
        "plus-only": [hardy_splitter(PLUS)],
        "minus-only": [hardy_splitter(MINUS)],
        "both": [hardy_splitter(PLUS), hardy_splitter(MINUS)],
    }
    if which not in splitters:
        raise ValueError(f"unknown partial evolution {which!r}")
    alphabet = {PLUS: frozenset({"u", "v"}), MINUS: frozenset({"u", "v"})}
    for subsystem in (PLUS, MINUS):
        if not k0.modes(subsystem) or not k0.modes(subsystem) <= alphabet[subsystem]:
            raise ModeMissing(
                f"{subsystem} modes {sorted(k0.modes(subsystem))} are not in {{u, v}}"
            )
    current = k0
    for bs in splitters[which]:
        current = apply_element(current, bs, alphabet)
    return current


def mach_zehnder_circuit(phi_c: float, phi_d: float) -> OpticalCircuit:
    """Stages: BS1, free flight, phase shifters, BS2; input lands on port a."""
    return OpticalCircuit(
        stages=(
            (BeamSplitter(PHOTON, ("a", "a'"), ("d", "c"), 0.5),),
            # free flight between the circled stages
            (PhaseShifter(PHOTON, "c", 0.0), PhaseShifter(PHOTON, "d", 0.0)),
            (PhaseShifter(PHOTON, "c", phi_c), PhaseShifter(PHOTON, "d", phi_d)),
            (BeamSplitter(PHOTON, ("c", "d"), ("f", "e"), 0.5),),
        ),
        alphabet={PHOTON: {"a", "a'"}},
        name="mach-zehnder",
    )


def which_way_circuit(phi: float) -> OpticalCircuit:
    """BS, mirror M on a, three retarding mirrors m on b, path phase on a."""
    return OpticalCircuit(
        stages=(
            (BeamSplitter(PHOTON, ("s", "s'"), ("b0", "a0"), 0.5),),
            (Mirror(PHOTON, "a0", "a"), Mirror(PHOTON, "b0", "b1")),
            (PhaseShifter(PHOTON, "a", phi), Mirror(PHOTON, "b1", "b2")),
            (Mirror(PHOTON, "b2", "b"),),
        ),
        alphabet={PHOTON: {"s", "s'"}},
        name="which-way",
    )


def triple_circuit(theta1: float, theta3: float) -> OpticalCircuit:
    """BS reflects 1/3 into a, BS' halves the rest into b and c; one mirror per
    path plus a pi/2 compensator on c, then the phase shifts theta1, theta3.
    """
    return OpticalCircuit(
        stages=(
            (BeamSplitter(PHOTON, ("s", "s'"), ("t", "a0"), 1.0 / 3.0),),
            (BeamSplitter(PHOTON, ("t", "t'"), ("c0", "b0"), 0.5),),
            (
                Mirror(PHOTON, "a0", "a"),
                Mirror(PHOTON, "b0", "b"),
                Mirror(PHOTON, "c0", "c"),
            ),
            (PhaseShifter(PHOTON, "c", math.pi / 2),),
            (PhaseShifter(PHOTON, "a", theta1), PhaseShifter(PHOTON, "c", theta3)),
        ),
        alphabet={PHOTON: {"s", "s'", "t'"}},
        name="triple-interference",
    )


def photon_ket(amplitudes: Mapping[str, complex]) -> Ket:
    return make_ket(
        [(BasisLabel(((PHOTON, mode),)), amp) for mode, amp in amplitudes.items()]
    )


def source_ket(mode: str = "s") -> Ket:
    return photon_ket({mode: 1.0})
