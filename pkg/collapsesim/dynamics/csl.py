import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from collapsesim.core.errors import MaxStepsExceeded, NonPhysical
from collapsesim.core.rng import RngStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SseParams:
    """Pure-collapse Itô unraveling: drift -(lam/2)(A-<A>)^2, diffusion sqrt(lam)(A-<A>)."""

    lam: float = 1.0
    dt: float = 1e-3
    eigenvalues: Tuple[float, ...] = (1.0, -1.0)
    max_steps: int = 1_000_000
    eps_conv: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", tuple(float(a) for a in self.eigenvalues))
        if self.lam <= 0.0 or self.dt <= 0.0:
            raise ValueError("lam and dt must be positive")
        if not 0.0 < self.eps_conv < 0.5:
            raise ValueError("eps_conv must lie in (0, 0.5)")

    @classmethod
    def evenly_spaced(cls, dim: int, **kwargs) -> "SseParams":
        """Spectrum spread evenly over [-1, 1], largest first."""
        return cls(eigenvalues=tuple(np.linspace(1.0, -1.0, dim)), **kwargs)


@dataclass(frozen=True)
class SseState:
    amplitudes: np.ndarray
    time: float = 0.0

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> "SseState":
        amps = np.sqrt(np.asarray(weights, dtype=float)).astype(complex)
        return cls(amps / np.linalg.norm(amps))

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass
class NoiseSequence:
    increments: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.increments)

    def scaled(self, index: int, factor: float) -> "NoiseSequence":
        increments = list(self.increments)
        increments[index] *= factor
        return NoiseSequence(increments)

    def to_csv(self, path: str):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "dW"])
            for i, dw in enumerate(self.increments):
                writer.writerow([i, f"{dw:.17g}"])

    @classmethod
    def from_csv(cls, path: str) -> "NoiseSequence":
        with open(path, "r", newline="") as f:
            rows = list(csv.DictReader(f))
        return cls([float(r["dW"]) for r in rows])

    def to_bytes(self) -> bytes:
        return np.asarray(self.increments, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "NoiseSequence":
        return cls(np.frombuffer(data, dtype="<f8").tolist())


class TrajectoryResult(BaseModel):
    outcome: int
    steps: int
    noise: List[float] = Field(description="Recorded dW increments, one per step")

    @property
    def noise_sequence(self) -> NoiseSequence:
        return NoiseSequence(list(self.noise))


class Diagnosis(BaseModel):
    status: str = Field(description="ok, nonphysical or diverged")
    step: Optional[int] = None
    outcome: Optional[int] = None
    flip_step: Optional[int] = Field(
        default=None, description="Increment whose scaling first takes the replay out of ok"
    )
    flip_scale: Optional[float] = None


class EnsembleStats(BaseModel):
    n_traj: int
    converged: int
    frequencies: List[float]
    checkpoint_steps: List[int]
    martingale_means: List[List[float]] = Field(
        description="Ensemble mean of |c_i|^2 at each checkpoint"
    )
    martingale_sem: List[List[float]]
    error_counts: Dict[str, int]


def _multipliers(
    amplitudes: np.ndarray, eigenvalues: np.ndarray, p: SseParams, dW: np.ndarray
) -> np.ndarray:
    """Real step factors 1 + sqrt(lam) d dW - (lam/2) d^2 dt, d = a - <A>, batched on rows."""
    probs = np.abs(amplitudes) ** 2
    mean = probs @ eigenvalues / probs.sum(axis=1)
    d = eigenvalues[None, :] - mean[:, None]
    return 1.0 + math.sqrt(p.lam) * d * dW[:, None] - 0.5 * p.lam * d**2 * p.dt


def _nonphysical_rows(amplitudes: np.ndarray, factors: np.ndarray) -> np.ndarray:
    live = np.abs(amplitudes) > 0.0
    return np.any(live & (factors <= 0.0), axis=1) | ~np.all(np.isfinite(factors), axis=1)


def sse_step(s: SseState, p: SseParams, dW: float, step: Optional[int] = None) -> SseState:
    eigenvalues = np.asarray(p.eigenvalues)
    amps = s.amplitudes[None, :]
    factors = _multipliers(amps, eigenvalues, p, np.array([dW]))
    if _nonphysical_rows(amps, factors)[0]:
        raise NonPhysical(f"step factor flips an amplitude (dW={dW:.6g})", step)
    updated = amps[0] * factors[0]
    norm = np.linalg.norm(updated)
    if not np.isfinite(norm) or norm <= 0.0:
        raise NonPhysical(f"pre-renormalization norm {norm}", step)
    return SseState(updated / norm, s.time + p.dt)


def _converged_index(probs: np.ndarray, eps: float) -> Optional[int]:
    winner = int(np.argmax(probs))
    return winner if probs[winner] >= 1.0 - eps else None


def adversarial_increment(s: SseState, p: SseParams, overshoot: float = 1.5) -> float:
    """dW past the root of the step factor of the component farthest from <A>."""
    eigenvalues = np.asarray(p.eigenvalues)
    probs = s.probabilities
    mean = float(probs @ eigenvalues / probs.sum())
    d = np.where(probs > 0.0, eigenvalues - mean, 0.0)
    i = int(np.argmax(np.abs(d)))
    if d[i] == 0.0:
        raise ValueError("eigenstates admit no adversarial increment")
    root = (1.0 - 0.5 * p.lam * d[i] ** 2 * p.dt) / (-math.sqrt(p.lam) * d[i])
    return overshoot * root


def _replay(initial: SseState, p: SseParams, noise: NoiseSequence) -> Tuple[int, int]:
    """Returns (outcome, steps); raises NonPhysical or MaxStepsExceeded."""
    state = initial
    for step, dW in enumerate(noise.increments, start=1):
        state = sse_step(state, p, dW, step)
        winner = _converged_index(state.probabilities, p.eps_conv)
        if winner is not None:
            return winner, step
    raise MaxStepsExceeded("noise sequence exhausted before convergence", len(noise))


def run_trajectory(initial: SseState, p: SseParams, rng: RngStream) -> TrajectoryResult:
    state = initial
    noise: List[float] = []
    scale = math.sqrt(p.dt)
    for step in range(1, p.max_steps + 1):
        dW = rng.normal(scale)
        noise.append(dW)
        state = sse_step(state, p, dW, step)
        winner = _converged_index(state.probabilities, p.eps_conv)
        if winner is not None:
            return TrajectoryResult(outcome=winner, steps=step, noise=noise)
    raise MaxStepsExceeded("trajectory did not select an eigenstate", p.max_steps)


def replay_trajectory(initial: SseState, p: SseParams, noise: NoiseSequence) -> TrajectoryResult:
    outcome, steps = _replay(initial, p, noise)
    return TrajectoryResult(outcome=outcome, steps=steps, noise=noise.increments[:steps])


def ensemble_stats(
    initial: SseState,
    p: SseParams,
    n_traj: int,
    rng: RngStream,
    checkpoints: Optional[Sequence[int]] = None,
) -> EnsembleStats:
    """Batched Euler-Maruyama over n_traj trajectories sharing one stream.

    Converged trajectories are frozen, so the checkpoint means follow the
    stopped process.
    """
    if n_traj < 100:
        raise ValueError("ensemble needs at least 100 trajectories")
    checkpoints = sorted(set(checkpoints or [0, 100, 300, 1000, 3000, 10000]))
    eigenvalues = np.asarray(p.eigenvalues)
    dim = eigenvalues.size
    amps = np.tile(initial.amplitudes.astype(complex), (n_traj, 1))
    outcome = np.full(n_traj, -1, dtype=np.int64)
    failed = np.zeros(n_traj, dtype=bool)
    active = np.ones(n_traj, dtype=bool)
    errors = {"nonphysical": 0, "max_steps": 0}
    means: List[List[float]] = []
    sems: List[List[float]] = []
    scale = math.sqrt(p.dt)
    gen = rng.generator

    def record():
        probs = np.abs(amps[~failed]) ** 2
        means.append(probs.mean(axis=0).tolist())
        sems.append((probs.std(axis=0, ddof=1) / math.sqrt(max(len(probs), 1))).tolist())

    step = 0
    if 0 in checkpoints:
        record()
    while active.any() and step < p.max_steps:
        step += 1
        idx = np.flatnonzero(active)
        dW = gen.normal(0.0, scale, idx.size)
        factors = _multipliers(amps[idx], eigenvalues, p, dW)
        bad = _nonphysical_rows(amps[idx], factors)
        if bad.any():
            failed[idx[bad]] = True
            active[idx[bad]] = False
            errors["nonphysical"] += int(bad.sum())
        good = idx[~bad]
        updated = amps[good] * factors[~bad]
        updated /= np.linalg.norm(updated, axis=1)[:, None]
        amps[good] = updated
        probs = np.abs(updated) ** 2
        winners = np.argmax(probs, axis=1)
        done = probs[np.arange(good.size), winners] >= 1.0 - p.eps_conv
        outcome[good[done]] = winners[done]
        active[good[done]] = False
        if step in checkpoints:
            record()
        if step % 10000 == 0:
            logger.debug("ensemble step %d: %d trajectories active", step, int(active.sum()))
    if active.any():
        errors["max_steps"] = int(active.sum())
    for c in checkpoints:
        if c > step:
            record()
    done_outcomes = outcome[outcome >= 0]
    counts = np.bincount(done_outcomes, minlength=dim)
    frequencies = (counts / max(done_outcomes.size, 1)).tolist()
    return EnsembleStats(
        n_traj=n_traj,
        converged=int(done_outcomes.size),
        frequencies=frequencies,
        checkpoint_steps=list(checkpoints),
        martingale_means=means,
        martingale_sem=sems,
        error_counts=errors,
    )


def _classify(initial: SseState, p: SseParams, noise: NoiseSequence) -> Diagnosis:
    try:
        outcome, steps = _replay(initial, p, noise)
        return Diagnosis(status="ok", step=steps, outcome=outcome)
    except NonPhysical as e:
        return Diagnosis(status="nonphysical", step=e.step)
    except MaxStepsExceeded as e:
        return Diagnosis(status="diverged", step=e.steps)


def _trace(initial: SseState, p: SseParams, noise: NoiseSequence) -> List[SseState]:
    """States entering each step of an ok replay, up to convergence."""
    states = [initial]
    for step, dW in enumerate(noise.increments, start=1):
        state = sse_step(states[-1], p, dW, step)
        if _converged_index(state.probabilities, p.eps_conv) is not None:
            break
        states.append(state)
    return states


def _replay_rows(
    amplitudes: np.ndarray, p: SseParams, increments: np.ndarray, start: np.ndarray, first: np.ndarray
) -> np.ndarray:
    """Replays row r from increments[start[r]] onward, with first[r] used in place of
    that first increment. Returns the Diagnosis status of every row.
    """
    eigenvalues = np.asarray(p.eigenvalues)
    amps = amplitudes.astype(complex).copy()
    position = start.astype(np.int64).copy()
    status = np.full(len(amps), "", dtype=object)
    opening = np.ones(len(amps), dtype=bool)
    while True:
        idx = np.flatnonzero(status == "")
        exhausted = position[idx] >= increments.size
        status[idx[exhausted]] = "diverged"
        idx = idx[~exhausted]
        if idx.size == 0:
            return status
        dW = np.where(opening[idx], first[idx], increments[np.minimum(position[idx], increments.size - 1)])
        opening[idx] = False
        factors = _multipliers(amps[idx], eigenvalues, p, dW)
        bad = _nonphysical_rows(amps[idx], factors)
        updated = amps[idx] * factors
        norms = np.linalg.norm(updated, axis=1)
        bad |= ~np.isfinite(norms) | (norms <= 0.0)
        status[idx[bad]] = "nonphysical"
        good = idx[~bad]
        amps[good] = updated[~bad] / norms[~bad][:, None]
        position[good] += 1
        probs = np.abs(amps[good]) ** 2
        status[good[probs.max(axis=1) >= 1.0 - p.eps_conv]] = "ok"


def detect_nonphysical(
    noise: NoiseSequence,
    initial: SseState,
    p: SseParams,
    scales: Sequence[float] = (2.0, 5.0, 10.0, 20.0, 50.0),
) -> Diagnosis:
    """Replays the sequence. For an ok sequence also reports the smallest scale
    from the grid which, applied to a single increment, takes the full replay
    out of the ok regime, and the earliest such increment.
    """
    diagnosis = _classify(initial, p, noise)
    if diagnosis.status != "ok":
        return diagnosis
    states = _trace(initial, p, noise)
    amplitudes = np.array([s.amplitudes for s in states])
    increments = np.asarray(noise.increments, dtype=float)
    start = np.arange(len(states))
    for scale in sorted(scales):
        status = _replay_rows(amplitudes, p, increments, start, increments[start] * scale)
        flipped = np.flatnonzero(status != "ok")
        if flipped.size:
            diagnosis.flip_step = int(flipped[0]) + 1
            diagnosis.flip_scale = float(scale)
            logger.debug(
                "scale %.3g at step %d leaves the ok regime (%s)",
                scale,
                diagnosis.flip_step,
                status[flipped[0]],
            )
            return diagnosis
    return diagnosis


def perturbation_scan(
    noise: NoiseSequence, initial: SseState, p: SseParams, index: int, factor: float
) -> Diagnosis:
    """Classifies the replay with the increment at index scaled by factor."""
    return _classify(initial, p, noise.scaled(index, factor))
