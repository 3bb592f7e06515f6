import logging
import math
from dataclasses import dataclass
from typing import Dict, Hashable, List, Mapping, Tuple

import numpy as np

from collapsesim.core.errors import BadWeights
from collapsesim.core.rng import RngStream

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12

# two joint terms of a position-entangled pair
DEFAULT_CONFIGS: Tuple[Tuple[str, str], Tuple[str, str]] = (("x1", "x2"), ("x3", "x4"))


@dataclass(frozen=True)
class RdmConfig:
    """Two-configuration jump process.

    With equal weights the configuration toggles at rate jump_rate; in general
    it leaves configuration j at rate 2*jump_rate*(1 - weights[j]) so the
    occupation of each configuration matches its |psi|^2 weight.
    """

    jump_rate: float = 1.0
    duration: float = 10.0
    tick: float = 1e-3
    weights: Tuple[float, float] = (0.5, 0.5)
    configs: Tuple[Tuple[str, str], Tuple[str, str]] = DEFAULT_CONFIGS

    def __post_init__(self):
        if self.tick <= 0.0:
            raise ValueError("tick must be positive")
        if self.jump_rate < 0.0:
            raise ValueError("jump_rate must be non-negative")
        w0, w1 = self.weights
        if min(w0, w1) < 0.0 or abs(w0 + w1 - 1.0) > WEIGHT_TOLERANCE:
            raise BadWeights(f"configuration weights {self.weights} must sum to 1")

    def leave_rate(self, config_id: int) -> float:
        return 2.0 * self.jump_rate * (1.0 - self.weights[config_id])


@dataclass(frozen=True)
class JointConfiguration:
    config_id: int
    positions: Tuple[str, str]


def sample_position(weights: Mapping[Hashable, float], rng: RngStream) -> Hashable:
    keys = sorted(weights, key=str)
    values = [float(weights[k]) for k in keys]
    if any(v < 0.0 for v in values) or abs(sum(values) - 1.0) > WEIGHT_TOLERANCE:
        raise BadWeights(f"position weights {dict(weights)} must be >= 0 and sum to 1")
    u = rng.random()
    cumulative = 0.0
    chosen = keys[-1]
    for key, value in zip(keys, values):
        if value <= 0.0:
            continue
        chosen = key
        cumulative += value
        if u < cumulative:
            break
    return chosen


def _quantize(t: float, tick: float) -> float:
    return math.ceil(t / tick - 1e-9) * tick


def run_entangled(
    cfg: RdmConfig, rng: RngStream
) -> List[Tuple[float, JointConfiguration]]:
    """Piecewise-constant trajectory: the initial configuration plus one entry
    per jump. Both particles switch on the same tick.
    """
    config_id = sample_position({0: cfg.weights[0], 1: cfg.weights[1]}, rng)
    trajectory = [(0.0, JointConfiguration(config_id, cfg.configs[config_id]))]
    t = 0.0
    while True:
        rate = cfg.leave_rate(config_id)
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        jump_time = _quantize(t, cfg.tick)
        if jump_time > cfg.duration:
            break
        config_id = 1 - config_id
        trajectory.append((jump_time, JointConfiguration(config_id, cfg.configs[config_id])))
    return trajectory


def toggle_count(trajectory: List[Tuple[float, JointConfiguration]]) -> int:
    return len(trajectory) - 1


def occupation(trajectory: List[Tuple[float, JointConfiguration]], duration: float) -> Dict[str, float]:
    """Time-averaged position histogram of each particle."""
    weights: Dict[str, float] = {}
    for (t, joint), (t_next, _) in zip(trajectory, trajectory[1:] + [(duration, None)]):
        for position in joint.positions:
            weights[position] = weights.get(position, 0.0) + (t_next - t) / duration
    return weights


def mismatch_fraction(cfg: RdmConfig, delay: float, trials: int, rng: RngStream) -> float:
    """Fraction of trials where particle 1 read at t and particle 2 read at
    t + delay belong to different joint configurations.
    """
    if delay < 0.0:
        raise ValueError("delay must be non-negative")
    delay = _quantize(delay, cfg.tick) if delay > 0.0 else 0.0
    gen = rng.generator
    state = (gen.random(trials) >= cfg.weights[0]).astype(np.int64)
    start = state.copy()
    elapsed = np.zeros(trials)
    active = np.ones(trials, dtype=bool) if delay > 0.0 else np.zeros(trials, dtype=bool)
    rates = np.array([cfg.leave_rate(0), cfg.leave_rate(1)])
    while active.any():
        idx = np.flatnonzero(active)
        r = rates[state[idx]]
        waits = np.full(idx.size, np.inf)
        moving = r > 0.0
        waits[moving] = gen.exponential(1.0, moving.sum()) / r[moving]
        elapsed[idx] += waits
        # same as quantizing each jump time and comparing with the quantized delay
        jumped = elapsed[idx] <= delay
        state[idx[jumped]] = 1 - state[idx[jumped]]
        active[idx[~jumped]] = False
    fraction = float(np.mean(state != start))
    logger.debug("mismatch at delay %.6g over %d trials: %.6f", delay, trials, fraction)
    return fraction


def expected_mismatch(cfg: RdmConfig, delay: float) -> float:
    w0, w1 = cfg.weights
    return 2.0 * w0 * w1 * (1.0 - math.exp(-2.0 * cfg.jump_rate * delay))


def absence_gap(jump_rate: float, separation: float, speed: float) -> float:
    """Fraction of time a particle jumping between two wave-packets at finite
    speed spends in neither packet (in flight).
    """
    if speed <= 0.0:
        raise ValueError("speed must be positive")
    flight = separation / speed
    return jump_rate * flight / (1.0 + jump_rate * flight)
