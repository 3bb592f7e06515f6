import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from collapsesim.core.errors import BadWeights, ZeroIntensity
from collapsesim.core.rng import RngStream

DEFAULT_KAPPA = 2.0 * math.pi
DEFAULT_GRID_POINTS = 1024


@dataclass(frozen=True)
class PlaneWaveComponent:
    amplitude: complex
    kappa: float
    phase_offset: float = 0.0


@dataclass(frozen=True)
class IntensityMap:
    grid: np.ndarray
    values: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def maximum(self) -> float:
        return float(np.max(self.values))

    @property
    def minimum(self) -> float:
        return float(np.min(self.values))

    def rows(self):
        return [(float(x), float(v)) for x, v in zip(self.grid, self.values)]


def screen_grid(
    points: int = DEFAULT_GRID_POINTS, kappa: float = DEFAULT_KAPPA, periods: int = 1
) -> np.ndarray:
    """Uniform grid over whole periods of 2*pi/kappa, right end excluded."""
    length = periods * 2.0 * math.pi / kappa
    return np.linspace(0.0, length, int(points), endpoint=False)


def intensity_pattern(
    components: Sequence[PlaneWaveComponent], grid: np.ndarray
) -> IntensityMap:
    if not components:
        raise ValueError("intensity pattern needs at least one component")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("screen grid is empty")
    field = np.zeros(grid.shape, dtype=complex)
    for c in components:
        field += c.amplitude * np.exp(1j * (c.kappa * grid + c.phase_offset))
    return IntensityMap(grid, np.abs(field) ** 2)


def mixture_intensity(
    branches: Sequence[Tuple[float, Sequence[PlaneWaveComponent]]],
    grid: np.ndarray,
) -> IntensityMap:
    weights = np.array([w for w, _ in branches], dtype=float)
    if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-12:
        raise BadWeights(f"mixture weights {weights.tolist()} must be >= 0 and sum to 1")
    grid = np.asarray(grid, dtype=float)
    values = np.zeros(grid.shape, dtype=float)
    for weight, components in branches:
        values += weight * intensity_pattern(components, grid).values
    return IntensityMap(grid, values)


def visibility(m: IntensityMap) -> float:
    if m.values.size == 0:
        raise ValueError("empty intensity map")
    hi, lo = m.maximum, m.minimum
    if hi + lo <= 0.0:
        raise ZeroIntensity("visibility of an all-zero map")
    return (hi - lo) / (hi + lo)


def sample_hits(m: IntensityMap, n: int, rng: RngStream) -> np.ndarray:
    """Plate hit positions, one per trial, drawn from the normalized intensity."""
    total = m.values.sum()
    if total <= 0.0:
        raise ZeroIntensity("cannot sample hits from an all-zero map")
    return rng.generator.choice(m.grid, size=int(n), p=m.values / total)


def hit_histogram(
    hits: np.ndarray, grid: np.ndarray, bins: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    bins = bins or min(64, len(grid))
    step = grid[1] - grid[0] if len(grid) > 1 else 1.0
    counts, edges = np.histogram(hits, bins=bins, range=(grid[0], grid[-1] + step))
    return counts, edges
