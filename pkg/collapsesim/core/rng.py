import zlib

import numpy as np


class RngStream:
    """Named, seedable stream; children are derived from names, not call order."""

    def __init__(self, seed: int, name: str = "root", _path: tuple = ()):
        self._seed = int(seed)
        self._name = name
        self._path = _path
        sequence = np.random.SeedSequence(entropy=self._seed, spawn_key=_path)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def name(self) -> str:
        return self._name

    def split(self, name: str) -> "RngStream":
        key = zlib.crc32(name.encode("utf-8"))
        return RngStream(self._seed, f"{self._name}/{name}", self._path + (key,))

    def random(self) -> float:
        return float(self.generator.random())

    def normal(self, scale: float = 1.0) -> float:
        return float(self.generator.normal(0.0, scale))

    def exponential(self, scale: float) -> float:
        return float(self.generator.exponential(scale))

    def __repr__(self) -> str:
        return f"RngStream(name={self._name!r}, seed={self._seed})"
