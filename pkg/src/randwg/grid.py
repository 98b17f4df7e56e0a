"""Uniform periodic cross-range grid shared by the propagators and samplers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid of ``points`` nodes over a window of length ``width``.

    Nodes sit at ``dx * (n - points // 2)`` so that ``X = 0`` is a node.
    """

    width: float
    points: int

    def __post_init__(self):
        if not (np.isfinite(self.width) and self.width > 0):
            raise ValueError("grid width must be positive")
        m = int(self.points)
        if m < 2 or m & (m - 1):
            raise ValueError("grid points must be a power of two")

    @property
    def dx(self) -> float:
        return self.width / self.points

    @property
    def x(self) -> np.ndarray:
        return self.dx * (np.arange(self.points) - self.points // 2)

    @property
    def kappa(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.points, d=self.dx)

    @property
    def kappa_max(self) -> float:
        return np.pi / self.dx

    def index(self, X: float) -> int:
        """Node index of ``X``; raises if ``X`` is not a node."""
        n = (X / self.dx) + self.points // 2
        i = int(round(n))
        if abs(n - i) > 1e-9 or not 0 <= i < self.points:
            raise GridMismatch(f"X={X} is not a node of the grid")
        return i

    def delta(self, X: float) -> np.ndarray:
        """Grid delta at node ``X``: height 1/dx at one node, zero elsewhere."""
        d = np.zeros(self.points, dtype=complex)
        d[self.index(X)] = 1.0 / self.dx
        return d

    def check(self, values: np.ndarray) -> None:
        if np.shape(values)[-1] != self.points:
            raise GridMismatch(
                f"last axis has {np.shape(values)[-1]} points, grid has {self.points}")
