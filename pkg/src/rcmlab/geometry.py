"""Convex observation windows (boxes and balls) in R^d."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as _gamma


def unit_ball_volume(d: int) -> float:
    """Volume kappa_d of the d-dimensional unit ball."""
    return float(np.pi ** (d / 2) / _gamma(d / 2 + 1))


@dataclass(frozen=True)
class Window:
    """A box (half-side `extent`) or ball (radius `extent`) centred at `center`.

    For both shapes the inradius equals `extent`.
    """

    shape: str
    extent: float
    dim: int
    center: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.shape not in ("box", "ball"):
            raise ValueError(f"unknown window shape {self.shape!r}")
        if self.extent < 0:
            raise ValueError("extent must be nonnegative")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        c = self.center
        if c is None:
            c = np.zeros(self.dim)
        c = np.asarray(c, dtype=float)
        if c.shape != (self.dim,):
            raise ValueError("center has wrong dimension")
        object.__setattr__(self, "center", c)

    @property
    def inradius(self) -> float:
        return self.extent

    @property
    def volume(self) -> float:
        if self.shape == "box":
            return (2.0 * self.extent) ** self.dim
        return unit_ball_volume(self.dim) * self.extent ** self.dim

    def pad(self, padding: float) -> "Window":
        """The window grown by `padding` (box: per side, ball: radius)."""
        if padding < 0:
            raise ValueError("padding must be nonnegative")
        return Window(self.shape, self.extent + padding, self.dim, self.center)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean membership for an (n, d) array of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim:
            raise ValueError("points have wrong dimension")
        delta = pts - self.center
        if self.shape == "box":
            return np.all(np.abs(delta) <= self.extent, axis=-1)
        return np.einsum("...i,...i->...", delta, delta) <= self.extent ** 2

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point to the boundary (negative if outside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        delta = pts - self.center
        if self.shape == "box":
            return self.extent - np.max(np.abs(delta), axis=-1)
        return self.extent - np.sqrt(np.einsum("...i,...i->...", delta, delta))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.center - self.extent
        hi = self.center + self.extent
        return lo, hi

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n i.i.d. uniform points in the window (rejection for balls)."""
        lo, hi = self.bounding_box()
        if self.shape == "box":
            return rng.uniform(lo, hi, size=(n, self.dim))
        out = np.empty((n, self.dim))
        have = 0
        while have < n:
            cand = rng.uniform(lo, hi, size=(max(2 * (n - have), 16), self.dim))
            keep = cand[self.contains(cand)]
            take = min(n - have, len(keep))
            out[have:have + take] = keep[:take]
            have += take
        return out


def lex_order(points: np.ndarray) -> np.ndarray:
    """Indices sorting points by lexicographic order (first coordinate primary)."""
    pts = np.asarray(points)
    keys = tuple(pts[:, k] for k in range(pts.shape[1] - 1, -1, -1))
    return np.lexsort(keys)


def lex_less(x: np.ndarray, y: np.ndarray) -> bool:
    """True if x strictly precedes y lexicographically."""
    for a, b in zip(x, y):
        if a < b:
            return True
        if a > b:
            return False
    return False
