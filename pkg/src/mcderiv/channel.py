"""Diffusion channel between a point transmitter and an absorbing spherical receiver.

Molecules released at distance ``r0`` from the center of a fully absorbing
sphere of radius ``rr`` diffuse with coefficient ``d``.  The fraction absorbed
by time t follows the first-passage law of radial Brownian motion, and the
discrete channel taps are slot-by-slot increments of that fraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

__all__ = [
    "Topology",
    "SlotGrid",
    "ChannelVector",
    "hit_density",
    "hit_cdf",
    "peak_time",
    "grid_from_rate",
    "channel_vector",
]

# exp() underflows to zero well before this, keeps t -> 0+ from producing inf*0
_EXP_UNDERFLOW = 745.0


@dataclass(frozen=True)
class Topology:
    """Transmitter/receiver geometry and diffusion coefficient.

    Args:
        radius_rx: receiver sphere radius rr (um).
        distance_tx: transmitter distance r0 from the sphere center (um).
        diffusion: diffusion coefficient (um^2/s).
    """

    radius_rx: float
    distance_tx: float
    diffusion: float

    def __post_init__(self) -> None:
        if not (self.distance_tx > self.radius_rx > 0.0):
            raise ValueError(
                "need distance_tx > radius_rx > 0, got "
                f"distance_tx={self.distance_tx}, radius_rx={self.radius_rx}"
            )
        if self.diffusion <= 0.0:
            raise ValueError(f"diffusion must be positive, got {self.diffusion}")

    @property
    def gap(self) -> float:
        """Closest-approach distance r0 - rr."""
        return self.distance_tx - self.radius_rx

    @property
    def hit_fraction(self) -> float:
        """Fraction of released molecules ever absorbed, rr / r0."""
        return self.radius_rx / self.distance_tx


@dataclass(frozen=True)
class SlotGrid:
    """Sampling grid: N slots of width ts per symbol, channel memory of L symbols."""

    ts: float
    n_samples: int
    memory: int

    def __post_init__(self) -> None:
        if self.ts <= 0.0:
            raise ValueError(f"ts must be positive, got {self.ts}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.memory < 1:
            raise ValueError(f"memory must be >= 1, got {self.memory}")

    @property
    def symbol_duration(self) -> float:
        """tb = N * ts."""
        return self.n_samples * self.ts

    @property
    def total_slots(self) -> int:
        """Number of tap slots covered by the memory, L * N."""
        return self.memory * self.n_samples


@dataclass(frozen=True)
class ChannelVector:
    """Discrete channel taps h[1..L*N] on a slot grid.

    taps[k] is the probability that a molecule released at the start of slot 1
    is absorbed during slot k+1 (0-based storage).  Synthetic tap vectors may
    be constructed directly for tests; only shape and sign are enforced here.
    """

    taps: np.ndarray
    grid: SlotGrid
    topology: Topology | None = None

    def __post_init__(self) -> None:
        taps = np.asarray(self.taps, dtype=float)
        object.__setattr__(self, "taps", taps)
        if taps.ndim != 1 or taps.size != self.grid.total_slots:
            raise ValueError(
                f"taps must be 1-D of length {self.grid.total_slots}, got shape {taps.shape}"
            )
        if np.any(taps < 0.0):
            raise ValueError("taps must be nonnegative")
        if taps.sum() > 1.0 + 1e-9:
            raise ValueError("taps must sum to at most 1")

    @property
    def n_samples(self) -> int:
        return self.grid.n_samples

    @property
    def memory(self) -> int:
        return self.grid.memory

    def first_symbol(self) -> np.ndarray:
        """Taps seen by the intended symbol itself, h[1..N]."""
        return self.taps[: self.grid.n_samples]


def hit_density(t, topology: Topology):
    """First-arrival time density f(t) of absorption, in 1/s.

    Accepts a scalar or array of times.  t must be positive everywhere;
    the underflow region (t -> 0+) evaluates to exactly 0.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0.0):
        raise ValueError("hit_density requires t > 0")
    gap = topology.gap
    with np.errstate(over="ignore"):
        expo = gap * gap / (4.0 * topology.diffusion * t_arr)
    out = np.zeros_like(t_arr)
    ok = expo < _EXP_UNDERFLOW
    if np.any(ok):
        tk = t_arr[ok] if t_arr.ndim else t_arr
        coeff = topology.hit_fraction * gap / np.sqrt(4.0 * np.pi * topology.diffusion)
        val = coeff * tk ** -1.5 * np.exp(-(gap * gap) / (4.0 * topology.diffusion * tk))
        if t_arr.ndim:
            out[ok] = val
        else:
            out = val
    return out if t_arr.ndim else float(out)


def hit_cdf(t, topology: Topology):
    """Fraction of released molecules absorbed by time t.

    Accepts a scalar or array of times, t >= 0.  Monotone nondecreasing,
    saturating at rr / r0 as t -> inf.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise ValueError("hit_cdf requires t >= 0")
    gap = topology.gap
    out = np.zeros_like(t_arr)
    pos = t_arr > 0.0
    with np.errstate(divide="ignore"):
        arg = gap / np.sqrt(4.0 * topology.diffusion * np.where(pos, t_arr, 1.0))
    vals = topology.hit_fraction * erfc(arg)
    out = np.where(pos, vals, 0.0)
    return out if t_arr.ndim else float(out)


def peak_time(topology: Topology) -> float:
    """Time at which the arrival density peaks, (r0 - rr)^2 / (6 d)."""
    return topology.gap ** 2 / (6.0 * topology.diffusion)


def grid_from_rate(topology: Topology, symbol_rate_ratio: float, n_samples: int,
                   memory: int) -> SlotGrid:
    """Build a SlotGrid from the symbol-duration ratio tb / t_peak.

    symbol_rate_ratio is tb expressed in units of the density peak time, so
    smaller ratios mean faster signaling and heavier intersymbol interference.
    """
    if symbol_rate_ratio <= 0.0:
        raise ValueError(f"symbol_rate_ratio must be positive, got {symbol_rate_ratio}")
    tb = symbol_rate_ratio * peak_time(topology)
    return SlotGrid(ts=tb / n_samples, n_samples=n_samples, memory=memory)


def channel_vector(topology: Topology, grid: SlotGrid) -> ChannelVector:
    """Slot-increment taps h[k] = F(k ts) - F((k-1) ts) for k = 1..L*N."""
    edges = np.arange(grid.total_slots + 1, dtype=float) * grid.ts
    cdf = hit_cdf(edges, topology)
    # monotone in exact arithmetic; clip float residue so taps stay >= 0
    taps = np.maximum(np.diff(cdf), 0.0)
    return ChannelVector(taps=taps, grid=grid, topology=topology)
