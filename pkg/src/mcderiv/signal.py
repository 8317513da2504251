"""Emission, reception statistics, and arrival sampling.

On-off keying over molecule counts: a 1-bit releases ``molecules`` at the
first slot of its symbol, a 0-bit releases nothing.  Slot counts are
conditionally Poisson with rate equal to the channel convolution plus a
constant external noise rate; the matched Gaussian model has that rate as
both mean and variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .channel import ChannelVector

__all__ = [
    "EmissionVector",
    "GaussianStats",
    "modulate_bcsk",
    "arrival_rates",
    "received_stats",
    "simulate_arrivals",
    "snr_to_noise_rate",
]

ARRIVAL_MODELS = ("poisson", "gaussian")

# above this rate exact Poisson sampling is replaced by a rounded Gaussian
POISSON_EXACT_LIMIT = 1.0e4

# below this product a direct convolution beats the FFT route
_DIRECT_CONV_LIMIT = 4_000_000


@dataclass(frozen=True)
class EmissionVector:
    """Per-slot release counts for a block of symbols."""

    counts: np.ndarray
    n_samples: int

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=float)
        object.__setattr__(self, "counts", counts)
        if counts.ndim != 1 or counts.size % self.n_samples != 0:
            raise ValueError(
                f"counts must be 1-D with length a multiple of {self.n_samples}"
            )
        if np.any(counts < 0.0):
            raise ValueError("release counts must be nonnegative")

    @property
    def n_symbols(self) -> int:
        return self.counts.size // self.n_samples


@dataclass(frozen=True)
class GaussianStats:
    """Mean vector and covariance matrix of a jointly Gaussian sample block."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        if mean.ndim != 1:
            raise ValueError(f"mean must be 1-D, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )


def modulate_bcsk(bits: np.ndarray, molecules: float, n_samples: int) -> EmissionVector:
    """Map a 0/1 bit sequence to slot release counts.

    Each 1-bit puts ``molecules`` in the first slot of its symbol; every
    other slot is zero.
    """
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ValueError(f"bits must be 1-D, got shape {bits.shape}")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0 or 1")
    if molecules < 0.0:
        raise ValueError(f"molecules must be >= 0, got {molecules}")
    counts = np.zeros(bits.size * n_samples)
    counts[::n_samples] = molecules * bits
    return EmissionVector(counts=counts, n_samples=n_samples)


def arrival_rates(emission: EmissionVector, channel: ChannelVector,
                  noise_rate: float) -> np.ndarray:
    """Per-slot Poisson rates: channel convolution of releases plus noise floor.

    The block starts from silence, so slots before the first release see only
    the noise rate.
    """
    if noise_rate < 0.0:
        raise ValueError(f"noise_rate must be >= 0, got {noise_rate}")
    x = emission.counts
    h = channel.taps
    if x.size * h.size <= _DIRECT_CONV_LIMIT:
        conv = np.convolve(x, h)[: x.size]
    else:
        conv = fftconvolve(x, h)[: x.size]
    return np.maximum(conv, 0.0) + noise_rate


def received_stats(emission: EmissionVector, channel: ChannelVector,
                   noise_rate: float) -> GaussianStats:
    """Gaussian model of the slot counts: mean = rates, covariance = diag(rates)."""
    rates = arrival_rates(emission, channel, noise_rate)
    return GaussianStats(mean=rates, covariance=np.diag(rates))


def sample_counts(rates: np.ndarray, rng: np.random.Generator,
                  model: str = "poisson") -> np.ndarray:
    """Draw one count per slot given its rate.

    model 'poisson': exact Poisson up to POISSON_EXACT_LIMIT, then a rounded
    nonnegative Gaussian with matched mean and variance (integer output).
    model 'gaussian': the continuous Gaussian model itself, unrounded.
    """
    rates = np.asarray(rates, dtype=float)
    if model == "gaussian":
        return rng.normal(rates, np.sqrt(rates))
    if model != "poisson":
        raise ValueError(f"unknown arrival model {model!r}")
    out = np.empty_like(rates)
    small = rates <= POISSON_EXACT_LIMIT
    if np.any(small):
        out[small] = rng.poisson(rates[small])
    if not np.all(small):
        big = ~small
        draw = rng.normal(rates[big], np.sqrt(rates[big]))
        out[big] = np.maximum(np.rint(draw), 0.0)
    return out


def simulate_arrivals(emission: EmissionVector, channel: ChannelVector,
                      noise_rate: float, rng: np.random.Generator,
                      model: str = "poisson") -> np.ndarray:
    """Sample the received slot counts for one block."""
    return sample_counts(arrival_rates(emission, channel, noise_rate), rng, model)


def snr_to_noise_rate(molecules: float, n_samples: int, snr_db: float) -> float:
    """External noise rate giving the requested average signal-to-noise ratio.

    The average received energy of an equiprobable bit is molecules / 2 spread
    over N slots, so noise_rate = molecules / (2 N 10^(snr/10)).
    """
    if molecules < 0.0:
        raise ValueError(f"molecules must be >= 0, got {molecules}")
    return molecules / (2.0 * n_samples * 10.0 ** (snr_db / 10.0))
