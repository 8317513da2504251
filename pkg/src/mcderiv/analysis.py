"""Closed-form error analysis and design-parameter optimization.

Everything here works on the Gaussian count model.  Error probabilities for
the threshold detectors average the per-pattern error over all equiprobable
interference bit patterns; the max-sample detector additionally needs the
moments of a maximum of correlated Gaussians, estimated with the classic
pairwise moment-matching recursion.  The signal-to-interference-plus-noise
objective ranks derivative orders without any threshold search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .derivative import truncated_operator
from .detectors import DetectorConfig, fstd_select_sample, select_peak_sample
from .signal import GaussianStats

__all__ = [
    "ClarkResult",
    "SinrReport",
    "conditional_stats",
    "clark_max_stats",
    "clark_max_stats_batch",
    "fstd_theoretical_ber",
    "matd_theoretical_ber",
    "sinr",
    "optimize_threshold",
    "optimize_derivative_order",
    "clark_clamp_count",
]

# enumeration guard: 2^(memory-1) interference patterns are materialized
_MAX_ENUM_BITS = 24

# counts how often the max-moment recursion clamped a negative variance
clark_clamp_count = 0

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _q(x):
    """Gaussian upper-tail probability."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2)


def _phi(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def _q_ratio(num, var):
    """Q(num / sqrt(var)) with the var == 0 limit taken by sign of num."""
    num = np.asarray(num, dtype=float)
    var = np.asarray(var, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = num / np.sqrt(var)
    arg = np.where(var > 0.0, arg, np.where(num > 0.0, np.inf,
                                            np.where(num < 0.0, -np.inf, 0.0)))
    return _q(arg)


@dataclass(frozen=True)
class ClarkResult:
    """Approximate mean and variance of the maximum of jointly Gaussian variables."""

    mean: float
    variance: float


@dataclass(frozen=True)
class SinrReport:
    """Signal-to-interference-plus-noise breakdown for one derivative order.

    value = signal_power / (intended_noise_var + interference_var); the parts
    are kept so callers can inspect what dominates.
    """

    value: float
    signal_power: float
    intended_noise_var: float
    interference_var: float
    order: int
    window: int
    sample_index: int


def conditional_stats(bits, cfg: DetectorConfig, memory: int | None = None) -> GaussianStats:
    """Raw Gaussian statistics of the last symbol's N samples given a bit history.

    ``bits`` holds the last ``memory`` transmitted bits, oldest first, the
    final entry being the symbol under decision.  Mean is the tap sum plus
    the noise floor; covariance is diagonal with the mean on the diagonal.
    """
    mem = cfg.channel.memory if memory is None else memory
    bits = np.asarray(bits)
    if bits.shape != (mem,):
        raise ValueError(f"expected {mem} bits, got shape {bits.shape}")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0 or 1")
    blocks = _tap_blocks(cfg, mem)
    # block d is the tap window of the symbol d places back
    mean = cfg.noise_rate + cfg.molecules * (bits[::-1].astype(float) @ blocks)
    return GaussianStats(mean=mean, covariance=np.diag(mean))


def _tap_blocks(cfg: DetectorConfig, memory: int) -> np.ndarray:
    """Taps reshaped to (memory, N); row d serves the symbol d places back."""
    full = cfg.channel.memory
    if not 1 <= memory <= full:
        raise ValueError(f"memory must be in [1, {full}], got {memory}")
    n = cfg.n_samples
    return cfg.channel.taps.reshape(full, n)[:memory]


def _doubling_sums(contribs: np.ndarray) -> np.ndarray:
    """All subset sums of the rows of ``contribs`` (one column per quantity).

    Row t of the input is the contribution of interference bit t; output row
    j is the sum over set bits of j, so index bit t corresponds to input row
    t.  Enumerates 2^rows patterns.
    """
    out = np.zeros((1, contribs.shape[1]))
    for row in contribs:
        out = np.vstack([out, out + row])
    return out


def _check_enum(memory: int) -> None:
    if memory - 1 > _MAX_ENUM_BITS:
        raise ValueError(
            f"memory {memory} needs 2^{memory - 1} interference patterns; "
            f"limit is 2^{_MAX_ENUM_BITS}"
        )


def _fstd_conditional_moments(cfg: DetectorConfig, memory: int):
    """Signed mean and variance of the selected sample for every pattern.

    Returns (sign, mean1, var1, mean0, var0); the mean arrays are already
    multiplied by the detector's sign so the decision statistic is mean > gamma.
    """
    _check_enum(memory)
    sample = fstd_select_sample(cfg)
    row = truncated_operator(cfg.n_samples, cfg.order)[sample.sample_index]
    weight = row * row
    blocks = _tap_blocks(cfg, memory)
    mean_parts = cfg.molecules * (blocks @ row)
    var_parts = cfg.molecules * (blocks @ weight)
    base_mean = cfg.noise_rate * row.sum()
    base_var = cfg.noise_rate * weight.sum()
    isi = _doubling_sums(np.column_stack([mean_parts[1:], var_parts[1:]]))
    isi_mean, isi_var = isi[:, 0], isi[:, 1]
    mean0 = base_mean + isi_mean
    var0 = base_var + isi_var
    mean1 = mean0 + mean_parts[0]
    var1 = var0 + var_parts[0]
    return sample.sign, sample.sign * mean1, var1, sample.sign * mean0, var0


def fstd_theoretical_ber(cfg: DetectorConfig, memory: int | None = None) -> float:
    """Exact Gaussian-model error probability of the fixed-sample detector.

    Averages over all 2^(memory-1) equiprobable interference patterns; the
    degenerate molecules == 0 case has identical hypotheses and returns 1/2.
    """
    mem = cfg.channel.memory if memory is None else memory
    if cfg.molecules == 0.0:
        return 0.5
    sign, mean1, var1, mean0, var0 = _fstd_conditional_moments(cfg, mem)
    gamma = cfg.threshold
    miss = _q_ratio(mean1 - gamma, var1)
    alarm = _q_ratio(gamma - mean0, var0)
    return float(0.5 * (np.mean(miss) + np.mean(alarm)))


def clark_max_stats_batch(means: np.ndarray, covs: np.ndarray):
    """Moment-matched max statistics for a batch of Gaussian vectors.

    means has shape (batch, n), covs (batch, n, n).  Returns (mean, variance)
    arrays of length batch.  Variables are folded in left to right; each step
    treats the running maximum as Gaussian, matching its first two moments
    and its covariances with the remaining variables.  Degenerate pairs
    (zero-variance difference) keep the dominant variable's moments.
    Negative matched variances clamp to zero and bump ``clark_clamp_count``.
    """
    global clark_clamp_count
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    if means.ndim != 2 or covs.shape != means.shape + (means.shape[1],):
        raise ValueError(
            f"inconsistent shapes {means.shape} and {covs.shape}"
        )
    n = means.shape[1]
    run_mean = means[:, 0].copy()
    run_var = covs[:, 0, 0].copy()
    run_cov = covs[:, 0, :].copy()
    for k in range(1, n):
        mean_k = means[:, k]
        var_k = covs[:, k, k]
        cross = run_cov[:, k]
        gap_var = run_var + var_k - 2.0 * cross
        degenerate = gap_var <= 1e-12 * (run_var + var_k + 1e-300)
        spread = np.sqrt(np.where(degenerate, 1.0, gap_var))
        with np.errstate(invalid="ignore"):
            alpha = (run_mean - mean_k) / spread
        keep = _q(-alpha)
        swap = _q(alpha)
        dens = spread * _phi(alpha)
        new_mean = run_mean * keep + mean_k * swap + dens
        second = ((run_mean ** 2 + run_var) * keep
                  + (mean_k ** 2 + var_k) * swap
                  + (run_mean + mean_k) * dens)
        new_var = second - new_mean ** 2
        negative = (new_var < 0.0) & ~degenerate
        if np.any(negative):
            clark_clamp_count += int(np.sum(negative))
            new_var = np.where(negative, 0.0, new_var)
        new_cov = run_cov * keep[:, None] + covs[:, k, :] * swap[:, None]
        # degenerate pairs: the larger-mean variable wins outright
        dom_first = run_mean >= mean_k
        deg_mean = np.where(dom_first, run_mean, mean_k)
        deg_var = np.where(dom_first, run_var, var_k)
        deg_cov = np.where(dom_first[:, None], run_cov, covs[:, k, :])
        run_mean = np.where(degenerate, deg_mean, new_mean)
        run_var = np.where(degenerate, deg_var, new_var)
        run_cov = np.where(degenerate[:, None], deg_cov, new_cov)
    return run_mean, run_var


def clark_max_stats(stats: GaussianStats) -> ClarkResult:
    """Moment-matched Gaussian approximation of max(X_1 .. X_n)."""
    mean, var = clark_max_stats_batch(stats.mean[None, :], stats.covariance[None, :, :])
    return ClarkResult(mean=float(mean[0]), variance=float(var[0]))


def _matd_conditional_moments(cfg: DetectorConfig, memory: int, chunk: int = 1 << 14):
    """Max-statistic moments (mean, var) per pattern and hypothesis."""
    _check_enum(memory)
    op = truncated_operator(cfg.n_samples, cfg.order)
    blocks = _tap_blocks(cfg, memory)
    n_patterns = 2 ** (memory - 1)
    out = [np.empty(n_patterns) for _ in range(4)]
    isi_blocks = blocks[1:]
    bit_idx = np.arange(memory - 1)
    for start in range(0, n_patterns, chunk):
        pats = np.arange(start, min(start + chunk, n_patterns))
        bits = ((pats[:, None] >> bit_idx[None, :]) & 1).astype(float)
        isi_mean = cfg.noise_rate + cfg.molecules * (bits @ isi_blocks)
        for hyp in (0, 1):
            raw = isi_mean + hyp * cfg.molecules * blocks[0]
            t_mean = raw @ op.T
            t_cov = np.einsum("ki,ci,ji->ckj", op, raw, op)
            mu, var = clark_max_stats_batch(t_mean, t_cov)
            out[2 * hyp][start : start + pats.size] = mu
            out[2 * hyp + 1][start : start + pats.size] = var
    return out[2], out[3], out[0], out[1]  # mean1, var1, mean0, var0


def matd_theoretical_ber(cfg: DetectorConfig, memory: int | None = None) -> float:
    """Approximate error probability of the max-sample detector.

    The per-pattern decision statistic (max of correlated Gaussians) is
    replaced by its moment-matched Gaussian before thresholding.
    """
    mem = cfg.channel.memory if memory is None else memory
    if cfg.molecules == 0.0:
        return 0.5
    mean1, var1, mean0, var0 = _matd_conditional_moments(cfg, mem)
    gamma = cfg.threshold
    miss = _q_ratio(mean1 - gamma, var1)
    alarm = _q_ratio(gamma - mean0, var0)
    return float(0.5 * (np.mean(miss) + np.mean(alarm)))


def sinr(cfg: DetectorConfig, window: int | None = None,
         order: int | None = None) -> SinrReport:
    """Signal-to-interference-plus-noise ratio of the fixed-sample statistic.

    Signal power is half the squared isolated-bit response at the selected
    sample (bits are 1 half the time).  The noise term is half that sample's
    count variance under a lone 1-bit; the interference term is the variance
    of the sample across equiprobable patterns of the last window-1 symbols
    plus the external noise, both after the derivative.
    """
    win = cfg.window if window is None else window
    m = cfg.order if order is None else order
    if not 1 <= win <= cfg.channel.memory:
        raise ValueError(f"window must be in [1, {cfg.channel.memory}], got {win}")
    if not 0 <= m < cfg.n_samples:
        raise ValueError(f"order must be in [0, {cfg.n_samples}), got {m}")
    _check_enum(win)
    if cfg.molecules > 0.0:
        idx = select_peak_sample(cfg.channel, cfg.molecules, m).sample_index
    else:
        idx = 0
    row = truncated_operator(cfg.n_samples, m)[idx]
    weight = row * row
    blocks = _tap_blocks(cfg, win)
    signal_amp = cfg.molecules * (blocks[0] @ row)
    signal_power = 0.5 * signal_amp ** 2
    intended_var = 0.5 * cfg.molecules * (blocks[0] @ weight)
    base_mean = cfg.noise_rate * row.sum()
    base_var = cfg.noise_rate * weight.sum()
    if win > 1:
        mean_parts = cfg.molecules * (blocks[1:] @ row)
        var_parts = cfg.molecules * (blocks[1:] @ weight)
        sums = _doubling_sums(np.column_stack([mean_parts, var_parts]))
        isi_mean = base_mean + sums[:, 0]
        isi_var = base_var + sums[:, 1]
    else:
        isi_mean = np.array([base_mean])
        isi_var = np.array([base_var])
    interference = float(np.mean(isi_var + isi_mean ** 2) - np.mean(isi_mean) ** 2)
    denom = intended_var + interference
    if denom > 0.0:
        value = signal_power / denom
    else:
        value = np.inf if signal_power > 0.0 else 0.0
    return SinrReport(value=float(value), signal_power=float(signal_power),
                      intended_noise_var=float(intended_var),
                      interference_var=interference, order=m, window=win,
                      sample_index=idx)


def optimize_derivative_order(cfg: DetectorConfig, max_order: int | None = None,
                              window: int | None = None) -> int:
    """Derivative order maximizing the SINR objective; ties go to the smaller order."""
    top = cfg.n_samples - 1 if max_order is None else max_order
    if not 0 <= top < cfg.n_samples:
        raise ValueError(f"max_order must be in [0, {cfg.n_samples}), got {top}")
    values = [sinr(cfg, window=window, order=m).value for m in range(top + 1)]
    return int(np.argmax(values))


def _statistic_mean_bounds(cfg: DetectorConfig, memory: int):
    """Exact range of conditional decision-statistic means and a variance cap.

    Works per interference bit without enumeration, so it stays cheap for
    long memories.  Used only to bracket the threshold search.
    """
    n = cfg.n_samples
    blocks = _tap_blocks(cfg, memory)
    if cfg.kind == "fstd":
        if cfg.molecules > 0.0:
            sample = fstd_select_sample(cfg)
            rows = sample.sign * truncated_operator(n, cfg.order)[[sample.sample_index]]
        else:
            rows = truncated_operator(n, cfg.order)[[0]]
    elif cfg.kind == "matd":
        rows = truncated_operator(n, cfg.order)
    elif cfg.kind == "ftd":
        rows = np.ones((1, n))
    else:
        raise ValueError(f"{cfg.kind} does not use a threshold")
    weights = rows * rows
    lo = np.inf
    hi = -np.inf
    var_cap = 0.0
    for row, weight in zip(rows, weights):
        base = cfg.noise_rate * row.sum()
        parts = cfg.molecules * (blocks @ row)
        lo = min(lo, base + np.minimum(parts, 0.0).sum())
        hi = max(hi, base + np.maximum(parts, 0.0).sum())
        var_cap = max(var_cap, cfg.noise_rate * weight.sum()
                      + cfg.molecules * (blocks @ weight).sum())
    return lo, hi, np.sqrt(var_cap)


def _empirical_ber_curve(statistics: np.ndarray, labels: np.ndarray,
                         grid: np.ndarray) -> np.ndarray:
    """Error rate of 'statistic > gamma' against labels, for every grid gamma."""
    statistics = np.asarray(statistics, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if statistics.shape != labels.shape:
        raise ValueError("statistics and labels must have matching shapes")
    order = np.argsort(statistics, kind="stable")
    sorted_ones = labels[order].astype(np.int64)
    # after sorting, symbols with statistic <= gamma decide 0
    below = np.searchsorted(statistics[order], grid, side="right")
    ones_below = np.concatenate([[0], np.cumsum(sorted_ones)])
    total_ones = ones_below[-1]
    n = statistics.size
    # misses: true 1 decided 0; false alarms: true 0 decided 1
    misses = ones_below[below]
    alarms = (n - below) - (total_ones - ones_below[below])
    return (misses + alarms) / n


def optimize_threshold(cfg: DetectorConfig, memory: int | None = None,
                       evaluator: str = "theory", grid_points: int = 201,
                       statistics: np.ndarray | None = None,
                       labels: np.ndarray | None = None) -> float:
    """Grid search for the error-minimizing threshold; ties go to the smaller one.

    The grid spans all conditional statistic means padded by four standard
    deviations.  evaluator 'theory' scores each point with the closed-form
    (fstd) or max-moment (matd) error probability; 'simulation' scores with
    the empirical error of caller-supplied per-symbol statistics and labels.
    """
    if cfg.kind not in ("fstd", "matd", "ftd"):
        raise ValueError(f"{cfg.kind} does not use a threshold")
    mem = cfg.channel.memory if memory is None else memory
    if grid_points < 2:
        raise ValueError(f"grid_points must be >= 2, got {grid_points}")
    lo, hi, sigma = _statistic_mean_bounds(cfg, mem)
    grid = np.linspace(lo - 4.0 * sigma, hi + 4.0 * sigma, grid_points)
    if evaluator == "theory":
        if cfg.kind == "fstd":
            if cfg.molecules == 0.0:
                return float(grid[0])
            _, mean1, var1, mean0, var0 = _fstd_conditional_moments(cfg, mem)
        elif cfg.kind == "matd":
            if cfg.molecules == 0.0:
                return float(grid[0])
            mean1, var1, mean0, var0 = _matd_conditional_moments(cfg, mem)
        else:
            raise ValueError("no closed-form error expression for ftd")
        miss = _q_ratio(mean1[None, :] - grid[:, None], var1[None, :])
        alarm = _q_ratio(grid[:, None] - mean0[None, :], var0[None, :])
        ber = 0.5 * (miss.mean(axis=1) + alarm.mean(axis=1))
    elif evaluator == "simulation":
        if statistics is None or labels is None:
            raise ValueError("simulation evaluator needs statistics and labels")
        ber = _empirical_ber_curve(statistics, labels, grid)
    else:
        raise ValueError(f"unknown evaluator {evaluator!r}")
    return float(grid[int(np.argmin(ber))])
