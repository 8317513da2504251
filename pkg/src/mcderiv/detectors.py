"""Symbol detectors operating on derivative pre-processed slot counts.

All detectors share the same front end: the received stream is passed through
the order-m forward-difference operator and, where the detector works symbol
by symbol, each symbol keeps only its first N - m post-derivative samples
(the rest mix in the following symbol).

Detector families:
  * threshold: max-sample (matd), fixed-sample (fstd), total-count (ftd)
  * sequence:  exhaustive joint ML over the whole block (mlsd), a banded
    Viterbi restriction with symbol memory L' (banded_mlsd), and a
    decision-feedback per-symbol ML rule (mlda)

Detector objects build their lookup tables once at construction and are
immutable afterwards, so one instance can decode many blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .channel import ChannelVector
from .derivative import apply_derivative, derivative_matrix, truncated_operator

__all__ = [
    "DetectorConfig",
    "FstdSample",
    "select_peak_sample",
    "fstd_select_sample",
    "fstd_detect",
    "matd_detect",
    "ftd_detect",
    "mlda_detect",
    "banded_mlsd_detect",
    "mlsd_detect",
    "make_detector",
    "FixedSampleDetector",
    "MaxSampleDetector",
    "TotalCountDetector",
    "DecisionFeedbackDetector",
    "BandedSequenceDetector",
    "ExhaustiveSequenceDetector",
]

THRESHOLD_KINDS = ("matd", "fstd", "ftd")
SEQUENCE_KINDS = ("mlsd", "banded_mlsd", "mlda")
KINDS = THRESHOLD_KINDS + SEQUENCE_KINDS

# relative diagonal loading applied when a covariance factorization fails
_LOADING_EPS = 1e-9

# decisions are released after this many symbols of Viterbi traceback
_TRACEBACK_FACTOR = 5

# guard against accidentally enormous exhaustive enumerations
_MAX_EXHAUSTIVE_FLOPS = 2e8


@dataclass(frozen=True)
class DetectorConfig:
    """Static description of a detection task.

    Args:
        kind: one of 'matd', 'fstd', 'ftd', 'mlsd', 'banded_mlsd', 'mlda'.
        channel: channel tap vector (carries N and the memory L).
        molecules: release count of a 1-bit.
        noise_rate: external noise rate per slot.
        order: derivative order m applied before detection.
        window: symbol memory L' of the banded and feedback detectors.
        threshold: decision threshold for the threshold kinds.
    """

    kind: str
    channel: ChannelVector
    molecules: float
    noise_rate: float
    order: int = 0
    window: int = 1
    threshold: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.molecules < 0.0:
            raise ValueError(f"molecules must be >= 0, got {self.molecules}")
        if self.noise_rate < 0.0:
            raise ValueError(f"noise_rate must be >= 0, got {self.noise_rate}")
        n = self.channel.n_samples
        if not 0 <= self.order < n:
            raise ValueError(f"order must be in [0, {n}), got {self.order}")
        if self.kind in ("banded_mlsd", "mlda"):
            if not 1 <= self.window <= self.channel.memory:
                raise ValueError(
                    f"window must be in [1, {self.channel.memory}], got {self.window}"
                )
        # threshold may stay None while it is being optimized; detectors check
        if self.threshold is not None and not np.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite, got {self.threshold}")

    def require_threshold(self) -> float:
        if self.threshold is None:
            raise ValueError(f"{self.kind} needs a threshold before detection")
        return self.threshold

    @property
    def n_samples(self) -> int:
        return self.channel.n_samples

    @property
    def kept_samples(self) -> int:
        """Post-derivative samples kept per symbol, N - m."""
        return self.channel.n_samples - self.order


@dataclass(frozen=True)
class FstdSample:
    """Sample choice of the fixed-sample detector.

    sample_index is the 0-based offset within a symbol's truncated
    post-derivative window; sign is +1 or -1 and flips the comparison when
    the strongest response is a negative lobe.
    """

    sample_index: int
    sign: int


def _chol_with_loading(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor, retrying once with relative diagonal loading."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        dim = cov.shape[0]
        eps = _LOADING_EPS * np.trace(cov) / dim
        if eps <= 0.0:
            eps = _LOADING_EPS
        return np.linalg.cholesky(cov + eps * np.eye(dim))


def _stack_chol_with_loading(covs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        return np.stack([_chol_with_loading(c) for c in covs])


def _gaussian_tables(means: np.ndarray, op: np.ndarray):
    """Per-row Gaussian metric tables for count models with diag(mean) covariance.

    Given raw per-slot means (rows) and a linear operator, returns the
    transformed means, precision matrices and log-determinants of
    op diag(mean) op^T.
    """
    t_means = means @ op.T
    covs = np.einsum("ki,wi,ji->wkj", op, means, op)
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    chols = _stack_chol_with_loading(covs)
    logdets = 2.0 * np.sum(np.log(np.diagonal(chols, axis1=1, axis2=2)), axis=1)
    eye = np.broadcast_to(np.eye(op.shape[0]), covs.shape)
    # invert through the (possibly loaded) factor so singular inputs still work
    inv_l = np.linalg.solve(chols, eye.copy())
    precs = inv_l.transpose(0, 2, 1) @ inv_l
    precs = 0.5 * (precs + precs.transpose(0, 2, 1))
    return t_means, precs, logdets


def _truncated_stream(y: np.ndarray, n_samples: int, order: int) -> np.ndarray:
    """Derivative of the whole stream, reshaped to (symbols, N - m)."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size % n_samples != 0:
        raise ValueError(
            f"received length {y.size} is not a whole number of {n_samples}-slot symbols"
        )
    z = apply_derivative(y, order)
    n_sym = y.size // n_samples
    return z.reshape(n_sym, n_samples)[:, : n_samples - order]


def select_peak_sample(channel: ChannelVector, molecules: float, order: int) -> FstdSample:
    """Pick the per-symbol sample with the strongest isolated-bit response.

    The choice maximizes |post-derivative mean| of a lone 1-bit over the
    truncated window; ties go to the earlier sample.  Raises if the response
    is identically zero (molecules == 0), since no sample carries signal.
    """
    from .derivative import intended_mean

    response = intended_mean(channel, molecules, order)
    magnitude = np.abs(response)
    if np.all(magnitude == 0.0):
        raise ValueError("signal response is identically zero, no sample to select")
    idx = int(np.argmax(magnitude))
    return FstdSample(sample_index=idx, sign=1 if response[idx] >= 0.0 else -1)


def fstd_select_sample(cfg: DetectorConfig) -> FstdSample:
    """Sample choice of the fixed-sample detector for a config."""
    return select_peak_sample(cfg.channel, cfg.molecules, cfg.order)


class FixedSampleDetector:
    """Threshold test on one preselected post-derivative sample per symbol."""

    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg
        self.sample = fstd_select_sample(cfg)

    def statistics(self, y: np.ndarray) -> np.ndarray:
        stream = _truncated_stream(y, self.cfg.n_samples, self.cfg.order)
        return self.sample.sign * stream[:, self.sample.sample_index]

    def detect(self, y: np.ndarray) -> np.ndarray:
        return (self.statistics(y) > self.cfg.require_threshold()).astype(np.uint8)


class MaxSampleDetector:
    """Threshold test on the largest truncated post-derivative sample."""

    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg

    def statistics(self, y: np.ndarray) -> np.ndarray:
        stream = _truncated_stream(y, self.cfg.n_samples, self.cfg.order)
        return stream.max(axis=1)

    def detect(self, y: np.ndarray) -> np.ndarray:
        return (self.statistics(y) > self.cfg.require_threshold()).astype(np.uint8)


class TotalCountDetector:
    """Threshold test on the raw per-symbol count total; ignores the derivative."""

    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg

    def statistics(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        n = self.cfg.n_samples
        if y.ndim != 1 or y.size % n != 0:
            raise ValueError(
                f"received length {y.size} is not a whole number of {n}-slot symbols"
            )
        return y.reshape(-1, n).sum(axis=1)

    def detect(self, y: np.ndarray) -> np.ndarray:
        return (self.statistics(y) > self.cfg.require_threshold()).astype(np.uint8)


class DecisionFeedbackDetector:
    """Per-symbol ML decision with decided near ISI and expected far ISI.

    The mean model for symbol k subtracts nothing from the data; instead both
    hypothesis means include the interference estimate: decided bits for the
    last window-1 symbols and half-amplitude releases for the older memory,
    with slots before the block start contributing nothing.
    """

    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg
        n, mem, win = cfg.n_samples, cfg.channel.memory, cfg.window
        taps = cfg.channel.taps
        blocks = taps.reshape(mem, n)
        self._op = truncated_operator(n, cfg.order)
        self._near = cfg.molecules * blocks[1:win]
        # cumulative expected tail: row j covers delays window..window+j
        far = 0.5 * cfg.molecules * blocks[win:]
        self._far_cum = np.cumsum(far, axis=0) if far.size else np.zeros((0, n))
        self._signal = cfg.molecules * blocks[0]
        self._ln2pi_term = (n - cfg.order) * np.log(2.0 * np.pi)

    def _expected_far(self, k: int) -> np.ndarray:
        win, mem, n = self.cfg.window, self.cfg.channel.memory, self.cfg.n_samples
        if self._far_cum.shape[0] == 0 or k < win:
            return np.zeros(n)
        j = min(k, mem - 1) - win
        return self._far_cum[j]

    def _log_likelihood(self, mean: np.ndarray, obs: np.ndarray) -> float:
        cov = (self._op * mean) @ self._op.T
        chol = _chol_with_loading(0.5 * (cov + cov.T))
        z = solve_triangular(chol, obs - self._op @ mean, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        return -0.5 * (self._ln2pi_term + logdet + z @ z)

    def detect(self, y: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        stream = _truncated_stream(y, cfg.n_samples, cfg.order)
        n_sym = stream.shape[0]
        decisions = np.zeros(n_sym, dtype=np.uint8)
        base_noise = cfg.noise_rate
        for k in range(n_sym):
            isi = self._expected_far(k).copy()
            for d in range(1, min(cfg.window, k + 1)):
                if decisions[k - d]:
                    isi += self._near[d - 1]
            mean0 = isi + base_noise
            mean1 = mean0 + self._signal
            obs = stream[k]
            ll1 = self._log_likelihood(mean1, obs)
            ll0 = self._log_likelihood(mean0, obs)
            if ll1 - ll0 > 0.0:
                decisions[k] = 1
        return decisions


class BandedSequenceDetector:
    """Viterbi search over a trellis with symbol memory L'.

    Branch metrics are full Gaussian log-likelihood terms of one symbol's
    truncated post-derivative samples under the 2^L' interference windows;
    interference older than the window is left to the derivative to suppress.
    States encode the last L'-1 decided bits, the block is assumed to start
    from silence, and decisions are released after a traceback delay of
    5 L' symbols with the remainder flushed at block end.
    """

    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg
        n, win = cfg.n_samples, cfg.window
        blocks = cfg.channel.taps.reshape(cfg.channel.memory, n)[:win]
        windows = np.arange(2 ** win)
        # bit d of a window index is the symbol d places back
        bits = (windows[:, None] >> np.arange(win)[None, :]) & 1
        means = cfg.noise_rate + cfg.molecules * (bits @ blocks)
        op = truncated_operator(n, cfg.order)
        self._means, self._precs, self._logdets = _gaussian_tables(means, op)
        self._delay = _TRACEBACK_FACTOR * win

    def _branch_metrics(self, stream: np.ndarray) -> np.ndarray:
        resid = stream[:, None, :] - self._means[None, :, :]
        quad = np.einsum("swk,wkj,swj->sw", resid, self._precs, resid)
        return self._logdets[None, :] + quad

    def detect(self, y: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        stream = _truncated_stream(y, cfg.n_samples, cfg.order)
        n_sym = stream.shape[0]
        branch = self._branch_metrics(stream)
        if cfg.window == 1:
            # degenerate single-state trellis: per-symbol ML, ties to 0
            return (branch[:, 1] < branch[:, 0]).astype(np.uint8)

        n_states = 2 ** (cfg.window - 1)
        metrics = np.full(n_states, np.inf)
        metrics[0] = 0.0
        high_won = np.empty((n_sym, n_states), dtype=np.uint8)
        best = np.empty(n_sym, dtype=np.int64)
        preds = np.arange(2 ** cfg.window) >> 1
        for i in range(n_sym):
            cand = metrics[preds] + branch[i]
            low, high = cand[:n_states], cand[n_states:]
            take_high = high < low
            metrics = np.where(take_high, high, low)
            high_won[i] = take_high
            best[i] = int(np.argmin(metrics))

        top_bit = cfg.window - 1
        decisions = np.empty(n_sym, dtype=np.uint8)

        def parent(t: int, state: int) -> int:
            return (state | (int(high_won[t, state]) << top_bit)) >> 1

        delay = self._delay
        for i in range(delay, n_sym):
            state = int(best[i])
            for t in range(i, i - delay, -1):
                state = parent(t, state)
            decisions[i - delay] = state & 1
        state = int(best[n_sym - 1])
        for t in range(n_sym - 1, max(n_sym - delay, 0) - 1, -1):
            decisions[t] = state & 1
            state = parent(t, state)
        return decisions


class ExhaustiveSequenceDetector:
    """Joint ML over all 2^S bit patterns of a block, on block-level statistics.

    The derivative and its covariance transform act on the whole S*N block
    with no truncation.  Metric ties go to the lexicographically smaller
    pattern (first symbol most significant).
    """

    def __init__(self, cfg: DetectorConfig, n_symbols: int):
        if n_symbols < 1:
            raise ValueError(f"n_symbols must be >= 1, got {n_symbols}")
        total = n_symbols * cfg.n_samples
        if 2 ** n_symbols * total ** 2 > _MAX_EXHAUSTIVE_FLOPS:
            raise ValueError(
                f"exhaustive enumeration over {n_symbols} symbols is too large"
            )
        self.cfg = cfg
        self.n_symbols = n_symbols
        n = cfg.n_samples
        taps = cfg.channel.taps
        # per-symbol contribution of a 1-bit to the whole-block mean
        contrib = np.zeros((n_symbols, total))
        for k in range(n_symbols):
            span = min(taps.size, total - k * n)
            contrib[k, k * n : k * n + span] = cfg.molecules * taps[:span]
        patterns = np.arange(2 ** n_symbols)
        # first symbol in the most significant bit gives lexicographic order
        bits = (patterns[:, None] >> np.arange(n_symbols - 1, -1, -1)[None, :]) & 1
        self._bits = bits.astype(np.uint8)
        means = cfg.noise_rate + bits @ contrib
        if cfg.order == 0:
            self._diag_means = means
            # floored so the all-zero no-signal case ties instead of raising
            self._diag_vars = np.maximum(means, 1e-300)
            self._diag_logdets = np.sum(np.log(self._diag_vars), axis=1)
            self._means = self._precs = self._logdets = None
        else:
            op = derivative_matrix(total, cfg.order)
            self._means, self._precs, self._logdets = _gaussian_tables(means, op)
            self._diag_means = None

    def detect(self, y: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        y = np.asarray(y, dtype=float)
        total = self.n_symbols * cfg.n_samples
        if y.shape != (total,):
            raise ValueError(f"expected {total} slots, got shape {y.shape}")
        if self._diag_means is not None:
            resid = y[None, :] - self._diag_means
            metric = self._diag_logdets + np.sum(resid * resid / self._diag_vars, axis=1)
        else:
            z = apply_derivative(y, cfg.order)
            resid = z[None, :] - self._means
            metric = self._logdets + np.einsum(
                "ck,ckj,cj->c", resid, self._precs, resid
            )
        return self._bits[int(np.argmin(metric))].copy()


def make_detector(cfg: DetectorConfig, n_symbols: int | None = None):
    """Construct the detector object for a config (n_symbols only for mlsd)."""
    if cfg.kind == "fstd":
        return FixedSampleDetector(cfg)
    if cfg.kind == "matd":
        return MaxSampleDetector(cfg)
    if cfg.kind == "ftd":
        return TotalCountDetector(cfg)
    if cfg.kind == "mlda":
        return DecisionFeedbackDetector(cfg)
    if cfg.kind == "banded_mlsd":
        return BandedSequenceDetector(cfg)
    if cfg.kind == "mlsd":
        if n_symbols is None:
            raise ValueError("mlsd needs the block length n_symbols")
        return ExhaustiveSequenceDetector(cfg, n_symbols)
    raise ValueError(f"unknown detector kind {cfg.kind!r}")


def fstd_detect(y: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    """One-shot fixed-sample detection of a block."""
    return FixedSampleDetector(cfg).detect(y)


def matd_detect(y: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    """One-shot max-sample detection of a block."""
    return MaxSampleDetector(cfg).detect(y)


def ftd_detect(y: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    """One-shot total-count detection of a block."""
    return TotalCountDetector(cfg).detect(y)


def mlda_detect(y: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    """One-shot decision-feedback detection of a block."""
    return DecisionFeedbackDetector(cfg).detect(y)


def banded_mlsd_detect(y: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    """One-shot banded Viterbi detection of a block."""
    return BandedSequenceDetector(cfg).detect(y)


def mlsd_detect(y: np.ndarray, cfg: DetectorConfig, n_symbols: int) -> np.ndarray:
    """One-shot exhaustive joint ML detection of a block."""
    return ExhaustiveSequenceDetector(cfg, n_symbols).detect(y)
