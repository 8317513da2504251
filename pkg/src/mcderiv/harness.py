"""Monte Carlo experiment harness.

An ExperimentConfig pins down everything a bit-error run needs: geometry,
signaling grid, detector set, stopping rules and seeding.  Blocks of symbols
are simulated independently with one counter-derived RNG stream per block,
so results are identical for any worker count; blocks are always accumulated
in index order and the run stops at the first block that satisfies the error
or bit budget.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .channel import ChannelVector, Topology, channel_vector, grid_from_rate
from .detectors import (
    DetectorConfig,
    KINDS,
    SEQUENCE_KINDS,
    THRESHOLD_KINDS,
    make_detector,
)
from .signal import ARRIVAL_MODELS, sample_counts, snr_to_noise_rate

__all__ = [
    "ExperimentConfig",
    "BerRecord",
    "CSV_LABELS",
    "ConfigError",
    "load_config",
    "config_from_dict",
    "config_to_dict",
    "build_channel",
    "run_ber_point",
    "run_figure_sweep",
    "write_csv",
    "FIGURE_IDS",
    "WORKERS_ENV",
]

SCHEMA_VERSION = 1

# caps the process pool; unset or "1" keeps everything in-process
WORKERS_ENV = "MCDERIV_WORKERS"

GAMMA_POLICIES = ("fixed", "optimize-theory", "optimize-empirical")

FIGURE_IDS = ("fig4", "fig5", "fig7", "fig8")

# memory beyond which closed-form error columns are left empty
_THEORY_MEMORY_LIMIT = 23

# simulated arrival models plus the deterministic mean-injection mode
_SIM_MODELS = ARRIVAL_MODELS + ("mean",)

# RNG stream namespaces: payload blocks vs threshold-calibration blocks
_STREAM_MAIN = 0
_STREAM_CALIBRATION = 1

_DETECTOR_IDS = {kind: i for i, kind in enumerate(KINDS)}


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configs."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment family.

    molecules_grid is the swept release count; noise rate follows each grid
    point through the configured snr_db.  windows is only used by sweeps
    whose x-axis is the detector memory.
    """

    topology: Topology
    symbol_rate_ratio: float
    samples_per_symbol: int
    channel_memory: int
    orders: tuple[int, ...]
    molecules_grid: tuple[float, ...]
    snr_db: float
    detectors: tuple[str, ...]
    window: int = 2
    windows: tuple[int, ...] = ()
    bit_budget: int = 1_000_000
    target_errors: int = 100
    seed: int = 0
    arrival_model: str = "poisson"
    gamma_policy: str = "optimize-theory"
    gamma_value: float | None = None
    gamma_grid_points: int = 201
    calibration_bits: int = 200_000
    block_symbols: int = 1000
    warmup_symbols: int | None = None

    def __post_init__(self) -> None:
        if self.bit_budget < 10_000:
            raise ConfigError(f"bit_budget must be >= 10000, got {self.bit_budget}")
        if self.target_errors < 1:
            raise ConfigError(f"target_errors must be >= 1, got {self.target_errors}")
        if list(self.molecules_grid) != sorted(self.molecules_grid):
            raise ConfigError("molecules_grid must be ascending")
        if any(m < 0 for m in self.molecules_grid):
            raise ConfigError("molecules_grid entries must be >= 0")
        for kind in self.detectors:
            if kind not in KINDS:
                raise ConfigError(f"unknown detector {kind!r}")
        if self.arrival_model not in _SIM_MODELS:
            raise ConfigError(f"unknown arrival_model {self.arrival_model!r}")
        if self.gamma_policy not in GAMMA_POLICIES:
            raise ConfigError(f"unknown gamma_policy {self.gamma_policy!r}")
        if self.gamma_policy == "fixed" and self.gamma_value is None:
            raise ConfigError("gamma_policy 'fixed' needs gamma_value")
        warm = self.effective_warmup
        if warm >= self.block_symbols:
            raise ConfigError(
                f"warmup {warm} must be smaller than block_symbols {self.block_symbols}"
            )
        for m in self.orders:
            if not 0 <= m < self.samples_per_symbol:
                raise ConfigError(
                    f"order {m} out of range for {self.samples_per_symbol} samples"
                )

    @property
    def effective_warmup(self) -> int:
        """Symbols discarded at the head of each block; defaults to the memory."""
        return self.channel_memory if self.warmup_symbols is None else self.warmup_symbols


@dataclass(frozen=True)
class BerRecord:
    """One simulated bit-error-rate measurement."""

    detector: str
    order: int
    window: int
    molecules: float
    threshold: float
    ber: float
    std_error: float
    bits_simulated: int
    bit_errors: int
    wall_time: float

    _FIELDS = ("detector", "order", "window", "molecules", "threshold", "ber",
               "std_error", "bits_simulated", "bit_errors", "wall_time")


# CSV column labels for BerRecord fields, in field order; the conventional
# one-letter symbol names keep emitted tables compact and diff-friendly
CSV_LABELS = {"order": "m", "window": "L_prime", "molecules": "M",
              "threshold": "gamma"}


def build_channel(cfg: ExperimentConfig) -> ChannelVector:
    grid = grid_from_rate(cfg.topology, cfg.symbol_rate_ratio,
                          cfg.samples_per_symbol, cfg.channel_memory)
    return channel_vector(cfg.topology, grid)


def detector_config(cfg: ExperimentConfig, kind: str, order: int, molecules: float,
                    window: int | None = None, threshold: float | None = None,
                    channel: ChannelVector | None = None) -> DetectorConfig:
    """Assemble the static detector description for one grid point."""
    chan = build_channel(cfg) if channel is None else channel
    noise = snr_to_noise_rate(molecules, cfg.samples_per_symbol, cfg.snr_db)
    return DetectorConfig(kind=kind, channel=chan, molecules=molecules,
                          noise_rate=noise, order=order,
                          window=cfg.window if window is None else window,
                          threshold=threshold)


def _stream_rng(cfg: ExperimentConfig, dcfg: DetectorConfig, namespace: int,
                block: int) -> np.random.Generator:
    """Independent, reproducible RNG stream for one simulated block."""
    mol_key = int(np.float64(dcfg.molecules).view(np.uint64))
    return np.random.default_rng([cfg.seed, namespace, _DETECTOR_IDS[dcfg.kind],
                                  dcfg.order, dcfg.window, mol_key, block])


def _simulate_received(cfg: ExperimentConfig, dcfg: DetectorConfig,
                       namespace: int, block: int):
    """One block of the channel: random bits and their received slot values."""
    rng = _stream_rng(cfg, dcfg, namespace, block)
    n = cfg.samples_per_symbol
    n_sym = cfg.block_symbols
    bits = rng.integers(0, 2, n_sym).astype(np.uint8)
    releases = np.zeros(n_sym * n)
    releases[::n] = dcfg.molecules * bits
    taps = dcfg.channel.taps
    if releases.size * taps.size <= 4_000_000:
        rates = np.convolve(releases, taps)[: releases.size]
    else:
        from scipy.signal import fftconvolve

        rates = fftconvolve(releases, taps)[: releases.size]
    rates = np.maximum(rates, 0.0) + dcfg.noise_rate
    if cfg.arrival_model == "mean":
        received = rates
    else:
        received = sample_counts(rates, rng, cfg.arrival_model)
    return bits, received


def _simulate_block(cfg: ExperimentConfig, dcfg: DetectorConfig, detector,
                    namespace: int, block: int):
    """One block: draw bits, sample arrivals, decode.  Returns (bits, decisions)."""
    bits, received = _simulate_received(cfg, dcfg, namespace, block)
    return bits, detector.detect(received)


def _block_range_task(args):
    """Worker entry: simulate a span of blocks with one detector instance."""
    cfg, dcfg, namespace, start, count = args
    detector = make_detector(dcfg, cfg.block_symbols if dcfg.kind == "mlsd" else None)
    warm = cfg.effective_warmup
    results = []
    for block in range(start, start + count):
        bits, decided = _simulate_block(cfg, dcfg, detector, namespace, block)
        errors = int(np.sum(bits[warm:] != decided[warm:]))
        results.append((errors, bits.size - warm))
    return results


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    return max(workers, 1)


def _run_counting_loop(cfg: ExperimentConfig, dcfg: DetectorConfig,
                       namespace: int = _STREAM_MAIN):
    """Accumulate block error counts, in block order, until a stop rule fires."""
    per_block = cfg.block_symbols - cfg.effective_warmup
    max_blocks = math.ceil(cfg.bit_budget / per_block)
    workers = min(_worker_count(), max_blocks)
    errors = 0
    bits = 0

    def include(block_results) -> bool:
        nonlocal errors, bits
        for err, cnt in block_results:
            errors += err
            bits += cnt
            if errors >= cfg.target_errors or bits >= cfg.bit_budget:
                return True
        return False

    if workers == 1:
        detector = make_detector(dcfg, cfg.block_symbols if dcfg.kind == "mlsd" else None)
        warm = cfg.effective_warmup
        for block in range(max_blocks):
            blk_bits, decided = _simulate_block(cfg, dcfg, detector, namespace, block)
            err = int(np.sum(blk_bits[warm:] != decided[warm:]))
            if include([(err, blk_bits.size - warm)]):
                break
        return errors, bits

    # parallel: fixed-size waves, still accumulated strictly in block order
    chunk = 4
    with ProcessPoolExecutor(max_workers=workers) as pool:
        block = 0
        stopped = False
        while block < max_blocks and not stopped:
            tasks = []
            for _ in range(workers):
                if block >= max_blocks:
                    break
                count = min(chunk, max_blocks - block)
                tasks.append((cfg, dcfg, namespace, block, count))
                block += count
            for result in pool.map(_block_range_task, tasks):
                if include(result) and not stopped:
                    stopped = True
                    break
    return errors, bits


def _calibration_statistics(cfg: ExperimentConfig, dcfg: DetectorConfig):
    """Per-symbol decision statistics and labels for the empirical threshold search."""
    detector = make_detector(dcfg)
    per_block = cfg.block_symbols - cfg.effective_warmup
    n_blocks = max(1, math.ceil(cfg.calibration_bits / per_block))
    warm = cfg.effective_warmup
    stats = []
    labels = []
    for block in range(n_blocks):
        bits, received = _simulate_received(cfg, dcfg, _STREAM_CALIBRATION, block)
        stats.append(detector.statistics(received)[warm:])
        labels.append(bits[warm:])
    return np.concatenate(stats), np.concatenate(labels)


def resolve_threshold(cfg: ExperimentConfig, dcfg: DetectorConfig) -> float:
    """Pick the decision threshold for a threshold detector per the gamma policy.

    'optimize-theory' falls back to the empirical search when no closed form
    applies (ftd, or a memory too long to enumerate).
    """
    if dcfg.kind not in THRESHOLD_KINDS:
        raise ValueError(f"{dcfg.kind} does not use a threshold")
    if cfg.gamma_policy == "fixed":
        return float(cfg.gamma_value)
    if cfg.gamma_policy == "optimize-theory":
        if dcfg.kind == "ftd" or cfg.channel_memory > _THEORY_MEMORY_LIMIT:
            stats, labels = _calibration_statistics(cfg, dcfg)
            return analysis.optimize_threshold(dcfg, evaluator="simulation",
                                               grid_points=cfg.gamma_grid_points,
                                               statistics=stats, labels=labels)
        return analysis.optimize_threshold(dcfg, evaluator="theory",
                                           grid_points=cfg.gamma_grid_points)
    stats, labels = _calibration_statistics(cfg, dcfg)
    return analysis.optimize_threshold(dcfg, evaluator="simulation",
                                       grid_points=cfg.gamma_grid_points,
                                       statistics=stats, labels=labels)


def run_ber_point(cfg: ExperimentConfig, detector: str, order: int, molecules: float,
                  window: int | None = None, threshold: float | None = None,
                  channel: ChannelVector | None = None) -> BerRecord:
    """Simulate one (detector, order, molecules) grid point to its stop rule.

    For threshold detectors a missing ``threshold`` is resolved through the
    config's gamma policy; sequence detectors record a NaN threshold.
    """
    start = time.perf_counter()
    dcfg = detector_config(cfg, detector, order, molecules, window=window,
                           channel=channel)
    if detector in THRESHOLD_KINDS:
        gamma = resolve_threshold(cfg, dcfg) if threshold is None else float(threshold)
        dcfg = dataclasses.replace(dcfg, threshold=gamma)
    else:
        gamma = float("nan")
    errors, bits = _run_counting_loop(cfg, dcfg)
    ber = errors / bits if bits else float("nan")
    std_error = math.sqrt(ber * (1.0 - ber) / bits) if bits else float("nan")
    return BerRecord(detector=detector, order=order, window=dcfg.window,
                     molecules=molecules, threshold=gamma, ber=ber,
                     std_error=std_error, bits_simulated=bits, bit_errors=errors,
                     wall_time=time.perf_counter() - start)


def _theory_ber(dcfg: DetectorConfig, memory: int) -> float:
    """Closed-form error for threshold detectors where one exists, else NaN."""
    if memory > _THEORY_MEMORY_LIMIT:
        return float("nan")
    if dcfg.kind == "fstd":
        return analysis.fstd_theoretical_ber(dcfg)
    if dcfg.kind == "matd":
        return analysis.matd_theoretical_ber(dcfg)
    return float("nan")


def run_figure_sweep(cfg: ExperimentConfig, figure: str):
    """Run one of the canned sweep layouts.

    Returns (records, extras): one BerRecord per grid point plus a parallel
    list of dicts with closed-form and objective columns where defined.

    fig4: detectors x orders x molecules, with theory columns.
    fig5: like fig4 plus the window-10 SINR objective per point.
    fig7: detectors x orders x window list at each molecules value.
    fig8: detectors x orders x molecules at the config window.
    """
    if figure not in FIGURE_IDS:
        raise ConfigError(f"unknown figure {figure!r}, expected one of {FIGURE_IDS}")
    channel = build_channel(cfg)
    records = []
    extras = []

    def run_point(kind, order, molecules, window=None, want_sinr=False):
        record = run_ber_point(cfg, kind, order, molecules, window=window,
                               channel=channel)
        # sequence detectors record a NaN threshold, which must not feed back
        gamma = record.threshold if kind in THRESHOLD_KINDS else None
        dcfg = detector_config(cfg, kind, order, molecules, window=window,
                               threshold=gamma, channel=channel)
        extra = {}
        if kind in THRESHOLD_KINDS:
            extra["ber_theory"] = _theory_ber(dcfg, cfg.channel_memory)
        else:
            extra["ber_theory"] = float("nan")
        if want_sinr:
            extra["sinr"] = analysis.sinr(dcfg, window=10, order=order).value
        records.append(record)
        extras.append(extra)

    if figure in ("fig4", "fig5", "fig8"):
        want_sinr = figure == "fig5"
        for kind in cfg.detectors:
            for order in cfg.orders:
                for molecules in cfg.molecules_grid:
                    run_point(kind, order, molecules, want_sinr=want_sinr)
    else:  # fig7: sweep the detector memory window
        windows = cfg.windows or (2, 3, 4, 5, 6)
        for kind in cfg.detectors:
            for order in cfg.orders:
                for molecules in cfg.molecules_grid:
                    for window in windows:
                        run_point(kind, order, molecules, window=window)
    return records, extras


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(fileobj, records, extras=None, include_timing: bool = False) -> None:
    """Write records (plus optional extra columns) as CSV.

    The timing column is left blank by default so identical runs produce
    byte-identical files; pass include_timing=True to keep measured times.
    """
    extra_keys: list[str] = []
    if extras:
        for extra in extras:
            for key in extra:
                if key not in extra_keys:
                    extra_keys.append(key)
    header = [CSV_LABELS.get(name, name) for name in BerRecord._FIELDS] + extra_keys
    fileobj.write(",".join(header) + "\n")
    blank = {}
    for i, rec in enumerate(records):
        row = []
        for name in BerRecord._FIELDS:
            if name == "wall_time" and not include_timing:
                row.append("")
            else:
                row.append(_format_cell(getattr(rec, name)))
        extra = extras[i] if extras else blank
        for key in extra_keys:
            row.append(_format_cell(extra.get(key, float("nan"))))
        fileobj.write(",".join(row) + "\n")


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a validated ExperimentConfig from parsed JSON."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    data = dict(raw)
    data.pop("schema_version")
    topo_raw = data.pop("topology", None)
    if not isinstance(topo_raw, dict):
        raise ConfigError("config needs a 'topology' object")
    try:
        topology = Topology(
            radius_rx=float(topo_raw["receiver_radius_um"]),
            distance_tx=float(topo_raw["transmitter_distance_um"]),
            diffusion=float(topo_raw["diffusion_um2_per_s"]),
        )
    except KeyError as exc:
        raise ConfigError(f"topology is missing {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("orders", "molecules_grid", "detectors", "windows"):
        if key in data:
            data[key] = tuple(data[key])
    try:
        return ExperimentConfig(topology=topology, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    data = dataclasses.asdict(cfg)
    topo = data.pop("topology")
    out = {
        "schema_version": SCHEMA_VERSION,
        "topology": {
            "receiver_radius_um": topo["radius_rx"],
            "transmitter_distance_um": topo["distance_tx"],
            "diffusion_um2_per_s": topo["diffusion"],
        },
    }
    for key, value in data.items():
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a JSON experiment config."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
