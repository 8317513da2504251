"""Rank every detector family at a single operating point.

Uses the fig8b preset (fast signaling, long channel memory) but pins one
release count so the whole comparison runs in seconds. Each scheme gets to
pick its own derivative order; the memory-aided detectors work on a
2-symbol window. Note how the sequence detectors need a higher order than
the one-shot threshold detector: extra differencing squeezes the pulse into
their short decision window.

    python3 demos/detector_showdown.py
"""

import dataclasses
import pathlib

from mcderiv.harness import load_config, run_figure_sweep

ROOT = pathlib.Path(__file__).resolve().parents[1]


def main() -> None:
    cfg = load_config(ROOT / "configs" / "fig8b.json")
    cfg = dataclasses.replace(cfg, molecules_grid=(10.0 ** 9.0,),
                              bit_budget=200_000, target_errors=300)
    records, _ = run_figure_sweep(cfg, "fig8")

    best = {}
    for rec in records:
        if rec.detector not in best or rec.ber < best[rec.detector].ber:
            best[rec.detector] = rec

    print(f"release count M = {cfg.molecules_grid[0]:.2e}, "
          f"window = {cfg.window}, best order per scheme")
    print(f"{'detector':>12} {'m':>3} {'ber':>12} {'std err':>10} {'bits':>9}")
    for rec in sorted(best.values(), key=lambda r: r.ber):
        print(f"{rec.detector:>12} {rec.order:>3} {rec.ber:12.3e} "
              f"{rec.std_error:10.1e} {rec.bits_simulated:9d}")


if __name__ == "__main__":
    main()
