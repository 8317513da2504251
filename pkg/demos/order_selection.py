"""Show how the best derivative order moves with the number of released
molecules.

Differencing trades ISI suppression against noise amplification. When
releases are scarce the counting noise dominates and low orders win; with
plenty of molecules the residual ISI dominates and higher orders pay off.

    python3 demos/order_selection.py
"""

import numpy as np

from mcderiv.analysis import optimize_derivative_order, sinr
from mcderiv.channel import Topology, channel_vector, grid_from_rate
from mcderiv.detectors import DetectorConfig

SNR_LINEAR = 10.0  # 10 dB external noise level used throughout the presets


def order_table(ratio: float, memory: int, molecule_grid) -> None:
    topo = Topology(radius_rx=5.0, distance_tx=15.0, diffusion=100.0)
    grid = grid_from_rate(topo, symbol_rate_ratio=ratio, n_samples=5,
                          memory=memory)
    channel = channel_vector(topo, grid)
    print(f"\nsymbol rate ratio {ratio}, channel memory {memory} symbols")
    print(f"{'M':>12} {'best m':>7}  SINR per order 0..3")
    for molecules in molecule_grid:
        lam = molecules / (2.0 * grid.n_samples * SNR_LINEAR)
        cfg = DetectorConfig(kind="fstd", channel=channel,
                             molecules=molecules, noise_rate=lam)
        best = optimize_derivative_order(cfg, max_order=3, window=10)
        sinrs = [sinr(cfg, window=10, order=m).value for m in range(4)]
        pretty = "  ".join(f"{s:9.3f}" for s in sinrs)
        print(f"{molecules:12.3e} {best:>7}  {pretty}")


def main() -> None:
    order_table(0.5, 100, np.logspace(5.0, 8.0, 4))
    order_table(0.25, 200, np.logspace(7.5, 10.5, 4))


if __name__ == "__main__":
    main()
