"""Real products/sums per multicarrier symbol for the multi-stage transceiver
and the multi-tap receiver, over M and the number of stages."""

import argparse

from fbmc_forge.sim import write_csv
from fbmc_forge.transceiver import complexity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--antennas", type=int, default=2)
    ap.add_argument("--kappa", type=int, default=3)
    ap.add_argument("--out", default="results/complexity_table.csv")
    args = ap.parse_args()
    n = args.antennas
    rows = []
    for M in (64, 128, 256, 512, 1024):
        for K in (1, 2, 3):
            tx = complexity("MULTISTAGE_TX", M, K_T=K, N_T=n, N_S=n, kappa=args.kappa)
            rx = complexity("MULTISTAGE_RX", M, K_R=K, N_R=n, N_S=n, kappa=args.kappa)
            rows.append([M, f"stages={K}", tx.real_products, tx.real_sums, rx.real_products, rx.real_sums])
        for taps in (3, 7):
            mt = complexity("MULTITAP_RX", M, N_R=n, N_S=n, kappa=args.kappa, N_taps=taps)
            rows.append([M, f"multitap={taps}", "", "", mt.real_products, mt.real_sums])
    write_csv(args.out, ["M", "variant", "tx_products", "tx_sums", "rx_products", "rx_sums"], rows)
    for r in rows:
        print(*r, sep="\t")


if __name__ == "__main__":
    main()
