"""Score every prediction column of the bundled growth tables."""

import argparse

from mfgapfill.cli import evaluate_rows, read_predictions_csv
from mfgapfill.fixtures import TABLES, table_path


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gme-rule", choices=["symmetric", "false-negative"], default=None)
    args = ap.parse_args()
    print(f"{'table':<8}{'column':<12}{'GME':>5}{'tau-b':>9}{'RMS':>9}{'MAPE %':>9}")
    for name in TABLES:
        path = table_path(name)
        for col in ("baseline", "mip_seq", "lp_seq"):
            rows, meta = read_predictions_csv(path, col)
            ev, _ = evaluate_rows(rows, col, meta, gme_rule=args.gme_rule)
            print(f"{name:<8}{col:<12}{ev.gme:>5}{ev.tau:>9.4f}{ev.rms:>9.4f}{ev.mape:>9.2f}")


if __name__ == "__main__":
    main()
