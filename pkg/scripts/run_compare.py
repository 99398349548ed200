"""Probe accuracy of every method on the desk-scale synthetic dataset.

    python scripts/run_compare.py --config configs/desk.ini --out results

Writes ``compare.md`` (mean +/- std over seeds and wall-clock per method).
"""

import argparse
import logging
from pathlib import Path

from contrawr import pipeline
from contrawr.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=Path(__file__).resolve().parents[1] / "configs" / "desk.ini")
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--seeds", type=int, help="override compare.seeds")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rc = load_config(args.config, {"compare.seeds": args.seeds} if args.seeds else None)
    dataset = pipeline.synthetic_from_config(rc)
    results = pipeline.compare(dataset, rc, log=print)
    table = pipeline.compare_table(results)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "compare.md").write_text(table)
    print(table)


if __name__ == "__main__":
    main()
