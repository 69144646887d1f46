#!/usr/bin/env python3
"""Write the 8x8 digits table (1797 rows, 64 features + label) as CSV.

Usage: python3 scripts/fetch_digits.py [output_path]
Defaults to data/digits.csv next to the repository root.
"""
import sys
from pathlib import Path

from sklearn.datasets import load_digits


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/digits.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    with out.open("w") as fh:
        for row, label in zip(digits.data, digits.target):
            cells = [repr(float(v)) for v in row] + [str(int(label))]
            fh.write(",".join(cells) + "\n")
    print(f"wrote {digits.data.shape[0]} rows to {out}")


if __name__ == "__main__":
    main()
