#!/usr/bin/env python3
"""Export the Wisconsin diagnostic breast cancer table to CSV.

scikit-learn ships a verbatim copy of the 569-row dataset; this writes
it in the layout the package expects (30 feature columns with
underscored names, binary "diagnosis" label in the last column), so no
network access is needed.
"""
import argparse
import os
import sys
from pathlib import Path


def write_wdbc(path: Path) -> None:
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as out:
        names = [str(n).replace(" ", "_") for n in bunch.feature_names]
        out.write(",".join(names + ["diagnosis"]) + "\n")
        for row, label in zip(bunch.data, bunch.target):
            cells = ["%.17g" % v for v in row] + [str(int(label))]
            out.write(",".join(cells) + "\n")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default=os.environ.get("FAITHPROBE_DATA", "data"),
                        help="directory for wdbc.csv (default: FAITHPROBE_DATA or ./data)")
    args = parser.parse_args()
    target = Path(args.out_dir) / "wdbc.csv"
    try:
        write_wdbc(target)
    except ImportError:
        print("scikit-learn is required: pip install scikit-learn", file=sys.stderr)
        return 1
    print(f"wrote {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
