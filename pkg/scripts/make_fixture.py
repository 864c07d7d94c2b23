"""Regenerate the shipped eastern-US synthetic fixture.

1. Build stand-in weekly curves and direct estimates (``make_standin``).
2. Run ``sae simulate`` with seed 1 on them: calibrate SFFH, draw replicates.
3. Keep calibration.json, truth.csv and the first replicate as areas.csv.

Usage: python3 scripts/make_fixture.py [--iterations N]
"""
import argparse
import shutil
import tempfile
from pathlib import Path

from spatial_fh import cli
from spatial_fh.data_model import save_functional_csv, save_survey_csv
from spatial_fh.experiments import StandInDesign, make_standin
from spatial_fh.spatial_graph import eastern_us_graph, shipped_data_path

SEED = 1


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--iterations", type=int, default=50_000,
                    help="calibration chain length (default 50000)")
    ap.add_argument("--n-datasets", type=int, default=250)
    args = ap.parse_args()

    dest = shipped_data_path("eastern_us")
    graph = eastern_us_graph()
    data, curves, _ = make_standin(graph, StandInDesign())
    save_survey_csv(data, dest / "standin_areas.csv")
    save_functional_csv(curves, dest)

    with tempfile.TemporaryDirectory() as tmp:
        rc = cli.main(["simulate", "--survey", str(dest / "standin_areas.csv"),
                       "--adjacency", str(dest / "adjacency.csv"),
                       "--covariates", *(str(dest / f"covariate_{n}.csv") for n in curves.names),
                       "--covariate", "y", "--components", "13",
                       "--iterations", str(args.iterations), "--seed", str(SEED),
                       "--n-datasets", str(args.n_datasets), "--out", tmp])
        if rc:
            raise SystemExit(rc)
        tmp = Path(tmp)
        for name in ("calibration.json", "truth.csv", "design.csv"):
            shutil.copy(tmp / name, dest / name)
        shutil.copy(sorted(tmp.glob("dataset_*.csv"))[0], dest / "areas.csv")
    print(f"fixture written to {dest}")


if __name__ == "__main__":
    main()
