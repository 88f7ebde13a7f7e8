"""Run every study in experiments/configs through the command line driver.

    python experiments/run_all.py [--out results] [--only fig4 fig6 ...]

Each config lands in <out>/<name>/ with results.csv, rates.csv and loglog.svg
(or dofs.csv for counting studies).  The subcommand comes from run.mode.
"""

import argparse
import sys
import time
from pathlib import Path

from frenet_sdg.cli import load_config, main

HERE = Path(__file__).resolve().parent


def run_one(path: Path, out: Path) -> int:
    cfg = load_config(path)
    t0 = time.perf_counter()
    code = main([cfg.mode, "--config", str(path), "--out", str(out / cfg.name), "--deterministic"])
    print(f"[{path.stem}] exit {code} after {time.perf_counter() - t0:.0f}s", flush=True)
    return code


def cli(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--out", default="results")
    p.add_argument("--only", nargs="*", default=None, help="config stems to run")
    args = p.parse_args(argv)
    paths = sorted((HERE / "configs").glob("*.toml"))
    if args.only:
        paths = [q for q in paths if q.stem in set(args.only)]
    codes = [run_one(q, Path(args.out)) for q in paths]
    return max(codes, default=0)


if __name__ == "__main__":
    sys.exit(cli())
