"""Run the lattice GRW flash experiment and print a short summary.

Usage::

    python scripts/run_grw_experiment.py --trajectories 100000 --seed 0 --out runs/grw
"""

import argparse
import json
import time
from dataclasses import fields
from pathlib import Path

from povm_extend.family import extend_and_verify
from povm_extend.grw import GrwConfig, build_kraus_operators, completeness_residual, run_grw_experiment


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f in fields(GrwConfig):
        p.add_argument(f"--{f.name}", type=type(f.default), default=f.default)
    p.add_argument("--trajectories", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cylinders", type=int, default=20, help="cylinders for the polarization check")
    p.add_argument("--out", type=Path, default=None)
    return p.parse_args()


def main():
    args = parse_args()
    cfg = GrwConfig(**{f.name: getattr(args, f.name) for f in fields(GrwConfig)})
    print(f"config: {cfg}")
    print(f"q = {cfg.q:.6f}, |M| = {cfg.n_atoms}")
    print(f"Kraus completeness residual: {completeness_residual(build_kraus_operators(cfg)):.2e}")

    t0 = time.perf_counter()
    exp = run_grw_experiment(cfg, n_traj=args.trajectories, seed=args.seed)
    t1 = time.perf_counter()
    ext = extend_and_verify(exp.lifted, args.cylinders, seed=args.seed)
    t2 = time.perf_counter()

    print(f"consistency residual: {exp.consistency.max_residual:.2e} over {exp.consistency.pairs_checked} pairs")
    print(f"sampling: max |z| = {exp.report.max_abs_z:.2f} over {len(exp.report.entries)} cylinders "
          f"({args.trajectories} trajectories, {t1 - t0:.2f} s)")
    print(f"extension: operator residual {ext.max_operator_residual:.2e}, "
          f"partition residual {ext.partition_residual:.2e} ({t2 - t1:.2f} s)")
    print("PASS" if exp.passed and ext.passed else "FAIL")

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "trajectories.csv").write_text(exp.trajectories_csv)
        summary = {"config": cfg.to_dict(), "empirical": exp.report.to_dict(), "extension": ext.to_dict()}
        (args.out / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
