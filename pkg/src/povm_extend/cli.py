"""Command-line interface: ``povm-extend {verify,extend,sample,grw}``.

Exit codes: 0 pass, 1 mathematical failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, linalg
from .config import DEFAULT_TOL
from .errors import ConsistencyError, PovmError, ZeroProbabilityPrefixError
from .family import (
    CylinderSet,
    PovmFamily,
    PrefixFamily,
    check_consistency,
    cylinder_probability,
    extend_and_verify,
    lift_prefix_family,
    scalar_slice,
    verify_members,
)
from .grw import GrwConfig, default_state, run_grw_experiment
from .povm import LabeledPOVM, verify_povm
from .sampler import PrefixLaw, cylinder_battery, empirical_vs_exact, resolve_threads, trajectories_csv

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_json(path: str):
    p = Path(path)
    try:
        return json.loads(p.read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _dumps(obj) -> str:
    # inf/nan are allowed: z-scores of exact-match failures are infinite
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _manifest(args, inputs: list) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "argv")}
    return {
        "subcommand": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "inputs": {p: _sha256(Path(p)) for p in inputs if p},
        "argv": list(args.argv),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }


def _emit_report(args, report: dict, inputs: list) -> None:
    manifest = _manifest(args, inputs)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(_dumps(report))
        out.with_name(out.name + ".manifest.json").write_text(_dumps(manifest))
    else:
        sys.stdout.write(_dumps({**report, "manifest": manifest}))


def _tolerances(tol):
    if tol is None:
        return DEFAULT_TOL
    return DEFAULT_TOL.with_(norm=tol, positivity=tol, hermitian=tol)


def _load_psi(path, dim: int, seed: int):
    if path is None:
        return linalg.random_state(dim, np.random.default_rng(seed))
    psi = linalg.state_from_dict(_load_json(path))
    if psi.size != dim:
        raise UsageError(f"state has dim {psi.size}, family acts on dim {dim}")
    return linalg.normalized(psi)


def _load_family(path: str) -> PovmFamily:
    data = _load_json(path)
    if not isinstance(data, dict) or "members" not in data:
        raise UsageError(f"{path} is not a family JSON file")
    return PovmFamily.from_dict(data)


def cmd_verify(args) -> int:
    data = _load_json(args.input)
    if not isinstance(data, dict):
        raise UsageError("expected a JSON object")
    tol = _tolerances(args.tol)
    if "effects" in data:
        rep = verify_povm(LabeledPOVM.from_dict(data), tol)
        report = {"kind": "povm", **rep.to_dict(), "residual": rep.normalization_residual}
        passed = rep.passed
    elif "members" in data:
        F = PovmFamily.from_dict(data)
        members = verify_members(F, tol)
        cons = check_consistency(F, args.tol, seed=args.seed)
        passed = cons.passed and all(r.passed for r in members.values())
        report = {
            "kind": "family",
            "passed": passed,
            "members": [{"K": list(K), **r.to_dict()} for K, r in members.items()],
            "consistency": cons.to_dict(),
            "residual": cons.max_residual,
        }
    else:
        raise UsageError("input is neither a POVM nor a family JSON file")
    _emit_report(args, report, [args.input])
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_extend(args) -> int:
    if args.cylinders <= 0:
        raise UsageError("nothing to verify: --cylinders must be positive")
    F = _load_family(args.input)
    psi = _load_psi(args.psi, F.dim, args.seed)
    tol = 1e-10 if args.tol is None else args.tol
    rep = extend_and_verify(F, args.cylinders, seed=args.seed, tol=tol)
    report = rep.to_dict()
    if rep.consistency.passed:
        # the scalar measures mu_K^psi must be consistent as well
        scalar = check_consistency(scalar_slice(F, psi), tol, seed=args.seed)
        report["scalar_consistency"] = scalar.to_dict()
        for rec in report["cylinders"]:
            C = CylinderSet.from_atoms(F.index, rec["base"], [tuple(a) for a in rec["atoms"]])
            rec["probability"] = cylinder_probability(F, C, psi)
        passed = rep.passed and scalar.passed
    else:
        passed = False
    report["passed"] = passed
    report["psi"] = linalg.state_to_dict(psi)
    _emit_report(args, report, [args.input, args.psi])
    return EXIT_PASS if passed else EXIT_FAIL


def _write_sampling_outputs(args, report: dict, csv_text: str, inputs: list, extra: dict | None = None) -> None:
    manifest = _manifest(args, inputs)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trajectories.csv").write_text(csv_text)
        (out / "report.json").write_text(_dumps(report))
        for name, payload in (extra or {}).items():
            (out / name).write_text(_dumps(payload))
        (out / "manifest.json").write_text(_dumps(manifest))
    elif args.format == "csv":
        sys.stdout.write(csv_text)
        sys.stderr.write(_dumps(manifest))
    else:
        sys.stdout.write(_dumps({**report, "manifest": manifest}))


def cmd_sample(args) -> int:
    if args.trajectories <= 0:
        raise UsageError("no trajectories: --trajectories must be positive")
    F = _load_family(args.input)
    try:
        source = PrefixFamily.from_family(F)
        lifted = lift_prefix_family(source, args.tol)
    except PovmError as exc:
        if isinstance(exc, ConsistencyError):
            raise
        source = lifted = F
    n = args.n or len(F.covered_coordinates)
    psi = _load_psi(args.psi, F.dim, args.seed)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(2**32,)))
    cylinders = cylinder_battery(lifted, n, rng)
    rep = empirical_vs_exact(source, psi, n, args.trajectories, cylinders, args.seed,
                             z_threshold=args.z_threshold, threads=args.threads)
    law = PrefixLaw(source, psi, n)
    report = {**rep.to_dict(), "psi": linalg.state_to_dict(psi)}
    _write_sampling_outputs(args, report, trajectories_csv(law, rep.indices, args.seed), [args.input, args.psi])
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _grw_config(args) -> GrwConfig:
    base = GrwConfig.from_dict(_load_json(args.config)) if args.config else GrwConfig()
    fields = {
        "L": args.L, "sigma": args.sigma, "lam": args.lam, "dt": args.dt,
        "n_time_bins": args.n_time_bins, "hopping": args.hopping, "n_flashes": args.flashes,
    }
    merged = {**{k: v for k, v in base.to_dict().items() if k != "q"},
              **{k: v for k, v in fields.items() if v is not None}}
    if args.q is not None:
        if not 0.0 < args.q < 1.0:
            raise UsageError(f"q={args.q} is not in (0, 1)")
        merged["lam"] = -math.log1p(-args.q) / merged["dt"]
    try:
        return GrwConfig(**merged)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_grw(args) -> int:
    cfg = _grw_config(args)
    if args.trajectories <= 0:
        raise UsageError("no trajectories: --trajectories must be positive")
    psi = default_state(cfg) if args.psi is None else _load_psi(args.psi, cfg.L, args.seed)
    exp = run_grw_experiment(cfg, psi, args.trajectories, args.seed, threads=args.threads,
                             z_threshold=args.z_threshold)
    report = {
        "passed": exp.passed,
        "config": cfg.to_dict(),
        "psi": linalg.state_to_dict(psi),
        "consistency": exp.consistency.to_dict(),
        "empirical": exp.report.to_dict(),
    }
    extra = {"family.json": exp.prefix_family.to_dict()}
    _write_sampling_outputs(args, report, exp.trajectories_csv, [args.config, args.psi], extra)
    return EXIT_PASS if exp.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="povm-extend", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="write the report here instead of stdout"):
        p.add_argument("--tol", type=float, default=None, help="override the module default tolerance")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help=out_help)
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads, 0 = all cores (fallback: POVM_EXTEND_THREADS)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("verify", help="check POVM axioms or family consistency")
    p.add_argument("input", help="POVM or family JSON file")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("extend", help="reconstruct G on random cylinder sets by polarization")
    p.add_argument("input", help="family JSON file")
    p.add_argument("--psi", default=None, help="state JSON file (default: random from --seed)")
    p.add_argument("--cylinders", type=int, default=20)
    common(p)
    p.set_defaults(func=cmd_extend)

    sampling_out = "output directory for trajectories.csv, report.json, manifest.json"
    p = sub.add_parser("sample", help="sample trajectories from a family and compare with exact values")
    p.add_argument("input", help="family JSON file")
    p.add_argument("--psi", default=None)
    p.add_argument("--n", type=int, default=None, help="prefix length (default: all coordinates)")
    p.add_argument("--trajectories", type=int, default=100_000)
    p.add_argument("--z-threshold", type=float, default=4.0)
    common(p, sampling_out)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("grw", help="run the lattice GRW flash experiment")
    p.add_argument("--config", default=None, help="GrwConfig JSON file; flags override it")
    p.add_argument("--psi", default=None, help="state JSON file (default: site 0)")
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--lam", "--lambda", dest="lam", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--q", type=float, default=None, help="collapse probability per step; sets lambda")
    p.add_argument("--n-time-bins", type=int, default=None)
    p.add_argument("--hopping", type=float, default=None)
    p.add_argument("--flashes", type=int, default=None)
    p.add_argument("--trajectories", type=int, default=100_000)
    p.add_argument("--z-threshold", type=float, default=4.0)
    common(p, sampling_out)
    p.set_defaults(func=cmd_grw)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    args.argv = argv
    if args.threads is not None:
        args.threads = resolve_threads(args.threads)
    try:
        return args.func(args)
    except (ConsistencyError, ZeroProbabilityPrefixError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (UsageError, PovmError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
