"""Command-line interface: mesh, hf-solve, offline, online, study, bundle-info."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigurationError, DtmError, FormatError, SolverError
from .problems import PROBLEM_IDS

log = logging.getLogger("dtmrom")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig(problem=getattr(args, "problem", None) or "laplace-airfoil")
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _mu(values, problem) -> np.ndarray:
    if values is None:
        raise ConfigurationError("--mu is required")
    return problem.check_mu(np.asarray(values, dtype=float))


def format_field(u: np.ndarray, n_eq: int) -> str:
    lines = [f"dtm-field 1 {u.size} {n_eq}"]
    lines += [repr(float(v)) for v in u]
    return "\n".join(lines) + "\n"


def parse_field(text: str) -> np.ndarray:
    lines = text.split("\n")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "dtm-field":
        raise FormatError("not a dtm-field file")
    if head[1] != "1":
        raise FormatError(f"unsupported field version {head[1]}")
    try:
        n = int(head[2])
        vals = [float(v) for v in lines[1 : 1 + n]]
    except ValueError as exc:
        raise FormatError(f"malformed field file: {exc}") from exc
    if len(vals) != n:
        raise FormatError(f"field file truncated: {len(vals)} of {n} values")
    return np.array(vals)


# ---------------------------------------------------------------- subcommands


def cmd_mesh(args) -> int:
    from .mesh import format_mesh, read_mesh
    from .offline import problem_from_config

    if args.validate:
        mesh = read_mesh(args.validate)
        from .fe import ElementKit, shape_tensors

        st = shape_tensors(ElementKit.for_mesh(mesh), mesh.element_coords(), warn=False)
        print(json.dumps({"dim": mesh.dim, "p": mesh.p, "geom_order": mesh.geom_order, "nodes": mesh.n_nodes,
                          "elements": mesh.n_elements, "tags": sorted(mesh.tags),
                          "min_det": float(st.det.min())}, sort_keys=True))
        if st.det.min() <= 0:
            raise ConfigurationError("mesh has non-positive Jacobian determinants", stage="mesh")
        return EXIT_OK
    cfg = _config(args)
    if cfg.problem == "study-1d":
        from .mesh import interval_mesh

        mesh = interval_mesh(16, 3)
    else:
        mesh = problem_from_config(cfg).mesh
    text = format_mesh(mesh)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}: {mesh.n_elements} elements, {mesh.n_nodes} nodes")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_hf_solve(args) -> int:
    from .offline import problem_from_config

    cfg = _config(args)
    pr = problem_from_config(cfg)
    mu = _mu(args.mu, pr)
    t0 = time.perf_counter()
    u = pr.solve(mu)
    dt = time.perf_counter() - t0
    Path(args.out).write_text(format_field(u, pr.n_eq))
    print(f"wrote {args.out}: {u.size} dofs, {dt:.3f} s")
    return EXIT_OK


def cmd_offline(args) -> int:
    from .bundle import write_bundle
    from .offline import Trainer, problem_from_config

    cfg = _config(args)
    pr = problem_from_config(cfg)
    t0 = time.perf_counter()
    trainer = Trainer(pr, cfg)
    bundle = trainer.build()
    out = Path(args.out or Path(cfg.output_dir) / f"{cfg.problem}.dtmrom")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_bundle(bundle, out)
    if args.report:
        prov = bundle.provenance
        keys = ["N", "J", "M", "Q", "Q_r", "J_r", "tol_eq", "tol_eq_r", "n_train"]
        with open(args.report, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["problem", "N_e"] + keys)
            w.writerow([cfg.problem, pr.mesh.n_elements] + [prov.get(k) for k in keys])
    print(f"wrote {out}: N={bundle.N} Q={bundle.Q} Q_r={bundle.Q_r} ({time.perf_counter() - t0:.1f} s)")
    return EXIT_OK


def cmd_online(args) -> int:
    from .bundle import model_from_bundle, read_bundle

    bundle = read_bundle(args.bundle)
    model = model_from_bundle(bundle)
    box = np.asarray(bundle.header["param_box"], float)
    mu = np.asarray(args.mu, float) if args.mu is not None else None
    if mu is None or mu.size != box.shape[0]:
        raise ConfigurationError(f"--mu needs {box.shape[0]} values")
    if np.any(mu < box[:, 0]) or np.any(mu > box[:, 1]):
        raise ConfigurationError(f"mu {mu.tolist()} outside the parameter box", mu=mu)
    res = model.solve(mu)
    ref = model.estimate(mu, np.zeros(model.N))
    rel = res.estimate / ref if ref > 0 else res.estimate
    print("alpha = " + " ".join(f"{a:.12e}" for a in res.alpha))
    print(f"estimate = {res.estimate:.6e}")
    print(f"relative estimate = {rel:.6e}")
    print(f"iterations = {res.iterations}  wall time = {res.wall_time:.6f} s  elements touched = {res.elements_touched}")
    if args.csv:
        path = Path(args.csv)
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow(["mu", "alpha", "estimate", "relative_estimate", "iterations", "wall_time"])
            w.writerow([" ".join(map(repr, mu.tolist())), " ".join(map(repr, res.alpha.tolist())),
                        repr(res.estimate), repr(rel), res.iterations, repr(res.wall_time)])
    return EXIT_OK


def cmd_study(args) -> int:
    from . import studies

    out = Path(args.out)
    if args.name == "conv1d":
        table = studies.conv1d(out)
        for m, s in table.slopes.items():
            print(f"{m}: slope {s:.3f}")
        return EXIT_OK
    if args.name in ("airfoil", "bound"):
        cfg = _config(args) if args.config else RunConfig(problem="laplace-airfoil")
        if args.name == "bound":
            from .offline import Trainer, problem_from_config

            trainer = Trainer(problem_from_config(cfg), cfg)
            trainer.build()
            terms = studies.bound_check(trainer)
            studies.write_bound_csv(terms, out)
            studies.write_csv_readme(out)
            ok = all(t.holds for t in terms)
            print(f"bound holds at {sum(t.holds for t in terms)}/{len(terms)} test points")
            return EXIT_OK if ok else EXIT_SOLVER
        rep = studies.airfoil_benchmark(cfg, out)
    else:
        cfg = _config(args) if args.config else RunConfig(problem="burgers-bump")
        rep = studies.burgers_benchmark(cfg, out)
    for r in rep.rows:
        print(f"N={r.N} tol_eq={r.tol_eq:g} Q={r.Q} ({r.Q_percent:.2f}%) E_avg={r.E_avg:.3e} "
              f"E_hfq={r.E_avg_hfq:.3e}")
    return EXIT_OK


def cmd_bundle_info(args) -> int:
    from .bundle import read_bundle

    b = read_bundle(args.bundle)
    print(json.dumps(b.info(), indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dtmrom", description="Discretize-then-map reduced-order models")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="generate or validate a mesh file")
    p.add_argument("--problem", choices=PROBLEM_IDS)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--validate", metavar="MESH")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("hf-solve", help="high-fidelity solve at one parameter")
    p.add_argument("--problem", choices=PROBLEM_IDS)
    p.add_argument("--config")
    p.add_argument("--mu", type=float, nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hf_solve)

    p = sub.add_parser("offline", help="train a reduced model and write a bundle")
    p.add_argument("--config")
    p.add_argument("--problem", choices=PROBLEM_IDS)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--report", help="training-report CSV")
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("online", help="evaluate a bundle at one parameter")
    p.add_argument("--bundle", required=True)
    p.add_argument("--mu", type=float, nargs="+")
    p.add_argument("--csv", help="append the result to this CSV")
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("study", help="run a study driver")
    p.add_argument("--name", required=True, choices=("conv1d", "airfoil", "burgers", "bound"))
    p.add_argument("--config")
    p.add_argument("--out", default="study-out")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("bundle-info", help="print bundle header and provenance")
    p.add_argument("--bundle", required=True)
    p.set_defaults(func=cmd_bundle_info)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DtmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
