"""Batch front end: ``hpplast solve|study|check <config>``.

Exit codes: 0 success, 1 configuration or I/O error, 2 Newton iteration did
not converge (artifacts are still written), 3 a check group failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

from .analysis import run_convergence_study
from .assembly import assemble_blocks
from .checks import GROUPS, CheckContext, run_checks
from .hp_spaces import AssemblyError
from .mesh import MeshError
from .config import ConfigError, ProblemConfig, load_config
from .solver import check_complementarity, newton_solve
from .vtk import write_vtk

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_CHECK = 0, 1, 2, 3


@dataclass
class RunArtifacts:
    vtk: Path | None = None
    csv: Path | None = None
    log: Path | None = None


def atomic_write(path: Path, text: str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_vtk(path: Path, *args, **kwargs) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write_vtk(tmp, *args, **kwargs)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def prepare_out_dir(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError("output.dir", f"cannot create {str(out)!r}: {err.strerror}") from None
    if not out.is_dir() or not os.access(out, os.W_OK):
        raise ConfigError("output.dir", f"{str(out)!r} is not a writable directory")
    return out


def cmd_solve(cfg: ProblemConfig) -> tuple[int, RunArtifacts]:
    out = prepare_out_dir(cfg.out_dir)
    problem = cfg.problem()
    sys_ = assemble_blocks(problem.mesh, problem.material, problem.loads)
    rep = newton_solve(sys_, cfg.solver)
    arts = RunArtifacts(out / "solution.vtk", None, out / "iterations.log")
    _atomic_vtk(arts.vtk, problem.mesh, rep.displacement, rep.plastic_strain, rep.multiplier)
    log = ["# iteration residual n_active n_inactive", *rep.log_lines(), f"# {rep.message}"]
    atomic_write(arts.log, "\n".join(log) + "\n")
    comp = check_complementarity(rep.state, sys_)
    atomic_write(out / "complementarity.txt", comp.summary() + "\n")
    print(f"solve: {rep.message} after {rep.iterations} iterations; {comp.summary()}")
    return (EXIT_OK if rep.converged else EXIT_NONCONVERGED), arts


def cmd_study(cfg: ProblemConfig) -> tuple[int, RunArtifacts]:
    out = prepare_out_dir(cfg.out_dir)
    problem = cfg.problem()
    study = run_convergence_study(problem, cfg.levels, cfg.study_degree, cfg.reference, cfg.solver)
    arts = RunArtifacts(None, out / "study.csv", out / "study.log")
    text = study.csv_text()
    atomic_write(arts.csv, text)
    lines = [f"reference: {study.reference}", *(f"flag: {f}" for f in study.flags)]
    lines += [f"level {r['level']}: newton iterations {r['iterations']}" for r in study.rows]
    atomic_write(arts.log, "\n".join(lines) + "\n")
    print(text, end="")
    for f in study.flags:
        print(f"warning: {f}", file=sys.stderr)
    nonconv = any("did not converge" in f for f in study.flags)
    return (EXIT_NONCONVERGED if nonconv else EXIT_OK), arts


def cmd_check(cfg: ProblemConfig, groups=None) -> tuple[int, RunArtifacts]:
    out = prepare_out_dir(cfg.out_dir)
    problem = cfg.problem()
    ctx = CheckContext(problem.mesh, problem.material, problem.loads, cfg.solver, cfg.seed)
    results = run_checks(ctx, groups)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "status", "detail"])
    for r in results:
        print(r.line())
        w.writerow([r.group, "PASS" if r.ok else "FAIL", r.detail])
    arts = RunArtifacts(None, out / "check.csv", None)
    atomic_write(arts.csv, buf.getvalue())
    return (EXIT_OK if all(r.ok for r in results) else EXIT_CHECK), arts


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="print the Newton iteration log")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output] dir)")
    parser = argparse.ArgumentParser(prog="hpplast", description="hp finite elements for elastoplasticity")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("solve", "solve one problem"), ("study", "run a convergence study"), ("check", "run the invariant suite")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("config", help="configuration file")
        if name == "check":
            p.add_argument("--group", action="append", choices=GROUPS, help="run only this group (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, validate_mesh=args.command != "check")
        if args.out:
            cfg.out_dir = Path(args.out)
        if args.verbose:
            cfg.solver = replace(cfg.solver, verbose=True)
        if args.command == "solve":
            code, _ = cmd_solve(cfg)
        elif args.command == "study":
            code, _ = cmd_study(cfg)
        else:
            code, _ = cmd_check(cfg, args.group)
    except (ConfigError, MeshError, AssemblyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
