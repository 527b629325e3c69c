"""Command-line front end: ``mesh``, ``solve``, ``study`` and ``sweep``.

Every command accepts ``--config FILE`` (one JSON document, unknown keys
rejected) and flags that override its fields, and writes the fully resolved
configuration to ``<out_dir>/effective-config.json``.

Exit codes: 0 ok, 2 configuration, 3 I/O, 4 solver failure, 5 partial table.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import analysis
from .eigensolve import DENSE_AUTO, SPARSE, EigenSolverConfig, recover_frequencies, solve
from .errors import (
    ConfigError,
    ConsistencyError,
    ConvergenceError,
    FieldError,
    MatrixError,
    MeshParseError,
    ParameterError,
    VemError,
)
from .mesh import Domain, MeshFamilySpec, compute_quality, generate_family, read_mesh, write_mesh
from .vem import MaterialParams, StabilizationKind, assemble

log = logging.getLogger("vemacoustic")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER, EXIT_PARTIAL = 0, 2, 3, 4, 5
EFFECTIVE_CONFIG = "effective-config.json"


# --------------------------------------------------------------------------- schemas


class _Config(BaseModel):
    model_config = ConfigDict(extra="forbid")

    out_dir: str = "."


class _MeshFields(_Config):
    family: Literal["T1", "T2", "T3", "T4", "T5"] = "T1"
    M0: float = Field(4.0, gt=0)
    domain: Optional[str] = None

    @field_validator("domain")
    @classmethod
    def _domain(cls, v):
        if v is not None:
            try:
                Domain.parse(v)
            except VemError as exc:
                raise ValueError(str(exc)) from None
        return v

    def resolved_domain(self):
        return None if self.domain is None else Domain.parse(self.domain)


class _PhysicsFields(_Config):
    rho: float = Field(1.0, gt=0)
    c: float = Field(1.0, gt=0)
    stabilization: Literal["tangential", "nodal"] = "tangential"
    sigma_rule: Literal["constant", "half-trace"] = "constant"
    sigma: float = Field(1.0, gt=0)

    def materials(self):
        return MaterialParams(self.rho, self.c)

    def stab(self):
        return StabilizationKind(self.stabilization, self.sigma_rule, self.sigma)


class MeshCommand(_MeshFields):
    N: int = Field(8, ge=2)


class SolveCommand(_MeshFields, _PhysicsFields):
    N: int = Field(8, ge=2)
    mesh_file: Optional[str] = None
    k: int = Field(6, ge=1)
    tol: float = Field(1e-9, gt=0)
    max_iterations: int = Field(5000, ge=1)
    solver_mode: Literal["dense-auto", "sparse"] = DENSE_AUTO
    export_fields: bool = False


class StudyCommand(_MeshFields, _PhysicsFields):
    Ns: list[int] = Field(default_factory=lambda: [8, 16, 32, 64], min_length=1)
    normalization: Literal["nu", "omega", "omega_over_c"] = "nu"
    n_modes: int = Field(5, ge=1)
    solver_mode: Literal["dense-auto", "sparse"] = DENSE_AUTO
    tol: float = Field(1e-9, gt=0)

    @field_validator("Ns")
    @classmethod
    def _ns(cls, v):
        if any(n < 2 for n in v):
            raise ValueError("every refinement N must be >= 2")
        return v

    def study_config(self):
        return analysis.StudyConfig(
            family=self.family, Ns=tuple(self.Ns), materials=self.materials(), stabilization=self.stab(),
            normalization=self.normalization, n_modes=self.n_modes, M0=self.M0,
            domain=self.resolved_domain(), solver_mode=self.solver_mode, tol=self.tol,
        )


class SweepCommand(StudyCommand):
    sigmas: list[float] = Field(default_factory=lambda: [4.0 ** -2, 4.0 ** -1, 1.0, 4.0, 4.0 ** 2], min_length=1)
    n_check: int = Field(3, ge=1)

    @field_validator("sigmas")
    @classmethod
    def _sigmas(cls, v):
        if any(not s > 0 for s in v):
            raise ValueError("every sigma must be positive")
        return v


# --------------------------------------------------------------------------- output helpers


def _out_dir(cfg) -> Path:
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_effective(cfg, out: Path):
    (out / EFFECTIVE_CONFIG).write_text(json.dumps(cfg.model_dump(), indent=2, sort_keys=True) + "\n")


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_vtk(mesh, pressure, displacement, path, title="vemacoustic mode"):
    """Legacy ASCII polygonal file: nodal ``pressure``, per-cell ``displacement``."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.points]
    size = sum(len(c) + 1 for c in mesh.cells)
    lines.append(f"POLYGONS {mesh.n_cells} {size}")
    lines += [" ".join(map(str, [len(c), *c])) for c in mesh.cells]
    lines += [f"POINT_DATA {mesh.n_vertices}", "SCALARS pressure double 1", "LOOKUP_TABLE default"]
    lines += [f"{p:.17g}" for p in pressure]
    lines += [f"CELL_DATA {mesh.n_cells}", "VECTORS displacement double"]
    lines += [f"{u:.17g} {v:.17g} 0" for u, v in displacement]
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------- commands


def cmd_mesh(cfg: MeshCommand) -> int:
    spec = MeshFamilySpec(cfg.family, cfg.N, cfg.M0, cfg.resolved_domain())
    mesh = generate_family(spec)
    q = compute_quality(mesh)
    out = _out_dir(cfg)
    write_mesh(mesh, out / "mesh.vempoly")
    _dump_json(q.as_dict(mesh), out / "quality.json")
    _write_effective(cfg, out)
    log.info("mesh %s N=%d: %d cells, ratio %.4e", cfg.family, cfg.N, mesh.n_cells, q.ratio)
    return EXIT_OK


def cmd_solve(cfg: SolveCommand) -> int:
    if cfg.mesh_file is not None:
        mesh = read_mesh(cfg.mesh_file, cfg.resolved_domain())
    else:
        mesh = generate_family(MeshFamilySpec(cfg.family, cfg.N, cfg.M0, cfg.resolved_domain()))
    system = assemble(mesh, cfg.materials(), cfg.stab())
    scfg = EigenSolverConfig(k=cfg.k, tol=cfg.tol, max_iterations=cfg.max_iterations, mode=cfg.solver_mode)
    spec = solve(system, scfg)
    out = _out_dir(cfg)
    q = compute_quality(mesh, kernel_check=False)
    result = {
        "lambdas": spec.lambdas.tolist(),
        "omegas": spec.omegas.tolist(),
        "nus": recover_frequencies(spec, "nu", strict=False).tolist(),
        "omegas_over_c": (spec.omegas / cfg.c).tolist(),
        "residuals": spec.residuals.tolist(),
        "method": spec.method,
        "n": system.n,
        "ratio": float(q.ratio),
        "h": float(q.h),
    }
    _dump_json(result, out / "spectrum.json")
    if cfg.export_fields:
        fdir = out / "fields"
        fdir.mkdir(exist_ok=True)
        for i in range(len(spec.lambdas)):
            try:
                u = analysis.displacement_field(mesh, system, spec, i)
            except FieldError:
                u = np.zeros((mesh.n_cells, 2))
            write_vtk(mesh, spec.vectors[:, i], u, fdir / f"mode_{i:02d}.vtk",
                      title=f"vemacoustic mode {i} lambda={spec.lambdas[i]:.17g}")
    _write_effective(cfg, out)
    return EXIT_OK


def _finish_tables(cfg, out, csv_text, txt_text, partial) -> int:
    (out / "table.csv").write_text(csv_text)
    (out / "table.txt").write_text(txt_text)
    _write_effective(cfg, out)
    sys.stdout.write(txt_text)
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_study(cfg: StudyCommand) -> int:
    table = analysis.run_study(cfg.study_config())
    out = _out_dir(cfg)
    return _finish_tables(cfg, out, table.to_csv(), table.to_text(), table.partial)


def cmd_sweep(cfg: SweepCommand) -> int:
    res = analysis.sweep_sigma(cfg.study_config(), cfg.sigmas, n_check=cfg.n_check)
    out = _out_dir(cfg)
    partial = any(t.partial for t in res.tables)
    _dump_json([{"sigma": r.sigma, "status": r.status, "window": list(r.window),
                 "computed_count": r.computed_count, "exact_count": r.exact_count,
                 "degraded_modes": list(r.degraded_modes)} for r in res.reports], out / "spurious.json")
    return _finish_tables(cfg, out, analysis.sweep_to_csv(res, cfg.n_check),
                          analysis.sweep_to_text(res, cfg.n_check), partial)


COMMANDS = {
    "mesh": (MeshCommand, cmd_mesh),
    "solve": (SolveCommand, cmd_solve),
    "study": (StudyCommand, cmd_study),
    "sweep": (SweepCommand, cmd_sweep),
}


# --------------------------------------------------------------------------- argument parsing


def _bool(s):
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vemacoustic", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out-dir", dest="out_dir", default=S)

    def mesh_flags(sp, single=True):
        sp.add_argument("--family", default=S)
        if single:
            sp.add_argument("--N", type=int, dest="N", default=S)
        sp.add_argument("--M0", type=float, default=S)
        sp.add_argument("--domain", default=S, help='"rect:a,b" or "lshape"')

    def physics_flags(sp):
        sp.add_argument("--rho", type=float, default=S)
        sp.add_argument("--c", type=float, default=S)
        sp.add_argument("--stabilization", default=S, help="tangential | nodal")
        sp.add_argument("--sigma-rule", dest="sigma_rule", default=S, help="constant | half-trace")
        sp.add_argument("--sigma", type=float, default=S)

    def study_flags(sp):
        sp.add_argument("--Ns", type=int, nargs="*", dest="Ns", default=S)
        sp.add_argument("--normalization", default=S, help="nu | omega | omega_over_c")
        sp.add_argument("--n-modes", dest="n_modes", type=int, default=S)
        sp.add_argument("--solver-mode", dest="solver_mode", default=S)
        sp.add_argument("--tol", type=float, default=S)

    sp = sub.add_parser("mesh", help="generate a family mesh and its quality report")
    common(sp)
    mesh_flags(sp)

    sp = sub.add_parser("solve", help="solve one eigenproblem")
    common(sp)
    mesh_flags(sp)
    physics_flags(sp)
    sp.add_argument("--mesh-file", dest="mesh_file", default=S)
    sp.add_argument("--k", type=int, default=S)
    sp.add_argument("--tol", type=float, default=S)
    sp.add_argument("--max-iterations", dest="max_iterations", type=int, default=S)
    sp.add_argument("--solver-mode", dest="solver_mode", default=S)
    sp.add_argument("--export-fields", dest="export_fields", nargs="?", const=True, type=_bool, default=S)

    sp = sub.add_parser("study", help="convergence table over a refinement sequence")
    common(sp)
    mesh_flags(sp, single=False)
    physics_flags(sp)
    study_flags(sp)

    sp = sub.add_parser("sweep", help="convergence tables over stabilization parameters")
    common(sp)
    mesh_flags(sp, single=False)
    physics_flags(sp)
    study_flags(sp)
    sp.add_argument("--sigmas", type=float, nargs="*", default=S)
    sp.add_argument("--n-check", dest="n_check", type=int, default=S)
    return p


def load_config(command: str, overrides: dict, config_path=None):
    """Merge a JSON document with flag overrides and validate."""
    model, _ = COMMANDS[command]
    data = {}
    if config_path is not None:
        try:
            data = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{config_path}: top level must be an object")
    data.update(overrides)
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args = vars(ns)
    command = args.pop("command")
    verbose = args.pop("verbose")
    config_path = args.pop("config", None)
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(command, args, config_path)
        return COMMANDS[command][1](cfg)
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, MeshParseError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConvergenceError as exc:
        res = "" if exc.residuals is None else f"; residuals {np.array2string(np.asarray(exc.residuals), precision=3)}"
        print(f"solver error: {exc}{res}", file=sys.stderr)
        return EXIT_SOLVER
    except (MatrixError, ConsistencyError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except VemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry():
    sys.exit(main())
