"""Batch driver: ``qcd run <config.json>`` and ``qcd describe <config.json>``.

Exit codes: 0 success, 2 invalid config, 3 geometry or mesh failure,
4 solver failure.  Failures print one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional

from .energy import (annulus_energy_exact, core_energy, energy_sweep, regularized_energy,
                     renormalized_energy)
from .errors import (ConfigError, GeometryError, MeshError, NonFiniteIntegrand, QCDError,
                     SolverDiverged, IncompatibleFlux, NotPositiveDefinite)
from .fields import Dislocation
from .forces import System, force_report
from .geometry import Disc, Domain, Polygon, triangulate, write_mesh
from .material import MaterialConstants, validate

EXPERIMENTS = ("validate", "energy", "sweep", "forces")
DEFAULT_LADDER = (0.1, 0.05, 0.025, 0.0125)
# seconds per mesh node per corrective solve, measured on a desktop core
SECONDS_PER_NODE = 4e-5


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------

def _number(d: dict, key: str, where: str) -> float:
    if key not in d:
        raise ConfigError(f"{where}: missing '{key}'")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key} must be a finite number, got {v!r}")
    return float(v)


def _point(v, where: str) -> tuple[float, float]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(f"{where} must be a pair of numbers")
    return _number({"x": v[0]}, "x", where), _number({"y": v[1]}, "y", where)


@dataclass
class RunConfig:
    material: MaterialConstants
    domain: Domain
    dislocations: list
    experiment: str
    eps_ladder: list = field(default_factory=lambda: list(DEFAULT_LADDER))
    h: float = 0.02
    grade: float = 0.25
    solver_tol: float = 1e-10
    fd_step: Optional[float] = None
    out_dir: str = "out"
    dump_meshes: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {"material", "domain", "dislocations", "experiment", "eps_ladder", "mesh",
                 "tolerances", "output"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        mat = d.get("material")
        if not isinstance(mat, dict):
            raise ConfigError("'material' must be an object {C, K, R}")
        material = MaterialConstants(*(_number(mat, k, "material") for k in "CKR"))

        dom = d.get("domain")
        if not isinstance(dom, dict) or len(dom) != 1:
            raise ConfigError("'domain' must be {disc: {...}} or {polygon: {...}}")
        if "disc" in dom:
            disc = dom["disc"]
            if not isinstance(disc, dict):
                raise ConfigError("domain.disc must be an object")
            outer = Disc(_point(disc.get("center"), "domain.disc.center"),
                         _number(disc, "radius", "domain.disc"))
        elif "polygon" in dom:
            verts = dom["polygon"].get("vertices") if isinstance(dom["polygon"], dict) else None
            if not isinstance(verts, list) or len(verts) < 3:
                raise ConfigError("domain.polygon.vertices must list at least three points")
            outer = Polygon(tuple(_point(v, "domain.polygon.vertices[]") for v in verts))
        else:
            raise ConfigError(f"unknown domain kind {next(iter(dom))!r}")

        ds = d.get("dislocations")
        if not isinstance(ds, list):
            raise ConfigError("'dislocations' must be a list")
        dislocations = []
        for k, e in enumerate(ds):
            if not isinstance(e, dict):
                raise ConfigError(f"dislocations[{k}] must be an object")
            where = f"dislocations[{k}]"
            dislocations.append(Dislocation((_number(e, "x", where), _number(e, "y", where)),
                                            _number(e, "bu", where), _number(e, "bw", where)))

        exp = d.get("experiment")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"'experiment' must be one of {EXPERIMENTS}, got {exp!r}")
        ladder = d.get("eps_ladder", list(DEFAULT_LADDER))
        if not isinstance(ladder, list) or not ladder:
            raise ConfigError("'eps_ladder' must be a non-empty list")
        ladder = [_number({"e": e}, "e", "eps_ladder[]") for e in ladder]
        mesh = d.get("mesh", {})
        tol = d.get("tolerances", {})
        out = d.get("output", {})
        for name, sec in (("mesh", mesh), ("tolerances", tol), ("output", out)):
            if not isinstance(sec, dict):
                raise ConfigError(f"'{name}' must be an object")
        fd = tol.get("fd_step")
        cfg = cls(
            material=material,
            domain=Domain(outer),
            dislocations=dislocations,
            experiment=exp,
            eps_ladder=ladder,
            h=_number(mesh, "h", "mesh") if "h" in mesh else 0.02,
            grade=_number(mesh, "grade", "mesh") if "grade" in mesh else 0.25,
            solver_tol=_number(tol, "solver", "tolerances") if "solver" in tol else 1e-10,
            fd_step=None if fd is None else _number(tol, "fd_step", "tolerances"),
            out_dir=str(out.get("dir", "out")),
            dump_meshes=bool(out.get("dump_meshes", False)),
        )
        return cfg

    def to_dict(self) -> dict:
        outer = self.domain.outer
        if isinstance(outer, Disc):
            dom = {"disc": {"center": list(outer.center), "radius": outer.radius}}
        else:
            dom = {"polygon": {"vertices": [list(v) for v in outer.vertices]}}
        return {
            "material": {"C": self.material.C, "K": self.material.K, "R": self.material.R},
            "domain": dom,
            "dislocations": [{"x": d.position[0], "y": d.position[1], "bu": d.b_u, "bw": d.b_w}
                             for d in self.dislocations],
            "experiment": self.experiment,
            "eps_ladder": list(self.eps_ladder),
            "mesh": {"h": self.h, "grade": self.grade},
            "tolerances": {"solver": self.solver_tol, "fd_step": self.fd_step},
            "output": {"dir": self.out_dir, "dump_meshes": self.dump_meshes},
        }

    def check(self) -> "RunConfig":
        """Material, domain and separation checks; raises before any solve."""
        validate(self.material)
        self.domain.validate()
        if self.h <= 0 or not 0 < self.grade <= 1:
            raise ConfigError("mesh.h must be positive and mesh.grade in (0, 1]")
        if self.solver_tol <= 0:
            raise ConfigError("tolerances.solver must be positive")
        if any(e <= 0 for e in self.eps_ladder) or len(set(self.eps_ladder)) != len(self.eps_ladder):
            raise ConfigError("eps_ladder must hold distinct positive radii")
        if not self.dislocations:
            raise ConfigError("at least one dislocation is required")
        for d in self.dislocations:
            if not bool(self.domain.outer.contains(d.xy)):
                raise ConfigError(f"dislocation at {d.position} is outside the domain")
            if d.b_u == 0 and d.b_w == 0:
                raise ConfigError(f"dislocation at {d.position} has zero Burgers moduli")
        for a, b in combinations(self.dislocations, 2):
            if math.dist(a.position, b.position) == 0:
                raise ConfigError(f"two dislocations share the position {a.position}")
        if self.experiment in ("validate", "sweep"):
            eps = max(self.eps_ladder)
            try:
                self.domain.with_holes([d.position for d in self.dislocations], eps).validate()
            except GeometryError as exc:
                raise ConfigError(f"cores of radius {eps} do not fit: {exc}") from exc
        if self.experiment == "validate":
            if not isinstance(self.domain.outer, Disc) or len(self.dislocations) != 1 \
                    or math.dist(self.dislocations[0].position, self.domain.outer.center) > 0:
                raise ConfigError("validate needs one dislocation at the center of a disc domain")
        if self.experiment == "sweep" and len(self.eps_ladder) < 3:
            raise ConfigError("sweep needs at least three radii in eps_ladder")
        return self


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(raw)


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def fmt(v: float) -> str:
    return "%.17g" % v


def to_json(obj, indent: int = 0) -> str:
    """JSON with every float printed to 17 significant digits."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if hasattr(obj, "tolist"):
        return to_json(obj.tolist(), indent)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if any(isinstance(v, (dict, list, tuple)) for v in obj):
            return "[\n" + ",\n".join(inner + to_json(v, indent + 1) for v in obj) + "\n" + pad + "]"
        return "[" + ", ".join(to_json(v, indent + 1) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_mesh(out: Path, name: str, mesh) -> None:
    fd, tmp = tempfile.mkstemp(dir=out, prefix=name, suffix=".tmp")
    os.close(fd)
    write_mesh(tmp, mesh)
    os.replace(tmp, out / name)


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

def _breakdown_dict(b) -> dict:
    return {"E0": b.E0, "F_self": b.F_self, "F_int": b.F_int, "F_elastic": b.F_elastic, "F": b.F}


def run_validate(cfg: RunConfig, out: Path, threads: int) -> dict:
    d = cfg.dislocations[0]
    R = cfg.domain.outer.radius
    rows = []
    for eps in cfg.eps_ladder:
        J, committed, mesh = regularized_energy(cfg.material, cfg.dislocations, cfg.domain, eps,
                                                cfg.h, cfg.grade, cfg.solver_tol)
        exact = annulus_energy_exact(cfg.material, d.b_u, d.b_w, R, eps)
        rows.append({"eps": eps, "eps_committed": committed, "J_quadrature": J, "J_exact": exact,
                     "relative_error": abs(J - exact) / abs(exact), "nodes": mesh.n_nodes})
        if cfg.dump_meshes:
            _dump_mesh(out, f"validate_eps_{len(rows) - 1}.qcmesh", mesh)
    return {"validate": rows, "passed": all(r["relative_error"] < 0.01 for r in rows)}


def run_energy(cfg: RunConfig, out: Path, threads: int) -> dict:
    region = cfg.domain.polygonized(cfg.h)
    mesh = triangulate(region, cfg.h, cfg.grade)
    b = renormalized_energy(cfg.material, cfg.dislocations, region, h=cfg.h, grade=cfg.grade,
                            limit_mesh=mesh, tol=cfg.solver_tol)
    if cfg.dump_meshes:
        _dump_mesh(out, "limit.qcmesh", mesh)
    return {"energy": _breakdown_dict(b)}


def sweep_csv(b) -> str:
    lines = ["eps,eps_committed,J_eps,E0_ln_inv_eps_plus_F,remainder,E0_fit,F_fit,fit_residual"]
    for eps, J in b.J_eps.items():
        ec = b.committed_eps[eps]
        model = b.E0 * math.log(1.0 / ec) + b.F
        lines.append(",".join(fmt(v) for v in (eps, ec, J, model, b.remainders[eps],
                                               b.fit.E0, b.fit.F, b.fit.residual)))
    return "\n".join(lines) + "\n"


def run_sweep(cfg: RunConfig, out: Path, threads: int) -> dict:
    b = energy_sweep(cfg.material, cfg.dislocations, cfg.domain, cfg.eps_ladder, cfg.h, cfg.grade,
                     cfg.solver_tol, threads=threads, keep_meshes=cfg.dump_meshes)
    atomic_write(out / "sweep.csv", sweep_csv(b))
    for k, mesh in enumerate(b.meshes.values()):
        _dump_mesh(out, f"sweep_eps_{k}.qcmesh", mesh)
    return {
        "material": {"C": cfg.material.C, "K": cfg.material.K, "R": cfg.material.R},
        "dislocations": [d.to_dict() for d in cfg.dislocations],
        "eps_ladder": list(b.J_eps),
        "J_eps": list(b.J_eps.values()),
        "E0_exact": core_energy(cfg.material, cfg.dislocations),
        "E0_fit": b.fit.E0,
        "F_components": {"F_self": b.F_self, "F_int": b.F_int, "F_elastic": b.F_elastic, "F": b.F},
        "F_fit": b.fit.F,
        "residuals": list(b.remainders.values()),
        "energy": _breakdown_dict(b),
        "sweep": [{"eps": e, "eps_committed": b.committed_eps[e], "J_eps": J,
                   "remainder": b.remainders[e]} for e, J in b.J_eps.items()],
        "fit": {"E0": b.fit.E0, "F": b.fit.F, "residual": b.fit.residual},
    }


def run_forces(cfg: RunConfig, out: Path, threads: int) -> dict:
    system = System(cfg.material, cfg.dislocations, cfg.domain, h=cfg.h, grade=cfg.grade,
                    tol=cfg.solver_tol)
    report = force_report(system, fd=True, h_fd=cfg.fd_step, threads=threads)
    if cfg.dump_meshes:
        _dump_mesh(out, "limit.qcmesh", system.mesh)
    return {"energy": _breakdown_dict(system.energy()), "pk_forces": report.to_dict()}


RUNNERS = {"validate": run_validate, "energy": run_energy, "sweep": run_sweep, "forces": run_forces}


# --------------------------------------------------------------------------
# describe
# --------------------------------------------------------------------------

def _shoelace(v) -> float:
    return 0.5 * abs(sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(v, v[1:] + v[:1])))


def describe(cfg: RunConfig) -> str:
    outer = cfg.domain.outer
    lines = [f"experiment: {cfg.experiment}",
             f"material: C={fmt(cfg.material.C)} K={fmt(cfg.material.K)} R={fmt(cfg.material.R)}"]
    if isinstance(outer, Disc):
        lines.append(f"domain: disc center={list(outer.center)} radius={fmt(outer.radius)} "
                     f"area={fmt(outer.area)}")
    else:
        lines.append(f"domain: polygon with {len(outer.vertices)} vertices, "
                     f"shoelace area={fmt(_shoelace(list(outer.vertices)))}")
    lines.append(f"dislocations: {len(cfg.dislocations)}")
    for d in cfg.dislocations:
        lines.append(f"  at ({fmt(d.position[0])}, {fmt(d.position[1])}) bu={fmt(d.b_u)} bw={fmt(d.b_w)}")
    lines.append(f"mesh: h={fmt(cfg.h)} grade={fmt(cfg.grade)}")
    total_nodes = 0
    if cfg.experiment in ("validate", "sweep"):
        lines.append(f"meshes: {len(cfg.eps_ladder)}")
        for eps in cfg.eps_ladder:
            holed = cfg.domain.without_holes().polygonized(cfg.h).with_holes(
                [d.position for d in cfg.dislocations], eps)
            mesh = triangulate(holed, cfg.h, cfg.grade)
            total_nodes += mesh.n_nodes
            lines.append(f"  eps={fmt(eps)} nodes={mesh.n_nodes} triangles={len(mesh.tris)}")
    if cfg.experiment in ("energy", "sweep", "forces"):
        mesh = triangulate(cfg.domain.without_holes().polygonized(cfg.h), cfg.h, cfg.grade)
        factor = 5 if cfg.experiment == "forces" else 1
        total_nodes += factor * mesh.n_nodes
        lines.append(f"limit mesh: nodes={mesh.n_nodes} triangles={len(mesh.tris)}")
    # two scalar Neumann solves per mesh
    lines.append(f"estimated runtime: {2 * SECONDS_PER_NODE * total_nodes:.1f} s")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

EXIT_CONFIG, EXIT_GEOMETRY, EXIT_SOLVER = 2, 3, 4


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, NotPositiveDefinite)):
        return EXIT_CONFIG
    if isinstance(exc, (GeometryError, MeshError)):
        return EXIT_GEOMETRY
    return EXIT_SOLVER


def _fail(exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}) + "\n")
    return code


def _threads(arg: Optional[int]) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("QCD_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ConfigError(f"QCD_THREADS must be an integer, got {env!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcd", description="Dislocation energies and forces in hexagonal quasi-crystals.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment of a config file")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    run.add_argument("--threads", type=int, default=None, help="worker threads (default $QCD_THREADS or 1)")
    desc = sub.add_parser("describe", help="print the plan of a config without solving")
    desc.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).check()
        if args.command == "describe":
            sys.stdout.write(describe(cfg))
            return 0
        threads = _threads(args.threads)
    except (ConfigError, NotPositiveDefinite, GeometryError) as exc:
        return _fail(exc, EXIT_CONFIG)
    except MeshError as exc:
        return _fail(exc, EXIT_GEOMETRY)
    out = Path(args.out or cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()
        result = {"experiment": cfg.experiment, "config": cfg.to_dict()}
        result.update(RUNNERS[cfg.experiment](cfg, out, threads))
        atomic_write(out / "result.json", to_json(result) + "\n")
    except OSError as exc:
        return _fail(exc, EXIT_CONFIG)
    except (QCDError, ValueError, FloatingPointError, SolverDiverged, IncompatibleFlux,
            NonFiniteIntegrand) as exc:
        return _fail(exc, exit_code(exc))
    sys.stderr.write(f"{cfg.experiment} finished in {time.perf_counter() - start:.1f} s\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
