"""Experiment driver: mesh -> layout -> assembly -> eigensolve -> analysis.

Usage::

    python3 -m maxwell_cfem --domain cube --order 1 --coarse-n 4 --levels 2 --out runs/cube1
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import analysis as an
from . import assembly as asm
from . import eigensolve as es
from . import mesh as msh
from . import spaces as sp

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_NEV = {"cube": 11, "thick-l": 9, "fichera": 8}
CSV_COLUMNS = (
    "level", "h", "N", "dof_u", "dof_p", "mode", "lambda", "rel_err",
    "order_h", "slope_N", "l2_err", "hcurl_err",
)
CONSTRAINT_TOL = 1e-8
ORTHONORMAL_TOL = 1e-8


class RunError(RuntimeError):
    """A level failed; ``report`` holds everything finished before it."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass
class ExperimentSpec:
    domain: str = "cube"
    r: int = 1
    boundary: str = "tangential"
    coarse_n: int = 4
    levels: int = 2
    nev: int | None = None
    tol: float = 1e-10
    quad_degree: int | None = None  # assembly; default 2(r+1)
    error_quad_degree: int = 8
    out: str | None = None
    export_matrices: bool = False
    export_vtk: bool = False
    seed: int = 20240611
    max_dofs: int = 500_000
    eigenfunction_errors: bool = True  # cube only

    def __post_init__(self):
        self.domain = msh.DomainKind.parse(self.domain).value
        self.boundary = sp.BoundaryMode.parse(self.boundary).value
        if self.r not in sp.SUPPORTED_ORDERS:
            raise ValueError(f"r must be one of {sp.SUPPORTED_ORDERS}")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.coarse_n < 1:
            raise ValueError("coarse_n must be >= 1")
        if self.nev is None:
            self.nev = DEFAULT_NEV[self.domain]
        if self.nev < 1:
            raise ValueError("nev must be >= 1")
        if self.out is not None:
            out = Path(self.out)
            out.mkdir(parents=True, exist_ok=True)
            if not os.access(out, os.W_OK):
                raise ValueError(f"output directory {out} is not writable")

    @property
    def ns(self) -> list[int]:
        return [self.coarse_n * 2 ** k for k in range(self.levels)]


def estimated_dim(domain, n: int, r: int) -> int:
    """Upper estimate of the pencil dimension (before boundary elimination)."""
    boxes = len(msh.DomainKind.parse(domain).boxes)
    return boxes * (3 * (n * r + 1) ** 3 + (n * (r + 1) + 1) ** 3)


@dataclass
class Assertion:
    name: str
    level: int | None
    passed: bool
    detail: str = ""


@dataclass
class RunReport:
    spec: dict
    convergence: an.ConvergenceReport
    environment: dict
    assertions: list[Assertion] = field(default_factory=list)
    partial: bool = False
    error: str | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return not self.partial and all(a.passed for a in self.assertions)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "spec": self.spec,
            "environment": self.environment,
            "convergence": self.convergence.to_dict(),
            "assertions": [asdict(a) for a in self.assertions],
            "partial": self.partial,
            "error": self.error,
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {data.get('schema_version')!r}")
        return cls(
            spec=data["spec"],
            convergence=an.ConvergenceReport.from_dict(data["convergence"]),
            environment=data["environment"],
            assertions=[Assertion(**a) for a in data["assertions"]],
            partial=data["partial"],
            error=data["error"],
            schema_version=data["schema_version"],
        )

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


def _environment() -> dict:
    return {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
        "cpu_count": os.cpu_count(),
        "omp_num_threads": os.environ.get("OMP_NUM_THREADS"),
        "factor_backends": list(es.available_backends()),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _vertex_values(layout: sp.DofLayout, mesh: msh.TetMesh, u: np.ndarray, p: np.ndarray):
    """u_h and p_h at mesh vertices (vertices are Lagrange nodes of every order)."""

    def lookup(space, full):
        pts = mesh.lattice_index * space.order
        key = lambda a: np.ravel_multi_index((a - lo).T, dims)
        lo = space.points.min(axis=0)
        dims = tuple(space.points.max(axis=0) - lo + 1)
        order = np.argsort(key(space.points))
        pos = np.searchsorted(key(space.points)[order], key(pts))
        return full[order[pos]]

    return (lookup(layout.vector, sp.expand_vector(layout, u)),
            lookup(layout.scalar, sp.expand_scalar(layout, p)))


def _check(report: RunReport, name: str, level: int | None, ok: bool, detail: str = "") -> None:
    report.assertions.append(Assertion(name, level, bool(ok), detail))
    if not ok:
        log.error("assertion %s failed at level %s: %s", name, level, detail)


def _solve_level(spec: ExperimentSpec, level: int, n: int, report: RunReport, out: Path | None):
    t0 = time.perf_counter()
    mesh = msh.generate(spec.domain, n)
    try:
        layout = sp.build_layout(mesh, spec.r, spec.boundary)
    except sp.LayoutError as exc:
        raise RunError(f"level {level} (n={n}): {exc}") from exc
    t1 = time.perf_counter()
    block = asm.assemble(mesh, layout, spec.quad_degree)
    t2 = time.perf_counter()
    if spec.nev >= layout.n_u:
        raise RunError(f"level {level} (n={n}): nev={spec.nev} exceeds n_u={layout.n_u}")
    cfg = es.SolverConfig(nev=spec.nev, tol=spec.tol, seed=spec.seed)
    ordering = es.nested_dissection(sp.dof_coordinates(layout), 1.0 / n)
    try:
        sol = es.largest_pencil_modes(block.S, block.T, cfg, G=block.G, K=block.K, ordering=ordering)
    except es.ConvergenceError as exc:
        raise RunError(f"level {level} (n={n}): {exc}") from exc
    t3 = time.perf_counter()

    lam = sol.lam
    ref = report.convergence.reference
    u, p = sol.u, sol.p
    constraint = [asm.residual_constraint(block, u[:, i], p[:, i]) for i in range(len(lam))]
    gram = sol.vectors.T @ (block.S @ sol.vectors)

    _check(report, "converged", level, sol.all_converged)
    _check(report, "residual", level, bool(np.all(sol.residuals <= spec.tol)),
           f"max {float(sol.residuals.max()):.3e}")
    _check(report, "constraint", level, max(constraint) <= CONSTRAINT_TOL, f"max {max(constraint):.3e}")
    _check(report, "s_orthonormal", level,
           float(np.abs(gram - np.eye(len(lam))).max()) <= ORTHONORMAL_TOL)
    _check(report, "positive", level, bool(np.all(lam > 0)), f"min {float(lam.min()):.6g}")
    _check(report, "no_spurious", level, float(lam.min()) > 0.5 * ref[0],
           f"min {float(lam.min()):.6g} vs half reference {0.5 * ref[0]:.6g}")

    l2, hc = [], []
    if spec.domain == "cube" and spec.eigenfunction_errors:
        sampler = an.FieldSampler(mesh, layout, spec.error_quad_degree)
        projectors: dict[float, an.EigenspaceProjector] = {}
        for i in range(min(len(lam), len(ref))):
            if ref[i] not in projectors:
                projectors[ref[i]] = an.EigenspaceProjector(
                    sampler.points, sampler.weights, an.cube_eigenspace_basis(ref[i]))
            res = projectors[ref[i]](sampler(u[:, i], p[:, i]))
            l2.append(res.l2_error)
            hc.append(res.hcurl_error)
    t4 = time.perf_counter()

    result = an.LevelResult(
        level=level, n=n, h=mesh.h, num_tets=mesh.num_tets,
        dof_u=layout.n_u, dof_p=layout.n_p, dof_total=layout.total_nodes_dofs,
        lam=[float(v) for v in lam],
        rel_err=an.relative_errors(lam, ref),
        l2_err=l2, hcurl_err=hc,
        residuals=[float(v) for v in sol.residuals],
        constraint_residuals=[float(v) for v in constraint],
        iterations=sol.iterations,
        regularized=sol.regularized,
        runtime={"layout": t1 - t0, "assembly": t2 - t1, "solve": t3 - t2, "errors": t4 - t3},
    )

    if out is not None:
        if spec.export_matrices:
            asm.export_matrix_market(block, out / f"level{level}", prefix=f"n{n}_")
        if spec.export_vtk:
            uv, pv = _vertex_values(layout, mesh, u[:, 0], p[:, 0])
            msh.write_vtk(mesh, out / f"level{level}_mode0.vtk",
                          point_data={"u_h": uv, "p_h": pv})
    return result


def run(spec: ExperimentSpec) -> RunReport:
    """Run every level; raises :class:`RunError` carrying the partial report."""
    reference = an.CATALOG.reference(spec.domain, spec.nev)
    report = RunReport(
        spec=asdict(spec),
        convergence=an.ConvergenceReport(
            domain=spec.domain, r=spec.r, boundary=spec.boundary,
            reference=[float(v) for v in reference],
        ),
        environment=_environment(),
    )
    out = Path(spec.out) if spec.out else None
    for level, n in enumerate(spec.ns):
        dim = estimated_dim(spec.domain, n, spec.r)
        if dim > spec.max_dofs:
            report.partial = True
            report.error = (f"level {level} (n={n}) needs about {dim} unknowns, above the "
                            f"--max-dofs cap of {spec.max_dofs}")
            raise RunError(report.error, report)
        log.info("level %d: %s n=%d r=%d (%s)", level, spec.domain, n, spec.r, spec.boundary)
        try:
            report.convergence.levels.append(_solve_level(spec, level, n, report, out))
        except RunError as exc:
            report.partial = True
            report.error = str(exc)
            exc.report = report
            raise
    conv = report.convergence
    bad = conv.monotone_violations()
    _check(report, "monotone_errors", None, not bad, f"(mode, level) growth at {bad}" if bad else "")
    conv.warn_if_below_reference()
    return report


# ---------------------------------------------------------------------------
# output


def convergence_rows(report: RunReport) -> list[dict]:
    conv = report.convergence
    rows = []
    for i, lv in enumerate(conv.levels):
        for mode, value in enumerate(lv.lam):
            order = slope = None
            if i > 0 and mode < len(lv.rel_err):
                o = conv.eigenvalue_orders(mode)[i - 1]
                if o is not None:
                    order, slope = o, -o / 3.0
            rows.append({
                "level": lv.level, "h": lv.h, "N": lv.num_tets,
                "dof_u": lv.dof_u, "dof_p": lv.dof_p, "mode": mode, "lambda": value,
                "rel_err": lv.rel_err[mode] if mode < len(lv.rel_err) else None,
                "order_h": order, "slope_N": slope,
                "l2_err": lv.l2_err[mode] if mode < len(lv.l2_err) else None,
                "hcurl_err": lv.hcurl_err[mode] if mode < len(lv.hcurl_err) else None,
            })
    return rows


def write_outputs(report: RunReport, out) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "report.json", "csv": out / "convergence.csv"}
    paths["json"].write_text(report.to_json())
    with open(paths["csv"], "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in convergence_rows(report):
            writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})
    paths["plots"] = emit_plot_data(report, out)
    return paths


def _guide(slope: float, n0: float, e0: float, ns) -> list[float]:
    return [e0 * (n / n0) ** slope for n in ns]


def emit_plot_data(report: RunReport, out) -> list[Path]:
    """Per-figure CSV (series, N, value) with reference-slope guides."""
    out = Path(out)
    conv = report.convergence
    r = conv.r
    ns = [lv.num_tets for lv in conv.levels]
    eig_series, fn_series = [], []
    if conv.levels:
        first = conv.levels[0]
        eig_series.append(("lambda_1", [lv.rel_err[0] for lv in conv.levels]))
        if conv.domain == "cube":
            guides = [-2.0 * r / 3.0]
        elif conv.domain == "thick-l":
            guides = [an.THICK_L_N_SLOPE]
        else:
            guides = [an.FICHERA_N_SLOPE]
        for g in guides:
            eig_series.append((f"guide_slope_{g:+.3f}", _guide(g, ns[0], first.rel_err[0], ns)))
        if conv.domain == "cube" and first.l2_err:
            fn_series.append(("l2_1", [lv.l2_err[0] for lv in conv.levels]))
            fn_series.append(("hcurl_1", [lv.hcurl_err[0] for lv in conv.levels]))
            for g, e0 in ((-r / 3.0, first.hcurl_err[0]), (-(r + 1) / 3.0, first.l2_err[0])):
                fn_series.append((f"guide_slope_{g:+.3f}", _guide(g, ns[0], e0, ns)))

    paths = []
    figures = [("plot_eigenvalue.csv", eig_series)]
    if conv.domain == "cube":
        figures.append(("plot_eigenfunction.csv", fn_series))
    for name, series in figures:
        path = out / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["series", "N", "value"])
            for label, values in series:
                for n, v in zip(ns, values):
                    writer.writerow([label, n, repr(float(v))])
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# CLI


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="maxwell-cfem", description=__doc__.splitlines()[0])
    ap.add_argument("--domain", choices=["cube", "thick-l", "fichera"], default="cube")
    ap.add_argument("--order", type=int, choices=[1, 2], default=1, help="vector order r")
    ap.add_argument("--bc", choices=["tangential", "full"], default="tangential")
    ap.add_argument("--coarse-n", type=int, default=4, help="cells per unit edge on level 0")
    ap.add_argument("--levels", type=int, default=2)
    ap.add_argument("--nev", type=int, default=None)
    ap.add_argument("--tol", type=float, default=1e-10)
    ap.add_argument("--quad-degree", type=int, default=None)
    ap.add_argument("--out", default=None)
    ap.add_argument("--export-matrices", action="store_true")
    ap.add_argument("--export-vtk", action="store_true")
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--max-dofs", type=int, default=500_000)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def spec_from_args(args) -> ExperimentSpec:
    return ExperimentSpec(
        domain=args.domain, r=args.order, boundary=args.bc, coarse_n=args.coarse_n,
        levels=args.levels, nev=args.nev, tol=args.tol, quad_degree=args.quad_degree,
        out=args.out, export_matrices=args.export_matrices, export_vtk=args.export_vtk,
        seed=args.seed, max_dofs=args.max_dofs,
    )


def _print_summary(report: RunReport) -> None:
    conv = report.convergence
    for i, lv in enumerate(conv.levels):
        lams = " ".join(f"{v:.8f}" for v in lv.lam)
        print(f"n={lv.n:3d} N={lv.num_tets:7d} dof_u={lv.dof_u:7d} dof_p={lv.dof_p:7d}  {lams}")
    if len(conv.levels) > 1:
        orders = conv.eigenvalue_orders(0)
        print("lambda_1 h-orders:", " ".join("-" if o is None else f"{o:.3f}" for o in orders))
    failed = [a for a in report.assertions if not a.passed]
    print("assertions:", "all passed" if not failed else
          "; ".join(f"{a.name}@{a.level} {a.detail}" for a in failed))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run(spec)
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.report is not None and spec.out:
            write_outputs(exc.report, spec.out)
        return 1
    if spec.out:
        write_outputs(report, spec.out)
    _print_summary(report)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
