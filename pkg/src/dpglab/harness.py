"""Convergence studies and stability diagnostics over mesh sequences."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from dpglab.dpg_core import Config, assemble
from dpglab.mesh import Mesh, build_unit_square, refine, refine_uniform
from dpglab.norms import (
    DENSE_DOF_LIMIT,
    DiagnosticsSizeError,
    DiagReport,
    boundedness_estimate,
    energy_residual,
    infsup_u_estimate,
    l2_error_u,
)
from dpglab.problems import ProblemSpec, load_problem
from dpglab.solver import SolveOptions, solve

CSV_COLUMNS = ("level", "N", "h_max", "error_u", "rate", "energy_residual", "seconds")
REFINE_MODES = ("uniform", "hanging-demo")


class LevelError(RuntimeError):
    """A study level failed; the original exception is ``__cause__``."""

    def __init__(self, level: int, cause: Exception):
        self.level = level
        super().__init__(f"level {level}: {cause}")


def quadrant_elements(mesh: Mesh, corner=(0.5, 0.5)) -> list[int]:
    """Elements whose centroid lies in the lower-left quadrant."""
    c = mesh.vertices[mesh.elements].mean(axis=1)
    return np.flatnonzero((c[:, 0] < corner[0]) & (c[:, 1] < corner[1])).tolist()


def mesh_sequence(n0: int, levels: int, mode: str = "uniform"):
    """Yield (level, mesh) for levels 1..levels.

    Level 1 is the n0 x n0 base mesh and each level refines the previous
    uniform mesh once. In ``hanging-demo`` mode every yielded mesh is the
    uniform one with its lower-left quadrant refined once more, so each
    level has hanging nodes on the quadrant boundary while h_max still
    halves per level.
    """
    if mode not in REFINE_MODES:
        raise ValueError(f"unknown refine mode {mode!r}; choose from {REFINE_MODES}")
    mesh = build_unit_square(n0)
    for level in range(1, levels + 1):
        if level > 1:
            mesh = refine_uniform(mesh)
        yield level, (mesh if mode == "uniform" else refine(mesh, quadrant_elements(mesh)))


@dataclass
class LevelRecord:
    level: int
    N: int
    h_max: float
    error_u: float
    rate: float | None
    energy_residual: float
    seconds: float


@dataclass
class StudyReport:
    config: dict
    records: list[LevelRecord] = field(default_factory=list)
    diagnostics: list | None = None

    @property
    def final_rate(self) -> float | None:
        return self.records[-1].rate if self.records else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow(
                [
                    r.level,
                    r.N,
                    repr(r.h_max),
                    repr(r.error_u),
                    "" if r.rate is None else repr(r.rate),
                    repr(r.energy_residual),
                    repr(r.seconds),
                ]
            )
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "levels": [asdict(r) for r in self.records],
            "diagnostics": self.diagnostics,
        }

    def write(self, prefix) -> tuple[Path, Path]:
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        csv_path = prefix.with_name(prefix.name + ".csv")
        json_path = prefix.with_name(prefix.name + ".json")
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return csv_path, json_path


def convergence_rate(e_prev: float, e_cur: float) -> float | None:
    if e_prev > 0 and e_cur > 0:
        return math.log2(e_prev / e_cur)
    return None


def run_convergence(
    problem: ProblemSpec | str,
    config: Config,
    levels: int,
    refine_mode: str = "uniform",
    n0: int = 2,
    solve_options: SolveOptions | None = None,
    timings: bool = True,
) -> StudyReport:
    """Solve on each level and record L2 errors in u and observed rates."""
    if levels < 2:
        raise ValueError("a convergence study needs at least 2 levels")
    if isinstance(problem, str):
        problem = load_problem(problem)
    opts = solve_options or SolveOptions()
    report = StudyReport(
        {
            "solution": problem.name,
            "u": problem.expression,
            "p": config.p,
            "r": config.r,
            "n0": n0,
            "levels": levels,
            "refine": refine_mode,
            "solver": opts.method,
        }
    )
    prev = None
    for level, mesh in mesh_sequence(n0, levels, refine_mode):
        t0 = time.perf_counter()
        try:
            system = assemble(mesh, config, problem.f)
            phi, _ = solve(system, opts)
        except Exception as exc:
            raise LevelError(level, exc) from exc
        seconds = time.perf_counter() - t0 if timings else 0.0
        err = l2_error_u(phi, problem.u)
        res = energy_residual(phi, system)
        rate = convergence_rate(prev, err) if prev is not None else None
        report.records.append(LevelRecord(level, system.N, mesh.h_max, err, rate, res, seconds))
        prev = err
    return report


def describe_mesh(mesh: Mesh, label: str) -> str:
    return f"{label} elements={mesh.n_elements} hanging_faces={mesh.n_hanging_faces} h_max={mesh.h_max:.6g}"


def run_diagnostics(
    config: Config,
    meshes,
    sigma_norm: str = "surrogate",
    max_dofs: int = DENSE_DOF_LIMIT,
    problem: ProblemSpec | str = "sinsin",
):
    """One DiagReport per (label, mesh); meshes over the DOF cap are skipped.

    Returns (reports, skipped) where skipped lists {"mesh", "error"} dicts.
    """
    if isinstance(problem, str):
        problem = load_problem(problem)
    reports, skipped = [], []
    for label, mesh in meshes:
        desc = describe_mesh(mesh, label)
        try:
            system = assemble(mesh, config, problem.f)
            c = infsup_u_estimate(mesh, config, system, max_dofs)
            b = boundedness_estimate(mesh, config, sigma_norm, system, max_dofs)
        except DiagnosticsSizeError as exc:
            skipped.append({"mesh": desc, "error": str(exc)})
            continue
        phi, _ = solve(system)
        reports.append(
            DiagReport(desc, config.p, config.r, c, b, energy_residual(phi, system), sigma_norm)
        )
    return reports, skipped


def diag_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mesh", "p", "r", "infsup_u", "boundedness", "energy_residual", "sigma_norm_mode"])
    for d in reports:
        w.writerow([d.mesh, d.p, d.r, repr(d.infsup_u), repr(d.boundedness), repr(d.energy_residual), d.sigma_norm_mode])
    return buf.getvalue()
