"""Acceptance criteria, one test each.

Every test prints a single PASS/FAIL line with the measured quantities;
the lines are repeated in a summary section at the end of the pytest run.
Run standalone with ``python tests/test_acceptance.py``.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES, all_meshes, conforming_meshes, hanging_meshes, single_element  # noqa: E402
from oracles import accumulated_form, element_test_coeffs, hat_n2  # noqa: E402
from dpglab.dpg_core import Config, assemble  # noqa: E402
from dpglab.harness import mesh_sequence, run_convergence  # noqa: E402
from dpglab.mesh import build_unit_square  # noqa: E402
from dpglab.norms import boundedness_estimate, face_h12_norm, infsup_u_estimate  # noqa: E402
from dpglab.polybasis import (  # noqa: E402
    MAX_QUADRATURE_DEGREE,
    EdgeBasis,
    TriBasis,
    edge_quadrature,
    tri_dim,
    tri_quadrature,
)

pytestmark = pytest.mark.acceptance


def report(name, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def test_convergence_order_uniform():
    t0 = time.perf_counter()
    rates = {p: run_convergence("sinsin", Config(p), 5, "uniform", n0=2).final_rate for p in (0, 1, 2)}
    seconds = time.perf_counter() - t0
    ok = all(rates[p] >= p + 1 - 0.15 for p in rates) and seconds < 60
    detail = ", ".join(f"p={p} rate={r:.4f} (>= {p + 0.85:.2f})" for p, r in rates.items())
    assert report("convergence order, uniform", ok, f"{detail}; runtime {seconds:.1f}s (< 60s)")


def test_convergence_order_hanging():
    rates = {p: run_convergence("sinsin", Config(p), 5, "hanging-demo", n0=2).final_rate for p in (0, 1)}
    ok = all(abs(rates[p] - (p + 1)) <= 0.2 for p in rates)
    detail = ", ".join(f"p={p} rate={r:.4f} (|rate-{p + 1}| <= 0.2)" for p, r in rates.items())
    assert report("convergence order, hanging-demo", ok, detail)


def test_exactness_bubble():
    norm_u = 1 / 30  # ||x(1-x)y(1-y)||_L2 on the unit square
    worst = 0.0
    for mode in ("uniform", "hanging-demo"):
        rep = run_convergence("bubble4", Config(4), 4, mode, n0=2, timings=False)
        worst = max(worst, max(r.error_u for r in rep.records) / norm_u)
    assert report("exactness bubble4 p=4", worst <= 1e-9, f"max relative L2 error {worst:.2e} (<= 1e-9) over 4 uniform + 4 hanging levels")


def small_meshes():
    meshes = dict(all_meshes())
    meshes["single"] = single_element()
    for n0 in (1, 2):
        for mode in ("uniform", "hanging-demo"):
            for lev, m in mesh_sequence(n0, 3, mode):
                meshes[f"{mode} n0={n0} level={lev}"] = m
    return meshes


def test_well_posedness():
    worst, count = math.inf, 0
    for p in (0, 1, 2):
        for mesh in small_meshes().values():
            A = assemble(mesh, Config(p)).matrix.toarray()
            n = len(A)
            if n > 400:
                continue
            worst = min(worst, np.linalg.eigvalsh(A)[0] / (np.trace(A) / n))
            count += 1
    ok = count > 0 and worst > 1e-12
    assert report("well-posedness", ok, f"min lambda_min(A)/(tr(A)/N) = {worst:.3e} (> 1e-12) over {count} systems with N <= 400")


def uniform_levels():
    return [m for _, m in mesh_sequence(1, 4, "uniform")]


def test_infsup_stability():
    parts, ok = [], True
    for p in (0, 1):
        vals = [infsup_u_estimate(m, Config(p)) for m in uniform_levels()]
        ratio = max(vals) / min(vals)
        ok &= min(vals) > 0 and ratio <= 2
        parts.append(f"p={p} c_h={[round(v, 4) for v in vals]} ratio={ratio:.3f}")
    assert report("inf-sup stability", ok, "; ".join(parts) + " (ratio <= 2)")


def test_boundedness_surrogate():
    parts, ok = [], True
    for p in (0, 1):
        vals = [boundedness_estimate(m, Config(p), "surrogate") for m in uniform_levels()]
        ratio = max(vals) / min(vals)
        ok &= ratio <= 2
        parts.append(f"p={p} C_h={[round(v, 3) for v in vals]} ratio={ratio:.3f}")
    assert report("boundedness (surrogate sigma-hat norm)", ok, "; ".join(parts) + " (ratio <= 2)")


def test_jump_annihilation():
    worst_uhat = worst_sigmahat = 0.0
    for name, mesh in all_meshes().items():
        for p in (0, 1, 2):
            cfg = Config(p)
            psi = element_test_coeffs(mesh, cfg, tau=(lambda x, y: np.ones_like(x), lambda x, y: 0 * x))
            dm, acc = accumulated_form(mesh, cfg, psi)
            worst_uhat = max(worst_uhat, np.abs(acc[dm.uhat_slice]).max())
            cfg4 = Config(p, max(p + 2, 4))
            bubble = lambda x, y: x * (1 - x) * y * (1 - y)
            dm, acc = accumulated_form(mesh, cfg4, element_test_coeffs(mesh, cfg4, v=bubble))
            worst_sigmahat = max(worst_sigmahat, np.abs(acc[dm.sigmahat_slice]).max())
            if name not in ("n1", "one-split"):
                dm, acc = accumulated_form(mesh, cfg, element_test_coeffs(mesh, cfg, v=hat_n2))
                worst_sigmahat = max(worst_sigmahat, np.abs(acc[dm.sigmahat_slice]).max())
    ok = worst_uhat <= 1e-12 and worst_sigmahat <= 1e-12
    n_h = len(hanging_meshes())
    n_c = len(conforming_meshes())
    assert report(
        "jump annihilation",
        ok,
        f"max u-hat row {worst_uhat:.1e}, max sigma-hat row {worst_sigmahat:.1e} (<= 1e-12) on {n_c} conforming + {n_h} hanging meshes",
    )


def test_fractional_norm():
    const_err = max(abs(face_h12_norm([c]) - abs(c)) for c in (1.0, -2.5, 7.0))
    coeffs = [0.5, 1 / (2 * math.sqrt(3))]  # v(x) = x in the shifted Legendre basis
    lin_err = abs(face_h12_norm(coeffs) ** 2 - 4 / 3)
    ok = const_err <= 1e-12 and lin_err <= 1e-12
    assert report("fractional norm", ok, f"constant error {const_err:.1e}, |norm^2(x) - 4/3| = {lin_err:.1e} (<= 1e-12)")


def test_quadrature_and_basis():
    gram_err = 0.0
    for k in range(7):
        rule = tri_quadrature(2 * k)
        phi = TriBasis(k).eval(rule.points)
        gram_err = max(gram_err, np.abs((phi * rule.weights) @ phi.T - np.eye(tri_dim(k))).max())
        er = edge_quadrature(2 * k)
        e = EdgeBasis(k).eval(er.points)
        gram_err = max(gram_err, np.abs((e * er.weights) @ e.T - np.eye(k + 1)).max())
    quad_err = 0.0
    for degree in range(MAX_QUADRATURE_DEGREE + 1):
        rule = tri_quadrature(degree)
        x, y = rule.points.T
        erule = edge_quadrature(degree)
        for a in range(degree + 1):
            b = degree - a
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            quad_err = max(quad_err, abs(rule.integrate(x**a * y**b) - exact) / exact)
        quad_err = max(quad_err, abs(erule.integrate(erule.points**degree) * (degree + 1) - 1))
    ok = gram_err <= 1e-12 and quad_err <= 1e-13
    assert report(
        "quadrature and basis",
        ok,
        f"max Gram deviation {gram_err:.1e} (<= 1e-12, k <= 6); max monomial relative error {quad_err:.1e} (<= 1e-13, degree <= {MAX_QUADRATURE_DEGREE})",
    )


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
