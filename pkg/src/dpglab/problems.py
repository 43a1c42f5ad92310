"""Manufactured Poisson problems on the unit square with u = 0 on the boundary."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from dpglab.dpg_core import ConfigError

BUILTIN = ("sinsin", "bubble4", "zero")


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    u: Callable
    grad_u: Callable
    f: Callable
    expression: str


def _sinsin():
    pi = np.pi
    return ProblemSpec(
        "sinsin",
        lambda x, y: np.sin(pi * x) * np.sin(pi * y),
        lambda x, y: (pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y)),
        lambda x, y: 2.0 * pi**2 * np.sin(pi * x) * np.sin(pi * y),
        "sin(pi*x)*sin(pi*y)",
    )


def _bubble4():
    return ProblemSpec(
        "bubble4",
        lambda x, y: x * (1 - x) * y * (1 - y),
        lambda x, y: ((1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y)),
        lambda x, y: 2.0 * (x * (1 - x) + y * (1 - y)),
        "x*(1-x)*y*(1-y)",
    )


def _zero():
    return ProblemSpec(
        "zero",
        lambda x, y: np.zeros_like(x),
        lambda x, y: (np.zeros_like(x), np.zeros_like(x)),
        lambda x, y: np.zeros_like(x),
        "0",
    )


def from_expression(expr: str, name: str = "custom") -> ProblemSpec:
    """Build a problem from a sympy expression in x, y; f = -Laplace(u) symbolically."""
    import sympy

    x, y = sympy.symbols("x y", real=True)
    try:
        u = sympy.sympify(expr, locals={"x": x, "y": y})
    except (sympy.SympifyError, TypeError) as exc:
        raise ConfigError(f"cannot parse solution expression {expr!r}") from exc
    if not u.free_symbols <= {x, y}:
        raise ConfigError(f"solution may only depend on x and y, got {sorted(map(str, u.free_symbols))}")
    for side in (u.subs(x, 0), u.subs(x, 1), u.subs(y, 0), u.subs(y, 1)):
        if sympy.simplify(side) != 0:
            raise ConfigError(f"solution {expr!r} does not vanish on the boundary ({side} != 0)")
    ux, uy = sympy.diff(u, x), sympy.diff(u, y)
    f = sympy.simplify(-(sympy.diff(ux, x) + sympy.diff(uy, y)))

    def vec(e):
        fn = sympy.lambdify((x, y), e, "numpy")
        return lambda a, b: np.broadcast_to(np.asarray(fn(a, b), dtype=float), np.shape(a))

    fu, fx, fy, ff = vec(u), vec(ux), vec(uy), vec(f)
    return ProblemSpec(name, fu, lambda a, b: (fx(a, b), fy(a, b)), ff, str(u))


def load_problem(name: str, custom_file: str | Path | None = None) -> ProblemSpec:
    if name == "sinsin":
        return _sinsin()
    if name == "bubble4":
        return _bubble4()
    if name == "zero":
        return _zero()
    if name == "custom":
        if custom_file is None:
            raise ConfigError("solution 'custom' requires a JSON file with key 'u'")
        try:
            data = json.loads(Path(custom_file).read_text())
            expr = data["u"]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot read custom solution from {custom_file}") from exc
        return from_expression(expr, data.get("name", "custom"))
    raise ConfigError(f"unknown solution {name!r}; choose from {BUILTIN + ('custom',)}")
