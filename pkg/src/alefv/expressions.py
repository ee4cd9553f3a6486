"""Analytic space-time fields built from a small expression grammar.

Configuration files describe initial data, manufactured solutions and test
fields as strings over the grammar

    +  -  *  /  ^   sin  cos  exp  ln   numeric literals, pi, e,  t, x, y

(y only in 2D).  Expressions are parsed symbolically and differentiated
exactly, so manufactured-solution sources and test-pair derivatives are
never contaminated by finite-difference error.

Point arrays follow the package convention: shape (...,) in 1D and
(..., 2) in 2D; time is a scalar per call.
"""

from __future__ import annotations

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import parse_expr

from .errors import ConfigError
from .mechanics import ViscosityParams
from .thermo import PressureLaw

__all__ = [
    "ScalarField",
    "VectorField",
    "parse_scalar",
    "parse_vector",
    "manufactured_forcing",
]

_T, _X, _Y = sp.symbols("t x y")
_ALLOWED_FUNCS = {sp.sin, sp.cos, sp.exp, sp.log}
_LOCALS = {
    "t": _T,
    "x": _X,
    "y": _Y,
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "ln": sp.log,
    "pi": sp.pi,
    "e": sp.E,
}


def _space_vars(dim: int):
    return (_X,) if dim == 1 else (_X, _Y)


def _validate(expr: sp.Expr, dim: int, text: str) -> sp.Expr:
    allowed_syms = {_T, *_space_vars(dim)}
    extra = expr.free_symbols - allowed_syms
    if extra:
        names = ", ".join(sorted(str(s) for s in extra))
        raise ConfigError(f"expression {text!r} uses unknown symbols: {names}")
    for f in expr.atoms(sp.Function):
        if f.func not in _ALLOWED_FUNCS:
            raise ConfigError(
                f"expression {text!r} uses unsupported function {f.func.__name__!r}; "
                "allowed: sin, cos, exp, ln"
            )
    return expr


_GLOBALS = {
    "Integer": sp.Integer,
    "Float": sp.Float,
    "Rational": sp.Rational,
    "Symbol": sp.Symbol,
}


def _parse(text: str, dim: int) -> sp.Expr:
    try:
        expr = parse_expr(str(text).replace("^", "**"), local_dict=_LOCALS, global_dict=_GLOBALS)
    except Exception as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc}") from None
    return _validate(sp.sympify(expr), dim, text)


def _compile(expr: sp.Expr, dim: int):
    args = (_T, *_space_vars(dim))
    fn = sp.lambdify(args, expr, modules="numpy")

    def call(t, coords):
        out = fn(t, *coords)
        shape = np.broadcast(*coords).shape if len(coords) > 1 else np.shape(coords[0])
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    return call


class ScalarField:
    """Scalar field phi(t, x[, y]) with exact first derivatives."""

    def __init__(self, expr: sp.Expr, dim: int):
        self.dim = dim
        self.expr = sp.sympify(expr)
        self._value = _compile(self.expr, dim)
        self._dt = _compile(sp.diff(self.expr, _T), dim)
        self._grads = [_compile(sp.diff(self.expr, v), dim) for v in _space_vars(dim)]

    def _coords(self, points):
        points = np.asarray(points, dtype=float)
        if self.dim == 1:
            return (points,)
        return tuple(points[..., i] for i in range(self.dim))

    def value(self, t, points):
        return self._value(t, self._coords(points))

    def dt(self, t, points):
        return self._dt(t, self._coords(points))

    def grad(self, t, points):
        c = self._coords(points)
        if self.dim == 1:
            return self._grads[0](t, c)
        return np.stack([g(t, c) for g in self._grads], axis=-1)

    def __repr__(self):
        return f"ScalarField({self.expr}, dim={self.dim})"


class VectorField:
    """Vector field U(t, x[, y]) assembled from per-component scalar fields."""

    def __init__(self, components: list[ScalarField]):
        if not components:
            raise ConfigError("vector field needs at least one component")
        self.dim = components[0].dim
        if len(components) != self.dim:
            raise ConfigError(
                f"vector field in {self.dim}D needs {self.dim} components, "
                f"got {len(components)}"
            )
        self.components = components

    @property
    def exprs(self):
        return [c.expr for c in self.components]

    def value(self, t, points):
        vals = [c.value(t, points) for c in self.components]
        return vals[0] if self.dim == 1 else np.stack(vals, axis=-1)

    def dt(self, t, points):
        vals = [c.dt(t, points) for c in self.components]
        return vals[0] if self.dim == 1 else np.stack(vals, axis=-1)

    def jacobian(self, t, points):
        """dU_i/dx_j with shape (..., dim, dim)."""
        rows = [c.grad(t, points) for c in self.components]
        if self.dim == 1:
            return rows[0][..., None, None]
        return np.stack(rows, axis=-2)

    def divergence(self, t, points):
        jac = self.jacobian(t, points)
        return np.trace(jac, axis1=-2, axis2=-1)

    def stress_divergence(self, visc: ViscosityParams) -> "VectorField":
        """div S(grad U) as an exact symbolic vector field."""
        xs = _space_vars(self.dim)
        div_u = sum(sp.diff(self.exprs[j], xs[j]) for j in range(self.dim))
        comps = []
        for i in range(self.dim):
            total = sp.Integer(0)
            for j in range(self.dim):
                s_ij = visc.mu * (
                    sp.diff(self.exprs[i], xs[j])
                    + sp.diff(self.exprs[j], xs[i])
                    - sp.Rational(2, 3) * div_u * (1 if i == j else 0)
                ) + visc.eta * div_u * (1 if i == j else 0)
                total += sp.diff(s_ij, xs[j])
            comps.append(ScalarField(sp.simplify(total), self.dim))
        return VectorField(comps)


def parse_scalar(text: str, dim: int) -> ScalarField:
    """Parse a scalar expression string over the grammar."""
    return ScalarField(_parse(text, dim), dim)


def parse_vector(texts, dim: int) -> VectorField:
    """Parse a list of component expression strings into a vector field."""
    if isinstance(texts, str):
        texts = [texts]
    if len(texts) != dim:
        raise ConfigError(f"vector expression needs {dim} components, got {len(texts)}")
    return VectorField([parse_scalar(s, dim) for s in texts])


def manufactured_forcing(rho: ScalarField, u: VectorField, law: PressureLaw, visc: ViscosityParams):
    """Exact source terms that make (rho, u) solve the forced system.

    Returns (mass_source, momentum_source) as a ScalarField and a
    VectorField: the residuals of the mass and momentum balances of the
    manufactured fields, computed by symbolic differentiation,

        f_mass = d_t rho + div(rho u),
        f_mom  = d_t(rho u) + div(rho u x u) + grad p(rho) - div S(grad u).
    """
    dim = rho.dim
    xs = _space_vars(dim)
    r = rho.expr
    us = u.exprs
    g = sp.Float(law.gamma)
    p = law.coeff_a * r**g
    div_u = sum(sp.diff(us[j], xs[j]) for j in range(dim))

    f_mass = sp.diff(r, _T) + sum(sp.diff(r * us[j], xs[j]) for j in range(dim))

    f_mom = []
    for i in range(dim):
        expr = sp.diff(r * us[i], _T) + sp.diff(p, xs[i])
        for j in range(dim):
            expr += sp.diff(r * us[i] * us[j], xs[j])
            s_ij = visc.mu * (
                sp.diff(us[i], xs[j])
                + sp.diff(us[j], xs[i])
                - sp.Rational(2, 3) * div_u * (1 if i == j else 0)
            ) + visc.eta * div_u * (1 if i == j else 0)
            expr -= sp.diff(s_ij, xs[j])
        f_mom.append(ScalarField(expr, dim))

    return ScalarField(f_mass, dim), VectorField(f_mom)
