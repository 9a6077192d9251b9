"""Boundary value problem model and the enumeration of its boundary data."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .errors import ExprSyntaxError, PerturbationInfeasible, ProblemError
from .expr import Expr, as_expr, max_y_index
from .ivp import OdeSystem


@dataclass(frozen=True)
class ProblemSpec:
    """``y^(n) = f(x, y, ..., y^(n-1))`` on ``(a, b)`` with

    ``y^(i)(x_j) = y_ij`` for j < k and
    ``y^(i)(x_k) + p * int_c^d y = y_ik`` for j = k, ``0 <= i < m_j``.

    ``data[j][i]`` holds ``y_ij`` for the (j+1)-th point.
    """

    n: int
    interval: tuple
    points: tuple
    multiplicities: tuple
    data: tuple
    p: float
    c: float
    d: float
    rhs: Union[str, Expr]

    def __post_init__(self):
        object.__setattr__(self, "interval", tuple(float(v) for v in self.interval))
        object.__setattr__(self, "points", tuple(float(v) for v in self.points))
        object.__setattr__(self, "multiplicities", tuple(int(v) for v in self.multiplicities))
        object.__setattr__(self, "data", tuple(tuple(float(v) for v in row) for row in self.data))
        for name in ("p", "c", "d"):
            object.__setattr__(self, name, float(getattr(self, name)))


@dataclass(frozen=True, order=True)
class DatumId:
    """One boundary datum: ``y`` (derivative order r at point l), ``x`` (point l), ``c``, ``d`` or ``p``.

    Point indices ``l`` are 1-based.
    """

    kind: str
    r: int = 0
    l: int = 0

    @classmethod
    def Y(cls, r, l):
        return cls("y", r, l)

    @classmethod
    def X(cls, l):
        return cls("x", 0, l)

    @property
    def label(self):
        if self.kind == "y":
            return f"y:{self.r}:{self.l}"
        if self.kind == "x":
            return f"x:{self.l}"
        return self.kind

    def __str__(self):
        return self.label


C = DatumId("c")
D = DatumId("d")
P = DatumId("p")


def parse_datum(text: str) -> DatumId:
    """Inverse of :attr:`DatumId.label` (``y:r:l``, ``x:l``, ``c``, ``d``, ``p``)."""
    parts = text.strip().lower().split(":")
    try:
        if parts[0] == "y" and len(parts) == 3:
            r, l = int(parts[1]), int(parts[2])
            if r >= 0 and l >= 1:
                return DatumId.Y(r, l)
        if parts[0] == "x" and len(parts) == 2:
            l = int(parts[1])
            if l >= 1:
                return DatumId.X(l)
    except ValueError:
        pass
    else:
        if len(parts) == 1 and parts[0] in ("c", "d", "p"):
            return DatumId(parts[0])
    raise ValueError(f"unrecognised datum {text!r}; expected y:r:l, x:l, c, d or p")


@dataclass(frozen=True, eq=False)
class ValidatedProblem:
    spec: ProblemSpec
    values: np.ndarray = field(repr=False)
    datum_ids: tuple = field(repr=False)
    system: OdeSystem = field(repr=False)

    def __eq__(self, other):
        return isinstance(other, ValidatedProblem) and self.spec == other.spec

    def __hash__(self):
        return hash(self.spec)

    n = property(lambda self: self.spec.n)
    k = property(lambda self: len(self.spec.points))
    points = property(lambda self: self.spec.points)
    multiplicities = property(lambda self: self.spec.multiplicities)
    data = property(lambda self: self.spec.data)
    p = property(lambda self: self.spec.p)
    c = property(lambda self: self.spec.c)
    d = property(lambda self: self.spec.d)
    interval = property(lambda self: self.spec.interval)

    @property
    def data_scale(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def has_datum(self, id: DatumId) -> bool:
        return id in self.datum_ids


def _check_order(spec):
    a, b = spec.interval
    names = ["a"] + [f"x_{j + 1}" for j in range(len(spec.points))] + ["c", "d", "b"]
    if len(spec.points) >= 2:
        names[len(spec.points)] = "x_k"
    vals = [a, *spec.points, spec.c, spec.d, b]
    for i in range(len(vals) - 1):
        if not vals[i] < vals[i + 1]:
            raise ProblemError(f"{names[i]} < {names[i + 1]} violated ({vals[i]!r} >= {vals[i + 1]!r})")


def validate(spec: ProblemSpec) -> ValidatedProblem:
    """Check every structural constraint and compile the right-hand side."""
    if isinstance(spec, ValidatedProblem):
        spec = spec.spec
    if spec.n < 2:
        raise ProblemError(f"order n = {spec.n} must be at least 2")
    k = len(spec.points)
    if k < 2:
        raise ProblemError(f"need at least two boundary points, got k = {k}")
    if len(spec.multiplicities) != k:
        raise ProblemError(f"{len(spec.multiplicities)} multiplicities given for k = {k} points")
    if any(m < 1 for m in spec.multiplicities):
        raise ProblemError("every multiplicity m_j must be at least 1")
    total = sum(spec.multiplicities)
    if total != spec.n:
        raise ProblemError(f"Σm_j = {total} ≠ n = {spec.n}")
    if len(spec.data) != k or any(len(row) != m for row, m in zip(spec.data, spec.multiplicities)):
        raise ProblemError("data must list m_j values y_0j .. y_(m_j-1)j for every point")
    _check_order(spec)
    vals = [spec.p, spec.c, spec.d, *spec.interval, *spec.points] + [v for row in spec.data for v in row]
    if not np.all(np.isfinite(vals)):
        raise ProblemError("all numeric fields must be finite")
    try:
        e = as_expr(spec.rhs)
    except ExprSyntaxError as exc:
        raise ProblemError(f"right-hand side: {exc}") from exc
    j = max_y_index(e)
    if j >= spec.n:
        raise ProblemError(f"right-hand side references unknown variable y{j} (n = {spec.n})")

    ids = [DatumId.Y(r, l + 1) for l, m in enumerate(spec.multiplicities) for r in range(m)]
    ids += [DatumId.X(l + 1) for l in range(k)]
    ids += [C, D, P]
    values = np.array([v for row in spec.data for v in row])
    return ValidatedProblem(spec, values, tuple(ids), OdeSystem(spec.n, e))


def datum_value(vp: ValidatedProblem, id: DatumId) -> float:
    if id.kind == "y":
        return vp.data[id.l - 1][id.r]
    if id.kind == "x":
        return vp.points[id.l - 1]
    return getattr(vp, id.kind)


def with_datum(vp: ValidatedProblem, id: DatumId, value: float) -> ValidatedProblem:
    """Copy of ``vp`` with one datum replaced; raises PerturbationInfeasible if
    the new value breaks the ordering constraints."""
    spec = vp.spec
    if id.kind == "y":
        rows = [list(row) for row in spec.data]
        rows[id.l - 1][id.r] = value
        new = replace(spec, data=rows)
    elif id.kind == "x":
        pts = list(spec.points)
        pts[id.l - 1] = value
        new = replace(spec, points=pts)
    else:
        new = replace(spec, **{id.kind: value})
    try:
        _check_order(new)
    except ProblemError as exc:
        raise PerturbationInfeasible(f"changing {id.label} to {value!r}: {exc}") from exc
    return ValidatedProblem(new, np.array([v for row in new.data for v in row]), vp.datum_ids, vp.system)


def perturbed(vp: ValidatedProblem, id: DatumId, delta: float) -> ValidatedProblem:
    return with_datum(vp, id, datum_value(vp, id) + delta)


BUILTINS = {
    "t1_linear": ProblemSpec(
        n=2,
        interval=(-1.0, 4.0),
        points=(0.0, 1.0),
        multiplicities=(1, 1),
        data=((0.0,), (3.0,)),
        p=1.0,
        c=1.5,
        d=2.5,
        rhs="0",
    ),
    "t2_pendulum": ProblemSpec(
        n=2,
        interval=(-1.0, 4.0),
        points=(0.0, 1.0),
        multiplicities=(1, 1),
        data=((0.0,), (0.5,)),
        p=0.1,
        c=1.5,
        d=2.5,
        rhs="-sin(y0)",
    ),
}


def builtin(name: str, **overrides) -> ProblemSpec:
    try:
        spec = BUILTINS[name]
    except KeyError:
        raise ProblemError(f"unknown builtin problem {name!r}; choose from {sorted(BUILTINS)}") from None
    return replace(spec, **overrides) if overrides else spec
