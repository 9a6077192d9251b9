from dataclasses import replace

import pytest

from bvpsens.errors import PerturbationInfeasible, ProblemError
from bvpsens.problem import (
    C,
    D,
    P,
    BUILTINS,
    DatumId,
    ProblemSpec,
    builtin,
    datum_value,
    parse_datum,
    perturbed,
    validate,
    with_datum,
)

BASE = ProblemSpec(
    n=2,
    interval=(-1.0, 4.0),
    points=(0.0, 1.0),
    multiplicities=(1, 1),
    data=((0.0,), (3.0,)),
    p=1.0,
    c=1.5,
    d=2.5,
    rhs="0",
)


def test_valid_spec():
    vp = validate(BASE)
    assert vp.n == 2 and vp.k == 2


def test_integral_limit_before_last_point():
    with pytest.raises(ProblemError, match="x_k < c violated"):
        validate(replace(BASE, c=0.5))


def test_multiplicity_sum():
    with pytest.raises(ProblemError, match="Σm_j = 2 ≠ n = 3"):
        validate(replace(BASE, n=3))


@pytest.mark.parametrize(
    "change",
    [
        {"n": 1, "multiplicities": (1,), "points": (0.0,), "data": ((0.0,),)},
        {"points": (1.0, 0.0)},
        {"interval": (0.5, 4.0)},
        {"d": 5.0},
        {"d": 1.5},
        {"multiplicities": (2, 0)},
        {"data": ((0.0, 1.0), (3.0,))},
        {"rhs": "y2"},
        {"rhs": "sin("},
        {"p": float("nan")},
    ],
)
def test_rejected_specs(change):
    with pytest.raises(ProblemError):
        validate(replace(BASE, **change))


def test_unknown_variable_message():
    with pytest.raises(ProblemError, match="unknown variable y2"):
        validate(replace(BASE, rhs="y0 + y2"))


def test_validate_is_idempotent():
    vp = validate(BASE)
    assert validate(vp) == vp
    assert validate(vp.spec) == vp


def test_datum_enumeration():
    spec = replace(BASE, n=3, multiplicities=(2, 1), data=((0.0, 1.0), (3.0,)), rhs="y2")
    vp = validate(spec)
    ids = vp.datum_ids
    assert len(ids) == vp.n + vp.k + 3
    assert ids == (DatumId.Y(0, 1), DatumId.Y(1, 1), DatumId.Y(0, 2), DatumId.X(1), DatumId.X(2), C, D, P)
    assert tuple(parse_datum(i.label) for i in ids) == ids
    assert len(set(ids)) == len(ids)
    position = {id: q for q, id in enumerate(ids)}
    assert [ids[position[id]] for id in ids] == list(ids)
    assert validate(spec).datum_ids == ids


@pytest.mark.parametrize("text", ["y:0", "z", "x:a", "y:-1:2", "x:0", "y:0:0", ""])
def test_parse_datum_rejects(text):
    with pytest.raises(ValueError):
        parse_datum(text)


def test_datum_values(t1):
    assert datum_value(t1, DatumId.Y(0, 2)) == 3.0
    assert datum_value(t1, P) == 1.0
    assert datum_value(t1, DatumId.X(1)) == 0.0
    assert datum_value(t1, C) == 1.5
    assert datum_value(t1, D) == 2.5


def test_with_datum_moves_one_value(t1):
    moved = with_datum(t1, DatumId.X(2), 1.2)
    assert moved.points == (0.0, 1.2)
    assert moved.data == t1.data
    assert datum_value(perturbed(t1, DatumId.Y(0, 2), 0.5), DatumId.Y(0, 2)) == 3.5


def test_infeasible_perturbation(t1):
    with pytest.raises(PerturbationInfeasible):
        with_datum(t1, C, 0.9)
    with pytest.raises(PerturbationInfeasible):
        with_datum(t1, D, 1.4)


def test_builtins():
    assert set(BUILTINS) == {"t1_linear", "t2_pendulum"}
    assert builtin("t1_linear", p=-0.5).p == -0.5
    with pytest.raises(ProblemError):
        builtin("nope")
