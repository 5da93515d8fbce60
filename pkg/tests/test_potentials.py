import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnpullback.potentials import Potential, PotentialError, check_dissipation, convexity_radius


def test_eval_examples():
    assert Potential.double_well(1).eval(0.0) == 0.0
    assert Potential.quadratic(2).eval(1.0) == 1.0
    assert Potential.double_well(1).eval(1.0) == pytest.approx(-0.25, abs=1e-15)


def test_grad_examples():
    assert Potential.double_well(1).grad(1.0) == 0.0
    assert Potential.double_well(1).grad(0.0) == 0.0
    assert Potential.quadratic(2).grad(3.0) == 6.0


def test_laplacian_examples():
    q = Potential.quadratic(2)
    assert np.all(q.laplacian(np.array([-3.0, 0.0, 7.5])) == 2.0)
    assert Potential.double_well(1).laplacian(0.0) == -1.0
    assert Potential.double_well(1).laplacian(1.0) == 2.0


@pytest.mark.parametrize("kind,params", [("quadratic", [0.0]), ("quadratic", [-1.0]), ("double_well", [0.0]),
                                         ("polynomial", [0, 0, 0, 1.0]), ("polynomial", [0, 0, -1.0]),
                                         ("polynomial", [1.0]), ("cubic", [1.0])])
def test_invalid_params_rejected(kind, params):
    with pytest.raises(PotentialError):
        Potential(kind, params)


def test_from_dict_strict():
    assert Potential.from_dict({"kind": "double_well", "params": [2]}).params == (2.0,)
    with pytest.raises(PotentialError):
        Potential.from_dict({"kind": "quadratic", "params": [1], "extra": 0})


POTS = [Potential.quadratic(1.3), Potential.double_well(0.7), Potential.double_well(2.0),
        Potential.polynomial([0.3, -0.2, -1.0, 0.1, 0.125])]


@settings(max_examples=60, deadline=None)
@given(x=st.floats(-3, 3), which=st.integers(0, len(POTS) - 1))
def test_derivatives_match_finite_differences(x, which):
    pot = POTS[which]
    h = 1e-5
    fd1 = (pot.eval(x + h) - pot.eval(x - h)) / (2 * h)
    fd2 = (pot.eval(x + h) - 2 * pot.eval(x) + pot.eval(x - h)) / h ** 2
    scale = 1 + abs(pot.grad(x))
    assert abs(pot.grad(x) - fd1) <= 1e-6 * scale
    # second difference loses ~eps/h^2 to cancellation
    assert abs(pot.laplacian(x) - fd2) <= 1e-6 * (1 + abs(pot.laplacian(x))) + 1e-5 * (1 + abs(pot.eval(x)))


def test_multid_radial_forms():
    pot = Potential.double_well(1.5)
    x = np.array([[0.3, -1.2, 0.5]])
    r2 = np.sum(x * x)
    assert pot.eval(x, dim=3)[0] == pytest.approx(r2 ** 2 / 4 - 1.5 * r2 / 2)
    np.testing.assert_allclose(pot.grad(x, dim=3), x * (r2 - 1.5))
    # trace of the Hessian of |x|^4/4 - a|x|^2/2 in 3D
    assert pot.laplacian(x, dim=3)[0] == pytest.approx(5 * r2 - 3 * 1.5)
    with pytest.raises(PotentialError):
        Potential.polynomial([0, 0, 1.0]).grad(x, dim=3)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_dissipation_double_well_constant(a):
    res = check_dissipation(Potential.double_well(a))
    assert res["satisfied"]
    assert res["constant_C"] == pytest.approx(16 / 27 * a ** 3, rel=1e-2)


def test_dissipation_quadratic_fails():
    # a x^4 - x^6 / 2 is unbounded below
    assert check_dissipation(Potential.quadratic(1)) == {"satisfied": False, "constant_C": None}


def test_dissipation_rejects_cancelled_sextic():
    # x^4/8 - x^2/2: the x^6 terms cancel and h(x) = -x^4 is unbounded below
    res = check_dissipation(Potential.polynomial([0, 0, -0.5, 0, 0.125]))
    assert res == {"satisfied": False, "constant_C": None}


def test_convexity_radius():
    assert convexity_radius(Potential.double_well(1)) == pytest.approx(math.sqrt(1 / 3), abs=1e-14)
    assert convexity_radius(Potential.quadratic(3)) == 0.0
    assert convexity_radius(Potential.polynomial([0, 0, -0.5, 0, 0.125])) == pytest.approx(math.sqrt(2 / 3), abs=1e-12)
    assert convexity_radius(Potential.double_well(2.5)) == pytest.approx(math.sqrt(2.5 / 3), abs=1e-14)
