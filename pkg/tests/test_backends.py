import os
import subprocess
import sys

import numpy as np
import pytest

from cnpullback.kernels import fp as fpk
from cnpullback.kernels._accel import HAS_NUMBA

from conftest import requires_numba

SCRIPT = """
import numpy as np
from cnpullback.kernels import backend
from cnpullback.noise import NoiseStreamKey, StreamRole, sample_path
from cnpullback.potentials import Potential
from cnpullback.sde import SdeSpec, pullback_run
spec = SdeSpec(Potential.double_well(1.0), 0.6, 0.7)
beta = sample_path(NoiseStreamKey(3, StreamRole.common), -2.0, 0.0, 1e-3)
x = pullback_run(0.1, spec, beta, 2.0, 1e-3, 3000, master_seed=5).ensemble.positions[:, 0]
print(backend())
print(" ".join(repr(float(v)) for v in x[:50]))
"""


def run_script(disable):
    env = dict(os.environ)
    env.pop("CNPULLBACK_DISABLE_NUMBA", None)
    if disable:
        env["CNPULLBACK_DISABLE_NUMBA"] = "1"
    r = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    name, vals = r.stdout.strip().splitlines()
    return name, np.array([float(v) for v in vals.split()])


def test_env_flag_selects_numpy():
    name, _ = run_script(True)
    assert name == "numpy"


@requires_numba
def test_backends_agree_on_particles():
    n1, a = run_script(False)
    n2, b = run_script(True)
    assert (n1, n2) == ("numba", "numpy")
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@requires_numba
@pytest.mark.parametrize("theta, central", [(1.0, False), (0.5, True), (0.5, False)])
def test_backends_agree_on_fp_step(theta, central):
    x = np.linspace(-3, 3, 301)
    q = np.exp(-x ** 2)
    U0, U1 = x ** 4 / 4 - x ** 2 / 2, (x + 0.01) ** 4 / 4 - (x + 0.01) ** 2 / 2
    a = fpk.step(q, U0, U1, 0.3, x[1] - x[0], 1e-3, theta, central, use_numba=True)
    b = fpk.step(q, U0, U1, 0.3, x[1] - x[0], 1e-3, theta, central, use_numba=False)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_fp_step_conserves_mass_and_handles_zero_drift():
    x = np.linspace(-3, 3, 101)
    q = np.exp(-x ** 2)
    U = np.zeros_like(x)
    out = fpk.step(q, U, U, 0.5, x[1] - x[0], 1e-2, 1.0, False, use_numba=HAS_NUMBA)
    assert out.sum() == pytest.approx(q.sum(), rel=1e-13)
    # the Bernoulli weight is smooth through z = 0
    assert fpk.bernoulli(np.array([0.0]))[0] == 1.0
    assert fpk.bernoulli(np.array([1e-12]))[0] == pytest.approx(1.0 - 5e-13, rel=1e-15)
