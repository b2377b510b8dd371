import os
import subprocess
import sys

import numpy as np
import pytest

from hookean_mkv import chain_dynamics as cd
from hookean_mkv import fokker_planck as fp
from hookean_mkv.geometry import ConvexDomain

DOMAINS = [ConvexDomain.box([-1.0, -1.0], [1.0, 1.0]), ConvexDomain.disk(1.0, 2)]


def _flow(x, t):
    return np.stack([np.sin(2 * x[:, 1]), -0.5 * x[:, 0]], -1)


@pytest.mark.parametrize("dom", DOMAINS, ids=["box", "disk"])
@pytest.mark.parametrize("mode", ["kinetic", "overdamped"])
def test_chain_kernels_agree(dom, mode):
    p = cd.ChainParams(J=2, d=2, eps=0.2)
    e = cd.init_ensemble(p, dom, 3000, 4)
    step = cd.step_kinetic if mode == "kinetic" else cd.step_overdamped
    kernels = ((cd._kinetic_numba, cd._kinetic_numpy) if mode == "kinetic"
               else (cd._overdamped_numba, cd._overdamped_numpy))
    a = b = e
    for _ in range(20):
        a = step(a, p, dom, 0.01, _flow, kernel=kernels[0])
        b = step(b, p, dom, 0.01, _flow, kernel=kernels[1])
    np.testing.assert_allclose(a.r, b.r, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.v, b.v, rtol=0, atol=1e-12)


def test_transport_kernels_agree():
    g = fp.PhaseGrid(ConvexDomain.box([-1.0], [1.0]), 12, 16)
    op = fp.assemble_fp_operator(g, 0.3, u=lambda x, t: np.cos(x), alpha=0.01)
    m = np.random.default_rng(0).random(g.shape)
    a = fp.transport_increment(op, m, 1e-3, kernel=fp._transport_numba)
    b = fp.transport_increment(op, m, 1e-3, kernel=fp._transport_numpy)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14 * np.abs(b).max())


def _probe(backend):
    env = dict(os.environ, HOOKEAN_MKV_BACKEND=backend)
    code = ("from hookean_mkv import chain_dynamics as c, fokker_planck as f;"
            "print(c.kinetic_kernel.__name__, f.transport_kernel.__name__)")
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)


def test_environment_selects_backend():
    assert _probe("numpy").stdout.split() == ["_kinetic_numpy", "_transport_numpy"]
    assert _probe("numba").stdout.split() == ["_kinetic_numba", "_transport_numba"]
    bad = _probe("fortran")
    assert bad.returncode != 0 and "HOOKEAN_MKV_BACKEND" in bad.stderr
