import json
import math
import os
import pathlib

import numpy as np
import pytest

import qexodus

CHAIN_A = {
    "states": ["a", "b", "∂"],
    "kernel": [[0.5, 0.3, 0.2], [0.4, 0.4, 0.2], [0.0, 0.0, 1.0]],
    "schedule": {"kind": "constant", "sets": {"0": ["∂"]}},
}

CONFIGS = pathlib.Path(os.environ.get("QEXODUS_CONFIG_DIR", pathlib.Path(__file__).parents[2] / "configs"))


def test_chain_roundtrip():
    c = qexodus.load_chain(CHAIN_A)
    assert c.labels == ["a", "b", "∂"]
    assert len(c) == 3
    assert json.loads(c.to_json()) == CHAIN_A
    assert np.array_equal(c.kernel, np.array(CHAIN_A["kernel"]))


def test_survival_and_conditioned_law():
    c = qexodus.load_chain(CHAIN_A)
    assert c.survival("a", 0, 1) == pytest.approx(0.8, abs=1e-15)
    assert c.survival(1, 0, 3) == pytest.approx(0.8**3, rel=1e-14)
    law = c.conditioned_law(np.array([1.0, 0.0, 0.0]), 0, 1)
    assert law == pytest.approx([0.625, 0.375, 0.0], abs=1e-15)


def test_certificate_and_qsd():
    c = qexodus.load_chain(CHAIN_A)
    cert = qexodus.certify(c)
    assert cert["t0"] == 1
    assert cert["c1"] == 0.875
    q = qexodus.qsd_fixed(c)
    assert q["rho"] == pytest.approx(0.8, rel=1e-13)
    lim = qexodus.quasi_limiting(c, [0.0, 1.0, 0.0], t_max=60)
    assert lim["converged"]


def test_brownian_formulas():
    x, t = 1.0, 2.0
    assert qexodus.brownian_survival(x, t) == pytest.approx(math.erf(x / math.sqrt(2 * t)), rel=1e-12)
    dens = x / math.sqrt(2 * math.pi * t**3) * math.exp(-x * x / (2 * t))
    assert qexodus.brownian_passage_density(x, t) == pytest.approx(dens, rel=1e-12)


def test_simulation_matches_formula():
    p = qexodus.simulate_survival(1.0, 20000, dt=0.01, seed=7)
    exact = math.erf(1.0 / math.sqrt(2.0))
    assert abs(p - exact) < 4 * math.sqrt(exact * (1 - exact) / 20000)
    assert p == qexodus.simulate_survival(1.0, 20000, dt=0.01, seed=7, threads=3)


def test_run_config_and_errors():
    text = (CONFIGS / "chain_a_certify.json").read_text()
    report = qexodus.run_config(text, base_dir=str(CONFIGS))
    assert report["pass"]
    assert report["version"] == qexodus.__version__
    errs = qexodus.validate_config('{"schema": 1, "kind": "diffusion"}')
    assert any("/seed" in e for e in errs)
    with pytest.raises(qexodus.Error):
        qexodus.run_config('{"schema": 1, "kind": "nope"}')
    with pytest.raises(qexodus.Error, match="outside"):
        qexodus.load_chain(CHAIN_A).conditioned_law(np.array([0.0, 0.0, 1.0]), 0, 1)
