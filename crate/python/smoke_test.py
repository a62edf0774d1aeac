"""Smoke test for the pychemostab extension.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/pychemostab-*.whl
"""

import json
import math

import pychemostab as cs


def main():
    p = cs.ModelParams(chi1=0.05, chi2=0.05, a1=10.0, a2=10.0, b1=1.0, b2=1.0,
                       c1=0.1, c2=0.1, mu=1.0, nu=1.0, lambda_=1.0)
    g = cs.Grid([1.0], [64])
    assert g.dimension == 1 and len(g) == 64

    u, v, w = cs.compute_equilibrium(p)
    assert abs(u - 10.0 / 1.1) < 1e-12 and abs(w - (u + v)) < 1e-12

    report = json.loads(cs.check_theorems(p, g))
    assert report["stabilization_equal_chi"]["holds"]

    assert abs(cs.delta0(1, 1.0) - math.exp(-1.0) / 2) < 1e-9

    out = cs.simulate(p, g, json.dumps({"t_end": 5.0, "seed": 3}))
    assert out["classification"] == "converged", out["classification"]
    assert min(out["u"]) > 0 and len(out["series"]["energy"]) == out["steps"] + 1

    t, uu, vv, ww = cs.ode_reduction(p, 1.0, 2.0, 10.0, 1e-4)
    assert abs(uu[-1] - u) < 1e-8 and abs(vv[-1] - v) < 1e-8

    try:
        cs.ModelParams(chi1=0.05, chi2=0.05, a1=-1.0, a2=1.0, b1=1.0, b2=1.0,
                       c1=0.1, c2=0.1, mu=1.0, nu=1.0, lambda_=1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative growth rate accepted")

    print("pychemostab smoke test passed")


if __name__ == "__main__":
    main()
