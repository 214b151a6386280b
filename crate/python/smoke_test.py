"""Smoke test for the isslyap extension module.

Build and install with `maturin develop -m crates/python/Cargo.toml`, or put a
copy of target/<profile>/libisslyap.so named isslyap.so on PYTHONPATH.
"""

import math

import isslyap


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    gen = isslyap.Generator.scalar(-1.0)
    m, lam = gen.certify_decay()
    assert close(m, 1.0, 1e-8) and close(lam, 1.0, 1e-6), (m, lam)

    sys = isslyap.LinearSystem(gen, b=[[1.0]])
    value, _ = sys.v_integral([1.0])
    assert close(value, 0.5, 1e-6), value
    assert close(sys.v_gamma(0.5, [2.0]), 2.0, 1e-9)
    assert sys.check_dissipation_integral(n_samples=20)["passed"]
    assert sys.check_dissipation_gamma(0.5, n_samples=20)["passed"]
    assert sys.check_lipschitz(0.5, n_pairs=100)["passed"]

    errors, order = sys.convolution_check([1.0], [1e-2, 1e-3, 1e-4])
    assert 0.9 <= order <= 1.1, order
    assert all(close(e, h / 2, 0.1 * h / 2) for h, e in errors)

    heat = isslyap.LinearSystem(isslyap.Generator.heat(16))
    e1 = [1.0] + [0.0] * 15
    v, _ = heat.v_integral(e1)
    assert close(v, 1 / (2 * math.pi**2), 1e-4 / (2 * math.pi**2)), v

    syn = isslyap.synthesize_feedback(1.0, 1.0, 1.0)
    assert syn.sigma_slope == 1 / 6
    assert close(syn.sigma(3.0), 0.5, 1e-15)

    est = sys.iss_estimate([[0.0], [1.0], [-2.0]], [0.5, 1.0, 2.0], horizon=20.0)
    for s, g in est["gain_samples"]:
        assert s <= g <= 1.2 * s, (s, g)
    cex = sys.iss_falsify(1.0, 1.0, 0.5)
    assert cex is not None and cex[0].startswith("const"), cex
    assert sys.iss_falsify(1.0, 1.0, 2.0) is None
    assert sys.iss_falsify(1.0, 1.0, 1.0, form="max") is not None
    assert sys.iss_falsify(2.0, 1.0, 2.0, form="max") is None

    passed, items = isslyap.equivalence_experiment(gen)
    assert passed, items
    passed, items = isslyap.equivalence_experiment(isslyap.Generator.scalar(1.0))
    assert not passed and items[0][0] == "ii" and items[0][2] == "fail", items

    ok, _, _ = isslyap.zero_ugas_check(isslyap.Generator.jordan2(), [[1.0, 0.0], [0.0, 1.0]], 20.0)
    assert ok
    print("isslyap smoke test passed")


if __name__ == "__main__":
    main()
