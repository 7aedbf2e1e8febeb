"""Smoke test for the pybvfilter extension: run every entry point once."""

import math
import sys

import pybvfilter as bv


def main() -> int:
    s = bv.Scenario.fixture("linear_with_jumps", steps=400, nodes=401)
    assert s.validate() == [], s.validate()
    assert (s.m, s.n, s.d) == (1, 1, 1)
    assert bv.Scenario.from_json(s.to_json()).steps == 400

    path = bv.simulate(s, replication=0)
    y = path["observation"]
    assert len(path["times"]) == 401 and y.steps == 400
    y2 = bv.ObservationPath(y.dt, y.values())
    assert y2.values() == y.values()

    zakai = bv.run_zakai(s, y)
    ks = bv.run_ks(s, y)
    kalman = bv.run_kalman(s, y)
    particle = bv.run_particle(s, y, particles=2000, seed=1)

    ks_gap = max(abs(a[0] - b[0]) for a, b in zip(zakai["mean"], ks["mean"]))
    kf_gap = max(abs(a[0] - b[0]) for a, b in zip(zakai["mean"], kalman["mean"]))
    pf_gap = sum(abs(a[0] - b[0]) for a, b in zip(particle["mean"], kalman["mean"])) / len(kalman["mean"])
    assert ks_gap <= 1e-12, ks_gap
    assert kf_gap <= 0.02, kf_gap
    assert pf_gap <= 0.05, pf_gap

    mass = bv.mass_formula_check(s, y)
    assert mass["discrepancy_corrected"] <= 0.05, mass

    assert abs(bv.heat_kernel([0.0], 1.0) - 1.0 / math.sqrt(2.0 * math.pi)) < 1e-15
    checks = bv.run_checks("mollify")
    assert checks and all(c["pass"] for c in checks), checks

    try:
        bv.run_kalman(bv.Scenario.fixture("nonlinear_with_jumps", steps=100, nodes=61), y)
    except bv.BvFilterError as e:
        assert "linear-Gaussian" in str(e)
    else:
        raise AssertionError("kalman accepted a nonlinear scenario")

    print(f"ok: ks gap {ks_gap:.1e}, kalman gap {kf_gap:.1e}, particle gap {pf_gap:.1e}, "
          f"mass discrepancy {mass['discrepancy_corrected']:.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
