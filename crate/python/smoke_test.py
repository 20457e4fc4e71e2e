"""Smoke test for the rigidity_lab extension.

Build and install first:  cd crates/py && maturin build --release -o dist && pip install dist/*.whl
"""

import math
import sys

import rigidity_lab as rl


def main():
    e2 = rl.Model("e2")
    s2 = rl.Model("s2")
    assert e2.conv == math.inf and abs(s2.conv - math.pi / 2) < 1e-15
    assert abs(2 * s2.conv - s2.inj) < 1e-15

    x1 = s2.origin()
    x2 = s2.point_at(1.0)
    assert abs(s2.distance(x1, x2) - 1.0) < 1e-12
    assert rl.intersect_predicate(s2, x1, 0.8, x2, 0.6)
    z = rl.intersect_witness(s2, x1, 0.8, x2, 0.6)
    assert z is not None
    assert abs(s2.distance(x1, z) - 0.8) < 1e-7 and abs(s2.distance(x2, z) - 0.6) < 1e-7
    assert rl.classify_intersection(e2, [0, 0], 1, [2, 0], 1) == "singleton"

    lo, hi = rl.rbar(e2, 1.0)
    assert lo <= math.sqrt(3) <= hi, (lo, hi)

    profile = rl.lens_profile(s2, 0.6 * s2.conv, count=8, budget=64)
    assert len(profile["samples"]) == 10

    out = rl.derive(["1", "sqrt2"], "1e-6")
    cert = out["certificate"]
    firsts = [step["output"]["exact"] for step in cert["steps"][:3]]
    assert firsts == [[-1, 1, 1, 1, 2], [3, 1, -2, 1, 2], [-7, 1, 5, 1, 2]], firsts
    assert rl.verify(cert)["valid"]

    assert rl.derive(["3/4", "1/2"], "1e-3")["outcome"] == "rational"

    frac = rl.derive(["sqrt2/8"], "1/100", strategy="C", conv="1/4", periodic=True)
    assert frac["outcome"] == "certificate"

    audit = rl.audit("ex2", "pi/2", pairs=500)
    assert audit["forward"] == "consistent", audit["forward"]
    assert rl.example4(4)["all_cells_empty"]

    print("python smoke test: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
