"""Smoke test for the planar_range_py extension module."""

import json
import math

import planar_range_py as pr


def main() -> None:
    assert len(pr.reference_law().strip().splitlines()) >= 4

    cx, bound = pr.c_x()
    assert abs(cx - 0.8252945699845307) < 1e-12 and bound < 1e-12, (cx, bound)

    g, _ = pr.g_lambda(1e-5)
    assert abs(g - math.log(1e5) / (2 * math.pi) - cx) < 5e-3

    pos = pr.walk(100, seed=1)
    assert len(pos) == 101 and pos[0] == (0, 0)
    assert pr.walk(100, seed=1) == pos
    r = pr.range_size(100, seed=1)
    assert r == len(set(pos[1:]))
    assert pr.ilt(10, 1, seed=1) == 10

    path = pr.brownian_path(1e-2, 1.0, seed=3)
    assert len(path) == 101

    assert abs(pr.mean_gamma2() - (0.5772156649015329 - 1) / (2 * math.pi)) < 1e-12
    assert len(pr.gamma2(1e-3, 4, seed=5)) == 4

    result = json.loads(pr.run_experiment("cx", {"lambda": "1e-3,1e-4"}, seed=9))
    assert result["experiment"] == "cx"
    assert all(v["passed"] for v in result["verdicts"]), result["verdicts"]

    try:
        pr.run_experiment("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown experiment accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
