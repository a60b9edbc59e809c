"""Smoke test for the oddreg_py extension. Build with
`maturin build --release` in crates/python and install the wheel first."""

import json
import os

import oddreg_py as od

CERTS = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data", "certs")


def main():
    assert od.smallest_w([1], 3) == 21
    assert od.smallest_w([167, 191, 431], 0) == 8
    assert od.psi(1, 1, 193, 16) == 8
    assert od.universal_set(5) == [(1, 1), (1, 4)]
    assert od.exceptions("1,4,5", "odd", 20000) == []
    assert od.exceptions("1,2,7", "odd", 1000)[0] == 5
    assert od.odd_profile("1,4,5") == [1, 5]
    assert od.is_stable("1,4,5") and not od.is_stable("1,5,20")
    terminal, steps = od.reduce_to_stable("1,5,100")
    assert terminal == "1,4,5" and [p for p, _ in steps] == [5, 5]
    assert len(od.genus("1,4,5")) == 2
    assert od.check_prec("4,8,14,0,0,4", "2,12,16,0,0,0", 4, 1)
    ok, excluded = od.check_trap(os.path.join(CERTS, "trap_l4_r1.json"))
    assert ok and excluded == [45]
    text, code = od.run(["--format", "json", "tables", "--which", "3"])
    assert code == 0 and len(json.loads(text)["rows"]) == 4
    try:
        od.exceptions("2,4,6")
    except ValueError as e:
        assert "primitive" in str(e)
    else:
        raise AssertionError("non-primitive input accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
