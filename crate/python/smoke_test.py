#!/usr/bin/env python3
"""Exercises every binding the extension module exposes.

Run `cargo build -p ergolab-py` first; this script stages the built
library under the importable name and checks a handful of exact values.
"""

import shutil
import sys
import tempfile
from pathlib import Path


def load_module():
    root = Path(__file__).resolve().parent.parent
    names = ("libergolab_py.so", "ergolab_py.so", "libergolab_py.dylib")
    built = [
        path
        for profile in ("debug", "release")
        for name in names
        if (path := root / "target" / profile / name).exists()
    ]
    if not built:
        sys.exit("build the bindings first: cargo build -p ergolab-py")
    newest = max(built, key=lambda p: p.stat().st_mtime)
    stage = Path(tempfile.mkdtemp(prefix="ergolab-py-"))
    shutil.copy2(newest, stage / "ergolab_py.so")
    sys.path.insert(0, str(stage))
    import ergolab_py

    return ergolab_py


lab = load_module()

# group arithmetic
g = lab.Group.cyclic(6)
assert g.order == 6
assert g.moduli == [6]
assert len(g.elements()) == 6
assert g.add([4], [5]) == [3]
assert g.scalar_mul(4, [2]) == [2]
assert lab.Group.free(2).order is None

# rotations
rot5 = lab.System.rotation(5)
assert rot5.size == 5 and rot5.ergodic
assert rot5.kronecker() == [5]
assert rot5.component_count() == 1
assert lab.System.rotation(6, shift=2).component_count() == 2

# seminorms: the order-two character of Z/2 has U^2 norm exactly 1
sem = lab.System.rotation(2).seminorm([(1, 0), (-1, 0)], k=2)
assert sem["agree"]
assert sem["power"]["exact"] == "1"
assert abs(sem["norm"] - 1.0) < 1e-12

# U^2 power of an indicator equals its Fourier fourth-power sum
indicator = [(1, 0)] + [(0, 0)] * 4
four = rot5.fourier_u2(indicator)
assert four["agree"]
assert four["power"]["exact"] == "1/125"

# exact double recurrence average on Z/5 with A = {0}
avg = rot5.multi_average([1, 2], [indicator, indicator], radii=[5])
assert avg["limit"][0]["exact"] == "1/5"
assert all(v["exact"] == "0" for v in avg["limit"][1:])
assert len(avg["windows"]) == 1 and avg["windows"][0][0] == 5

# recurrence scans
scan = rot5.khintchine([0, 1], 1, 2, epsilon="1/100")
assert scan["ergodic"] and [0] in scan["good"]
assert scan["density"] == "2/5"
assert scan["index_ok"]

scan2 = lab.System.rotation(6, shift=2).khintchine([0, 1], 1, 2)
assert not scan2["ergodic"]
assert scan2["components"]["aggregation_exact"]

# eigenvalues of the Z/4 rotation
spec = lab.System.rotation(4).spectrum(k=1)
assert len(spec["elements"]) == 4
lambdas = {e["lambda"]["0"] for e in spec["elements"]}
assert lambdas == {"0", "1/4", "1/2", "3/4"}

# the carry extension of Z/2 is the ergodic 4-point odometer
carry = lab.System.carry_extension(2, 2)
assert carry.size == 4 and carry.ergodic
assert carry.kronecker() == [4]

# order-two counterexample truncation
ce = lab.counterexample(2)
assert ce["lhs_equals_f2"] and ce["rhs_is_zero"] and ce["rhs_gamma_invariant"]
assert ce["discrepancy_sup"] == 1.0
assert ce["size"] == 16

# limit formula, symbolically and against a sampled orbit average
lf = lab.limit_formula([1, 2], [[2, 0], [-1, 0]], mc_samples=50000, seed=1)
assert lf["equal"]
assert lf["mc_residual"] is not None and lf["mc_residual"] < 1e-2
lf0 = lab.limit_formula([1], [[1, 0]])
assert lf0["equal"] and lf0["mc_residual"] is None

# divisible tower over Z/2
tw = lab.tower(lab.System.rotation(2, acting="free"), depth=2)
assert [s["size"] for s in tw["stages"]] == [2, 4, 8]
assert all(s["ergodic"] for s in tw["stages"])
assert tw["stages"][1]["prior_spectrum_rooted"]

# the two-set identity on Z/7, and the flagged failure on Z/2
idy = lab.identity_b7(7, 1, 2)
assert idy["hypotheses_hold"] and idy["equal"]
assert not lab.identity_b7(2, 1, 2)["hypotheses_hold"]

# transformation group of the depth-2 truncation
clg = lab.cl_group(2)
assert clg["transitive"] and clg["two_step"]
assert clg["commutator_invariants"] == [2]
assert clg["element_count"] == 64 and clg["members_verified"]
assert clg["orbit_size"] == 16 and clg["stabilizer_size"] == 4

print("smoke test: all checks passed")
