"""Smoke test for the kstab_py extension.

Builds the extension with cargo, stages it as an importable module and
exercises each binding once.

    python3 python/smoke_test.py
"""

import json
import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def stage_extension():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "kstab-py"],
        cwd=ROOT,
        check=True,
    )
    lib = os.path.join(ROOT, "target", "release", "libkstab_py.so")
    dest = tempfile.mkdtemp(prefix="kstab_py_")
    shutil.copy(lib, os.path.join(dest, "kstab_py.so"))
    sys.path.insert(0, dest)
    return dest


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    stage = stage_extension()
    import kstab_py as k

    checks = []

    def check(name, ok, detail=""):
        checks.append(ok)
        print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")

    line = k.Polyhedron.half_line("-1")
    v = k.Weight.exp(["1"])
    w = k.Weight.soliton_w(v, 1)
    check("polyhedron", line.dim == 1 and line.is_delzant() and not line.is_bounded())
    check("weight eval", close(v.eval([0.5]), math.exp(-0.5), 1e-15))
    check("weight json", k.Weight(v.to_json()) == v)

    fa = k.futaki_affine(line, v, w)
    worst = max(abs(x) for x in fa["values"])
    check("futaki affine", fa["vanishes"] and worst < 1e-10, f"{worst:.2e}")

    f = json.dumps({"family": "f_x0", "x0": "1"})
    r = k.futaki(line, v, w, f)
    check("futaki f_x0(1)", r["value"] > 0, f"{r['value']:.6e}")

    theta = k.profile_theta(v, w, [0.0, 1.0, 2.0])
    check("flat profile", all(close(t, 2 + 2 * x, 1e-12) for t, x in zip(theta, [0, 1, 2])), str(theta))

    sq = k.Polyhedron.shifted_orthant(2)
    v2 = k.Weight.exp(["1", "1"])
    w2 = k.Weight.soliton_w(v2, 2)
    pot = k.Potential.guillemin(sq)
    scal = pot.abreu_scal_v(v2, [0.3, 0.7])
    check("abreu on flat C^2", close(scal, w2.eval([0.3, 0.7]), 1e-10), f"{scal:.12f}")

    li = k.li_decay_check(1, 1, 3.0, 1.0, points=11)
    check("li decay slope", abs(li["slope"] + 2) < 1e-2, f"{li['slope']:.6f}")

    out = os.path.join(stage, "out")
    code = k.run_problem(os.path.join(ROOT, "problems", "flat_1d_futaki.json"), out)
    check("run_problem exit", code == 0 and os.path.exists(os.path.join(out, "manifest.json")))
    code = k.run_problem(os.path.join(ROOT, "problems", "malformed.json"), out + "_bad")
    check("malformed exit", code == 2)

    try:
        k.Weight("{not json")
        check("value error", False)
    except ValueError:
        check("value error", True)

    rep = k.reproduce("flat_1d")
    check("reproduce flat_1d", rep["pass"])

    shutil.rmtree(stage, ignore_errors=True)
    failed = checks.count(False)
    print(f"{len(checks) - failed}/{len(checks)} passed")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
