"""Smoke test for the polyscore Python module.

Run after `cargo build -p polyscore-py` (or a maturin build); when the module is
not installed, the freshly built shared library under target/ is loaded instead.
"""

import importlib.util
import json
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load():
    try:
        import polyscore

        return polyscore
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libpolyscore.so"
        if lib.exists():
            tmp = pathlib.Path(tempfile.mkdtemp())
            dst = tmp / "polyscore.so"
            shutil.copy(lib, dst)
            spec = importlib.util.spec_from_file_location("polyscore", dst)
            mod = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(mod)
            return mod
    sys.exit("polyscore module not found; run `cargo build -p polyscore-py` first")


def main():
    ps = load()

    basis = ps.enumerate_basis(2, 3)
    assert len(basis) == 9 and basis[7] == [1, 2], basis
    try:
        ps.enumerate_basis(2, 2)
        raise AssertionError("even d accepted")
    except ValueError:
        pass

    # Gaussian member: exp(-x^2 + x), mean 1/2, Fisher information 1/2
    p = ps.ParamVector(1, 1, [1.0])
    s = ps.sample(p, 20000, seed=3)
    assert len(s) == 20000 and s.n == 1
    sm = ps.fit(s, 1, "sm")
    mle = ps.fit(s, 1, "mle")
    assert abs(sm["theta_hat"][0] - 1.0) < 0.1, sm
    assert abs(mle["theta_hat"][0] - 1.0) < 0.1, mle

    z = ps.log_partition(p)
    assert z["converged"] and abs(z["value"] - (0.5 * math.log(math.pi) + 0.25)) < 1e-9, z
    info = ps.fisher_info(ps.ParamVector(1, 1))
    assert abs(info[0][0] - 0.5) < 1e-9, info

    rep = ps.verify_bounds(ps.ParamVector(1, 3, [0.3, -0.2, 0.1]), seed=7)
    assert rep["all_hold"], rep
    assert not ps.verify_bounds(ps.ParamVector(1, 3, [0.3, -0.2, 0.1]), corrupt_fisher=True)["all_hold"]

    enc = ps.encode_cnf("p cnf 3 1\n1 2 -3 0\n", 1.0, 0.0)
    assert enc["theta"]["terms"]["2,2,2"] == -1.0, enc
    alpha, beta = ps.default_params(3, 1, "zeroth")
    assert alpha == 8.0 and beta > 1e6

    q = ps.ParamVector.from_json(p.to_json())
    assert q.theta == p.theta
    study = ps.convergence_study(p, [100, 1000], trials=3, seed=1, estimators=["sm"])
    assert len(study["rows"]) == 6
    print(json.dumps({"ok": True, "sm": sm["theta_hat"], "mle": mle["theta_hat"]}))


if __name__ == "__main__":
    main()
