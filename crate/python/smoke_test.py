#!/usr/bin/env python3
"""Build the monospde_py extension and exercise every exported function.

Run from anywhere:  python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_extension() -> Path:
    subprocess.run(
        ["cargo", "build", "-p", "monospde-py"],
        cwd=REPO,
        check=True,
    )
    for name in ("libmonospde_py.so", "libmonospde_py.dylib", "monospde_py.dll"):
        built = REPO / "target" / "debug" / name
        if built.exists():
            return built
    raise FileNotFoundError("built extension library not found under target/debug")


def main() -> None:
    built = build_extension()
    workdir = Path(tempfile.mkdtemp(prefix="monospde-py-"))
    shutil.copy2(built, workdir / "monospde_py.so")
    sys.path.insert(0, str(workdir))

    import monospde_py as m

    # Eigenpairs of the Dirichlet Laplacian on (0, 1).
    assert abs(m.laplace_eigenvalue(1) - math.pi**2) < 1e-12
    assert abs(m.laplace_eigenvalue(3) - 9 * math.pi**2) < 1e-11
    [e2_quarter] = m.laplace_eigenfunction(2, [0.25])
    assert abs(e2_quarter - math.sqrt(2.0)) < 1e-12

    # sin(pi x) = (1/sqrt(2)) e_1, so the leading coefficient is 2^-1/2.
    c = m.project_initial("sin-pi", 8)
    assert abs(c[0] - 1.0 / math.sqrt(2.0)) < 1e-12
    assert all(abs(v) < 1e-12 for v in c[1:])

    # Norms: theta=0 recovers L2, theta=1 scales mode k by sqrt(lambda_k).
    assert abs(m.sobolev_norm([1.0, 0.0, 0.0], 0.0) - 1.0) < 1e-15
    assert abs(m.sobolev_norm([1.0, 0.0, 0.0], 1.0) - math.pi) < 1e-12

    # Rate fitting on exact power-law data.
    pts = [(2.0**-j, 3.0 * (2.0**-j) ** 2) for j in range(4, 9)]
    slope, _intercept, r2 = m.fit_convergence_rate(pts)
    assert abs(slope - 2.0) < 1e-12 and abs(r2 - 1.0) < 1e-12

    # Model checker: sound default passes, bad polynomial fails with witness.
    report = m.check_model()
    assert "estimated one-sided constant" in report
    assert "[FAIL]" not in report
    bad = m.check_model(drift="odd-polynomial", coeffs=[1.0, 0.5])
    assert "[FAIL] drift one-sided Lipschitz" in bad and "witness pair" in bad

    # Noise increments: shape, reproducibility, and an independent variance
    # sanity check (mode-1 increments are N(0, q_1 tau) with q_1 = 1).
    inc = m.noise_increments(modes=8, beta=4.0, t_final=0.5, steps=64, seed=9, sample=3)
    assert len(inc) == 64 and all(len(row) == 8 for row in inc)
    assert inc == m.noise_increments(modes=8, beta=4.0, t_final=0.5, steps=64, seed=9, sample=3)
    var1 = sum(row[0] ** 2 for row in inc) / 64
    tau = 0.5 / 64
    assert 0.3 * tau < var1 < 3.0 * tau, f"mode-1 variance {var1} vs tau {tau}"

    # Trajectories: finite, stable, reproducible; with additive noise the
    # Milstein correction vanishes and both schemes agree exactly.
    t = m.run_trajectory(scheme="euler", tau=2.0**-6, steps=32, seed=5, sample=1)
    assert len(t["times"]) == 33 and len(t["l2_norms"]) == 33
    assert all(math.isfinite(v) for v in t["l2_norms"])
    assert max(t["l2_norms"]) < 10.0
    assert t["newton_max"] <= 10
    t2 = m.run_trajectory(scheme="euler", tau=2.0**-6, steps=32, seed=5, sample=1)
    assert t["final_coeffs"] == t2["final_coeffs"]

    kw = dict(
        diffusion="additive", b=0.3, tau=2.0**-6, steps=32,
        modes=32, noise_modes=32, seed=7, sample=2,
    )
    eu = m.run_trajectory(scheme="euler", **kw)
    mi = m.run_trajectory(scheme="milstein", **kw)
    assert eu["final_coeffs"] == mi["final_coeffs"], "additive-noise degeneracy"

    print("smoke test passed:", m.__name__, "from", workdir)


if __name__ == "__main__":
    main()
