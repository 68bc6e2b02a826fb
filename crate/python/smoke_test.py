"""Smoke test for the hexmpo Python extension.

Usage: python python/smoke_test.py [path/to/libhexmpo_py.so]

Without an argument the release build under target/ is used. The library is
copied next to a temporary module name so it imports without installation.
"""

import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

# Must be set before the library loads: some OpenBLAS builds pick broken
# AVX-512 kernels otherwise.
os.environ.setdefault("OPENBLAS_CORETYPE", "Haswell")

ROOT = Path(__file__).resolve().parent.parent


def locate(arg):
    if arg:
        return Path(arg)
    for name in ("libhexmpo_py.so", "libhexmpo_py.dylib", "hexmpo_py.dll"):
        p = ROOT / "target" / "release" / name
        if p.exists():
            return p
    sys.exit("build first: cargo build --release -p hexmpo-py")


def main():
    lib = locate(sys.argv[1] if len(sys.argv) > 1 else None)
    tmp = Path(tempfile.mkdtemp())
    suffix = ".pyd" if lib.suffix == ".dll" else ".so"
    shutil.copy(lib, tmp / f"hexmpo_py{suffix}")
    sys.path.insert(0, str(tmp))
    import hexmpo_py as hx

    assert hx.backend_ok(), "BLAS backend self-test failed"
    assert abs(hx.angle("0.25pi") - math.pi / 4) < 1e-15

    n, edges = hx.lattice_edges("eagle127")
    assert n == 127 and len(edges) == 144, (n, len(edges))
    assert len(hx.lightcone("62", 7)) == 54
    assert len(hx.lightcone("62", 4, non_commuting=True)) == 69

    s13 = hx.clifford_stabilizer("13", 5)
    letters = [t[0] for t in s13.split()[1:]]
    assert (letters.count("X"), letters.count("Y"), letters.count("Z")) == (3, 2, 5), s13

    # Clifford endpoint: chi = 1 is exact and F stays 1
    rows = hx.heisenberg("Z:62", math.pi / 2, 6, 1)
    assert all(f == 1.0 for _, f, _ in rows)

    # operator engine against the dense state on the two-hexagon lattice
    rows = hx.heisenberg("Z:detector", 0.7, 3, 256, lattice_name="twohex21")
    dense = hx.exact_z("detector", 0.7, 3)
    assert abs(rows[3][0] - dense) < 1e-9, (rows[3][0], dense)

    echo = hx.bptns_echo(math.pi / 2, 3, chi=8)
    assert abs(echo - 1.0) < 1e-10, echo

    assert len(hx.presets()) >= 9

    cfg = tmp / "endpoints.toml"
    cfg.write_text(
        'name = "endpoints"\nengine = "clifford"\nlattice = "eagle127"\n'
        'observable = "Z:center"\ntheta_h = [0.0, "0.5pi"]\ndepths = [1, 2, 3]\n'
        f'[output]\ndir = "{tmp / "out"}"\n'
    )
    text, path = hx.run_config(str(cfg))
    rec = json.loads(text)
    assert rec["failures"] == 0 and len(rec["points"]) == 2 and Path(path).is_file()

    shutil.rmtree(tmp, ignore_errors=True)
    print(f"hexmpo_py {hx.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
