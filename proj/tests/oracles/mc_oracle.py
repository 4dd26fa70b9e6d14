#!/usr/bin/env python3
"""Independent oracle for mesh volumes.

Runs scikit-image marching cubes (iso 0.5, one voxel of zero padding) on
the same rasterizations the C++ tests build and sums signed tetrahedra.
Checks the values frozen in tests/unit/volume_test.cpp; --print dumps them.
"""
import sys

try:
    import numpy as np
    from skimage import measure
except ImportError as exc:  # reported to ctest as skipped
    print(f"skipped: {exc}")
    sys.exit(77)


def enclosed(mask):
    padded = np.pad(mask.astype(np.float64), 1)
    verts, faces, _, _ = measure.marching_cubes(padded, 0.5)
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    return abs(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def sphere(r):
    # Voxel centers within r of an integer center, grid of 2r + 5 per axis.
    n = 2 * r + 5
    c = r + 2
    i, j, k = np.indices((n, n, n))
    return (i - c) ** 2 + (j - c) ** 2 + (k - c) ** 2 <= r * r


# Values frozen into tests/unit/volume_test.cpp.
FROZEN = {
    "single_voxel": 0.16666667163372,
    "sphere_5": 504.833343505859,
    "sphere_10": 4147.83349609375,
    "sphere_15": 14116.5,
}


def compute():
    single = np.zeros((1, 1, 1), dtype=bool)
    single[0, 0, 0] = True
    out = {"single_voxel": enclosed(single)}
    for r in (5, 10, 15):
        out[f"sphere_{r}"] = enclosed(sphere(r))
    return out


if __name__ == "__main__":
    values = compute()
    if "--print" in sys.argv:
        for key, v in values.items():
            print(f"{key} {v:.15g}")
        sys.exit(0)
    bad = [k for k, v in values.items() if abs(v - FROZEN[k]) > 1e-6 * max(1.0, abs(FROZEN[k]))]
    for k in bad:
        print(f"MISMATCH {k}: oracle {values[k]!r} frozen {FROZEN[k]!r}")
    print("mc oracle agrees" if not bad else "mc oracle disagrees")
    sys.exit(1 if bad else 0)
