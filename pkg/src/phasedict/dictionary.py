"""Dictionary initialization and block-coordinate descent update.

The dictionary is a dense s x n real matrix whose columns (atoms) live in
the unit Euclidean ball.  Initialization stacks the identity next to a
separable 2-D DCT basis, so n = 2s.  The update sweeps the columns once in
index order, each column minimizing the patch-fit term exactly with the
others held at their current (partially updated) values.
"""

import numpy as np

DEAD_ATOM_TOL = 1e-12


def project_unit_ball(d: np.ndarray) -> np.ndarray:
    """Scale a vector back to the unit ball: d / max{1, ||d||}."""
    return d / max(1.0, float(np.linalg.norm(d)))


def _dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row k holds the k-th basis function."""
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * x + 1) * k / (2 * n))
    mat[0] *= np.sqrt(1.0 / n)
    mat[1:] *= np.sqrt(2.0 / n)
    return mat


def init_dictionary(patch_rows: int, patch_cols: int) -> np.ndarray:
    """Identity plus separable 2-D DCT start, s x 2s.

    The DCT block's columns are the vectorized (column-major, matching
    patch vectorization) outer products of 1-D DCT-II basis vectors, so
    the block is orthogonal.  All columns pass through the unit-ball
    projection, which leaves them at norm 1.
    """
    s = patch_rows * patch_cols
    t_rows = _dct_matrix(patch_rows)
    t_cols = _dct_matrix(patch_cols)
    # column a + b*patch_rows is vec(outer(t_rows[a], t_cols[b]))
    dct_block = np.kron(t_cols.T, t_rows.T)
    d = np.hstack([np.eye(s), dct_block])
    for j in range(d.shape[1]):
        d[:, j] = project_unit_ball(d[:, j])
    return d


def bcd_pass(dictionary: np.ndarray, codes: np.ndarray, patches: np.ndarray,
             rng) -> np.ndarray:
    """One Gauss-Seidel sweep over the atoms.

    With B = patches @ codes.T and C = codes @ codes.T, each used atom j
    (C[j, j] > 1e-12) moves to its exact per-column optimum
        d_j <- d_j + (B[:, j] - D C[:, j]) / C[j, j]
    followed by the unit-ball projection, where D already contains the
    columns updated earlier in this sweep.  Dead atoms are redrawn from
    N(0, I) and projected.  The patch-fit objective never increases.
    """
    s, n = dictionary.shape
    if codes.shape[0] != n:
        raise ValueError("codes row count does not match dictionary atoms")
    if patches.shape != (s, codes.shape[1]):
        raise ValueError("patch matrix does not match dictionary and codes")
    b = patches @ codes.T
    c = codes @ codes.T
    out = dictionary.astype(np.float64).copy()
    for j in range(n):
        cjj = c[j, j]
        if cjj > DEAD_ATOM_TOL:
            step = (b[:, j] - out @ c[:, j]) / cjj
            out[:, j] = project_unit_ball(out[:, j] + step)
        else:
            out[:, j] = project_unit_ball(rng.standard_normal(s))
    return out
