"""Sliding-window patch extraction and reassembly.

Patches are enumerated column-major over the grid of top-left corners and
each patch is vectorized column-major, so extract() of an N1 x N2 image is
an (s1*s2) x p matrix whose column i is the i-th window read column by
column.  The geometry must tile the image exactly; no padding is applied.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class GeometryError(ValueError):
    """Raised when a patch geometry does not tile the image exactly."""


@dataclass(frozen=True)
class PatchGeometry:
    """Patch and stride sizes tied to a fixed image size.

    Strides may not exceed the patch dimensions (no gaps) and the window
    grid must cover the image exactly: (image_rows - patch_rows) must be
    divisible by stride_rows, and likewise for columns.
    """

    patch_rows: int
    patch_cols: int
    stride_rows: int
    stride_cols: int
    image_rows: int
    image_cols: int

    def __post_init__(self):
        s1, s2 = self.patch_rows, self.patch_cols
        t1, t2 = self.stride_rows, self.stride_cols
        n1, n2 = self.image_rows, self.image_cols
        if s1 < 1 or s2 < 1:
            raise GeometryError(f"patch dims must be >= 1, got {s1}x{s2}")
        if not (1 <= t1 <= s1 and 1 <= t2 <= s2):
            raise GeometryError(
                f"strides must satisfy 1 <= stride <= patch dim, got "
                f"strides {t1}x{t2} for patches {s1}x{s2}")
        if s1 > n1 or s2 > n2:
            raise GeometryError(
                f"patches {s1}x{s2} larger than image {n1}x{n2}")
        if (n1 - s1) % t1 != 0 or (n2 - s2) % t2 != 0:
            raise GeometryError(
                f"geometry does not tile {n1}x{n2} exactly: "
                f"patches {s1}x{s2}, strides {t1}x{t2}")

    @property
    def patch_size(self) -> int:
        """Entries per vectorized patch (s = s1*s2)."""
        return self.patch_rows * self.patch_cols

    @property
    def grid_rows(self) -> int:
        return (self.image_rows - self.patch_rows) // self.stride_rows + 1

    @property
    def grid_cols(self) -> int:
        return (self.image_cols - self.patch_cols) // self.stride_cols + 1

    @property
    def patch_count(self) -> int:
        """Number of patches p covering the image."""
        return self.grid_rows * self.grid_cols

    def corners(self):
        """Top-left (row, col) corners in enumeration (column-major) order."""
        for c in range(self.grid_cols):
            for r in range(self.grid_rows):
                yield r * self.stride_rows, c * self.stride_cols


def _check_image(image: np.ndarray, geom: PatchGeometry) -> np.ndarray:
    image = np.asarray(image)
    if image.shape != (geom.image_rows, geom.image_cols):
        raise GeometryError(
            f"image shape {image.shape} does not match geometry "
            f"{geom.image_rows}x{geom.image_cols}")
    return image


def _check_patches(patches: np.ndarray, geom: PatchGeometry) -> np.ndarray:
    patches = np.asarray(patches)
    if patches.shape != (geom.patch_size, geom.patch_count):
        raise GeometryError(
            f"patch matrix shape {patches.shape} does not match geometry "
            f"({geom.patch_size}, {geom.patch_count})")
    return patches


def extract(image: np.ndarray, geom: PatchGeometry) -> np.ndarray:
    """Extract all patches of an image into an s x p matrix."""
    image = _check_image(image, geom)
    windows = sliding_window_view(image, (geom.patch_rows, geom.patch_cols))
    windows = windows[::geom.stride_rows, ::geom.stride_cols]
    # (gr, gc, s1, s2) -> index [a + b*s1, r + c*gr] = window[r, c, a, b]
    out = windows.transpose(2, 3, 0, 1).reshape(
        geom.patch_size, geom.patch_count, order="F")
    return np.ascontiguousarray(out)


def _accumulate(patches: np.ndarray, geom: PatchGeometry) -> np.ndarray:
    """Sum patch contributions into image positions, in extended precision."""
    s1, s2 = geom.patch_rows, geom.patch_cols
    blocks = patches.reshape(s1, s2, geom.grid_rows, geom.grid_cols, order="F")
    acc = np.zeros((geom.image_rows, geom.image_cols), dtype=np.longdouble)
    for c in range(geom.grid_cols):
        j = c * geom.stride_cols
        for r in range(geom.grid_rows):
            i = r * geom.stride_rows
            acc[i:i + s1, j:j + s2] += blocks[:, :, r, c]
    return acc


def multiplicity(geom: PatchGeometry) -> np.ndarray:
    """Number of windows covering each pixel (the matrix R in the adjoints)."""
    ones = np.ones((geom.patch_size, geom.patch_count))
    counts = _accumulate(ones, geom)
    return counts.astype(np.int64)


def reassemble(patches: np.ndarray, geom: PatchGeometry) -> np.ndarray:
    """Average patch contributions back into an image.

    Every pixel of the output is the mean of all patch entries that cover
    it.  The sum and the division run in extended precision so that a
    pixel covered by k copies of the same value comes back bit-exact; in
    particular reassemble(extract(X), geom) == X for any valid geometry.
    """
    patches = _check_patches(patches, geom)
    acc = _accumulate(patches, geom)
    counts = _accumulate(np.ones_like(patches, dtype=np.longdouble), geom)
    return (acc / counts).astype(np.float64)


def extract_adjoint(patches: np.ndarray, geom: PatchGeometry) -> np.ndarray:
    """Adjoint of extract: sum patch contributions without averaging.

    Equals multiplicity(geom) * reassemble(patches, geom).
    """
    patches = _check_patches(patches, geom)
    return _accumulate(patches, geom).astype(np.float64)
