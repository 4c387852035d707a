"""Image, dictionary and code-matrix file I/O.

Images are exchanged as 8- or 16-bit grayscale PGM or PNG (RGB PNG files
yield three channel images) and scaled to [0, 1] floats in memory.
Dictionaries use a small binary container; code matrices are exported as
sparse triplet CSV.
"""

import struct

import numpy as np
from PIL import Image as PILImage

DICT_MAGIC = b"PDDC"
DICT_VERSION = 1


def _from_pil(img: PILImage.Image) -> list:
    if img.mode == "L":
        return [np.asarray(img, dtype=np.float64) / 255.0]
    if img.mode in ("I;16", "I"):
        arr = np.asarray(img, dtype=np.float64)
        return [arr / 65535.0]
    if img.mode == "RGB":
        arr = np.asarray(img, dtype=np.float64) / 255.0
        return [arr[:, :, c].copy() for c in range(3)]
    raise ValueError(f"unsupported image mode {img.mode!r}; expected 8/16-bit "
                     "grayscale or RGB")


def load_image_channels(path) -> list:
    """All channels of an image file as [0, 1] float arrays (1 or 3)."""
    path = str(path)
    if path.lower().endswith(".pgm"):
        return [_load_pgm(path)]
    with PILImage.open(path) as img:
        return _from_pil(img)


def load_image(path) -> np.ndarray:
    """A single grayscale image in [0, 1]; rejects multi-channel files."""
    channels = load_image_channels(path)
    if len(channels) != 1:
        raise ValueError(f"{path} has {len(channels)} channels; use "
                         "load_image_channels")
    return channels[0]


def _load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    # header: magic, width, height, maxval separated by whitespace/comments
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            pos = data.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: only binary (P5) PGM is supported")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval not in (255, 65535):
        raise ValueError(f"{path}: PGM maxval {maxval} is not 255 or 65535")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval == 65535 else np.uint8
    count = width * height
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return raw.reshape(height, width).astype(np.float64) / maxval


def save_image(image: np.ndarray, path, bit_depth: int = 8) -> None:
    """Quantize a [0, 1] image (or H x W x 3 stack) to PGM or PNG.

    Values are clamped, scaled to the bit depth's maximum and rounded.
    16-bit output keeps quantization error below 1/(2*65535), so a
    save/load round trip is lossless at that tolerance.
    """
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    path = str(path)
    image = np.asarray(image, dtype=np.float64)
    maxval = 255 if bit_depth == 8 else 65535
    quant = np.rint(np.clip(image, 0.0, 1.0) * maxval)
    if path.lower().endswith(".pgm"):
        if image.ndim != 2:
            raise ValueError("PGM output supports single-channel images only")
        _save_pgm(quant, maxval, path)
        return
    if image.ndim == 3 and image.shape[2] == 3:
        if bit_depth != 8:
            raise ValueError("RGB PNG output is 8-bit only")
        PILImage.fromarray(quant.astype(np.uint8), mode="RGB").save(path)
    elif image.ndim == 2:
        if bit_depth == 8:
            PILImage.fromarray(quant.astype(np.uint8), mode="L").save(path)
        else:
            PILImage.fromarray(quant.astype(np.uint16)).save(path)
    else:
        raise ValueError(f"cannot save image of shape {image.shape}")


def _save_pgm(quant: np.ndarray, maxval: int, path) -> None:
    height, width = quant.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        if maxval == 255:
            fh.write(quant.astype(np.uint8).tobytes())
        else:
            fh.write(quant.astype(">u2").tobytes())


def save_dictionary(dictionary: np.ndarray, path) -> None:
    """Binary dictionary container: magic, version, u32 s, u32 n, f64 data
    row-major."""
    dictionary = np.ascontiguousarray(dictionary, dtype=np.float64)
    s, n = dictionary.shape
    with open(path, "wb") as fh:
        fh.write(DICT_MAGIC)
        fh.write(struct.pack("<III", DICT_VERSION, s, n))
        fh.write(dictionary.tobytes())


def load_dictionary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != DICT_MAGIC:
            raise ValueError(f"{path}: not a dictionary file")
        version, s, n = struct.unpack("<III", fh.read(12))
        if version != DICT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        buf = fh.read(8 * s * n)
        if len(buf) != 8 * s * n:
            raise ValueError(f"{path}: truncated dictionary file")
    return np.frombuffer(buf, dtype=np.float64).reshape(s, n).copy()


def render_atlas(dictionary: np.ndarray, patch_rows: int,
                 patch_cols: int) -> np.ndarray:
    """Tile dictionary atoms into one inspection image.

    Each atom is reshaped column-major to patch_rows x patch_cols and
    rescaled to [0, 1] on its own range; constant atoms render mid-gray
    0.5.  Atoms are laid out on a near-square grid with 1-pixel black
    separators, unused trailing cells stay black.
    """
    s, n = dictionary.shape
    if s != patch_rows * patch_cols:
        raise ValueError(f"atom length {s} does not match "
                         f"{patch_rows}x{patch_cols} patches")
    grid_rows = max(1, int(np.floor(np.sqrt(n))))
    grid_cols = -(-n // grid_rows)  # ceil
    canvas = np.zeros((grid_rows * (patch_rows + 1) - 1,
                       grid_cols * (patch_cols + 1) - 1))
    for j in range(n):
        atom = dictionary[:, j].reshape(patch_rows, patch_cols, order="F")
        lo, hi = atom.min(), atom.max()
        tile = np.full(atom.shape, 0.5) if hi == lo else (atom - lo) / (hi - lo)
        r, c = j % grid_rows, j // grid_rows
        canvas[r * (patch_rows + 1):r * (patch_rows + 1) + patch_rows,
               c * (patch_cols + 1):c * (patch_cols + 1) + patch_cols] = tile
    return canvas


def save_dictionary_atlas(dictionary: np.ndarray, patch_rows: int,
                          patch_cols: int, path) -> None:
    save_image(render_atlas(dictionary, patch_rows, patch_cols), path,
               bit_depth=8)


def export_codes_csv(codes: np.ndarray, path) -> None:
    """Nonzero code entries as triplet CSV (column, row, value)."""
    codes = np.asarray(codes)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# phasedict codes csv v1\n")
        fh.write("column,row,value\n")
        for i in range(codes.shape[1]):
            rows = np.flatnonzero(codes[:, i])
            for r in rows:
                fh.write(f"{i},{r},{float(codes[r, i])!r}\n")


def load_codes_csv(path, shape) -> np.ndarray:
    """Rebuild a dense code matrix from export_codes_csv output."""
    codes = np.zeros(shape)
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("column"):
                continue
            col, row, value = line.strip().split(",")
            codes[int(row), int(col)] = float(value)
    return codes
