"""Linear measurement operators and noisy magnitude measurements.

Four operator families are supported, all complex-linear maps F from an
N1 x N2 image to an M1 x M2 array:

* Gaussian left multiplication        F(X) = G X
* two-sided Gaussian (square images)  F(X) = G X G^*
* asymmetric two-sided Gaussian       F(X) = G X H^*
* coded diffraction patterns          F(X) = vertical stack of scaled 2-D
  DFTs of conj(M_j) * X over the masks M_j.

Each diffraction block is sqrt(sqrt(N1*N2)/m) times the orthonormal 2-D
DFT, so the stack's expected energy gain sits between a unit-normalized
transform's and the Gaussian matrices'.  That calibration is what makes
the default mu/lambda weights of the joint solver balance the data-fit
term against the patch terms; with a plain unitary stack the quartic
term is orders of magnitude too weak to anchor the image.

Measurements are Y = |F(X)|^2 + N with real i.i.d. Gaussian noise N
rescaled so the realized signal-to-noise ratio is exactly the requested
value.  Inner products are conjugate-linear in the first argument.
"""

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"PDMS"
FORMAT_VERSION = 1

_KIND_TAGS = {"gx": 0, "gxg": 1, "gxh": 2, "cdp": 3}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}

_ALPHABET_TAGS = {"ternary": 0, "octanary": 1, "custom": 2}
_TAG_ALPHABETS = {v: k for k, v in _ALPHABET_TAGS.items()}


@dataclass(frozen=True)
class GaussianLeft:
    """F(X) = G X with G complex M1 x N1."""

    matrix: np.ndarray

    kind = "gx"

    def image_shape_for(self, n2: int) -> tuple:
        return (self.matrix.shape[1], n2)


@dataclass(frozen=True)
class GaussianTwoSided:
    """F(X) = G X G^* for square N1 x N1 images, G complex M1 x N1."""

    matrix: np.ndarray

    kind = "gxg"


@dataclass(frozen=True)
class GaussianAsymmetric:
    """F(X) = G X H^* with G complex M1 x N1 and H complex M2 x N2."""

    left: np.ndarray
    right: np.ndarray

    kind = "gxh"


@dataclass(frozen=True)
class CodedDiffraction:
    """F(X) = stack of scaled 2-D DFTs of the masked image.

    masks has shape (m, N1, N2); block j of the output is
    s * fft2(conj(masks[j]) * X, norm="ortho") with the common gain
    s = (N1 * N2) ** 0.25 / sqrt(m).  The same gain multiplies the
    adjoint, so the pairing <F(X), Z> = <X, F*(Z)> is exact.
    """

    masks: np.ndarray
    alphabet: str = "ternary"

    kind = "cdp"


def _fft2(x):
    return np.fft.fft2(x, norm="ortho")


def _ifft2(x):
    return np.fft.ifft2(x, norm="ortho")


def cdp_gain(mask_count: int, n1: int, n2: int) -> float:
    """Per-block scale applied on top of the orthonormal DFT."""
    return (n1 * n2) ** 0.25 / np.sqrt(mask_count)


def forward(op, image: np.ndarray) -> np.ndarray:
    """Apply the measurement operator; image may be real or complex."""
    if isinstance(op, GaussianLeft):
        return op.matrix @ image
    if isinstance(op, GaussianTwoSided):
        if image.shape[0] != image.shape[1]:
            raise ValueError("two-sided Gaussian operator needs a square image")
        return op.matrix @ image @ op.matrix.conj().T
    if isinstance(op, GaussianAsymmetric):
        return op.left @ image @ op.right.conj().T
    if isinstance(op, CodedDiffraction):
        m, n1, n2 = op.masks.shape
        blocks = _fft2(op.masks.conj() * image[np.newaxis, :, :])
        return cdp_gain(m, n1, n2) * blocks.reshape(m * n1, n2)
    raise TypeError(f"unknown operator {type(op).__name__}")


def adjoint(op, z: np.ndarray) -> np.ndarray:
    """Apply the adjoint operator to an M1 x M2 array."""
    if isinstance(op, GaussianLeft):
        return op.matrix.conj().T @ z
    if isinstance(op, GaussianTwoSided):
        return op.matrix.conj().T @ z @ op.matrix
    if isinstance(op, GaussianAsymmetric):
        return op.left.conj().T @ z @ op.right
    if isinstance(op, CodedDiffraction):
        m, n1, n2 = op.masks.shape
        if z.shape != (m * n1, n2):
            raise ValueError(
                f"adjoint input shape {z.shape} does not match {m} masks "
                f"of {n1}x{n2}")
        blocks = _ifft2(z.reshape(m, n1, n2))
        return cdp_gain(m, n1, n2) * np.sum(op.masks * blocks, axis=0)
    raise TypeError(f"unknown operator {type(op).__name__}")


def output_shape(op, image_shape: tuple) -> tuple:
    """Measurement shape (M1, M2) produced for a given image shape."""
    n1, n2 = image_shape
    if isinstance(op, GaussianLeft):
        return (op.matrix.shape[0], n2)
    if isinstance(op, GaussianTwoSided):
        return (op.matrix.shape[0], op.matrix.shape[0])
    if isinstance(op, GaussianAsymmetric):
        return (op.left.shape[0], op.right.shape[0])
    if isinstance(op, CodedDiffraction):
        m = op.masks.shape[0]
        return (m * n1, n2)
    raise TypeError(f"unknown operator {type(op).__name__}")


def sample_gaussian_matrix(rows: int, cols: int, rng) -> np.ndarray:
    """Complex Gaussian matrix with entries N(0, 1/2) + i N(0, 1/2)."""
    scale = np.sqrt(0.5)
    re = rng.standard_normal((rows, cols))
    im = rng.standard_normal((rows, cols))
    return scale * re + 1j * scale * im


TERNARY_VALUES = np.array([0.0, 1.0, -1.0], dtype=np.complex128)
TERNARY_PROBS = np.array([0.5, 0.25, 0.25])

_R2 = np.sqrt(2.0) / 2.0
_R3 = np.sqrt(3.0)
OCTANARY_VALUES = np.array(
    [_R2, -_R2, 1j * _R2, -1j * _R2, _R3, -_R3, 1j * _R3, -1j * _R3],
    dtype=np.complex128)
OCTANARY_PROBS = np.array([0.2, 0.2, 0.2, 0.2, 0.05, 0.05, 0.05, 0.05])


def sample_cdp_operator(n1: int, n2: int, count: int, alphabet: str, rng,
                        values=None, probs=None) -> CodedDiffraction:
    """Draw i.i.d. coded-diffraction masks.

    alphabet "ternary" uses values {0, +1, -1} with probabilities
    {1/2, 1/4, 1/4}; "octanary" uses the eight-point set
    {+-sqrt(2)/2, +-i sqrt(2)/2, +-sqrt(3), +-i sqrt(3)} with weights
    1/5 on each small value and 1/20 on each large one.  Pass values and
    probs together to override either table.
    """
    if (values is None) != (probs is None):
        raise ValueError("values and probs must be overridden together")
    if values is None:
        if alphabet == "ternary":
            values, probs = TERNARY_VALUES, TERNARY_PROBS
        elif alphabet == "octanary":
            values, probs = OCTANARY_VALUES, OCTANARY_PROBS
        else:
            raise ValueError(f"unknown mask alphabet {alphabet!r}")
    else:
        values = np.asarray(values, dtype=np.complex128)
        probs = np.asarray(probs, dtype=np.float64)
        alphabet = "custom"
    if count < 1:
        raise ValueError("mask count must be >= 1")
    if len(values) != len(probs) or not np.isclose(probs.sum(), 1.0):
        raise ValueError("mask probabilities must match values and sum to 1")
    idx = rng.choice(len(values), size=(count, n1, n2), p=probs)
    return CodedDiffraction(masks=values[idx], alphabet=alphabet)


def squared_modulus(z: np.ndarray) -> np.ndarray:
    """|z|^2 computed as re^2 + im^2 (single shared code path)."""
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return z.real ** 2 + z.imag ** 2
    return z ** 2


@dataclass(frozen=True)
class MeasurementSet:
    """Noisy magnitude measurements plus the realized operator.

    measurements holds Y = |F(X)|^2 + N.  snr_db is the requested (and
    realized) signal-to-noise ratio in dB, or None for noiseless data.
    rng_seed records the noise seed when known, else None.  The operator
    carries its realized matrices or masks so a saved set replays exactly.
    """

    measurements: np.ndarray
    operator: object
    image_shape: tuple
    snr_db: float | None = None
    rng_seed: int | None = None


def measure(op, x_true: np.ndarray, snr_db: float | None, rng) -> MeasurementSet:
    """Form Y = |F(x_true)|^2 + N at an exactly realized SNR.

    The noise draw is rescaled so 10*log10(||S||^2 / ||N||^2) equals
    snr_db for S = |F(x_true)|^2.  Pass snr_db=None for noiseless data.
    rng may be an integer seed (recorded in the result) or a Generator.
    """
    x_true = np.asarray(x_true, dtype=np.float64)
    if x_true.ndim != 2:
        raise ValueError("x_true must be a 2-D image")
    if np.any(x_true < 0.0) or np.any(x_true > 1.0):
        raise ValueError("x_true entries must lie in [0, 1]")
    seed = None
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    signal = squared_modulus(forward(op, x_true))
    if snr_db is None:
        noisy = signal
    else:
        draw = rng.standard_normal(signal.shape)
        signal_norm = np.linalg.norm(signal)
        draw_norm = np.linalg.norm(draw)
        if signal_norm == 0.0 or draw_norm == 0.0:
            noisy = signal
        else:
            scale = signal_norm / (draw_norm * 10.0 ** (snr_db / 20.0))
            noisy = signal + scale * draw
    return MeasurementSet(measurements=noisy, operator=op,
                          image_shape=x_true.shape, snr_db=snr_db,
                          rng_seed=seed)


def realized_snr_db(mset: MeasurementSet, x_true: np.ndarray) -> float:
    """Recompute the SNR of the stored noise against |F(x_true)|^2."""
    signal = squared_modulus(forward(mset.operator, np.asarray(x_true, float)))
    noise = mset.measurements - signal
    return 10.0 * np.log10(
        np.linalg.norm(signal) ** 2 / np.linalg.norm(noise) ** 2)


def _write_array(fh, arr):
    arr = np.ascontiguousarray(arr)
    fh.write(arr.tobytes())


def save_measurements(mset: MeasurementSet, path) -> None:
    """Write a MeasurementSet to the flat binary container.

    Layout (little-endian): magic "PDMS", u32 version, u32 kind tag,
    u32 n1, n2, m1, m2 (image and measurement dims), i64 seed (-1 when
    unknown), f64 snr_db (NaN when noiseless), then the realized operator
    data as raw complex128 (gx/gxg: G; gxh: G then H; cdp: u32 mask
    count, u32 alphabet tag, masks), then Y row-major float64.
    """
    op = mset.operator
    y = np.asarray(mset.measurements, dtype=np.float64)
    n1, n2 = mset.image_shape
    m1, m2 = y.shape
    seed = -1 if mset.rng_seed is None else int(mset.rng_seed)
    snr = np.nan if mset.snr_db is None else float(mset.snr_db)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, _KIND_TAGS[op.kind]))
        fh.write(struct.pack("<IIII", n1, n2, m1, m2))
        fh.write(struct.pack("<qd", seed, snr))
        if isinstance(op, (GaussianLeft, GaussianTwoSided)):
            _write_array(fh, op.matrix.astype(np.complex128))
        elif isinstance(op, GaussianAsymmetric):
            _write_array(fh, op.left.astype(np.complex128))
            _write_array(fh, op.right.astype(np.complex128))
        elif isinstance(op, CodedDiffraction):
            fh.write(struct.pack("<II", op.masks.shape[0],
                                 _ALPHABET_TAGS[op.alphabet]))
            _write_array(fh, op.masks.astype(np.complex128))
        else:
            raise TypeError(f"unknown operator {type(op).__name__}")
        _write_array(fh, y)


def _read_array(fh, shape, dtype):
    n = int(np.prod(shape)) * np.dtype(dtype).itemsize
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError("truncated measurement file")
    return np.frombuffer(buf, dtype=dtype).reshape(shape).copy()


def load_measurements(path) -> MeasurementSet:
    """Read a MeasurementSet written by save_measurements."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a measurement file")
        version, tag = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        n1, n2, m1, m2 = struct.unpack("<IIII", fh.read(16))
        seed, snr = struct.unpack("<qd", fh.read(16))
        kind = _TAG_KINDS[tag]
        if kind == "gx":
            op = GaussianLeft(_read_array(fh, (m1, n1), np.complex128))
        elif kind == "gxg":
            op = GaussianTwoSided(_read_array(fh, (m1, n1), np.complex128))
        elif kind == "gxh":
            left = _read_array(fh, (m1, n1), np.complex128)
            right = _read_array(fh, (m2, n2), np.complex128)
            op = GaussianAsymmetric(left=left, right=right)
        else:
            count, atag = struct.unpack("<II", fh.read(8))
            masks = _read_array(fh, (count, n1, n2), np.complex128)
            op = CodedDiffraction(masks=masks, alphabet=_TAG_ALPHABETS[atag])
        y = _read_array(fh, (m1, m2), np.float64)
    return MeasurementSet(measurements=y, operator=op, image_shape=(n1, n2),
                          snr_db=None if np.isnan(snr) else snr,
                          rng_seed=None if seed == -1 else seed)
