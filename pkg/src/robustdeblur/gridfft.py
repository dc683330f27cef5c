"""Pixel grids, 2D DFTs, and PSF/OTF conversion.

Images are plain 2D float64 arrays (row-major, photon counts); spectra are
2D complex128 arrays of the same shape.  The transform convention is fixed
throughout the package: unnormalized forward DFT and 1/N inverse (numpy's
default), so ``idft2(dft2(x)) == x`` and a PSF's OTF value at frequency
(0, 0) equals its pixel sum.  Non-power-of-two and odd sizes are supported.

The module keeps a global tally of transforms and pixel-wise multiplies /
additions issued by the operator kernels.  The tally exists so tests can pin
exact per-apply operation counts; see :func:`count_transforms`.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "OpCounts",
    "count_transforms",
    "dft2",
    "idft2",
    "psf_to_otf",
    "embed_psf",
    "read_pgm",
    "write_pgm",
    "read_raw",
    "write_raw",
    "InverseTransformError",
]

# Relative imaginary residue beyond which idft2 refuses to discard.
IMAG_TOL = 1e-10


class InverseTransformError(ValueError):
    """Inverse transform produced a non-negligible imaginary part.

    The operator symbols used in this package are all Hermitian-symmetric,
    so a complex inverse signals an inconsistent symbol, not rounding.
    """


@dataclass
class OpCounts:
    """Tally of 2D transforms and pixel-wise array operations."""

    fft2: int = 0
    ifft2: int = 0
    mults: int = 0
    adds: int = 0

    def copy(self) -> "OpCounts":
        return OpCounts(self.fft2, self.ifft2, self.mults, self.adds)


#: Global tally. Incremented by dft2/idft2 and by the operator kernels
#: (pixel-wise multiplies and additions only; scalar folding is free).
COUNTS = OpCounts()


@contextlib.contextmanager
def count_transforms():
    """Yield an :class:`OpCounts` holding the ops issued inside the block.

    >>> with count_transforms() as c:
    ...     spec = dft2(img)
    >>> c.fft2
    1
    """
    start = COUNTS.copy()
    tally = OpCounts()
    try:
        yield tally
    finally:
        tally.fft2 = COUNTS.fft2 - start.fft2
        tally.ifft2 = COUNTS.ifft2 - start.ifft2
        tally.mults = COUNTS.mults - start.mults
        tally.adds = COUNTS.adds - start.adds


def tally_mults(n: int = 1) -> None:
    COUNTS.mults += n


def tally_adds(n: int = 1) -> None:
    COUNTS.adds += n


def as_image(values, name: str = "image") -> np.ndarray:
    """Validate and return a 2D float64 image (finite entries only)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a 2D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def dft2(img: np.ndarray) -> np.ndarray:
    """Unnormalized forward 2D DFT of a real image.

    Linearity and Parseval's identity hold:
    ``sum(|dft2(x)|**2) == N * sum(x**2)`` with ``N = height * width``.
    """
    img = as_image(img)
    COUNTS.fft2 += 1
    return np.fft.fft2(img)


def idft2(spec: np.ndarray, imag_tol: float = IMAG_TOL) -> np.ndarray:
    """Inverse 2D DFT (1/N normalization), returning a real image.

    The imaginary residue is discarded when it is below ``imag_tol``
    relative to the result norm; a larger residue raises
    :class:`InverseTransformError`.
    """
    spec = np.asarray(spec, dtype=np.complex128)
    if spec.ndim != 2:
        raise ValueError(f"spectrum must be a 2D array, got shape {spec.shape}")
    COUNTS.ifft2 += 1
    out = np.fft.ifft2(spec)
    norm = np.linalg.norm(out)
    imag_norm = np.linalg.norm(out.imag)
    if imag_norm > imag_tol * max(norm, np.finfo(np.float64).tiny):
        raise InverseTransformError(
            f"imaginary residue {imag_norm:.3e} exceeds {imag_tol:.1e} of norm "
            f"{norm:.3e}; operator symbol is not Hermitian-symmetric"
        )
    return np.ascontiguousarray(out.real)


def psf_to_otf(psf: np.ndarray, center: tuple[int, int]) -> np.ndarray:
    """Transform a full-grid PSF into the eigenvalue array of its operator.

    The PSF is circularly shifted so that ``center`` lands on index (0, 0),
    then forward transformed.  ``psf`` must already match the grid size;
    embed smaller kernels with :func:`embed_psf` first.  The center must be
    given explicitly because peak detection is ambiguous for flat-topped
    kernels.
    """
    psf = as_image(psf, "psf")
    ci, cj = int(center[0]), int(center[1])
    h, w = psf.shape
    if not (0 <= ci < h and 0 <= cj < w):
        raise ValueError(f"center {center} outside grid {psf.shape}")
    return dft2(np.roll(psf, (-ci, -cj), axis=(0, 1)))


def embed_psf(
    psf: np.ndarray, shape: tuple[int, int], center: tuple[int, int]
) -> tuple[np.ndarray, tuple[int, int]]:
    """Zero-pad a small PSF into the top-left corner of a larger grid.

    Returns the padded PSF and the center coordinates on the new grid
    (unchanged: padding does not move pixel (0, 0)).
    """
    psf = as_image(psf, "psf")
    h, w = psf.shape
    H, W = int(shape[0]), int(shape[1])
    if h > H or w > W:
        raise ValueError(f"psf {psf.shape} larger than target grid {shape}")
    out = np.zeros((H, W))
    out[:h, :w] = psf
    return out, (int(center[0]), int(center[1]))


# ---------------------------------------------------------------------------
# File formats: 16-bit PGM for viewing, raw float64 for lossless round trips.
# ---------------------------------------------------------------------------


def write_raw(path, img: np.ndarray) -> None:
    """Write an image losslessly: little-endian float64, row-major.

    A sidecar header ``<path>.hdr`` with ``height=<int> width=<int>``
    records the shape.
    """
    img = as_image(img)
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(img, dtype="<f8").tobytes())
    Path(str(path) + ".hdr").write_text(
        f"height={img.shape[0]} width={img.shape[1]}\n"
    )


def read_raw(path) -> np.ndarray:
    """Read an image written by :func:`write_raw`."""
    path = Path(path)
    header = Path(str(path) + ".hdr").read_text().split()
    fields = dict(item.split("=", 1) for item in header)
    h, w = int(fields["height"]), int(fields["width"])
    data = np.frombuffer(path.read_bytes(), dtype="<f8")
    if data.size != h * w:
        raise ValueError(
            f"{path}: payload has {data.size} values, header says {h}x{w}"
        )
    return data.reshape(h, w).copy()


def write_pgm(path, img: np.ndarray, maxval: int = 65535) -> None:
    """Write a viewing copy as binary PGM (P5), rescaled to [0, maxval].

    Lossy by design: values are clipped at zero and scaled so the image
    maximum maps to ``maxval``.  Use :func:`write_raw` for exact storage.
    """
    if not 0 < maxval <= 65535:
        raise ValueError("maxval must be in 1..65535")
    img = as_image(img)
    scaled = np.clip(img, 0.0, None)
    peak = scaled.max()
    if peak > 0:
        scaled = scaled * (maxval / peak)
    pixels = np.round(scaled).astype(np.uint32)
    h, w = img.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    if maxval < 256:
        payload = pixels.astype(np.uint8).tobytes()
    else:
        payload = pixels.astype(">u2").tobytes()  # PGM 16-bit is big-endian
    Path(path).write_bytes(header + payload)


def _pgm_tokens(blob: bytes):
    # Token stream over the header, skipping '#' comments.
    i = 0
    while True:
        while i < len(blob) and blob[i : i + 1].isspace():
            i += 1
        if i < len(blob) and blob[i : i + 1] == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(blob) and not blob[i : i + 1].isspace():
            i += 1
        yield blob[start:i], i
        i += 1


def read_pgm(path) -> np.ndarray:
    """Read an 8- or 16-bit PGM image (P2 ascii or P5 binary) as float64."""
    blob = Path(path).read_bytes()
    tokens = _pgm_tokens(blob)
    magic, _ = next(tokens)
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    (w_tok, _), (h_tok, _), (max_tok, end) = (
        next(tokens),
        next(tokens),
        next(tokens),
    )
    w, h, maxval = int(w_tok), int(h_tok), int(max_tok)
    if not 0 < maxval <= 65535:
        raise ValueError(f"{path}: bad maxval {maxval}")
    if magic == b"P2":
        values = np.array(blob[end:].split(), dtype=np.float64)
    else:
        raster = blob[end + 1 :]  # single whitespace byte after maxval
        dtype = np.uint8 if maxval < 256 else ">u2"
        values = np.frombuffer(raster, dtype=dtype, count=h * w).astype(
            np.float64
        )
    if values.size != h * w:
        raise ValueError(f"{path}: expected {h * w} samples, got {values.size}")
    return values.reshape(h, w)
