"""Periodic blur operators, the Laplacian regularizer, and Hessian products.

The forward model stacks one or more circular convolutions of the unknown
image: frame j of ``A x`` is ``idft2(H_j * dft2(x))`` where ``H_j`` is the
frame's OTF.  Stacked residual-space vectors are 3D arrays of shape
``(frames, height, width)``.

``hessian_apply`` evaluates ``(A^T D A + lam * L^T L) s`` with a fused
transform schedule costing exactly 2 fft2 + 2 ifft2 + 4 pixel-wise
multiplies + 1 addition per single-frame apply.  The schedule is part of
the module contract (tests pin the counts), not an optimization detail.
"""

from __future__ import annotations

import numpy as np

from .gridfft import as_image, dft2, idft2, psf_to_otf, tally_adds, tally_mults

__all__ = [
    "BlurOperator",
    "laplacian_symbol",
    "hessian_apply",
    "as_stack",
]


def as_stack(values, shape: tuple[int, int], name: str = "stack") -> np.ndarray:
    """Validate a residual-space vector: (k, h, w) float64, finite."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3 or arr.shape[1:] != tuple(shape):
        raise ValueError(
            f"{name} must have shape (k, {shape[0]}, {shape[1]}), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


class BlurOperator:
    """Stacked periodic blur operator defined by one OTF per frame.

    Immutable after construction; safe to share across threads.  The
    squared-PSF OTFs (transforms of the pixel-wise squared kernels) are
    precomputed once here because the preconditioner needs them at every
    Newton step.
    """

    def __init__(self, otfs, sq_otfs=None):
        otfs = np.asarray(otfs, dtype=np.complex128)
        if otfs.ndim == 2:
            otfs = otfs[None, :, :]
        if otfs.ndim != 3 or otfs.shape[0] < 1:
            raise ValueError(f"otfs must have shape (k, h, w), got {otfs.shape}")
        self.otfs = otfs
        self.otfs_conj = np.conj(otfs)
        if sq_otfs is not None:
            sq_otfs = np.asarray(sq_otfs, dtype=np.complex128)
            if sq_otfs.shape != otfs.shape:
                raise ValueError("sq_otfs shape must match otfs")
        self.sq_otfs = sq_otfs
        self.otfs.setflags(write=False)
        self.otfs_conj.setflags(write=False)

    @classmethod
    def from_psfs(cls, psfs, centers) -> "BlurOperator":
        """Build from full-grid PSFs and their center coordinates.

        Also transforms the pixel-wise squared PSFs: for a circulant
        operator every matrix entry is a kernel value, so the operator
        built from ``psf**2`` is exactly the entry-wise square of A.
        """
        psfs = [as_image(p, "psf") for p in psfs]
        if len(psfs) != len(centers):
            raise ValueError("one center per psf required")
        shape = psfs[0].shape
        for p in psfs:
            if p.shape != shape:
                raise ValueError("all frame PSFs must share the grid shape")
        otfs = np.stack([psf_to_otf(p, c) for p, c in zip(psfs, centers)])
        sq_otfs = np.stack(
            [psf_to_otf(p * p, c) for p, c in zip(psfs, centers)]
        )
        return cls(otfs, sq_otfs)

    @property
    def n_frames(self) -> int:
        return self.otfs.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.otfs.shape[1:]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Forward model: frame j of the result is ``idft2(H_j * dft2(x))``."""
        x = as_image(x)
        if x.shape != self.shape:
            raise ValueError(f"image shape {x.shape} != operator grid {self.shape}")
        x_hat = dft2(x)
        return np.stack([idft2(h * x_hat) for h in self.otfs])

    def apply_adjoint(self, y) -> np.ndarray:
        """Adjoint: ``sum_j idft2(conj(H_j) * dft2(y_j))``."""
        y = as_stack(y, self.shape, "y")
        if y.shape[0] != self.n_frames:
            raise ValueError(
                f"stack has {y.shape[0]} frames, operator has {self.n_frames}"
            )
        acc = np.zeros(self.shape, dtype=np.complex128)
        for j in range(self.n_frames):
            acc += self.otfs_conj[j] * dft2(y[j])
        return idft2(acc)


def laplacian_symbol(shape: tuple[int, int]) -> np.ndarray:
    """Squared DFT eigenvalues of the periodic 5-point Laplacian stencil.

    The stencil puts 4 on the diagonal and -1 on the four periodic
    neighbors, so the eigenvalue at frequency (k, l) on an h-by-w grid is
    ``4 - 2cos(2 pi k / h) - 2cos(2 pi l / w)`` (nonnegative, zero at the
    constant mode).  Only ``L^T L`` enters the math, so the squared symbol
    is stored.
    """
    h, w = int(shape[0]), int(shape[1])
    if h < 2 or w < 2:
        raise ValueError(f"grid must be at least 2x2, got {shape}")
    rows = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(h) / h)
    cols = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(w) / w)
    symbol = rows[:, None] + cols[None, :]
    return symbol * symbol


def hessian_apply(
    op: BlurOperator,
    lap_sq: np.ndarray,
    weights: np.ndarray,
    lam: float,
    s: np.ndarray,
) -> np.ndarray:
    """Evaluate ``(A^T D A + lam * L^T L) s`` with the fused schedule.

    ``weights`` holds the nonnegative diagonal of D, one entry per
    residual-space pixel (shape ``(k, h, w)``).  Per frame the schedule
    spends one OTF multiply, one weight multiply, and one conjugate-OTF
    multiply; the regularization term adds one multiply on the shared input
    spectrum.  Single-frame total: 2 fft2, 2 ifft2, 4 multiplies, 1 add.
    """
    s = as_image(s, "s")
    weights = as_stack(weights, op.shape, "weights")
    if weights.shape[0] != op.n_frames:
        raise ValueError("one weight frame per operator frame required")
    if np.any(weights < 0):
        raise ValueError("Hessian weights must be nonnegative")
    if lam < 0:
        raise ValueError("lam must be nonnegative")

    s_hat = dft2(s)
    lam_sq = lam * lap_sq  # scalar fold, not a pixel-wise multiply
    acc = None
    for j in range(op.n_frames):
        t_j = idft2(op.otfs[j] * s_hat)
        tally_mults()
        u_j = weights[j] * t_j
        tally_mults()
        term = op.otfs_conj[j] * dft2(u_j)
        tally_mults()
        if acc is None:
            acc = term
        else:
            acc += term
            tally_adds()
    acc += lam_sq * s_hat
    tally_mults()
    tally_adds()
    return idft2(acc)
