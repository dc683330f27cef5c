"""Column-scaling preconditioner for the weighted normal equations.

The inner Newton systems have the form ``(A^T D A + lam L^T L) s`` with a
diagonal D that changes every outer iteration.  Refactorizing is out of
the question, so instead approximate ``A^T D A ~ Dhat (A^T A) Dhat`` with
a diagonal Dhat chosen so the two sides have exactly equal diagonals:

    Dhat_ii = sqrt( diag(A^T D A)_i / diag(A^T A)_i ).

Both diagonals are cheap for periodic convolutions: diag(A^T D A) is one
adjoint apply of the operator built from the squared PSF, and diag(A^T A)
is the constant sum(psf^2).  The resulting

    M = Dhat (A^T A + lam_hat L^T L) Dhat,   lam_hat = lam / mean(Dhat)^2

is solved in closed form through the DFT at a fixed cost of one forward
transform, one inverse transform, and three pixel-wise multiplies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridfft import dft2, idft2, tally_mults
from .operators import BlurOperator, as_stack

__all__ = ["Preconditioner", "build_dhat", "precond_build"]

# Relative floor keeping Dhat positive when saturation zeroes whole regions.
DHAT_FLOOR = 1e-6


@dataclass(frozen=True)
class Preconditioner:
    """Frozen factorization of M = Dhat (A^T A + lam_hat L^T L) Dhat."""

    dhat: np.ndarray
    inv_dhat: np.ndarray
    inv_symbol: np.ndarray
    lambda_hat: float

    def solve(self, r: np.ndarray) -> np.ndarray:
        """Apply M^{-1} r: scale, deconvolve spectrally, scale again."""
        u = self.inv_dhat * r
        tally_mults()
        v = idft2(self.inv_symbol * dft2(u))
        tally_mults()
        out = self.inv_dhat * v
        tally_mults()
        return out


def build_dhat(op: BlurOperator, weights) -> np.ndarray:
    """Diagonal scaling with diag(Dhat A^T A Dhat) = diag(A^T D A) exactly.

    ``weights`` is the Hessian diagonal D, one frame per operator frame.
    The numerator diag(A^T D A)_p = sum_i A_ip^2 D_i is the adjoint of the
    squared-kernel operator applied to D; the denominator diag(A^T A) is
    the constant sum_j sum(psf_j^2), read off the squared-kernel OTF at
    frequency zero.
    """
    if op.sq_otfs is None:
        raise ValueError("operator lacks squared-kernel OTFs; build it from PSFs")
    weights = as_stack(weights, op.shape, "weights")
    if weights.shape[0] != op.n_frames:
        raise ValueError("one weight frame per operator frame required")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if not np.any(weights > 0):
        raise ValueError("all weights are zero (every residual saturated)")

    acc = np.zeros(op.shape, dtype=np.complex128)
    for j in range(op.n_frames):
        acc += np.conj(op.sq_otfs[j]) * dft2(weights[j])
    numerator = np.maximum(idft2(acc), 0.0)  # clip rounding noise before sqrt
    denominator = float(sum(op.sq_otfs[j][0, 0].real for j in range(op.n_frames)))
    dhat = np.sqrt(numerator / denominator)
    return np.maximum(dhat, DHAT_FLOOR * dhat.max())


def precond_build(
    op: BlurOperator, lap_sq: np.ndarray, weights, lam: float
) -> Preconditioner:
    """Assemble the preconditioner for the current Hessian weights."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    dhat = build_dhat(op, weights)
    lambda_hat = float(lam) / float(np.mean(dhat)) ** 2
    symbol = np.sum(np.abs(op.otfs) ** 2, axis=0) + lambda_hat * lap_sq
    if symbol.min() <= 0:
        raise ValueError("singular preconditioner symbol (blur kernel has "
                         "spectral zeros and lam is too small)")
    return Preconditioner(
        dhat=dhat,
        inv_dhat=1.0 / dhat,
        inv_symbol=1.0 / symbol,
        lambda_hat=lambda_hat,
    )
