"""Slow reference implementations used to cross-check the FFT code paths.

Everything here is written the obvious O(N^2)+ way, on dense matrices,
without touching numpy.fft, so agreement with the package is meaningful.
"""

import numpy as np


def naive_dft2(img: np.ndarray) -> np.ndarray:
    """Direct double-sum unnormalized 2D DFT."""
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for k in range(h):
        for l in range(w):
            acc = 0.0 + 0.0j
            for m in range(h):
                for n in range(w):
                    acc += img[m, n] * np.exp(
                        -2j * np.pi * (k * m / h + l * n / w)
                    )
            out[k, l] = acc
    return out


def dense_blur_matrix(psf: np.ndarray, center) -> np.ndarray:
    """Assemble the (h*w, h*w) periodic convolution matrix entry by entry.

    Row p (target pixel i) and column q (source pixel m) hold the kernel
    value at offset i - m, with the kernel being the PSF rolled so that
    ``center`` sits at the origin.  Row-major pixel flattening throughout.
    """
    h, w = psf.shape
    ci, cj = center
    A = np.zeros((h * w, h * w))
    for i0 in range(h):
        for i1 in range(w):
            for m0 in range(h):
                for m1 in range(w):
                    A[i0 * w + i1, m0 * w + m1] = psf[
                        (i0 - m0 + ci) % h, (i1 - m1 + cj) % w
                    ]
    return A


def dense_laplacian(shape) -> np.ndarray:
    """(h*w, h*w) matrix of the periodic 5-point Laplacian stencil."""
    h, w = shape
    L = np.zeros((h * w, h * w))
    for i in range(h):
        for j in range(w):
            p = i * w + j
            L[p, p] = 4.0
            L[p, ((i - 1) % h) * w + j] -= 1.0
            L[p, ((i + 1) % h) * w + j] -= 1.0
            L[p, i * w + (j - 1) % w] -= 1.0
            L[p, i * w + (j + 1) % w] -= 1.0
    return L


def dense_hessian(psfs, centers, weights, lam, shape) -> np.ndarray:
    """sum_j A_j^T diag(D_j) A_j + lam * L^T L as a dense matrix."""
    h, w = shape
    H = np.zeros((h * w, h * w))
    for psf, center, d in zip(psfs, centers, weights):
        A = dense_blur_matrix(psf, center)
        H += A.T @ np.diag(np.ravel(d)) @ A
    L = dense_laplacian(shape)
    return H + lam * (L.T @ L)
