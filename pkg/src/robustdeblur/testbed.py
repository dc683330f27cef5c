"""Synthetic deblurring problems: scenes, PSFs, noise, outliers, metrics.

Generation is deterministic given the seeds.  Noise streams are spawned
per frame from a single root seed, so editing one frame's clean data (the
added-object corruption) leaves every other frame's observation bitwise
unchanged.

Three corruption families mirror common failure modes:

* random corruptions: a fraction of entries gets a uniform positive bump
  (dead/hot pixels, cosmic ray hits),
* an added object: one frame sees an extra object blurred by a different
  kernel (something moved through the scene),
* a shifted scene: the truth is rolled toward the boundary so the
  periodic model's wrap-around becomes a structural error.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .gridfft import as_image, read_raw, write_raw
from .objective import LossFunction, Objective
from .operators import BlurOperator
from .solver import SolverOptions, projected_newton

__all__ = [
    "GaussianPsfParams",
    "CARBON_ASH_PSF_PARAMS",
    "ProblemInstance",
    "ScanPoint",
    "gaussian_psf",
    "psf_center",
    "synthetic_scene",
    "motion_psf",
    "small_object",
    "simulate_data",
    "inject_random_corruptions",
    "inject_added_object",
    "shift_scene",
    "make_instance",
    "default_start",
    "relative_error",
    "snr",
    "lambda_scan",
    "save_instance",
    "load_instance",
]


@dataclass(frozen=True)
class GaussianPsfParams:
    """Anisotropic Gaussian kernel parameters (pixels).

    The covariance is C = [[gamma1^2, tau^2], [tau^2, gamma2^2]]; tau
    tilts the kernel axes.  Positive definiteness requires
    gamma1^2 gamma2^2 > tau^4.
    """

    gamma1: float
    gamma2: float
    tau: float = 0.0

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("gamma1 and gamma2 must be positive")
        if self.det() <= 0:
            raise ValueError(
                f"covariance not positive definite: gamma1^2*gamma2^2 - tau^4 "
                f"= {self.det():g} <= 0"
            )

    def det(self) -> float:
        return (self.gamma1 * self.gamma2) ** 2 - self.tau**4


# Three-frame setup with one tilted and two axis-aligned kernels.
CARBON_ASH_PSF_PARAMS = (
    GaussianPsfParams(4.0, 2.0, 2.0),
    GaussianPsfParams(4.0, 2.0, 0.0),
    GaussianPsfParams(2.0, 4.0, 0.0),
)


def psf_center(shape) -> tuple[int, int]:
    return (shape[0] // 2, shape[1] // 2)


def gaussian_psf(params: GaussianPsfParams, shape) -> np.ndarray:
    """Evaluate the Gaussian kernel on the centered grid, unit-normalized.

    density(s, t) = exp(-[s t] C^{-1} [s t]^T / 2) / (2 pi sqrt(det C)).
    Normalizing the discrete samples to unit sum keeps blurred intensities
    on the scale of the scene.
    """
    h, w = int(shape[0]), int(shape[1])
    ci, cj = psf_center((h, w))
    s = (np.arange(h) - ci)[:, None]
    t = (np.arange(w) - cj)[None, :]
    det = params.det()
    # inverse of [[g1^2, tau^2], [tau^2, g2^2]]
    a = params.gamma2**2 / det
    b = -(params.tau**2) / det
    c = params.gamma1**2 / det
    quad = a * s * s + 2.0 * b * s * t + c * t * t
    psf = np.exp(-0.5 * quad) / (2.0 * np.pi * np.sqrt(det))
    return psf / psf.sum()


def synthetic_scene(kind: str, shape, max_intensity: float = 255.0,
                    seed: int = 0) -> np.ndarray:
    """Deterministic nonnegative test scene with peak ``max_intensity``.

    ``satellite``: a bright body with two solar panels and an antenna mast
    on a dark background (sharp edges, lots of black sky).
    ``ash``: overlapping soft blobs of varying intensity (extended smooth
    structure, little true black).
    """
    h, w = int(shape[0]), int(shape[1])
    u = (np.arange(h) - h / 2.0)[:, None] / (h / 2.0)
    v = (np.arange(w) - w / 2.0)[None, :] / (w / 2.0)
    if kind == "satellite":
        img = np.zeros((h, w))
        body = (np.abs(u) < 0.18) & (np.abs(v) < 0.12)
        img[body] = 1.0
        panels = (np.abs(u) < 0.10) & (np.abs(v) > 0.16) & (np.abs(v) < 0.55)
        img[panels] = 0.7
        mast = (np.abs(v) < 0.03) & (u > -0.52) & (u < -0.16)
        img[mast] = 0.9
        dish = (u + 0.56) ** 2 + v**2 < 0.06**2
        img[dish] = 1.0
    elif kind == "ash":
        rng = np.random.default_rng(seed)
        img = np.zeros((h, w))
        for _ in range(12):
            cu, cv = rng.uniform(-0.7, 0.7, 2)
            width = rng.uniform(0.08, 0.3)
            amp = rng.uniform(0.3, 1.0)
            img += amp * np.exp(-((u - cu) ** 2 + (v - cv) ** 2) / (2 * width**2))
        img = np.clip(img, 0.0, None)
    else:
        raise ValueError(f"unknown scene kind {kind!r}")
    peak = img.max()
    if peak <= 0:
        raise ValueError("scene degenerated to all zeros")
    return img * (max_intensity / peak)


def motion_psf(shape, length: int = 7, axis: int = 1) -> np.ndarray:
    """Unit-sum straight-line motion blur kernel on the full grid."""
    psf = np.zeros(shape)
    ci, cj = psf_center(shape)
    half = length // 2
    if axis == 1:
        psf[ci, cj - half : cj - half + length] = 1.0
    else:
        psf[ci - half : ci - half + length, cj] = 1.0
    return psf / psf.sum()


def small_object(shape, radius: float = 3.0, intensity: float = 255.0,
                 position=None) -> np.ndarray:
    """A compact disk to drop into a scene as an unmodeled extra."""
    h, w = shape
    if position is None:
        position = (h // 4, 3 * w // 4)
    yy = np.arange(h)[:, None] - position[0]
    xx = np.arange(w)[None, :] - position[1]
    return np.where(yy**2 + xx**2 <= radius**2, intensity, 0.0)


@dataclass
class ProblemInstance:
    """A generated inverse problem plus everything needed to regenerate it."""

    x_true: np.ndarray
    op: BlurOperator
    clean: np.ndarray
    observed: np.ndarray
    outlier_mask: np.ndarray
    sigma: float
    seeds: tuple  # (noise_seed, outlier_seed)
    psfs: list = field(default_factory=list)
    centers: list = field(default_factory=list)
    psf_params: tuple = ()
    kind: str = ""
    outlier_fraction: float = 0.0
    outlier_ceiling: float = 0.0
    notes: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.x_true.shape

    @property
    def n_frames(self) -> int:
        return self.observed.shape[0]

    def objective(self, loss: LossFunction | None = None,
                  lam: float = 0.0) -> Objective:
        return Objective(self.op, self.observed, self.sigma, loss, lam)


def simulate_data(x_true, op: BlurOperator, sigma: float, noise_seed: int):
    """Observed frames: Poisson(clean) + sigma * standard normal.

    Each frame draws from its own stream spawned off ``noise_seed``
    (Poisson first, then the Gaussian part), so frames are independent and
    individually reproducible.
    """
    x_true = as_image(x_true, "x_true")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    clean = op.apply(x_true)
    if clean.min() < -1e-9 * max(clean.max(), 1.0):
        raise ValueError("blurred scene has negative intensities")
    clean = np.clip(clean, 0.0, None)
    streams = np.random.SeedSequence(noise_seed).spawn(op.n_frames)
    observed = np.empty_like(clean)
    for j in range(op.n_frames):
        rng = np.random.default_rng(streams[j])
        counts = rng.poisson(clean[j]).astype(np.float64)
        observed[j] = counts + sigma * rng.standard_normal(clean[j].shape)
    return observed


def inject_random_corruptions(observed, fraction: float, ceiling: float,
                              outlier_seed: int):
    """Add uniform(0, ceiling) bumps to floor(fraction * m) distinct entries."""
    observed = np.array(observed, dtype=np.float64, copy=True)
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if ceiling < 0:
        raise ValueError("ceiling must be nonnegative")
    mask = np.zeros(observed.shape, dtype=bool)
    count = int(np.floor(fraction * observed.size))
    if count:
        rng = np.random.default_rng(outlier_seed)
        flat = rng.choice(observed.size, size=count, replace=False)
        observed.ravel()[flat] += rng.uniform(0.0, ceiling, size=count)
        mask.ravel()[flat] = True
    return observed, mask


def make_instance(
    kind: str = "satellite",
    shape=(64, 64),
    psf_params=None,
    sigma: float = 5.0,
    noise_seed: int = 1,
    outlier_fraction: float = 0.0,
    outlier_ceiling: float | None = None,
    outlier_seed: int = 2,
    max_intensity: float = 255.0,
    scene_seed: int = 0,
) -> ProblemInstance:
    """Generate a full synthetic problem.

    ``psf_params`` is a sequence of :class:`GaussianPsfParams`, one per
    frame; the default is a single tilted kernel for ``satellite`` and the
    three-frame set for ``ash``.  ``outlier_ceiling`` defaults to the peak
    of the clean data, so corruption bumps are on the data's own scale.
    """
    x_true = synthetic_scene(kind, shape, max_intensity, scene_seed)
    if psf_params is None:
        psf_params = (
            CARBON_ASH_PSF_PARAMS
            if kind == "ash"
            else (GaussianPsfParams(4.0, 2.0, 2.0),)
        )
    psf_params = tuple(psf_params)
    center = psf_center(shape)
    psfs = [gaussian_psf(p, shape) for p in psf_params]
    centers = [center] * len(psfs)
    op = BlurOperator.from_psfs(psfs, centers)
    clean = op.apply(x_true)
    observed = simulate_data(x_true, op, sigma, noise_seed)
    if outlier_ceiling is None:
        outlier_ceiling = float(clean.max())
    observed, mask = inject_random_corruptions(
        observed, outlier_fraction, outlier_ceiling, outlier_seed
    )
    return ProblemInstance(
        x_true=x_true,
        op=op,
        clean=clean,
        observed=observed,
        outlier_mask=mask,
        sigma=float(sigma),
        seeds=(int(noise_seed), int(outlier_seed)),
        psfs=psfs,
        centers=centers,
        psf_params=psf_params,
        kind=kind,
        outlier_fraction=float(outlier_fraction),
        outlier_ceiling=float(outlier_ceiling),
    )


def inject_added_object(instance: ProblemInstance, obj_img, blur_psf,
                        frame_index: int) -> ProblemInstance:
    """Add an extra object, blurred by its own kernel, to one frame.

    The object enters the chosen frame's clean data before noise; the
    instance is then re-simulated with the original seeds, so all other
    frames stay bitwise identical.  The result deliberately violates
    ``clean = A x_true`` on that frame; no outlier mask is set because the
    corruption is structural rather than pointwise.
    """
    if not 0 <= frame_index < instance.n_frames:
        raise IndexError(f"frame {frame_index} out of range")
    obj_img = as_image(obj_img, "object")
    blur_psf = as_image(blur_psf, "blur_psf")
    if obj_img.shape != instance.shape or blur_psf.shape != instance.shape:
        raise ValueError("object and kernel must match the instance grid")
    extra_op = BlurOperator.from_psfs([blur_psf], [psf_center(instance.shape)])
    extra = extra_op.apply(obj_img)[0]

    clean = instance.clean.copy()
    clean[frame_index] += extra
    noise_seed = instance.seeds[0]
    streams = np.random.SeedSequence(noise_seed).spawn(instance.n_frames)
    observed = instance.observed.copy()
    rng = np.random.default_rng(streams[frame_index])
    counts = rng.poisson(np.clip(clean[frame_index], 0.0, None))
    observed[frame_index] = counts + instance.sigma * rng.standard_normal(
        instance.shape
    )
    return replace(
        instance,
        clean=clean,
        observed=observed,
        notes=f"added object in frame {frame_index}",
    )


def shift_scene(instance: ProblemInstance, di: int, dj: int) -> ProblemInstance:
    """Roll the truth by (di, dj) pixels and regenerate the observations."""
    x_true = np.roll(instance.x_true, (int(di), int(dj)), axis=(0, 1))
    clean = instance.op.apply(x_true)
    observed = simulate_data(x_true, instance.op, instance.sigma,
                             instance.seeds[0])
    observed, mask = inject_random_corruptions(
        observed,
        instance.outlier_fraction,
        instance.outlier_ceiling,
        instance.seeds[1],
    )
    return replace(
        instance, x_true=x_true, clean=clean, observed=observed,
        outlier_mask=mask,
    )


def default_start(observed) -> np.ndarray:
    """Feasible starting guess: the frame-averaged data, clipped at zero."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.ndim == 2:
        observed = observed[None]
    return np.maximum(observed.mean(axis=0), 0.0)


def relative_error(x, x_true) -> float:
    x = np.asarray(x, dtype=np.float64)
    x_true = np.asarray(x_true, dtype=np.float64)
    if x.shape != x_true.shape:
        raise ValueError("shapes differ")
    denom = np.linalg.norm(x_true)
    if denom == 0:
        raise ValueError("x_true is identically zero")
    return float(np.linalg.norm(x - x_true) / denom)


def snr(clean, sigma: float) -> float:
    """||Ax|| / sqrt(sum([Ax]_i + sigma^2)): signal against total noise power."""
    clean = np.asarray(clean, dtype=np.float64)
    if clean.min() < -1e-9 * max(clean.max(), 1.0):
        raise ValueError("clean data must be nonnegative")
    clean = np.clip(clean, 0.0, None)  # forgive transform rounding
    return float(
        np.linalg.norm(clean) / np.sqrt(np.sum(clean + sigma**2))
    )


@dataclass(frozen=True)
class ScanPoint:
    lam: float
    relative_error: float
    iterations: int
    termination: str


def lambda_scan(
    instance: ProblemInstance,
    loss: LossFunction,
    lambda_grid,
    opts: SolverOptions | None = None,
    x0=None,
) -> list[ScanPoint]:
    """Solve along an ascending lambda grid, warm-starting each point.

    Returns the semiconvergence curve (lambda, relative error) with the
    iteration counts.  Warm starts only accelerate: each grid point still
    solves its own problem to the configured tolerance.
    """
    grid = [float(l) for l in lambda_grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("lambda grid must be ascending")
    x = default_start(instance.observed) if x0 is None else np.array(x0)
    curve = []
    for lam in grid:
        obj = instance.objective(loss, lam)
        x, report = projected_newton(obj, x, opts)
        curve.append(
            ScanPoint(
                lam=lam,
                relative_error=relative_error(x, instance.x_true),
                iterations=report.iterations,
                termination=report.termination,
            )
        )
    return curve


# -- serialization ------------------------------------------------------


def save_instance(directory, instance: ProblemInstance) -> None:
    """Write raw arrays plus a plain-text manifest into a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_raw(directory / "x_true.raw", instance.x_true)
    for j in range(instance.n_frames):
        write_raw(directory / f"psf_{j}.raw", instance.psfs[j])
        write_raw(directory / f"clean_{j}.raw", instance.clean[j])
        write_raw(directory / f"observed_{j}.raw", instance.observed[j])
        write_raw(
            directory / f"outlier_mask_{j}.raw",
            instance.outlier_mask[j].astype(np.float64),
        )
    lines = [
        "format=instance-dir v1",
        f"kind={instance.kind}",
        f"height={instance.shape[0]}",
        f"width={instance.shape[1]}",
        f"frames={instance.n_frames}",
        f"sigma={instance.sigma!r}",
        f"noise_seed={instance.seeds[0]}",
        f"outlier_seed={instance.seeds[1]}",
        f"outlier_fraction={instance.outlier_fraction!r}",
        f"outlier_ceiling={instance.outlier_ceiling!r}",
    ]
    for j, p in enumerate(instance.psf_params):
        lines.append(f"psf{j}_params={p.gamma1!r},{p.gamma2!r},{p.tau!r}")
    for j, c in enumerate(instance.centers):
        lines.append(f"psf{j}_center={c[0]},{c[1]}")
    if instance.notes:
        lines.append(f"notes={instance.notes}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_instance(directory) -> ProblemInstance:
    directory = Path(directory)
    manifest = {}
    for raw_line in (directory / "manifest.txt").read_text().splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        manifest[key.strip()] = value.strip()
    if manifest.get("format") != "instance-dir v1":
        raise ValueError(f"unrecognized manifest format {manifest.get('format')!r}")
    frames = int(manifest["frames"])
    x_true = read_raw(directory / "x_true.raw")
    psfs, centers, clean, observed, masks = [], [], [], [], []
    for j in range(frames):
        psfs.append(read_raw(directory / f"psf_{j}.raw"))
        ci, cj = manifest[f"psf{j}_center"].split(",")
        centers.append((int(ci), int(cj)))
        clean.append(read_raw(directory / f"clean_{j}.raw"))
        observed.append(read_raw(directory / f"observed_{j}.raw"))
        masks.append(read_raw(directory / f"outlier_mask_{j}.raw") != 0.0)
    psf_params = []
    for j in range(frames):
        key = f"psf{j}_params"
        if key in manifest:
            g1, g2, tau = (float(v) for v in manifest[key].split(","))
            psf_params.append(GaussianPsfParams(g1, g2, tau))
    return ProblemInstance(
        x_true=x_true,
        op=BlurOperator.from_psfs(psfs, centers),
        clean=np.stack(clean),
        observed=np.stack(observed),
        outlier_mask=np.stack(masks),
        sigma=float(manifest["sigma"]),
        seeds=(int(manifest["noise_seed"]), int(manifest["outlier_seed"])),
        psfs=psfs,
        centers=centers,
        psf_params=tuple(psf_params),
        kind=manifest.get("kind", ""),
        outlier_fraction=float(manifest.get("outlier_fraction", 0.0)),
        outlier_ceiling=float(manifest.get("outlier_ceiling", 0.0)),
        notes=manifest.get("notes", ""),
    )
