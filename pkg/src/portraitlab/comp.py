"""Compositional features: lighting patterns, sharpness, camera shake,
color, spatial arrangement and texture.

Extractors are pure functions; the lighting model is immutable after
training and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.morphology import local_minima
from skimage.segmentation import watershed
from skimage.measure import label as sk_label

from . import learn
from .imgcore import (
    Plane,
    RasterImage,
    compression_ratio,
    fft_amplitude,
    gaussian_blur,
    histogram256,
    luminance,
    resize_bilinear_array,
    rgb_to_hsv,
    shannon_entropy,
    sobel_gradients,
    sobel_magnitude,
)

LIGHTING_CLUSTERS = 5
ILLUMINANCE_GRID = 25

# HSV prototypes for the 9 color names (hue, saturation, value)
COLOR_NAME_PROTOTYPES = {
    "black": (0.0, 0.0, 0.05),
    "white": (0.0, 0.0, 0.95),
    "gray": (0.0, 0.0, 0.5),
    "flesh": (0.083, 0.4, 0.85),
    "red": (0.0, 0.9, 0.8),
    "green": (0.333, 0.9, 0.7),
    "blue": (0.667, 0.9, 0.7),
    "magenta": (0.833, 0.9, 0.8),
    "purple": (0.778, 0.8, 0.5),
}
COLOR_NAME_ORDER = list(COLOR_NAME_PROTOTYPES)

# pleasure / arousal / dominance as linear combinations of mean V and mean S
PAD_COEFFICIENTS = {
    "pleasure": (0.69, 0.22),
    "arousal": (-0.31, 0.60),
    "dominance": (0.76, 0.32),
}

# camera-shake block anisotropy thresholds
SHAKE_BLOCK = 32
SHAKE_ANISOTROPY = 2.5
SHAKE_ENERGY_FRACTION = 0.1

# spatial-arrangement constants
EDGE_HIST_BINS = 16
HOG_CELL = 8
HOG_BINS = 9
SALIENCY_SIZE = 64
SALIENCY_SIGMA = 2.5

GLCM_LEVELS = 32
WATERSHED_SIGMA = 1.0
WATERSHED_MIN_DEPTH = 0.02


@dataclass(frozen=True)
class LightingModel:
    """k=5 centroids over 625-dim illuminance vectors (25x25 window grid)."""

    centroids: np.ndarray

    def __post_init__(self):
        c = self.centroids
        if c.shape != (LIGHTING_CLUSTERS, ILLUMINANCE_GRID * ILLUMINANCE_GRID):
            raise ValueError("centroids must be 5 x 625")
        if not np.all(np.isfinite(c)):
            raise ValueError("centroids must be finite")

    @property
    def k(self) -> int:
        return LIGHTING_CLUSTERS


# ---------------------------------------------------------------------------
# Lighting
# ---------------------------------------------------------------------------

def estimate_illuminance(img: RasterImage) -> Plane:
    """Smooth lighting field: heavy Gaussian blur of luminance, floored at 1e-4."""
    sigma = min(img.width, img.height) / 8.0
    blurred = gaussian_blur(luminance(img), sigma)
    return Plane(values=np.maximum(blurred.values, 1e-4))


def illuminance_vector(img: RasterImage) -> np.ndarray:
    """Mean illuminance over a 25x25 grid of near-equal cells, row-major."""
    if img.width < ILLUMINANCE_GRID or img.height < ILLUMINANCE_GRID:
        raise ValueError("image smaller than the 25x25 window grid")
    lum = estimate_illuminance(img).values
    h, w = lum.shape
    g = ILLUMINANCE_GRID
    out = np.empty(g * g)
    ys = [i * h // g for i in range(g + 1)]
    xs = [j * w // g for j in range(g + 1)]
    for i in range(g):
        for j in range(g):
            out[i * g + j] = lum[ys[i]:ys[i + 1], xs[j]:xs[j + 1]].mean()
    return out


def train_lighting_model(corpus, seed: int) -> LightingModel:
    """k-means (k=5, seeded k-means++) over the corpus illuminance vectors."""
    if len(corpus) < LIGHTING_CLUSTERS:
        raise ValueError("corpus must contain at least 5 images")
    vectors = np.array([illuminance_vector(img) for img in corpus])
    centroids, _ = learn.kmeans(vectors, LIGHTING_CLUSTERS, seed=seed)
    return LightingModel(centroids=centroids)


def lighting_pattern(img: RasterImage, model: LightingModel) -> tuple[int, np.ndarray]:
    """Closest centroid by Euclidean distance; ties go to the lowest index."""
    v = illuminance_vector(img)
    dists = ((model.centroids - v) ** 2).sum(axis=1)
    cluster = int(dists.argmin())
    onehot = np.zeros(LIGHTING_CLUSTERS)
    onehot[cluster] = 1.0
    return cluster, onehot


# ---------------------------------------------------------------------------
# Sharpness and camera shake
# ---------------------------------------------------------------------------

def overall_sharpness(img: RasterImage) -> float:
    """Tenengrad focus measure: mean Gx^2 + Gy^2 on luminance."""
    gx, gy = sobel_gradients(luminance(img))
    return float((gx * gx + gy * gy).mean())


def camera_shake(img: RasterImage) -> float:
    """Fraction of pixels in spectrally anisotropic, high-gradient 32x32 blocks.

    A block counts as "moving" when its windowed FFT amplitude concentrates in
    one of 8 orientation sectors (max/mean energy > 2.5, DC excluded) and its
    mean gradient energy exceeds 10% of the global mean.
    """
    lum = luminance(img)
    vals = lum.values
    h, w = vals.shape
    gx, gy = sobel_gradients(lum)
    grad_energy = gx * gx + gy * gy
    global_grad = grad_energy.mean()

    b = SHAKE_BLOCK
    window = np.outer(np.hanning(b), np.hanning(b))
    fy = np.fft.fftfreq(b)[:, None]
    fx = np.fft.fftfreq(b)[None, :]
    angle = np.arctan2(fy, fx) % np.pi
    sector = np.minimum((angle / np.pi * 8).astype(int), 7)
    dc = np.zeros((b, b), dtype=bool)
    dc[0, 0] = True

    moving_pixels = 0
    for by in range(0, h - b + 1, b):
        for bx in range(0, w - b + 1, b):
            block = vals[by:by + b, bx:bx + b]
            if grad_energy[by:by + b, bx:bx + b].mean() <= SHAKE_ENERGY_FRACTION * global_grad:
                continue
            amp2 = np.abs(np.fft.fft2((block - block.mean()) * window)) ** 2
            energies = np.zeros(8)
            for s in range(8):
                m = (sector == s) & ~dc
                energies[s] = amp2[m].sum()
            mean_e = energies.mean()
            if mean_e > 0 and energies.max() / mean_e > SHAKE_ANISOTROPY:
                moving_pixels += b * b
    return moving_pixels / (h * w)


# ---------------------------------------------------------------------------
# Color
# ---------------------------------------------------------------------------

def circular_mean_hue(h: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Mean hue on the unit circle, mapped back to [0,1); 0 when degenerate."""
    ang = h * 2.0 * np.pi
    if weights is None:
        c, s = np.cos(ang).mean(), np.sin(ang).mean()
    else:
        wsum = weights.sum()
        if wsum <= 0:
            return 0.0
        c = (np.cos(ang) * weights).sum() / wsum
        s = (np.sin(ang) * weights).sum() / wsum
    if c * c + s * s < 1e-12:
        return 0.0
    out = float((np.arctan2(s, c) / (2.0 * np.pi)) % 1.0)
    # a tiny negative angle can round up to exactly 1.0 under the modulo
    return 0.0 if out >= 1.0 else out


def color_block(img: RasterImage) -> dict:
    """Color-name fractions, HSV means, PAD scores, Itten histograms/contrasts
    and the two contrast scalars."""
    hp, sp, vp = rgb_to_hsv(img)
    h, s, v = hp.values, sp.values, vp.values

    # color names: nearest prototype in (circular hue, sat, value)
    protos = np.array([COLOR_NAME_PROTOTYPES[nm] for nm in COLOR_NAME_ORDER])
    dh = np.abs(h[..., None] - protos[:, 0])
    dh = np.minimum(dh, 1.0 - dh)
    d2 = dh ** 2 + (s[..., None] - protos[:, 1]) ** 2 + (v[..., None] - protos[:, 2]) ** 2
    nearest = d2.argmin(axis=2)
    counts = np.bincount(nearest.ravel(), minlength=len(COLOR_NAME_ORDER))
    color_names = counts / counts.sum()

    # whole-image and inner-quadrant HSV means
    hh, ww = h.shape
    y0, y1 = hh // 3, max(hh // 3 + 1, 2 * hh // 3)
    x0, x1 = ww // 3, max(ww // 3 + 1, 2 * ww // 3)
    hsv_avg = np.array([
        circular_mean_hue(h), s.mean(), v.mean(),
        circular_mean_hue(h[y0:y1, x0:x1]),
        s[y0:y1, x0:x1].mean(), v[y0:y1, x0:x1].mean(),
    ])

    v_mean, s_mean = v.mean(), s.mean()
    pad = np.array([cv * v_mean + cs * s_mean
                    for cv, cs in PAD_COEFFICIENTS.values()])

    hue_hist = np.bincount(np.minimum((h * 12).astype(int), 11).ravel(), minlength=12) / h.size
    sat_hist = np.bincount(np.minimum((s * 3).astype(int), 2).ravel(), minlength=3) / s.size
    val_hist = np.bincount(np.minimum((v * 5).astype(int), 4).ravel(), minlength=5) / v.size
    itten_hist = np.concatenate([hue_hist, sat_hist, val_hist])
    itten_contrasts = np.array([hue_hist.std(), sat_hist.std(), val_hist.std()])

    yv = luminance(img).values
    ymax, ymin, ymean = yv.max(), yv.min(), yv.mean()
    michelson = 0.0 if ymax + ymin == 0 else (ymax - ymin) / (ymax + ymin)
    simple = 0.0 if ymean == 0 else (ymax - ymin) / ymean

    return {
        "color_names": color_names,
        "hsv_avg": hsv_avg,
        "pad": pad,
        "itten_hist": itten_hist,
        "itten_contrasts": itten_contrasts,
        "contrast_michelson": float(michelson),
        "contrast_simple": float(simple),
    }


# ---------------------------------------------------------------------------
# Spatial arrangement
# ---------------------------------------------------------------------------

def _orientation_histogram(plane_vals: np.ndarray, bins: int) -> np.ndarray:
    """Magnitude-weighted gradient-orientation histogram, normalized to sum 1."""
    gx, gy = sobel_gradients(Plane(values=plane_vals))
    mag = np.sqrt(gx * gx + gy * gy)
    ang = np.arctan2(gy, gx) % (2.0 * np.pi)
    idx = np.minimum((ang / (2.0 * np.pi) * bins).astype(int), bins - 1)
    hist = np.bincount(idx.ravel(), weights=mag.ravel(), minlength=bins)
    total = hist.sum()
    return hist / total if total > 0 else hist


def symmetry_edge(img: RasterImage) -> float:
    """L1 distance between edge-orientation histograms of the left half and
    the mirrored right half; 0 for mirror-symmetric images."""
    vals = luminance(img).values
    hw = vals.shape[1] // 2
    if hw == 0:
        return 0.0
    left = vals[:, :hw]
    right_flipped = vals[:, vals.shape[1] - hw:][:, ::-1]
    h1 = _orientation_histogram(left, EDGE_HIST_BINS)
    h2 = _orientation_histogram(right_flipped, EDGE_HIST_BINS)
    return float(np.abs(h1 - h2).sum())


def hog_descriptor(plane_vals: np.ndarray, cell: int = HOG_CELL,
                   bins: int = HOG_BINS) -> np.ndarray:
    """HOG with square cells, unsigned orientations and 2x2 L2 block norm."""
    gx, gy = sobel_gradients(Plane(values=plane_vals))
    mag = np.sqrt(gx * gx + gy * gy)
    ang = np.arctan2(gy, gx) % np.pi
    idx = np.minimum((ang / np.pi * bins).astype(int), bins - 1)
    h, w = plane_vals.shape
    cy, cx = h // cell, w // cell
    if cy == 0 or cx == 0:
        return np.zeros(0)
    cells = np.zeros((cy, cx, bins))
    for i in range(cy):
        for j in range(cx):
            sl = (slice(i * cell, (i + 1) * cell), slice(j * cell, (j + 1) * cell))
            cells[i, j] = np.bincount(idx[sl].ravel(), weights=mag[sl].ravel(),
                                      minlength=bins)
    if cy < 2 or cx < 2:
        norm = np.linalg.norm(cells.ravel())
        return cells.ravel() / norm if norm > 0 else cells.ravel()
    blocks = []
    for i in range(cy - 1):
        for j in range(cx - 1):
            vec = cells[i:i + 2, j:j + 2].ravel()
            norm = np.sqrt((vec * vec).sum() + 1e-12)
            blocks.append(vec / norm)
    return np.concatenate(blocks)


def symmetry_hog(img: RasterImage) -> float:
    """L2 distance between HOG descriptors of the left half and the flipped
    right half."""
    vals = luminance(img).values
    hw = vals.shape[1] // 2
    if hw == 0:
        return 0.0
    left = vals[:, :hw]
    right_flipped = vals[:, vals.shape[1] - hw:][:, ::-1]
    d1 = hog_descriptor(left)
    d2 = hog_descriptor(right_flipped)
    return float(np.linalg.norm(d1 - d2))


def _circle_offsets(radius: int) -> tuple[np.ndarray, np.ndarray]:
    n = max(int(2 * np.pi * radius), 8)
    theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    dy = np.round(radius * np.sin(theta)).astype(int)
    dx = np.round(radius * np.cos(theta)).astype(int)
    uniq = np.unique(np.stack([dy, dx], axis=1), axis=0)
    return uniq[:, 0], uniq[:, 1]


def count_circles(img: RasterImage) -> int:
    """Hough circle count on the thresholded Sobel edge map.

    Radii run 8..min(w,h)/4 in 4-px steps; accumulator peaks above half the
    perimeter vote survive, with non-maximum suppression over 10-px centers
    and 4-px radii.
    """
    lum = luminance(img)
    mag = sobel_magnitude(lum).values
    thresh = 2.0 * mag.mean()
    ey, ex = np.nonzero(mag > thresh)
    h, w = mag.shape
    r_max = min(w, h) // 4
    radii = list(range(8, r_max + 1, 4))
    if not radii or ey.size == 0:
        return 0

    candidates = []
    for r in radii:
        acc = np.zeros((h, w))
        dy, dx = _circle_offsets(r)
        cy = ey[:, None] + dy[None, :]
        cx = ex[:, None] + dx[None, :]
        ok = (cy >= 0) & (cy < h) & (cx >= 0) & (cx < w)
        np.add.at(acc, (cy[ok], cx[ok]), 1.0)
        vote_needed = 0.5 * len(dy)
        peak = ndimage.maximum_filter(acc, size=5)
        py, px = np.nonzero((acc >= vote_needed) & (acc == peak))
        for yy, xx in zip(py, px):
            candidates.append((acc[yy, xx], yy, xx, r))

    # non-maximum suppression: 10-px center distance, 4-px radius distance
    candidates.sort(key=lambda t: (-t[0], t[1], t[2], t[3]))
    kept = []
    for score, yy, xx, r in candidates:
        dup = any(abs(yy - ky) <= 10 and abs(xx - kx) <= 10 and abs(r - kr) <= 4
                  for _, ky, kx, kr in kept)
        if not dup:
            kept.append((score, yy, xx, r))
    return len(kept)


def saliency_map(img: RasterImage) -> np.ndarray:
    """Spectral-residual saliency at 64x64: log-amplitude minus its 3x3 box
    average, phase preserved, inverse transform squared, Gaussian smoothed."""
    lum = luminance(img)
    a = resize_bilinear_array(lum.values, SALIENCY_SIZE, SALIENCY_SIZE)
    f = np.fft.fft2(a)
    amp = np.abs(f)
    phase = np.angle(f)
    log_amp = np.log(amp + 1e-8)
    box = ndimage.uniform_filter(log_amp, size=3, mode="wrap")
    residual = log_amp - box
    sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * phase))) ** 2
    return gaussian_blur(Plane(values=sal), SALIENCY_SIGMA).values


def rule_of_thirds(img: RasterImage) -> np.ndarray:
    """Saliency mass per cell of the 3x3 grid, normalized to sum 1."""
    sal = saliency_map(img)
    n = sal.shape[0]
    bounds = [i * n // 3 for i in range(4)]
    cells = np.empty(9)
    for i in range(3):
        for j in range(3):
            cells[i * 3 + j] = sal[bounds[i]:bounds[i + 1], bounds[j]:bounds[j + 1]].sum()
    total = cells.sum()
    return cells / total if total > 0 else np.full(9, 1.0 / 9.0)


def spatial_block(img: RasterImage) -> dict:
    return {
        "symmetry_edge": symmetry_edge(img),
        "symmetry_hog": symmetry_hog(img),
        "num_circles": float(count_circles(img)),
        "rule_of_thirds": rule_of_thirds(img),
    }


# ---------------------------------------------------------------------------
# Texture
# ---------------------------------------------------------------------------

def glcm_matrix(plane_vals: np.ndarray, levels: int = GLCM_LEVELS) -> np.ndarray:
    """Symmetric normalized co-occurrence matrix for offset (1,0) (right
    neighbor), quantized to `levels` gray levels."""
    q = np.minimum((np.clip(plane_vals, 0.0, 1.0) * levels).astype(int), levels - 1)
    left = q[:, :-1].ravel()
    right = q[:, 1:].ravel()
    glcm = np.zeros((levels, levels))
    np.add.at(glcm, (left, right), 1.0)
    glcm = glcm + glcm.T
    total = glcm.sum()
    return glcm / total if total > 0 else glcm


def glcm_properties(plane_vals: np.ndarray) -> np.ndarray:
    """Entropy, energy, homogeneity and contrast of the GLCM."""
    p = glcm_matrix(plane_vals)
    nz = p[p > 0]
    entropy = float(-(nz * np.log2(nz)).sum())
    energy = float((p * p).sum())
    i, j = np.indices(p.shape)
    homogeneity = float((p / (1.0 + np.abs(i - j))).sum())
    contrast = float((p * (i - j) ** 2).sum())
    return np.array([entropy, energy, homogeneity, contrast])


def image_order(lum: Plane) -> np.ndarray:
    """Order scores: 1 - compression ratio and 1 - entropy/8."""
    comp = 1.0 - compression_ratio(lum)
    ent = 1.0 - shannon_entropy(histogram256(lum)) / 8.0
    return np.array([comp, ent])


def level_of_detail(lum: Plane) -> int:
    """Region count of gradient watershed after Gaussian pre-smoothing,
    seeding only minima deeper than 0.02."""
    smoothed = gaussian_blur(lum, WATERSHED_SIGMA).values
    if smoothed.max() - smoothed.min() < WATERSHED_MIN_DEPTH:
        return 1
    # h-minima: minima of the morphological reconstruction stay, shallow ones merge
    from skimage.morphology import reconstruction

    filled = reconstruction(smoothed + WATERSHED_MIN_DEPTH, smoothed,
                            method="erosion")
    minima = local_minima(filled, connectivity=2)
    markers = sk_label(minima, connectivity=2)
    n_regions = int(markers.max())
    if n_regions <= 1:
        return max(n_regions, 1)
    gradient = sobel_magnitude(Plane(values=smoothed)).values
    segments = watershed(gradient, markers=markers)
    return int(len(np.unique(segments)))


def texture_block(img: RasterImage) -> dict:
    lum = luminance(img)
    return {
        "glcm": glcm_properties(lum.values),
        "image_order": image_order(lum),
        "level_of_detail": float(level_of_detail(lum)),
    }


# ---------------------------------------------------------------------------
# Block assembly and lighting model serialization
# ---------------------------------------------------------------------------

def compositional_block(img: RasterImage, model: LightingModel | None) -> np.ndarray:
    """Full 69-dim compositional vector in registry order.

    Without a lighting model the one-hot lighting slot is all zeros.
    """
    if model is not None:
        _, onehot = lighting_pattern(img, model)
    else:
        onehot = np.zeros(LIGHTING_CLUSTERS)
    color = color_block(img)
    spatial = spatial_block(img)
    texture = texture_block(img)
    return np.concatenate([
        onehot,
        [overall_sharpness(img)],
        [camera_shake(img)],
        color["color_names"],
        color["hsv_avg"],
        color["pad"],
        color["itten_hist"],
        color["itten_contrasts"],
        [color["contrast_michelson"]],
        [color["contrast_simple"]],
        [spatial["symmetry_edge"]],
        [spatial["symmetry_hog"]],
        [spatial["num_circles"]],
        spatial["rule_of_thirds"],
        texture["glcm"],
        texture["image_order"],
        [texture["level_of_detail"]],
    ])


def save_lighting_model(model: LightingModel, path: str) -> None:
    """Text format: first line k, then k lines of 625 floats."""
    with open(path, "w") as f:
        f.write(f"{model.k}\n")
        for row in model.centroids:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_lighting_model(path: str) -> LightingModel:
    with open(path) as f:
        k = int(f.readline())
        rows = [np.array([float(t) for t in f.readline().split()]) for _ in range(k)]
    return LightingModel(centroids=np.array(rows))
