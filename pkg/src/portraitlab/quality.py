"""Basic quality metrics: noise, contrast quality, exposure, JPEG quality
and manipulation evidence (splicing, median filtering)."""

from __future__ import annotations

import numpy as np
import cv2

from . import learn
from .imgcore import (
    Plane,
    RasterImage,
    equalize_contrast,
    histogram256,
    luminance,
    median3,
    resize_bilinear,
)

# working size for the noise / manipulation features
WORK_SIZE = 256

# non-local-means parameters (patch, search window, strength on [0,1] scale)
NLM_PATCH = 7
NLM_SEARCH = 21
NLM_STRENGTH = 0.1

# constants of the published JPEG blockiness/activity/zero-crossing score
JPEG_ALPHA = -245.9
JPEG_BETA = 261.9
JPEG_GAMMA1 = -0.0240
JPEG_GAMMA2 = 0.0160
JPEG_GAMMA3 = 0.0646

SPAM_T = 3
SPAM_DIM = 686


def _work_plane(img: RasterImage) -> Plane:
    """Luminance at most at 256x256."""
    if img.width > WORK_SIZE or img.height > WORK_SIZE:
        img = resize_bilinear(img, WORK_SIZE, WORK_SIZE)
    return luminance(img)


def noise_estimate(img: RasterImage) -> float:
    """RMS distance between luminance and its non-local-means denoised version."""
    lum = _work_plane(img)
    u8 = np.minimum((lum.values * 255.0).round(), 255).astype(np.uint8)
    den = cv2.fastNlMeansDenoising(
        u8, None, h=NLM_STRENGTH * 255.0,
        templateWindowSize=NLM_PATCH, searchWindowSize=NLM_SEARCH)
    diff = lum.values - den.astype(np.float64) / 255.0
    return float(np.sqrt((diff * diff).mean()))


def contrast_quality(img: RasterImage) -> float:
    """Negative RMS distance between luminance and its equalized version."""
    lum = luminance(img)
    eq = equalize_contrast(lum)
    diff = lum.values - eq.values
    return float(-np.sqrt((diff * diff).mean()))


def exposure_quality(img: RasterImage) -> float:
    """Negative absolute skewness of the luminance histogram.

    Skewness is computed from bin centers weighted by counts; 0 when the
    histogram variance is degenerate.
    """
    hist = histogram256(luminance(img))
    centers = (np.arange(256) + 0.5) / 256.0
    w = hist.bins / hist.total
    mean = (w * centers).sum()
    var = (w * (centers - mean) ** 2).sum()
    if var < 1e-12:
        return 0.0
    m3 = (w * (centers - mean) ** 3).sum()
    return float(-abs(m3 / var ** 1.5))


def jpeg_quality(img: RasterImage) -> float:
    """Blockiness/activity/zero-crossing JPEG quality score on luminance
    scaled to [0,255]; returns 0 when any factor is degenerate."""
    x = luminance(img).values * 255.0
    h, w = x.shape
    if w < 17 or h < 17:
        return 0.0

    def _stats(sig: np.ndarray) -> tuple[float, float, float]:
        # sig: rows of the signal; differences along axis 1
        d = sig[:, 1:] - sig[:, :-1]
        n = sig.shape[1]
        blocks = d[:, 7::8]
        b = float(np.abs(blocks).mean()) if blocks.size else 0.0
        a = (8.0 * float(np.abs(d).mean()) - b) / 7.0
        z = float((d[:, :-1] * d[:, 1:] < 0).mean()) if d.shape[1] > 1 else 0.0
        return b, a, z

    bh, ah, zh = _stats(x)
    bv, av, zv = _stats(x.T)
    b = (bh + bv) / 2.0
    a = (ah + av) / 2.0
    z = (zh + zv) / 2.0
    if b <= 0.0 or a <= 0.0 or z <= 0.0:
        return 0.0
    return float(JPEG_ALPHA + JPEG_BETA * b ** JPEG_GAMMA1 * a ** JPEG_GAMMA2 * z ** JPEG_GAMMA3)


# ---------------------------------------------------------------------------
# SPAM (Markov) features and manipulation scores
# ---------------------------------------------------------------------------

def _transition_tensor(d: np.ndarray) -> np.ndarray:
    """Conditional P(u | v, w) over truncated difference triples along axis 1.

    d holds truncated differences in [-T, T]; returns a (7,7,7) tensor indexed
    [w, v, u], each (w, v) row normalized to 1 or left all-zero.
    """
    k = 2 * SPAM_T + 1
    if d.shape[1] < 3:
        return np.zeros((k, k, k))
    w = (d[:, :-2] + SPAM_T).ravel()
    v = (d[:, 1:-1] + SPAM_T).ravel()
    u = (d[:, 2:] + SPAM_T).ravel()
    counts = np.zeros((k, k, k))
    np.add.at(counts, (w, v, u), 1.0)
    row_sums = counts.sum(axis=2, keepdims=True)
    return np.divide(counts, row_sums, out=np.zeros_like(counts), where=row_sums > 0)


def spam_features(img: RasterImage) -> np.ndarray:
    """686-dim second-order Markov features of the 8-bit luminance.

    Differences truncated to [-3,3]; the two horizontal directions are
    averaged into the first 343 dims, the two vertical into the last 343.
    """
    lum = _work_plane(img)
    x = np.minimum((lum.values * 255.0).round(), 255).astype(np.int64)
    dh = np.clip(x[:, :-1] - x[:, 1:], -SPAM_T, SPAM_T)
    dv = np.clip(x[:-1, :] - x[1:, :], -SPAM_T, SPAM_T)
    # the opposite direction sees the sequence reversed with negated steps
    horiz = (_transition_tensor(dh) + _transition_tensor(-dh[:, ::-1])) / 2.0
    vert = (_transition_tensor(dv.T) + _transition_tensor(-dv.T[:, ::-1])) / 2.0
    return np.concatenate([horiz.ravel(), vert.ravel()])


def generate_spliced(img: RasterImage, donor: RasterImage,
                     rng: np.random.Generator) -> RasterImage:
    """Paste a random rectangle from the donor into the image."""
    h, w = img.height, img.width
    rh = int(rng.integers(h // 6, max(h // 2, h // 6 + 1)))
    rw = int(rng.integers(w // 6, max(w // 2, w // 6 + 1)))
    y = int(rng.integers(0, h - rh + 1))
    x = int(rng.integers(0, w - rw + 1))
    donor_r = resize_bilinear(donor, w, h)
    out = img.rgb.copy()
    out[y:y + rh, x:x + rw] = donor_r.rgb[y:y + rh, x:x + rw]
    return RasterImage(rgb=out)


def make_splicing_corpus(images: list[RasterImage], seed: int) -> tuple[np.ndarray, np.ndarray]:
    """SPAM features and labels for pristine (-1) vs spliced (+1) examples
    generated by pasting random rectangles between corpus images."""
    if len(images) < 2:
        raise ValueError("need at least 2 images to synthesize splices")
    rng = np.random.default_rng(seed)
    feats = []
    labels = []
    for i, img in enumerate(images):
        feats.append(spam_features(img))
        labels.append(-1.0)
        donor = images[int(rng.integers(0, len(images) - 1))]
        if donor is img:
            donor = images[(i + 1) % len(images)]
        feats.append(spam_features(generate_spliced(img, donor, rng)))
        labels.append(1.0)
    return np.array(feats), np.array(labels)


def splicing_score(img: RasterImage, model) -> float:
    """Signed decision value of the splicing classifier on SPAM features."""
    from .fuzzy import AuxModel

    if not isinstance(model, AuxModel):
        raise ValueError("splicing score needs a trained auxiliary classifier")
    return float(model.predict(spam_features(img)[None, :])[0])


def median_filtering_score(img: RasterImage) -> float:
    """Fraction of pixels left unchanged by one 3x3 median pass.

    Median-filtered images are near fixed points, so the ratio rises with
    prior median filtering.
    """
    lum = _work_plane(img)
    med = median3(lum)
    return float((np.abs(lum.values - med.values) < 1.0 / 255.0).mean())


def quality_block(img: RasterImage, splicing_model=None) -> np.ndarray:
    """6-dim quality vector; the splicing slot is 0 without a model."""
    splice = splicing_score(img, splicing_model) if splicing_model is not None else 0.0
    return np.array([
        noise_estimate(img),
        contrast_quality(img),
        exposure_quality(img),
        jpeg_quality(img),
        splice,
        median_filtering_score(img),
    ])
