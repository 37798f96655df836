"""Manifest-driven corpus handling: metadata/face filtering, score
binarization, delta filtering, the feature registry and matrix persistence.

Manifest format: tab-separated, one entry per line, columns
    id  image_path  annotation_path  mean_score  challenge_title  tags  semantic_vector_path
with "-" marking absent optional fields and tags comma-separated. Lines
starting with "#" are comments.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

import numpy as np

from .comp import COLOR_NAME_ORDER
from .learn import FeatureMatrix
from .portrait import LANDMARK_ORDER

log = logging.getLogger(__name__)

GROUPS = ("compositional", "semantics", "quality", "portrait", "fuzzy")
SEMANTIC_DIM = 189
PORTRAIT_KEYWORDS = ("Portrait", "Portraiture", "Portraits")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image_path: str
    mean_score: float
    annotation_path: str | None = None
    challenge_title: str | None = None
    tags: tuple[str, ...] = ()
    semantic_vector_path: str | None = None

    def __post_init__(self):
        if not np.isfinite(self.mean_score) or not (1.0 <= self.mean_score <= 10.0):
            raise ValueError(f"mean score out of [1,10]: {self.mean_score}")


def load_manifest(path: str) -> list[ManifestEntry]:
    entries = []
    seen = set()
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 7:
                raise ValueError(f"{path}:{lineno}: expected 7 columns, got {len(cols)}")
            opt = lambda c: None if c == "-" else c
            entry = ManifestEntry(
                id=cols[0],
                image_path=cols[1],
                annotation_path=opt(cols[2]),
                mean_score=float(cols[3]),
                challenge_title=opt(cols[4]),
                tags=tuple(t for t in cols[5].split(",") if t and t != "-"),
                semantic_vector_path=opt(cols[6]),
            )
            if entry.id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate id {entry.id}")
            seen.add(entry.id)
            entries.append(entry)
    return entries


def save_manifest(entries: list[ManifestEntry], path: str) -> None:
    with open(path, "w") as f:
        f.write("# id\timage\tannotation\tmean_score\tchallenge_title\ttags\tsemantic_vectors\n")
        for e in entries:
            f.write("\t".join([
                e.id, e.image_path, e.annotation_path or "-",
                repr(e.mean_score), e.challenge_title or "-",
                ",".join(e.tags) or "-", e.semantic_vector_path or "-",
            ]) + "\n")


def filter_metadata(entries: list[ManifestEntry],
                    keywords=PORTRAIT_KEYWORDS) -> list[ManifestEntry]:
    """Keep entries whose tags or challenge title contain a keyword,
    case-insensitive whole-word match. Empty keyword list keeps everything."""
    if not keywords:
        return list(entries)
    patterns = [re.compile(r"\b" + re.escape(k) + r"\b", re.IGNORECASE) for k in keywords]

    def matches(e: ManifestEntry) -> bool:
        texts = list(e.tags)
        if e.challenge_title:
            texts.append(e.challenge_title)
        return any(p.search(t) for p in patterns for t in texts)

    return [e for e in entries if matches(e)]


def filter_faces(entries: list[ManifestEntry]) -> list[ManifestEntry]:
    """Keep entries whose annotation sidecar parses and contains a face."""
    from .portrait import load_annotation

    kept = []
    for e in entries:
        if not e.annotation_path:
            continue
        try:
            load_annotation(e.annotation_path)
        except (OSError, ValueError, KeyError) as exc:
            log.warning("dropping %s: bad annotation (%s)", e.id, exc)
            continue
        kept.append(e)
    return kept


def binarize_scores(entries: list[ManifestEntry],
                    threshold: float | None = None) -> tuple[np.ndarray, float]:
    """+1 when mean_score is strictly above the threshold (default: the
    manifest mean), else -1."""
    scores = np.array([e.mean_score for e in entries])
    if threshold is None:
        threshold = float(scores.mean())
    labels = np.where(scores > threshold, 1.0, -1.0)
    return labels, threshold


def delta_filter(scores: np.ndarray, threshold: float, delta: float,
                 train_mask: np.ndarray) -> np.ndarray:
    """Training mask with samples within delta of the threshold removed;
    test samples (outside the training mask) are untouched."""
    ambiguous = np.abs(np.asarray(scores) - threshold) < delta
    return np.asarray(train_mask) & ~ambiguous


# ---------------------------------------------------------------------------
# Feature registry
# ---------------------------------------------------------------------------

def _compositional_names() -> list[str]:
    names = [f"lighting_pattern_{i}" for i in range(5)]
    names += ["overall_sharpness", "camera_shake"]
    names += [f"color_{n}" for n in COLOR_NAME_ORDER]
    names += ["hue_avg", "sat_avg", "val_avg",
              "hue_inner_quadrant", "sat_inner_quadrant", "val_inner_quadrant"]
    names += ["pleasure", "arousal", "dominance"]
    names += [f"itten_hue_{i}" for i in range(12)]
    names += [f"itten_sat_{i}" for i in range(3)]
    names += [f"itten_val_{i}" for i in range(5)]
    names += ["itten_contrast_hue", "itten_contrast_sat", "itten_contrast_val"]
    names += ["contrast_michelson", "contrast_simple"]
    names += ["symmetry_edge", "symmetry_hog", "num_circles"]
    names += [f"rule_of_thirds_{i}" for i in range(9)]
    names += ["glcm_entropy", "glcm_energy", "glcm_homogeneity", "glcm_contrast"]
    names += ["order_compression", "order_entropy", "level_of_detail"]
    return names


def _portrait_names() -> list[str]:
    names = ["face_x", "face_y", "face_width", "face_height",
             "yaw", "pitch", "roll",
             "race_white", "race_black", "race_asian", "age", "gender",
             "demographics_pad"]
    for lm in LANDMARK_ORDER:
        names += [f"{lm}_x", f"{lm}_y"]
    names += ["smiling", "glasses_none", "glasses_normal", "glasses_sunglasses"]
    for lm in LANDMARK_ORDER:
        names += [f"{lm}_hue", f"{lm}_brightness"]
    names += [f"{lm}_saturation" for lm in LANDMARK_ORDER]
    names += [f"{lm}_sharpness" for lm in LANDMARK_ORDER]
    names += ["fb_lighting_contrast", "fb_sharpness_contrast", "fb_brightness_contrast"]
    return names


@dataclass(frozen=True)
class FeatureRegistry:
    """Fixed ordered list of (group, name) pairs spanning all feature groups."""

    entries: tuple[tuple[str, str], ...]

    @property
    def names(self) -> list[str]:
        return [f"{g}:{n}" for g, n in self.entries]

    def group_columns(self, group: str) -> list[int]:
        return [i for i, (g, _) in enumerate(self.entries) if g == group]

    @property
    def dim(self) -> int:
        return len(self.entries)


def build_registry(groups=GROUPS) -> FeatureRegistry:
    entries = []
    for group in GROUPS:
        if group not in groups:
            continue
        if group == "compositional":
            names = _compositional_names()
        elif group == "semantics":
            names = [f"object_{i}" for i in range(SEMANTIC_DIM)]
        elif group == "quality":
            names = ["noise", "contrast_quality", "exposure_quality",
                     "jpeg_quality", "splicing_score", "median_filtering_score"]
        elif group == "portrait":
            names = _portrait_names()
        else:
            names = ["emotion", "originality", "memorability", "uniqueness"]
        entries.extend((group, n) for n in names)
    return FeatureRegistry(entries=tuple(entries))


def load_semantic_vector(path: str) -> np.ndarray:
    vec = np.array([float(t) for t in open(path).read().split()])
    if vec.shape != (SEMANTIC_DIM,):
        raise ValueError(f"semantic vector must have {SEMANTIC_DIM} entries, "
                         f"got {vec.shape[0]} in {path}")
    return vec


def assemble_matrix(entries: list[ManifestEntry], blocks: dict[str, dict[str, np.ndarray]],
                    registry: FeatureRegistry) -> tuple[FeatureMatrix, np.ndarray, list[str]]:
    """Concatenate per-entry group blocks in registry order.

    blocks maps entry id -> group name -> vector; groups absent for all
    entries are zero-filled and flagged. Returns (matrix, scores, flags).
    """
    flags = []
    group_cols = {g: registry.group_columns(g) for g in GROUPS}
    present_groups = [g for g in GROUPS if group_cols[g]]
    rows = []
    for e in entries:
        per_entry = blocks[e.id]
        row = np.zeros(registry.dim)
        for g in present_groups:
            cols = group_cols[g]
            if g in per_entry:
                vec = np.asarray(per_entry[g], dtype=np.float64)
                if vec.shape[0] != len(cols):
                    raise ValueError(
                        f"{e.id}: group {g} has {vec.shape[0]} values, registry expects {len(cols)}")
                row[cols] = vec
        rows.append(row)
    for g in present_groups:
        if not any(g in blocks[e.id] for e in entries):
            flags.append(f"group {g} zero-filled (no blocks supplied)")
    matrix = FeatureMatrix(registry=registry.names, values=np.array(rows),
                           ids=[e.id for e in entries])
    scores = np.array([e.mean_score for e in entries])
    return matrix, scores, flags


def save_matrix(matrix: FeatureMatrix, scores: np.ndarray, path: str) -> None:
    """CSV with id, mean_score, then registry-named columns at 9 significant
    digits."""
    with open(path, "w") as f:
        f.write("id,mean_score," + ",".join(matrix.registry) + "\n")
        for i, sid in enumerate(matrix.ids):
            vals = ",".join(f"{v:.9g}" for v in matrix.values[i])
            f.write(f"{sid},{scores[i]:.9g},{vals}\n")


def load_matrix(path: str) -> tuple[FeatureMatrix, np.ndarray]:
    with open(path) as f:
        header = f.readline().rstrip("\n").split(",")
        if header[:2] != ["id", "mean_score"]:
            raise ValueError("feature matrix header must start with id,mean_score")
        registry = header[2:]
        ids, scores, rows = [], [], []
        for line in f:
            cols = line.rstrip("\n").split(",")
            if len(cols) != len(header):
                raise ValueError("feature matrix row width mismatch")
            ids.append(cols[0])
            scores.append(float(cols[1]))
            rows.append([float(c) for c in cols[2:]])
    return (FeatureMatrix(registry=registry, values=np.array(rows), ids=ids),
            np.array(scores))
