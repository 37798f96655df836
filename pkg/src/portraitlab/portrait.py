"""Portrait-specific features over ingested face annotations: passthrough
subject attributes, landmark sharpness/statistics, face/background contrasts.

Annotations arrive as sidecar files; no detection happens here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .comp import circular_mean_hue, estimate_illuminance
from .imgcore import Plane, RasterImage, rgb_to_hsv, sobel_magnitude

SCHEMA_VERSION = 1

# fixed landmark ordering used by every landmark-valued feature
LANDMARK_ORDER = ("right_eye", "left_eye", "nose", "mouth")

# side of the square window around a landmark, as a fraction of the face
# box diagonal (the annotations carry points, not regions)
LANDMARK_REGION_FRACTION = 0.20

PORTRAIT_DIM = 44


@dataclass(frozen=True)
class FaceAnnotation:
    """Per-image subject metadata in relative coordinates.

    face_box is (x, y, width, height); race is (white, black, asian) scores;
    glasses is (none, normal, sunglasses) scores; landmarks map the four
    landmark names to relative (x, y).
    """

    face_box: tuple[float, float, float, float]
    pose: tuple[float, float, float]          # yaw, pitch, roll in degrees
    race: tuple[float, float, float]
    age: float
    gender: float                              # 1 = female
    landmarks: dict[str, tuple[float, float]]
    smiling: float
    glasses: tuple[float, float, float]
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        x, y, w, h = self.face_box
        if w <= 0 or h <= 0 or not (0 <= x <= 1 and 0 <= y <= 1):
            raise ValueError("degenerate face box")
        if x + w > 1 + 1e-9 or y + h > 1 + 1e-9:
            raise ValueError("face box exceeds image bounds")
        for group, name in ((self.race, "race"), (self.glasses, "glasses")):
            if abs(sum(group) - 1.0) > 1e-6:
                raise ValueError(f"{name} scores must sum to 1")
        if self.age < 0:
            raise ValueError("age must be non-negative")
        missing = set(LANDMARK_ORDER) - set(self.landmarks)
        if missing:
            raise ValueError(f"missing landmarks: {sorted(missing)}")
        for lx, ly in self.landmarks.values():
            if not (0 <= lx <= 1 and 0 <= ly <= 1):
                raise ValueError("landmark coordinates must be relative")
        # landmarks outside the face box are flagged, not fatal
        strays = [n for n, (lx, ly) in self.landmarks.items()
                  if not (x <= lx <= x + w and y <= ly <= y + h)]
        if strays and not self.flags:
            object.__setattr__(self, "flags",
                               tuple(f"landmark outside face box: {n}" for n in strays))


def _parse_face(doc: dict) -> FaceAnnotation:
    box = doc["face_box"]
    race = doc["race"]
    glasses = doc["glasses"]
    return FaceAnnotation(
        face_box=(float(box["x"]), float(box["y"]),
                  float(box["width"]), float(box["height"])),
        pose=(float(doc["pose"]["yaw"]), float(doc["pose"]["pitch"]),
              float(doc["pose"]["roll"])),
        race=(float(race["white"]), float(race["black"]), float(race["asian"])),
        age=float(doc["age"]),
        gender=float(doc["gender"]),
        landmarks={k: (float(v[0]), float(v[1]))
                   for k, v in doc["landmarks"].items() if k in LANDMARK_ORDER},
        smiling=float(doc["smiling"]),
        glasses=(float(glasses["none"]), float(glasses["normal"]),
                 float(glasses["sunglasses"])),
    )


def load_annotation(path: str) -> FaceAnnotation:
    """Parse a sidecar file; when several faces are present, keep the one
    with the largest relative area. Unknown fields are ignored."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported annotation schema in {path}")
    faces = doc.get("faces", [])
    if not faces:
        raise ValueError(f"no faces in annotation {path}")
    largest = max(faces, key=lambda fc: fc["face_box"]["width"] * fc["face_box"]["height"])
    return _parse_face(largest)


def save_annotation(ann: FaceAnnotation, path: str) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "faces": [{
            "face_box": dict(zip(("x", "y", "width", "height"), ann.face_box)),
            "pose": dict(zip(("yaw", "pitch", "roll"), ann.pose)),
            "race": dict(zip(("white", "black", "asian"), ann.race)),
            "age": ann.age,
            "gender": ann.gender,
            "landmarks": {k: list(v) for k, v in ann.landmarks.items()},
            "smiling": ann.smiling,
            "glasses": dict(zip(("none", "normal", "sunglasses"), ann.glasses)),
        }],
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)


def landmark_region(ann: FaceAnnotation, which: str, width: int, height: int
                    ) -> tuple[int, int, int, int]:
    """Pixel rectangle (y0, y1, x0, x1) around a landmark: a square window of
    side 20% of the face box diagonal, clipped to image bounds."""
    if which not in LANDMARK_ORDER:
        raise ValueError(f"unknown landmark: {which}")
    bx, by, bw, bh = ann.face_box
    diag = np.hypot(bw * width, bh * height)
    side = LANDMARK_REGION_FRACTION * diag
    lx, ly = ann.landmarks[which]
    cx, cy = lx * width, ly * height
    x0 = max(int(round(cx - side / 2.0)), 0)
    y0 = max(int(round(cy - side / 2.0)), 0)
    x1 = min(int(round(cx + side / 2.0)), width)
    y1 = min(int(round(cy + side / 2.0)), height)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"landmark region empty after clipping: {which}")
    return y0, y1, x0, x1


def landmark_sharpness(img: RasterImage, ann: FaceAnnotation) -> np.ndarray:
    """Mean gradient magnitude in each landmark region (fixed order)."""
    from .imgcore import luminance

    mag = sobel_magnitude(luminance(img)).values
    out = np.empty(4)
    for i, name in enumerate(LANDMARK_ORDER):
        y0, y1, x0, x1 = landmark_region(ann, name, img.width, img.height)
        out[i] = mag[y0:y1, x0:x1].mean()
    return out


def landmark_stats(img: RasterImage, ann: FaceAnnotation) -> np.ndarray:
    """Per-landmark (hue, brightness) pairs followed by per-landmark
    saturation: 12 values in the fixed landmark order."""
    hp, sp, vp = rgb_to_hsv(img)
    pairs = []
    sats = []
    for name in LANDMARK_ORDER:
        y0, y1, x0, x1 = landmark_region(ann, name, img.width, img.height)
        pairs.append(circular_mean_hue(hp.values[y0:y1, x0:x1]))
        pairs.append(vp.values[y0:y1, x0:x1].mean())
        sats.append(sp.values[y0:y1, x0:x1].mean())
    return np.array(pairs + sats)


def face_background_contrasts(img: RasterImage, ann: FaceAnnotation) -> np.ndarray:
    """mean(face)/mean(background) for illuminance, gradient magnitude and
    brightness; denominators floored at 1e-6."""
    from .imgcore import luminance

    bx, by, bw, bh = ann.face_box
    x0 = int(round(bx * img.width))
    y0 = int(round(by * img.height))
    x1 = min(int(round((bx + bw) * img.width)), img.width)
    y1 = min(int(round((by + bh) * img.height)), img.height)
    mask = np.zeros((img.height, img.width), dtype=bool)
    mask[y0:y1, x0:x1] = True
    if mask.all():
        raise ValueError("face box covers the whole image; background is empty")
    if not mask.any():
        raise ValueError("face box contains no pixels")

    planes = (
        estimate_illuminance(img).values,
        sobel_magnitude(luminance(img)).values,
        rgb_to_hsv(img)[2].values,
    )
    out = np.empty(3)
    for i, vals in enumerate(planes):
        num = vals[mask].mean()
        den = vals[~mask].mean()
        out[i] = num / max(den, 1e-6) if num > 0 else 0.0
    return out


def portrait_block(img: RasterImage, ann: FaceAnnotation) -> np.ndarray:
    """44-dim portrait vector: passthrough attributes copied verbatim,
    then landmark statistics, sharpness and face/background contrasts."""
    coords = []
    for name in LANDMARK_ORDER:
        coords.extend(ann.landmarks[name])
    vec = np.concatenate([
        ann.face_box,
        ann.pose,
        list(ann.race) + [ann.age, ann.gender, 0.0],  # reserved pad to dim 6
        coords,
        [ann.smiling],
        ann.glasses,
        landmark_stats(img, ann),
        landmark_sharpness(img, ann),
        face_background_contrasts(img, ann),
    ])
    assert vec.shape == (PORTRAIT_DIM,)
    return vec
