"""Fuzzy properties: spectral uniqueness plus auxiliary-model scores for
emotion, originality and memorability.

The auxiliary framework trains on any user-supplied labeled corpus; missing
models degrade to zero-valued features with a warning flag instead of
failing the pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import learn
from .imgcore import RasterImage, fft_amplitude, luminance

SPECTRUM_SIZE = 128
SERIAL_VERSION = 1


@dataclass(frozen=True)
class SpectrumReference:
    """Element-wise mean amplitude spectrum of a corpus at 128x128."""

    mean_amplitude: np.ndarray
    count: int

    def __post_init__(self):
        if self.mean_amplitude.shape != (SPECTRUM_SIZE, SPECTRUM_SIZE):
            raise ValueError("reference spectrum must be 128x128")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.mean_amplitude.min() < 0:
            raise ValueError("amplitudes must be non-negative")


def image_spectrum(img: RasterImage) -> np.ndarray:
    return fft_amplitude(luminance(img), SPECTRUM_SIZE).values


def build_spectrum_reference(corpus: list[RasterImage]) -> SpectrumReference:
    """Mean of per-image amplitude spectra over the corpus."""
    if not corpus:
        raise ValueError("corpus must not be empty")
    acc = np.zeros((SPECTRUM_SIZE, SPECTRUM_SIZE))
    for img in corpus:
        acc += image_spectrum(img)
    return SpectrumReference(mean_amplitude=acc / len(corpus), count=len(corpus))


def uniqueness(img: RasterImage, ref: SpectrumReference) -> float:
    """L2 distance between the image spectrum and the corpus mean spectrum."""
    return float(np.linalg.norm(image_spectrum(img) - ref.mean_amplitude))


# ---------------------------------------------------------------------------
# Auxiliary predictors
# ---------------------------------------------------------------------------

@dataclass
class AuxModel:
    """A trained classifier (SVM) or regressor (kernel ridge) with its
    input registry and standardization, plus frozen training predictions."""

    kind: str                         # "classifier" or "regressor"
    input_registry: list[str]
    standardization: learn.Standardization
    svm: learn.SvmModel | None = None
    ridge: learn.KernelRidgeModel | None = None
    training_predictions: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Decision values (classifier) or predicted targets (regressor)."""
        z = self.standardization.apply(np.asarray(x, dtype=np.float64))
        if self.kind == "classifier":
            return learn.svm_decision(self.svm, z)
        return learn.kernel_ridge_predict(self.ridge, z)


def train_aux(x: np.ndarray, labels: np.ndarray, kind: str,
              registry: list[str], seed: int = 0) -> AuxModel:
    """Train an auxiliary predictor on a labeled corpus.

    Classifier: RBF SVM (gamma = 1/n features). Regressor: RBF kernel ridge
    with the penalty chosen by 5-fold CV. Standardization is fitted on the
    training data only.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if x.shape[0] < 10:
        raise ValueError("need at least 10 training samples")
    if x.shape[1] != len(registry):
        raise ValueError("feature count must match the input registry")
    if kind not in ("classifier", "regressor"):
        raise ValueError(f"unknown model kind: {kind}")

    st = learn.fit_standardization(x)
    z = st.apply(x)
    gamma = 1.0 / x.shape[1]
    if kind == "classifier":
        uniq = set(np.unique(labels))
        if uniq != {-1.0, 1.0}:
            raise ValueError("classifier labels must be -1/+1 with both present")
        svm = learn.svm_train_cv(z, labels, kernel="rbf", gamma=gamma, seed=seed)
        model = AuxModel(kind=kind, input_registry=list(registry),
                         standardization=st, svm=svm)
    else:
        ridge = learn.kernel_ridge_cv(z, labels, gamma=gamma, seed=seed)
        model = AuxModel(kind=kind, input_registry=list(registry),
                         standardization=st, ridge=ridge)
    model.training_predictions = model.predict(x)
    return model


def fuzzy_block(features: dict[str, np.ndarray], models: dict[str, AuxModel | None],
                ref: SpectrumReference, img: RasterImage) -> tuple[np.ndarray, list[str]]:
    """(emotion, originality, memorability, uniqueness) plus warning flags.

    `features` maps registry name -> value for every feature the auxiliary
    models may consume; a missing model emits 0 and a warning.
    """
    out = np.zeros(4)
    warnings = []
    for slot, name in enumerate(("emotion", "originality", "memorability")):
        model = models.get(name)
        if model is None:
            warnings.append(f"no {name} model; feature emitted as 0")
            continue
        try:
            vec = np.array([[features[n] for n in model.input_registry]])
        except KeyError as exc:
            raise ValueError(f"{name} model needs unavailable feature {exc}") from exc
        out[slot] = float(model.predict(vec)[0])
    out[3] = uniqueness(img, ref)
    return out, warnings


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_aux_model(model: AuxModel, path: str) -> None:
    doc = {
        "version": SERIAL_VERSION,
        "type": "aux",
        "kind": model.kind,
        "input_registry": model.input_registry,
        "standardization": {
            "mean": model.standardization.mean.tolist(),
            "scale": model.standardization.scale.tolist(),
            "constant_columns": model.standardization.constant_columns.tolist(),
        },
        "training_predictions": model.training_predictions.tolist(),
    }
    if model.kind == "classifier":
        doc["svm"] = {
            "kernel": model.svm.kernel,
            "gamma": model.svm.gamma,
            "C": model.svm.C,
            "bias": model.svm.bias,
            "support_vectors": model.svm.support_vectors.tolist(),
            "dual_coef": model.svm.dual_coef.tolist(),
        }
    else:
        doc["ridge"] = {
            "gamma": model.ridge.gamma,
            "lam": model.ridge.lam,
            "x_train": model.ridge.x_train.tolist(),
            "dual": model.ridge.dual.tolist(),
        }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)


def load_aux_model(path: str) -> AuxModel:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("type") != "aux" or doc.get("version") != SERIAL_VERSION:
        raise ValueError("not a compatible auxiliary model file")
    st = learn.Standardization(
        mean=np.array(doc["standardization"]["mean"]),
        scale=np.array(doc["standardization"]["scale"]),
        constant_columns=np.array(doc["standardization"]["constant_columns"], dtype=bool))
    model = AuxModel(kind=doc["kind"], input_registry=list(doc["input_registry"]),
                     standardization=st,
                     training_predictions=np.array(doc["training_predictions"]))
    if doc["kind"] == "classifier":
        s = doc["svm"]
        model.svm = learn.SvmModel(kernel=s["kernel"], gamma=s["gamma"],
                                   support_vectors=np.array(s["support_vectors"]),
                                   dual_coef=np.array(s["dual_coef"]),
                                   bias=s["bias"], C=s["C"])
    else:
        r = doc["ridge"]
        model.ridge = learn.KernelRidgeModel(gamma=r["gamma"], lam=r["lam"],
                                             x_train=np.array(r["x_train"]),
                                             dual=np.array(r["dual"]))
    return model
