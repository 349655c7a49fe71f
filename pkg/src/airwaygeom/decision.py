"""Applying a linear decision rule to new angle measurements.

A model scores a subject as ``w . (P x') + bias`` where ``x'`` is the
standardized angle vector.  A positive score is an ASD call; zero or below is
a control call.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .codes import CodeError, parse_angle

CONTROL, ASD = 0, 1


class ModelError(ValueError):
    pass


class ScalerRequiredError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class DecisionModel:
    """``angles`` fixes the order of ``x``.  ``means``/``stds`` may be left as
    ``None`` (the built-in models ship that way) but must be supplied before
    predicting."""

    angles: tuple[str, ...]
    P: np.ndarray
    w: np.ndarray
    means: np.ndarray | None = None
    stds: np.ndarray | None = None
    bias: float = 0.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        angles = tuple(str(a) for a in self.angles)
        for a in angles:
            try:
                parse_angle(a)
            except CodeError as exc:
                raise ModelError(str(exc)) from exc
        p = len(angles)
        if p == 0 or len(set(angles)) != p:
            raise ModelError("angle codes must be unique and non-empty")
        P = np.array(self.P, dtype=np.float64)
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if P.shape != (p, p):
            raise ModelError(f"P must be {p}x{p}, got {P.shape}")
        if w.shape != (p,):
            raise ModelError(f"w must have {p} entries, got {w.size}")
        if not (np.isfinite(P).all() and np.isfinite(w).all() and np.isfinite(self.bias)):
            raise ModelError("model entries must be finite")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "bias", float(self.bias))
        if (self.means is None) != (self.stds is None):
            raise ModelError("means and stds must be given together")
        if self.means is not None:
            means = np.array(self.means, dtype=np.float64).reshape(-1)
            stds = np.array(self.stds, dtype=np.float64).reshape(-1)
            if means.shape != (p,) or stds.shape != (p,):
                raise ModelError(f"means and stds must have {p} entries")
            if not (np.isfinite(means).all() and np.isfinite(stds).all()) or np.any(stds <= 0):
                raise ModelError("means must be finite and stds finite and positive")
            object.__setattr__(self, "means", means)
            object.__setattr__(self, "stds", stds)

    def __eq__(self, other):
        if not isinstance(other, DecisionModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None

    @property
    def p(self) -> int:
        return len(self.angles)

    @property
    def has_scaler(self) -> bool:
        return self.means is not None

    def with_scaler(self, means, stds) -> "DecisionModel":
        return replace(self, means=means, stds=stds)

    def vector(self, measurements) -> np.ndarray:
        """Raw angles in model order from a mapping of code -> degrees."""
        table = {str(k): v for k, v in measurements.items()}
        missing = [a for a in self.angles if a not in table]
        if missing:
            raise ModelError(f"missing angle(s): {', '.join(missing)}")
        return np.array([float(table[a]) for a in self.angles])

    def score_normalized(self, x_prime) -> float:
        x_prime = np.asarray(x_prime, dtype=np.float64).reshape(-1)
        if x_prime.shape != (self.p,):
            raise ModelError(f"expected {self.p} values")
        return float(self.w @ (self.P @ x_prime) + self.bias)

    def normalize(self, x) -> np.ndarray:
        if not self.has_scaler:
            raise ScalerRequiredError("scaler required: this model carries no means/stds")
        return (np.asarray(x, dtype=np.float64) - self.means) / self.stds

    def to_dict(self) -> dict:
        return {
            "angles": list(self.angles),
            "means": None if self.means is None else self.means.tolist(),
            "stds": None if self.stds is None else self.stds.tolist(),
            "P": self.P.tolist(),
            "w": self.w.tolist(),
            "bias": self.bias,
        }

    @classmethod
    def from_dict(cls, d, name: str = "") -> "DecisionModel":
        try:
            return cls(tuple(d["angles"]), d["P"], d["w"], d.get("means"), d.get("stds"), d.get("bias", 0.0), name)
        except KeyError as exc:
            raise ModelError(f"model file lacks field {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ModelError):
                raise
            raise ModelError(f"malformed model: {exc}") from None


def label_for(score: float) -> int:
    return ASD if score > 0 else CONTROL


def predict(model: DecisionModel, measurements) -> tuple[int, float]:
    """``(label, score)`` for one subject's angle measurements (degrees)."""
    x_prime = model.normalize(model.vector(measurements))
    score = model.score_normalized(x_prime)
    return label_for(score), score


def save_model(model: DecisionModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def load_model(path) -> DecisionModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON ({exc})") from None
    return DecisionModel.from_dict(data, name=path.stem)


def load_scaler(path) -> tuple[dict, dict]:
    """Per-code means and stds from ``{"means": {...}, "stds": {...}}`` or from
    a model-style file with ``angles``, ``means`` and ``stds`` lists."""
    data = json.loads(Path(path).read_text())
    means, stds = data.get("means"), data.get("stds")
    if isinstance(means, list) and "angles" in data:
        means = dict(zip(data["angles"], means))
        stds = dict(zip(data["angles"], stds))
    if not isinstance(means, dict) or not isinstance(stds, dict):
        raise ModelError(f"{path}: scaler needs means and stds keyed by angle code")
    return means, stds


def attach_scaler(model: DecisionModel, means: dict, stds: dict) -> DecisionModel:
    missing = [a for a in model.angles if a not in means or a not in stds]
    if missing:
        raise ModelError(f"scaler lacks angle(s): {', '.join(missing)}")
    return model.with_scaler([means[a] for a in model.angles], [stds[a] for a in model.angles])


def train_model(dataset, codes, k: int | None = None, C: float = 1.0, fit_bias: bool = True) -> DecisionModel:
    """Fit scaler, PCA and SVM on all rows of ``dataset`` restricted to ``codes``.

    P holds all p principal directions; with k < p components in use the
    trailing weights are zero, so the score is the SVM's own decision value.
    """
    from .ml.pca import PCA
    from .ml.validation import make_classifier

    codes = tuple(str(c) for c in codes)
    X = dataset.columns(codes)
    k = len(codes) if k is None else int(k)
    pipe = make_classifier(k, C, fit_bias).fit(X, dataset.labels)
    scale, svm = pipe.named_steps["scale"], pipe.named_steps["svm"]
    full = PCA().fit(scale.transform(X))
    w = np.concatenate([svm.coef_, np.zeros(len(codes) - k)])
    return DecisionModel(codes, full.components_, w, scale.mean_, scale.scale_, svm.intercept_)


P3 = (
    (0.6428, -0.2779, 0.7138),
    (0.2679, 0.9546, 0.1303),
    (0.7176, -0.1075, -0.6881),
)
W3 = (-0.1594, -0.1612, -0.5596)
P5 = (
    (0.4850, -0.2411, -0.3838, 0.7339, -0.1442),
    (0.1515, -0.3063, 0.9001, 0.2497, -0.1032),
    (0.6673, 0.0180, 0.0489, -0.2737, 0.6907),
    (-0.0893, 0.8204, 0.1900, 0.4748, 0.2395),
    (0.5372, 0.4179, 0.0634, -0.3141, -0.6588),
)
W5 = (-0.4109, -0.8083, -0.5690, 0.6330, -0.1499)
MODEL3_ANGLES = ("B121A1", "B122A2", "B1121A2")
MODEL5_ANGLES = ("B121A1", "B122A2", "B1121A2", "B1121A1", "B1111A2")


def builtin_models() -> dict[str, DecisionModel]:
    """The published three- and five-angle rules, without training statistics."""
    return {
        "model3": DecisionModel(MODEL3_ANGLES, P3, W3, name="model3"),
        "model5": DecisionModel(MODEL5_ANGLES, P5, W5, name="model5"),
    }
