"""
Domain types shared by the adasim modules
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, FrozenSet, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from adasim.errors import DimensionError, ValidationError

logger = logging.getLogger(__name__)


def as_vector(values, name: str, length: Optional[int] = None) -> np.ndarray:
    """Copy `values` into a read-only finite float64 vector"""
    vector = np.array(values, dtype=np.float64, copy=True)
    if vector.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {vector.shape}")
    if length is not None and vector.shape[0] != length:
        raise DimensionError(f"{name} has length {vector.shape[0]}, expected {length}")
    if not np.all(np.isfinite(vector)):
        raise ValidationError(f"{name} contains non-finite entries")
    vector.setflags(write=False)
    return vector


def as_matrix(values, name: str, shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """Copy `values` into a read-only finite float64 matrix"""
    matrix = np.array(values, dtype=np.float64, copy=True)
    if matrix.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {matrix.shape}")
    if shape is not None and matrix.shape != tuple(shape):
        raise DimensionError(f"{name} has shape {matrix.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(matrix)):
        raise ValidationError(f"{name} contains non-finite entries")
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True, eq=False)
class ClassEmbedding:
    """A class label with its source-domain attribute vector psi"""
    label: int
    psi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "psi", as_vector(self.psi, f"psi of class {self.label}"))

    @property
    def d_s(self) -> int:
        return self.psi.shape[0]


@dataclass(frozen=True, eq=False)
class EmbeddedInstance:
    """A target-domain instance with its feature vector phi"""
    id: int
    label: Optional[int]
    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "phi", as_vector(self.phi, f"phi of instance {self.id}"))

    @property
    def d_t(self) -> int:
        return self.phi.shape[0]


@dataclass(frozen=True)
class OmegaParams:
    """Displacement penalty weights of the adaptive similarity function"""
    w1: float
    w2: float
    w3: float
    w4: float

    def __post_init__(self):
        for name in ("w1", "w2", "w3", "w4"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise ValidationError(f"omega.{name} must be a finite nonnegative number, got {value}")
            object.__setattr__(self, name, value)
        if self.w13 <= 0 or self.w24 <= 0:
            raise ValidationError(
                f"omega requires w1+w3 > 0 and w2+w4 > 0, got w13={self.w13}, w24={self.w24}"
            )

    @property
    def w13(self) -> float:
        return self.w1 + self.w3

    @property
    def w24(self) -> float:
        return self.w2 + self.w4

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.w1, self.w2, self.w3, self.w4)

    @classmethod
    def parse(cls, text: str) -> 'OmegaParams':
        """Parse a comma list `w1,w2,w3,w4`"""
        parts = [part.strip() for part in text.split(",")]
        if len(parts) != 4:
            raise ValidationError(f"omega needs exactly four comma-separated values, got '{text}'")
        try:
            return cls(*(float(part) for part in parts))
        except ValueError as e:
            if isinstance(e, ValidationError):
                raise
            raise ValidationError(f"omega values must be numbers, got '{text}'") from e

    @classmethod
    def from_exponents(cls, exponents: Sequence[float], base: float = 10.0) -> 'OmegaParams':
        if len(exponents) != 4:
            raise ValidationError(f"omega needs exactly four exponents, got {len(exponents)}")
        return cls(*(float(base) ** float(e) for e in exponents))


@dataclass(frozen=True)
class DomainSpec:
    """Radii of the norm balls Z_t, Z_s; None means unbounded"""
    gamma_s: Optional[float] = None
    gamma_t: Optional[float] = None

    def __post_init__(self):
        for name in ("gamma_s", "gamma_t"):
            value = getattr(self, name)
            if value is not None and not value >= 0:
                raise ValidationError(f"{name} must be nonnegative, got {value}")

    @property
    def bounded(self) -> bool:
        return self.gamma_s is not None or self.gamma_t is not None


@dataclass(frozen=True, eq=False)
class WeightModel:
    """Learned bilinear weight matrix W (d_t x d_s) with its omega and lambda"""
    W: np.ndarray
    omega: OmegaParams
    lam: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "W", as_matrix(self.W, "W"))
        lam = float(self.lam)
        if not np.isfinite(lam) or lam < 0:
            raise ValidationError(f"lambda must be a finite nonnegative number, got {lam}")
        object.__setattr__(self, "lam", lam)

    @property
    def d_t(self) -> int:
        return self.W.shape[0]

    @property
    def d_s(self) -> int:
        return self.W.shape[1]

    def check_dims(self, d_t: int, d_s: int) -> None:
        if (self.d_t, self.d_s) != (d_t, d_s):
            raise DimensionError(
                f"model has d_t={self.d_t}, d_s={self.d_s} but data has d_t={d_t}, d_s={d_s}"
            )


@dataclass(frozen=True)
class Factorization:
    """Solve handle for H z = g: Cholesky factors or a pseudo-inverse"""
    kind: Literal["cholesky", "pinv"]
    payload: Any


@dataclass(frozen=True, eq=False)
class JointSystem:
    """Block matrix H = [[w13 I, -W], [-W^T, w24 I]] with its diagnostics"""
    W: np.ndarray
    omega: OmegaParams
    H: np.ndarray
    factorization: Factorization
    delta_w: float
    eig_min: float
    eig_max: float
    is_pd: bool
    is_diag_dominant: bool
    approximate: bool = False

    @property
    def d_t(self) -> int:
        return self.W.shape[0]

    @property
    def d_s(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True, eq=False)
class PairAssembly:
    """Linear term g and constant h of the quadratic form for one (phi, psi) pair"""
    g: np.ndarray
    h: float
    phi: np.ndarray
    psi: np.ndarray
    omega: OmegaParams


@dataclass(frozen=True, eq=False)
class AdaptedPair:
    """Adapted features maximizing the penalized bilinear score"""
    z_t: np.ndarray
    z_s: np.ndarray
    objective: float
    trace: Optional[List[float]] = None
    converged: bool = True
    indefinite: bool = False

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.z_t, self.z_s])


@dataclass(frozen=True)
class RoundDiagnostics:
    """PD diagnostics and objective recorded after one outer training round"""
    round: int
    objective: float
    delta_w: float
    eig_min: float
    eig_max: float
    is_pd: bool
    step_size: float


@dataclass
class TrainingState:
    """Slacks and objective history of a training run

    objective_trace holds the objective reached in each outer round, best_trace the lowest value seen
    so far, which is the objective of the returned model at the end.
    """
    slacks: np.ndarray
    objective_trace: List[Tuple[int, float]] = field(default_factory=list)
    best_trace: List[Tuple[int, float]] = field(default_factory=list)
    converged: bool = False
    rounds: List[RoundDiagnostics] = field(default_factory=list)

    def __post_init__(self):
        self.slacks = np.asarray(self.slacks, dtype=np.float64)
        if np.any(self.slacks < 0):
            raise ValidationError("slacks must be nonnegative")


@dataclass(frozen=True, eq=False)
class Standardization:
    """Statistics of a standardization, kept for re-use on test data"""
    mode: Literal["none", "zscore-target", "unit-norm-both"]
    mean: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    flagged: Tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class Dataset:
    """Class embeddings, instances and the seen/unseen partition"""
    classes: Tuple[ClassEmbedding, ...]
    instances: Tuple[EmbeddedInstance, ...]
    seen: FrozenSet[int]
    unseen: FrozenSet[int]
    d_s: Optional[int] = None
    d_t: Optional[int] = None
    standardization: Optional[Standardization] = None
    names: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        classes = tuple(sorted(self.classes, key=lambda c: c.label))
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "seen", frozenset(int(c) for c in self.seen))
        object.__setattr__(self, "unseen", frozenset(int(c) for c in self.unseen))
        if not classes:
            raise ValidationError("dataset has no classes")

        d_s = self.d_s if self.d_s is not None else classes[0].d_s
        if self.d_t is not None:
            d_t = self.d_t
        elif self.instances:
            d_t = self.instances[0].d_t
        else:
            raise ValidationError("d_t must be given for a dataset without instances")
        object.__setattr__(self, "d_s", int(d_s))
        object.__setattr__(self, "d_t", int(d_t))

        labels = [c.label for c in classes]
        if len(set(labels)) != len(labels):
            raise ValidationError("class labels must be unique")
        for c in classes:
            if c.d_s != self.d_s:
                raise DimensionError(f"class {c.label} has d_s={c.d_s}, expected {self.d_s}")

        overlap = self.seen & self.unseen
        if overlap:
            raise ValidationError(f"classes {sorted(overlap)} are both seen and unseen")
        known = set(labels)
        missing = (self.seen | self.unseen) - known
        if missing:
            raise ValidationError(f"split references unknown classes {sorted(missing)}")

        ids = set()
        for x in self.instances:
            if x.id in ids:
                raise ValidationError(f"duplicate instance id {x.id}")
            ids.add(x.id)
            if x.d_t != self.d_t:
                raise DimensionError(f"instance {x.id} has d_t={x.d_t}, expected {self.d_t}")
            if x.label is not None and x.label not in known:
                raise ValidationError(f"instance {x.id} references unknown class {x.label}")

    def class_by_label(self, label: int) -> ClassEmbedding:
        for c in self.classes:
            if c.label == label:
                return c
        raise ValidationError(f"unknown class {label}")

    def seen_classes(self) -> Tuple[ClassEmbedding, ...]:
        return tuple(c for c in self.classes if c.label in self.seen)

    def unseen_classes(self) -> Tuple[ClassEmbedding, ...]:
        return tuple(c for c in self.classes if c.label in self.unseen)

    def training_instances(self) -> Tuple[EmbeddedInstance, ...]:
        """Instances of seen classes, ordered by id"""
        return tuple(sorted((x for x in self.instances if x.label in self.seen), key=lambda x: x.id))

    def test_instances(self) -> Tuple[EmbeddedInstance, ...]:
        """Instances of unseen classes or without a label, ordered by id"""
        return tuple(sorted(
            (x for x in self.instances if x.label is None or x.label in self.unseen),
            key=lambda x: x.id,
        ))

    def with_split(self, seen: Iterable[int], unseen: Iterable[int]) -> 'Dataset':
        """Same classes with a new partition; instances of classes outside it are dropped"""
        seen, unseen = frozenset(seen), frozenset(unseen)
        keep = seen | unseen
        return replace(
            self,
            instances=tuple(x for x in self.instances if x.label in keep),
            seen=seen,
            unseen=unseen,
        )


def psi_matrix(classes: Sequence[ClassEmbedding]) -> np.ndarray:
    """Stack class attribute vectors as rows"""
    return np.vstack([c.psi for c in classes]) if classes else np.zeros((0, 0))


def phi_matrix(instances: Sequence[EmbeddedInstance], d_t: Optional[int] = None) -> np.ndarray:
    """Stack instance feature vectors as rows"""
    if not instances:
        return np.zeros((0, d_t or 0))
    return np.vstack([x.phi for x in instances])
