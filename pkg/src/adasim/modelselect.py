"""
Grid search over omega with eigenvalue prefiltering and class-disjoint cross-validation
"""
import itertools
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from adasim.adapt import assemble_joint_system
from adasim.core import Dataset, OmegaParams
from adasim.errors import AdasimError, ValidationError
from adasim.learn import TrainConfig, train
from adasim.utils.util import load_yaml_config
from adasim.zsr import evaluate, predict_batch

logger = logging.getLogger(__name__)

# Eigenvalue bands of H observed for well-performing omega
EIG_MIN_BAND = (0.0, 1.0)
EIG_MAX_BAND = (10.0, 1e6)
EIG_MAX_PREFERRED = (1e3, 1e4)


@dataclass(frozen=True)
class GridSpec:
    """Exponent range of the per-component omega grid base**e"""
    exponent_lo: int = -5
    exponent_hi: int = 5
    base: float = 10.0

    def __post_init__(self):
        if self.exponent_lo > self.exponent_hi:
            raise ValidationError(f"grid needs lo <= hi, got {self.exponent_lo} > {self.exponent_hi}")
        if not self.base > 0:
            raise ValidationError(f"grid base must be positive, got {self.base}")

    def exponents(self) -> List[int]:
        return list(range(self.exponent_lo, self.exponent_hi + 1))

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> 'GridSpec':
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown grid options {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_yaml(cls, yaml_path: str) -> 'GridSpec':
        return cls.from_dict(load_yaml_config(yaml_path))


@dataclass(frozen=True)
class PrefilterResult:
    keep: bool
    eig_min: float
    eig_max: float
    is_pd: bool
    preferred: bool


@dataclass(frozen=True)
class CandidateRecord:
    """Cross-validation outcome for one omega"""
    index: int
    omega: OmegaParams
    cv_mean: float
    cv_std: float
    eig_min: float
    eig_max: float
    is_pd: bool
    preferred: bool
    skipped: bool
    fold_accuracies: tuple = ()


@dataclass
class SelectionReport:
    records: List[CandidateRecord] = field(default_factory=list)
    best: Optional[OmegaParams] = None
    elapsed: float = 0.0

    @property
    def best_record(self) -> Optional[CandidateRecord]:
        return next((r for r in self.records if not r.skipped), None)


def omega_grid(spec: GridSpec) -> List[OmegaParams]:
    """Cartesian product of base**e over the four components, lexicographic in the exponents"""
    exponents = spec.exponents()
    return [
        OmegaParams.from_exponents(combination, spec.base)
        for combination in itertools.product(exponents, repeat=4)
    ]


def eigen_prefilter(omega: OmegaParams, W_probe) -> PrefilterResult:
    """Keep omega when H(W_probe, omega) is PD with eigenvalues in the observed bands"""
    system = assemble_joint_system(W_probe, omega)
    in_min_band = EIG_MIN_BAND[0] < system.eig_min <= EIG_MIN_BAND[1]
    in_max_band = EIG_MAX_BAND[0] < system.eig_max <= EIG_MAX_BAND[1]
    preferred = EIG_MAX_PREFERRED[0] < system.eig_max <= EIG_MAX_PREFERRED[1]
    return PrefilterResult(
        keep=bool(system.is_pd and in_min_band and in_max_band),
        eig_min=system.eig_min,
        eig_max=system.eig_max,
        is_pd=system.is_pd,
        preferred=bool(preferred),
    )


def diagonal_dominance_candidates(delta_w: float, candidates: Iterable[OmegaParams]) -> List[OmegaParams]:
    """Candidates whose H is diagonally dominant for any W with the given delta_W"""
    return [omega for omega in candidates if omega.w13 > delta_w and omega.w24 > delta_w]


def crossval_split(seen: Iterable[int], k: int, seed: int = 0) -> List[FrozenSet[int]]:
    """Partition seen classes into k near-equal disjoint folds"""
    labels = sorted(set(int(c) for c in seen))
    if k < 2:
        raise ValidationError(f"cross-validation needs k >= 2, got {k}")
    if k > len(labels):
        raise ValidationError(f"cannot split {len(labels)} seen classes into {k} folds")
    order = np.random.default_rng(seed).permutation(len(labels))
    return [frozenset(labels[i] for i in part) for part in np.array_split(order, k)]


def probe_config(config: TrainConfig) -> TrainConfig:
    return replace(config, outer_iters=1, inner_iters=10)


def _cross_validate(data: Dataset, omega: OmegaParams, config: TrainConfig, folds: Sequence[FrozenSet[int]]) -> List[float]:
    accuracies = []
    for fold in folds:
        split = data.with_split(data.seen - fold, fold)
        model, _ = train(split, omega, config)
        test = split.test_instances()
        predictions = predict_batch(model, split.unseen_classes(), test)
        report = evaluate(predictions, {x.id: x.label for x in test})
        accuracies.append(report.accuracy)
    return accuracies


def _evaluate_candidate(
    index: int,
    omega: OmegaParams,
    data: Dataset,
    config: TrainConfig,
    folds: Sequence[FrozenSet[int]],
    prefilter: bool,
) -> CandidateRecord:
    try:
        probe, _ = train(data, omega, probe_config(config))
        W_probe = probe.W
    except AdasimError as e:
        logger.warning(f"Probe training failed for {omega.as_tuple()}, screening with W=0: {e}")
        W_probe = np.zeros((data.d_t, data.d_s))
    screen = eigen_prefilter(omega, W_probe)
    skipped = prefilter and not screen.keep
    accuracies: List[float] = []
    if not skipped:
        try:
            accuracies = _cross_validate(data, omega, config, folds)
        except AdasimError as e:
            logger.warning(f"Candidate {omega.as_tuple()} failed during cross-validation: {e}")
            skipped = True
    return CandidateRecord(
        index=index,
        omega=omega,
        cv_mean=float(np.mean(accuracies)) if accuracies else float("nan"),
        cv_std=float(np.std(accuracies)) if accuracies else float("nan"),
        eig_min=screen.eig_min,
        eig_max=screen.eig_max,
        is_pd=screen.is_pd,
        preferred=screen.preferred,
        skipped=skipped,
        fold_accuracies=tuple(accuracies),
    )


def _sort_key(record: CandidateRecord):
    if record.skipped:
        return (1, 0.0, 0.0, record.index)
    return (0, -record.cv_mean, -record.eig_min, record.index)


def select_omega(
    data: Dataset,
    grid: Optional[GridSpec] = None,
    train_config: Optional[TrainConfig] = None,
    k: int = 4,
    prefilter: bool = True,
    n_jobs: int = 1,
    candidates: Optional[Sequence[OmegaParams]] = None,
) -> SelectionReport:
    """Pseudo-zero-shot cross-validation of every grid candidate, best first"""
    grid = grid or GridSpec()
    train_config = train_config or TrainConfig()
    candidates = list(candidates) if candidates is not None else omega_grid(grid)
    folds = crossval_split(data.seen, k, train_config.seed)
    logger.info(f"Evaluating {len(candidates)} omega candidates with {k} class-disjoint folds on {n_jobs} worker(s)")

    start = time.perf_counter()
    records = Parallel(n_jobs=n_jobs)(
        delayed(_evaluate_candidate)(index, omega, data, train_config, folds, prefilter)
        for index, omega in enumerate(candidates)
    )
    records = sorted(records, key=_sort_key)
    report = SelectionReport(records=records, elapsed=time.perf_counter() - start)
    best = report.best_record
    if best is None:
        logger.warning("No omega candidate survived the eigenvalue prefilter")
    else:
        report.best = best.omega
        logger.info(f"Best omega {best.omega.as_tuple()} with CV accuracy {best.cv_mean:.4f} +/- {best.cv_std:.4f}")
    logger.info(f"Grid search finished in {report.elapsed:.1f}s")
    return report
