"""
Zero-shot prediction over unseen classes and recognition metrics
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np

from adasim.adapt import assemble_joint_system, bilinear_scores, score_matrix
from adasim.core import ClassEmbedding, EmbeddedInstance, JointSystem, WeightModel, phi_matrix, psi_matrix
from adasim.errors import NotPositiveDefiniteError, ValidationError

logger = logging.getLogger(__name__)

Scorer = Literal["adaptive", "bilinear"]


@dataclass(frozen=True)
class PredictionResult:
    """Predicted class of one instance with the score of every candidate class"""
    instance_id: int
    predicted: int
    scores: Dict[int, float]


@dataclass
class MetricsReport:
    """Accuracy and per-class precision/recall, optionally averaged over trials"""
    accuracy: float
    precision: Dict[int, float]
    recall: Dict[int, float]
    macro_precision: float
    macro_precision_std: float
    macro_recall: float
    macro_recall_std: float
    undefined_precision: Tuple[int, ...] = ()
    undefined_recall: Tuple[int, ...] = ()
    n_instances: int = 0
    n_trials: int = 1
    accuracy_std: float = 0.0
    support: Dict[int, int] = field(default_factory=dict)


def _prepare(model: WeightModel, unseen: Sequence[ClassEmbedding], system: Optional[JointSystem], scorer: Scorer, allow_indefinite: bool):
    if not unseen:
        raise ValidationError("prediction needs at least one unseen class")
    classes = tuple(sorted(unseen, key=lambda c: c.label))
    model.check_dims(model.d_t, classes[0].d_s)
    if scorer == "adaptive":
        system = system or assemble_joint_system(model.W, model.omega)
        if not system.is_pd and not allow_indefinite:
            raise NotPositiveDefiniteError(system.eig_min, system.delta_w, system.omega.w13, system.omega.w24)
    return classes, system


def _scores(model, classes, system, Phi, scorer, allow_indefinite) -> np.ndarray:
    Psi = psi_matrix(classes)
    if scorer == "bilinear":
        return bilinear_scores(model.W, Phi, Psi)
    return score_matrix(system, Phi, Psi, allow_indefinite=allow_indefinite)


def _results(instances, classes, scores) -> list:
    labels = [c.label for c in classes]
    results = []
    for x, row in zip(instances, scores):
        # argmax returns the first maximum; classes are sorted so ties go to the smallest id
        best = int(np.argmax(row))
        results.append(PredictionResult(
            instance_id=x.id,
            predicted=labels[best],
            scores={label: float(value) for label, value in zip(labels, row)},
        ))
    return results


def predict(
    model: WeightModel,
    unseen: Sequence[ClassEmbedding],
    x: EmbeddedInstance,
    system: Optional[JointSystem] = None,
    scorer: Scorer = "adaptive",
    allow_indefinite: bool = False,
) -> PredictionResult:
    """Score every unseen class for x and return the best one"""
    return predict_batch(model, unseen, [x], system=system, scorer=scorer, allow_indefinite=allow_indefinite)[0]


def predict_batch(
    model: WeightModel,
    unseen: Sequence[ClassEmbedding],
    instances: Sequence[EmbeddedInstance],
    system: Optional[JointSystem] = None,
    scorer: Scorer = "adaptive",
    allow_indefinite: bool = False,
) -> list:
    """Predict every instance against one shared factorization of H"""
    classes, system = _prepare(model, unseen, system, scorer, allow_indefinite)
    if not instances:
        return []
    Phi = phi_matrix(instances, model.d_t)
    model.check_dims(Phi.shape[1], classes[0].d_s)
    scores = _scores(model, classes, system, Phi, scorer, allow_indefinite)
    logger.info(f"Predicted {len(instances)} instances over {len(classes)} unseen classes ({scorer} scorer)")
    return _results(instances, classes, scores)


def evaluate(predictions: Sequence[PredictionResult], truth: Mapping[int, int]) -> MetricsReport:
    """Accuracy, per-class precision and recall against ground-truth labels by instance id"""
    if not predictions:
        raise ValidationError("cannot evaluate an empty prediction set")
    pairs = []
    for p in predictions:
        if p.instance_id not in truth or truth[p.instance_id] is None:
            raise ValidationError(f"no ground-truth label for instance {p.instance_id}")
        pairs.append((truth[p.instance_id], p.predicted))

    y_true = np.array([t for t, _ in pairs])
    y_pred = np.array([q for _, q in pairs])
    labels = sorted(set(y_true.tolist()) | set(y_pred.tolist()))
    precision, recall, support, undefined, unsupported = {}, {}, {}, [], []
    for label in labels:
        is_true = y_true == label
        is_pred = y_pred == label
        correct = int(np.sum(is_true & is_pred))
        support[label] = int(np.sum(is_true))
        if support[label]:
            recall[label] = correct / support[label]
        else:
            recall[label] = 0.0
            unsupported.append(label)
        if np.any(is_pred):
            precision[label] = correct / int(np.sum(is_pred))
        else:
            precision[label] = 0.0
            undefined.append(label)
    if undefined:
        logger.warning(f"Classes {undefined} were never predicted; their precision is reported as 0")
    if unsupported:
        logger.warning(f"Classes {unsupported} were predicted but have no test instances; their recall is reported as 0")

    precision_values = np.array([precision[c] for c in labels])
    # classes without test instances stay out of the recall average
    recall_values = np.array([recall[c] for c in labels if support[c]])
    return MetricsReport(
        accuracy=float(np.mean(y_true == y_pred)),
        precision=precision,
        recall=recall,
        macro_precision=float(np.mean(precision_values)),
        macro_precision_std=float(np.std(precision_values)),
        macro_recall=float(np.mean(recall_values)),
        macro_recall_std=float(np.std(recall_values)),
        undefined_precision=tuple(undefined),
        undefined_recall=tuple(unsupported),
        n_instances=len(pairs),
        support=support,
    )


def trial_average(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Mean over trials with the sample standard deviation of accuracy and macro metrics"""
    if not reports:
        raise ValidationError("trial_average needs at least one report")
    supported = sorted(c for c, n in reports[0].support.items() if n)
    for report in reports[1:]:
        if sorted(c for c, n in report.support.items() if n) != supported:
            raise ValidationError("reports cover different class sets")
    labels = sorted({c for r in reports for c in r.recall})

    def mean_std(values) -> Tuple[float, float]:
        values = np.asarray(values, dtype=np.float64)
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return float(np.mean(values)), std

    accuracy, accuracy_std = mean_std([r.accuracy for r in reports])
    macro_precision, macro_precision_std = mean_std([r.macro_precision for r in reports])
    macro_recall, macro_recall_std = mean_std([r.macro_recall for r in reports])
    # a class absent from a report was neither predicted nor present there
    undefined = sorted(
        {c for r in reports for c in r.undefined_precision} | {c for c in labels for r in reports if c not in r.precision}
    )
    unsupported = sorted({c for r in reports for c in r.undefined_recall})
    return MetricsReport(
        accuracy=accuracy,
        precision={c: float(np.mean([r.precision.get(c, 0.0) for r in reports])) for c in labels},
        recall={c: float(np.mean([r.recall.get(c, 0.0) for r in reports])) for c in labels},
        macro_precision=macro_precision,
        macro_precision_std=macro_precision_std,
        macro_recall=macro_recall,
        macro_recall_std=macro_recall_std,
        undefined_precision=tuple(undefined),
        undefined_recall=tuple(unsupported),
        n_instances=sum(r.n_instances for r in reports),
        n_trials=len(reports),
        accuracy_std=accuracy_std,
        support={c: sum(r.support.get(c, 0) for r in reports) for c in labels},
    )
