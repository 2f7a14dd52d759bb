"""
Dataset and model file formats, synthetic problems and standardization
"""
import hashlib
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
import yaml

from adasim.adapt import assemble_joint_system, latent_solutions
from adasim.core import (
    ClassEmbedding,
    Dataset,
    EmbeddedInstance,
    JointSystem,
    OmegaParams,
    Standardization,
    TrainingState,
    WeightModel,
    phi_matrix,
)
from adasim.errors import ChecksumError, FormatError, NotPositiveDefiniteError, ValidationError
from adasim.utils.util import load_yaml_config
from adasim.zsr import MetricsReport, PredictionResult

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
CLASSES_FILE = "classes.tsv"
INSTANCES_FILE = "instances.tsv"
SPLIT_FILE = "split.txt"

StandardizeMode = Literal["none", "zscore-target", "unit-norm-both"]


def format_float(value: float) -> str:
    """Shortest decimal that parses back to the same float64"""
    return repr(float(value))


def format_vector(values: Iterable[float]) -> str:
    return ",".join(format_float(v) for v in values)


def _parse_vector(text: str, path: str, line: int) -> np.ndarray:
    try:
        return np.array([float(part) for part in text.split(",")], dtype=np.float64)
    except ValueError as e:
        raise FormatError(f"invalid number list '{text}'", path, line) from e


def _parse_int(text: str, what: str, path: str, line: int) -> int:
    try:
        return int(text)
    except ValueError as e:
        raise FormatError(f"invalid {what} '{text}'", path, line) from e


def _content_lines(path) -> Iterable[Tuple[int, str]]:
    """Non-empty lines with comments removed, numbered from 1"""
    with open(path, 'r', encoding='utf-8') as f:
        for number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].rstrip("\n").strip()
            if line:
                yield number, line


def _check_length(vector: np.ndarray, expected: Optional[int], what: str, path: str, line: int) -> int:
    if expected is not None and vector.shape[0] != expected:
        raise FormatError(f"{what} has {vector.shape[0]} entries, expected {expected}", path, line)
    if not np.all(np.isfinite(vector)):
        raise FormatError(f"{what} contains non-finite entries", path, line)
    return vector.shape[0]


def load_dataset(classes_path, instances_path, split_path) -> Dataset:
    """Read and validate the three dataset files"""
    classes_path, instances_path, split_path = str(classes_path), str(instances_path), str(split_path)

    classes, names, d_s = [], {}, None
    for number, line in _content_lines(classes_path):
        fields = line.split("\t")
        if len(fields) not in (2, 3):
            raise FormatError("expected 'class_id<TAB>psi[<TAB>name]'", classes_path, number)
        label = _parse_int(fields[0], "class id", classes_path, number)
        psi = _parse_vector(fields[1], classes_path, number)
        d_s = _check_length(psi, d_s, f"psi of class {label}", classes_path, number)
        classes.append(ClassEmbedding(label, psi))
        if len(fields) == 3:
            names[label] = fields[2]

    instances, d_t = [], None
    for number, line in _content_lines(instances_path):
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError("expected 'instance_id<TAB>class_id<TAB>phi'", instances_path, number)
        instance_id = _parse_int(fields[0], "instance id", instances_path, number)
        label = _parse_int(fields[1], "class id", instances_path, number) if fields[1].strip() else None
        phi = _parse_vector(fields[2], instances_path, number)
        d_t = _check_length(phi, d_t, f"phi of instance {instance_id}", instances_path, number)
        instances.append(EmbeddedInstance(instance_id, label, phi))

    split: Dict[str, List[int]] = {}
    for number, line in _content_lines(split_path):
        key, sep, values = line.partition(":")
        key = key.strip()
        if not sep or key not in ("seen", "unseen"):
            raise FormatError("expected 'seen: ids' or 'unseen: ids'", split_path, number)
        if key in split:
            raise FormatError(f"'{key}' listed twice", split_path, number)
        split[key] = [_parse_int(v.strip(), "class id", split_path, number) for v in values.split(",") if v.strip()]

    if not classes:
        raise FormatError("no classes defined", classes_path)
    labels = {c.label for c in classes}
    for x in instances:
        if x.label is not None and x.label not in labels:
            raise ValidationError(f"instance {x.id} references unknown class {x.label}")

    dataset = Dataset(
        classes=tuple(classes),
        instances=tuple(instances),
        seen=frozenset(split.get("seen", [])),
        unseen=frozenset(split.get("unseen", [])),
        d_s=d_s,
        d_t=d_t,
        names=names,
    )
    logger.info(
        f"Loaded dataset: {len(dataset.classes)} classes ({len(dataset.seen)} seen, "
        f"{len(dataset.unseen)} unseen), {len(dataset.instances)} instances, d_s={dataset.d_s}, d_t={dataset.d_t}"
    )
    return dataset


def load_dataset_dir(directory) -> Dataset:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory {directory} does not exist")
    return load_dataset(directory / CLASSES_FILE, directory / INSTANCES_FILE, directory / SPLIT_FILE)


def save_dataset(dataset: Dataset, directory) -> Path:
    """Write classes.tsv, instances.tsv and split.txt into `directory`"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / CLASSES_FILE, 'w', encoding='utf-8') as f:
        f.write("# class_id\tpsi\n")
        for c in dataset.classes:
            name = f"\t{dataset.names[c.label]}" if c.label in dataset.names else ""
            f.write(f"{c.label}\t{format_vector(c.psi)}{name}\n")
    with open(directory / INSTANCES_FILE, 'w', encoding='utf-8') as f:
        f.write("# instance_id\tclass_id\tphi\n")
        for x in dataset.instances:
            label = "" if x.label is None else str(x.label)
            f.write(f"{x.id}\t{label}\t{format_vector(x.phi)}\n")
    with open(directory / SPLIT_FILE, 'w', encoding='utf-8') as f:
        f.write(f"seen: {','.join(str(c) for c in sorted(dataset.seen))}\n")
        f.write(f"unseen: {','.join(str(c) for c in sorted(dataset.unseen))}\n")
    logger.info(f"Saved dataset to {directory}")
    return directory


def _model_body(model: WeightModel) -> List[str]:
    return [
        f"d_t: {model.d_t}",
        f"d_s: {model.d_s}",
        f"omega: {format_vector(model.omega.as_tuple())}",
        f"lambda: {format_float(model.lam)}",
    ] + [format_vector(row) for row in model.W]


def _checksum(lines: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(lines).encode('utf-8')).hexdigest()


def save_model(model: WeightModel, path) -> None:
    body = _model_body(model)
    header, rows = body[:4], body[4:]
    with open(path, 'w', encoding='utf-8') as f:
        f.write("# adasim weight model\n")
        f.write(f"format_version: {MODEL_FORMAT_VERSION}\n")
        for line in header:
            f.write(line + "\n")
        f.write(f"checksum: {_checksum(body)}\n")
        f.write("W:\n")
        for row in rows:
            f.write(row + "\n")
    logger.info(f"Saved model to {path}")


def load_model(path) -> WeightModel:
    path = str(path)
    fields: Dict[str, str] = {}
    rows: List[str] = []
    in_matrix = False
    for number, line in _content_lines(path):
        if in_matrix:
            rows.append(line)
            continue
        if line == "W:":
            in_matrix = True
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise FormatError(f"expected 'key: value', got '{line}'", path, number)
        fields[key.strip()] = value.strip()

    version = fields.get("format_version")
    if version is None:
        raise FormatError("missing format_version", path)
    if version != str(MODEL_FORMAT_VERSION):
        raise FormatError(f"unsupported model format version {version}, expected {MODEL_FORMAT_VERSION}", path)
    missing = [key for key in ("d_t", "d_s", "omega", "lambda", "checksum") if key not in fields]
    if missing or not in_matrix:
        raise ChecksumError(f"model file is truncated (missing {missing or ['W']})", path)

    header = [f"d_t: {fields['d_t']}", f"d_s: {fields['d_s']}", f"omega: {fields['omega']}", f"lambda: {fields['lambda']}"]
    if _checksum(header + rows) != fields["checksum"]:
        raise ChecksumError("checksum mismatch, the model file is corrupted", path)

    d_t = _parse_int(fields["d_t"], "d_t", path, None)
    d_s = _parse_int(fields["d_s"], "d_s", path, None)
    W = np.array([_parse_vector(row, path, None) for row in rows], dtype=np.float64).reshape(len(rows), -1)
    if W.shape != (d_t, d_s):
        raise FormatError(f"W has shape {W.shape}, header declares ({d_t}, {d_s})", path)
    model = WeightModel(W=W, omega=OmegaParams.parse(fields["omega"]), lam=float(fields["lambda"]))
    logger.info(f"Loaded model from {path}: d_t={d_t}, d_s={d_s}, omega={model.omega.as_tuple()}")
    return model


@dataclass
class SynthConfig:
    """Parameters of a synthetic zero-shot problem built around a linear map psi -> phi"""
    n_seen: int = 20
    n_unseen: int = 5
    d_s: int = 8
    d_t: int = 16
    instances_per_class: int = 30
    attribute_scale: float = 1.0
    map_noise: float = 0.0
    feature_noise: float = 0.05
    intra_class_spread: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_seen", "n_unseen", "d_s", "d_t", "instances_per_class"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1, got {getattr(self, name)}")
        for name in ("map_noise", "feature_noise", "intra_class_spread"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not self.attribute_scale > 0:
            raise ValidationError(f"attribute_scale must be positive, got {self.attribute_scale}")

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.dump(self.to_dict(), default_flow_style=False)

    @classmethod
    def from_dict(cls, data: Dict) -> 'SynthConfig':
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown generator options {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_yaml(cls, yaml_path: str) -> 'SynthConfig':
        return cls.from_dict(load_yaml_config(yaml_path))


def _sample_problem(config: SynthConfig) -> Tuple[Dataset, np.ndarray]:
    rng = np.random.default_rng(config.seed)
    n_classes = config.n_seen + config.n_unseen
    m = config.instances_per_class

    Psi = rng.uniform(0.0, config.attribute_scale, size=(n_classes, config.d_s))
    M = rng.standard_normal((config.d_t, config.d_s)) / np.sqrt(config.d_s)
    shift = rng.standard_normal((n_classes, config.d_t, config.d_s))
    order = rng.permutation(n_classes)
    spread = rng.standard_normal((n_classes, m, config.d_t))
    noise = rng.standard_normal((n_classes, m, config.d_t))

    classes, instances = [], []
    for c in range(n_classes):
        classes.append(ClassEmbedding(c, Psi[c]))
        center = (M + config.map_noise * shift[c]) @ Psi[c]
        features = center + config.intra_class_spread * spread[c] + config.feature_noise * noise[c]
        for j in range(m):
            instances.append(EmbeddedInstance(c * m + j, c, features[j]))

    dataset = Dataset(
        classes=tuple(classes),
        instances=tuple(instances),
        seen=frozenset(int(c) for c in order[:config.n_seen]),
        unseen=frozenset(int(c) for c in order[config.n_seen:]),
        d_s=config.d_s,
        d_t=config.d_t,
    )
    return dataset, M


def synth_generate(config: SynthConfig) -> Dataset:
    """Synthetic dataset fully determined by `config`"""
    dataset, _ = _sample_problem(config)
    logger.info(f"Generated synthetic dataset with seed {config.seed}: {len(dataset.instances)} instances")
    return dataset


def synth_ground_truth_map(config: SynthConfig) -> np.ndarray:
    """The map M used by `synth_generate` for the same config"""
    _, M = _sample_problem(config)
    return M


def _unit(vector: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Scale to unit l2 norm; returns (vector, was_zero)"""
    norm = np.linalg.norm(vector)
    if norm == 0:
        return vector, True
    if abs(norm - 1.0) <= 1e-12:
        return vector, False
    return vector / norm, False


def apply_standardization(dataset: Dataset, stats: Standardization) -> Dataset:
    """Apply previously computed statistics to another dataset"""
    if stats.mode == "none":
        return replace(dataset, standardization=stats)
    if stats.mode == "zscore-target":
        instances = tuple(
            EmbeddedInstance(x.id, x.label, (x.phi - stats.mean) / stats.scale) for x in dataset.instances
        )
        return replace(dataset, instances=instances, standardization=stats)
    if stats.mode == "unit-norm-both":
        flagged = []
        classes = []
        for c in dataset.classes:
            psi, zero = _unit(c.psi)
            if zero:
                flagged.append(f"psi of class {c.label}")
            classes.append(ClassEmbedding(c.label, psi))
        instances = []
        for x in dataset.instances:
            phi, zero = _unit(x.phi)
            if zero:
                flagged.append(f"phi of instance {x.id}")
            instances.append(EmbeddedInstance(x.id, x.label, phi))
        if flagged:
            logger.warning(f"Left {len(flagged)} zero vectors unnormalized")
        return replace(
            dataset,
            classes=tuple(classes),
            instances=tuple(instances),
            standardization=replace(stats, flagged=tuple(flagged)),
        )
    raise ValidationError(f"unknown standardization mode '{stats.mode}'")


def standardize(dataset: Dataset, mode: StandardizeMode = "none") -> Dataset:
    """Normalize features with statistics from the seen-class training instances"""
    if not dataset.instances:
        raise ValidationError("cannot standardize an empty dataset")
    if mode == "zscore-target":
        training = dataset.training_instances()
        if not training:
            raise ValidationError("zscore-target needs training instances of seen classes")
        Phi = phi_matrix(training, dataset.d_t)
        mean = Phi.mean(axis=0)
        scale = Phi.std(axis=0)
        constant = np.flatnonzero(scale == 0)
        if constant.size:
            logger.warning(f"Target dimensions {constant.tolist()} have zero variance, using unit scale")
            scale[constant] = 1.0
        stats = Standardization(mode, mean, scale, tuple(f"phi[{i}]" for i in constant))
    elif mode in ("none", "unit-norm-both"):
        stats = Standardization(mode)
    else:
        raise ValidationError(f"unknown standardization mode '{mode}'")
    return apply_standardization(dataset, stats)


def export_adapted(
    model: WeightModel,
    dataset: Dataset,
    class_id: int,
    path,
    system: Optional[JointSystem] = None,
) -> None:
    """Write original and adapted features of every instance matched against one class"""
    target = dataset.class_by_label(class_id)
    model.check_dims(dataset.d_t, dataset.d_s)
    system = system or assemble_joint_system(model.W, model.omega)
    if not system.is_pd:
        raise NotPositiveDefiniteError(system.eig_min, system.delta_w, system.omega.w13, system.omega.w24)
    instances = sorted(dataset.instances, key=lambda x: x.id)

    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"# class_id: {class_id}\n")
        f.write("# instance_id\tphi\tz_t\tz_s\n")
        if instances:
            A, B = latent_solutions(system, phi_matrix(instances, dataset.d_t), target.psi[None, :])
            Z = A + B[:, [0]]
            for x, z in zip(instances, Z.T):
                f.write(f"{x.id}\t{format_vector(x.phi)}\t{format_vector(z[:system.d_t])}\t{format_vector(z[system.d_t:])}\n")
    logger.info(f"Exported adapted features of {len(instances)} instances against class {class_id} to {path}")


def write_predictions(results: Sequence[PredictionResult], path) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write("# instance_id\tpredicted\tscores\n")
        for r in results:
            scores = ",".join(f"{label}:{format_float(value)}" for label, value in sorted(r.scores.items()))
            f.write(f"{r.instance_id}\t{r.predicted}\t{scores}\n")
    logger.info(f"Wrote {len(results)} predictions to {path}")


def read_predictions(path) -> List[PredictionResult]:
    path = str(path)
    results = []
    for number, line in _content_lines(path):
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError("expected 'instance_id<TAB>predicted<TAB>scores'", path, number)
        scores = {}
        for item in fields[2].split(","):
            label, sep, value = item.partition(":")
            if not sep:
                raise FormatError(f"invalid score '{item}'", path, number)
            scores[_parse_int(label, "class id", path, number)] = float(value)
        results.append(PredictionResult(
            instance_id=_parse_int(fields[0], "instance id", path, number),
            predicted=_parse_int(fields[1], "class id", path, number),
            scores=scores,
        ))
    return results


def write_metrics(report: MetricsReport, path) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"accuracy\t{format_float(report.accuracy)}\n")
        f.write(f"accuracy_std\t{format_float(report.accuracy_std)}\n")
        f.write(f"macro_precision\t{format_float(report.macro_precision)}\n")
        f.write(f"macro_precision_std\t{format_float(report.macro_precision_std)}\n")
        f.write(f"macro_recall\t{format_float(report.macro_recall)}\n")
        f.write(f"macro_recall_std\t{format_float(report.macro_recall_std)}\n")
        f.write(f"n_instances\t{report.n_instances}\n")
        f.write(f"n_trials\t{report.n_trials}\n")
        f.write("# class_id\tprecision\trecall\tsupport\tprecision_undefined\trecall_undefined\n")
        for label in sorted(report.recall):
            no_precision = "yes" if label in report.undefined_precision else "no"
            no_recall = "yes" if label in report.undefined_recall else "no"
            f.write(
                f"{label}\t{format_float(report.precision[label])}\t{format_float(report.recall[label])}\t"
                f"{report.support.get(label, 0)}\t{no_precision}\t{no_recall}\n"
            )
    logger.info(f"Wrote metrics to {path}")


def write_selection_report(report, path) -> None:
    """One row per candidate, best first; elapsed time is not written"""
    with open(path, 'w', encoding='utf-8') as f:
        f.write("# w1\tw2\tw3\tw4\tcv_mean\tcv_std\teig_min\teig_max\tis_pd\tpreferred\tskipped\tbest\n")
        best = report.best_record
        for r in report.records:
            f.write("\t".join([
                *(format_float(w) for w in r.omega.as_tuple()),
                format_float(r.cv_mean),
                format_float(r.cv_std),
                format_float(r.eig_min),
                format_float(r.eig_max),
                str(r.is_pd).lower(),
                str(r.preferred).lower(),
                str(r.skipped).lower(),
                str(r is best).lower(),
            ]) + "\n")
    logger.info(f"Wrote selection report with {len(report.records)} candidates to {path}")


def write_training_log(state: TrainingState, path) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write("# round\tobjective\tbest_objective\tdelta_w\teig_min\teig_max\tis_pd\tstep_size\n")
        for diag, (_, best) in zip(state.rounds, state.best_trace):
            f.write("\t".join([
                str(diag.round),
                format_float(diag.objective),
                format_float(best),
                format_float(diag.delta_w),
                format_float(diag.eig_min),
                format_float(diag.eig_max),
                str(diag.is_pd).lower(),
                format_float(diag.step_size),
            ]) + "\n")
        f.write(f"# converged: {str(state.converged).lower()}\n")
