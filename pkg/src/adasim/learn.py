"""
Latent structural SVM training of the weight matrix W with fixed omega
"""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import yaml

from adasim.adapt import assemble_joint_system, latent_solutions, row_col_l1_bound, score_matrix
from adasim.core import (
    ClassEmbedding,
    Dataset,
    EmbeddedInstance,
    JointSystem,
    OmegaParams,
    RoundDiagnostics,
    TrainingState,
    WeightModel,
    as_matrix,
    phi_matrix,
    psi_matrix,
)
from adasim.errors import NotPositiveDefiniteError, NumericalError, ValidationError
from adasim.utils.util import load_yaml_config

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Configuration for `train`"""
    lam: float = 1.0
    outer_iters: int = 10
    inner_iters: int = 50
    step_size: Optional[float] = None
    pd_margin: float = 0.05
    seed: int = 0
    tol: float = 1e-6
    batch_size: Optional[int] = None

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValidationError(f"lambda must be nonnegative, got {self.lam}")
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ValidationError("outer_iters and inner_iters must be at least 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ValidationError(f"step_size must be positive, got {self.step_size}")
        if not 0 < self.pd_margin < 1:
            raise ValidationError(f"pd_margin must lie in (0, 1), got {self.pd_margin}")
        if not self.tol >= 0:
            raise ValidationError(f"tol must be nonnegative, got {self.tol}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValidationError(f"batch_size must be at least 1, got {self.batch_size}")

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.dump(self.to_dict(), default_flow_style=False)

    @classmethod
    def from_dict(cls, data: Dict) -> 'TrainConfig':
        data = dict(data)
        # "lambda" is the file spelling; an explicit "lam" wins
        if "lambda" in data:
            data.setdefault("lam", data.pop("lambda"))
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown training options {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_yaml(cls, yaml_path: str) -> 'TrainConfig':
        return cls.from_dict(load_yaml_config(yaml_path))


def zero_one_loss(y_true: int, y: int) -> float:
    return 0.0 if y_true == y else 1.0


def _augment(scores: np.ndarray, true_index: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Loss-augmented argmax per row; classes are ordered by label so the first maximum has the smallest id"""
    rows = np.arange(scores.shape[0])
    augmented = scores + 1.0
    augmented[rows, true_index] = scores[rows, true_index]
    y_hat = np.argmax(augmented, axis=1)
    return y_hat, augmented[rows, y_hat]


def _sorted_classes(classes: Sequence[ClassEmbedding]) -> Tuple[ClassEmbedding, ...]:
    if not classes:
        raise ValidationError("loss-augmented inference needs at least one seen class")
    return tuple(sorted(classes, key=lambda c: c.label))


def loss_augmented_argmax(
    model: WeightModel,
    system: JointSystem,
    x: EmbeddedInstance,
    y_true: int,
    seen: Sequence[ClassEmbedding],
) -> Tuple[int, float]:
    """Most violated label for instance x and the resulting slack"""
    classes = _sorted_classes(seen)
    labels = [c.label for c in classes]
    if y_true not in labels:
        raise ValidationError(f"true class {y_true} is not among the seen classes")
    model.check_dims(system.d_t, system.d_s)
    scores = score_matrix(system, x.phi[None, :], psi_matrix(classes))
    true_index = np.array([labels.index(y_true)])
    y_hat, augmented = _augment(scores, true_index)
    slack = max(0.0, float(augmented[0] - scores[0, true_index[0]]))
    return labels[int(y_hat[0])], slack


def _slacks(system: JointSystem, Phi: np.ndarray, Psi: np.ndarray, true_index: np.ndarray) -> np.ndarray:
    scores = score_matrix(system, Phi, Psi)
    _, augmented = _augment(scores, true_index)
    return np.maximum(0.0, augmented - scores[np.arange(len(true_index)), true_index])


def _training_arrays(data: Dataset):
    instances = data.training_instances()
    classes = data.seen_classes()
    labels = [c.label for c in classes]
    Phi = phi_matrix(instances, data.d_t)
    Psi = psi_matrix(classes)
    true_index = np.array([labels.index(x.label) for x in instances], dtype=np.intp)
    return instances, classes, Phi, Psi, true_index


def hinge_objective(model: WeightModel, system: JointSystem, data: Dataset, lam: Optional[float] = None) -> float:
    """lambda/2 ||W||_F^2 plus the sum of margin slacks over the training instances"""
    lam = model.lam if lam is None else lam
    regularizer = 0.5 * lam * float(np.sum(model.W * model.W))
    instances, classes, Phi, Psi, true_index = _training_arrays(data)
    if not instances:
        return regularizer
    model.check_dims(data.d_t, data.d_s)
    return regularizer + float(np.sum(_slacks(system, Phi, Psi, true_index)))


def subgradient_W(
    model: WeightModel,
    system: JointSystem,
    x: EmbeddedInstance,
    y_true: ClassEmbedding,
    y_hat: ClassEmbedding,
) -> np.ndarray:
    """z_t z_s^T at the rival's maximizer minus the same at the true class's maximizer"""
    if not system.is_pd:
        raise NotPositiveDefiniteError(system.eig_min, system.delta_w, system.omega.w13, system.omega.w24)
    model.check_dims(system.d_t, system.d_s)
    if y_hat.label == y_true.label:
        return np.zeros((system.d_t, system.d_s))
    A, B = latent_solutions(system, x.phi[None, :], psi_matrix([y_hat, y_true]))
    z_hat = A[:, 0] + B[:, 0]
    z_true = A[:, 0] + B[:, 1]
    d_t = system.d_t
    return np.outer(z_hat[:d_t], z_hat[d_t:]) - np.outer(z_true[:d_t], z_true[d_t:])


def project_pd(W, omega: OmegaParams, pd_margin: float) -> np.ndarray:
    """Scale W so that H(W, omega) stays strictly diagonally dominant"""
    W = as_matrix(W, "W")
    cap = (1.0 - pd_margin) * min(omega.w13, omega.w24)
    delta_w = row_col_l1_bound(W)
    if delta_w <= cap:
        return W
    return W * (cap / delta_w)


def _penalties(omega: OmegaParams, Phi, Psi_true, Z_t, Z_s) -> np.ndarray:
    """Displacement penalties per instance; Z_t, Z_s hold one column per instance"""
    d_t = Z_t - Phi.T
    d_s = Z_s - Psi_true.T
    return 0.5 * (
        omega.w1 * np.sum(d_t * d_t, axis=0)
        + omega.w2 * np.sum(d_s * d_s, axis=0)
        + omega.w3 * np.sum(Z_t * Z_t, axis=0)
        + omega.w4 * np.sum(Z_s * Z_s, axis=0)
    )


def train(data: Dataset, omega_star: OmegaParams, config: Optional[TrainConfig] = None) -> Tuple[WeightModel, TrainingState]:
    """Minimize the latent structural SVM objective over W

    Each outer round fixes the true-class adapted features at the current W (a concave-convex
    surrogate) and runs projected subgradient steps on the resulting convex upper bound. The
    regularizer enters as a proximal step. The best iterate by the true objective is returned.
    """
    config = config or TrainConfig()
    instances, classes, Phi, Psi, true_index = _training_arrays(data)
    if len(classes) < 2:
        raise ValidationError(f"training needs at least two seen classes, got {len(classes)}")
    if not instances:
        raise ValidationError("training needs at least one instance of a seen class")

    n = len(instances)
    d_t, d_s = data.d_t, data.d_s
    Psi_true = Psi[true_index]
    scale = float(np.mean(np.linalg.norm(Phi, axis=1) * np.linalg.norm(Psi_true, axis=1)))
    eta0 = config.step_size if config.step_size is not None else 0.1 / (scale if scale > 0 else 1.0)
    rng = np.random.default_rng(config.seed)
    lam = config.lam

    def evaluate(W: np.ndarray) -> Tuple[float, np.ndarray, JointSystem]:
        system = assemble_joint_system(W, omega_star)
        slacks = _slacks(system, Phi, Psi, true_index)
        value = 0.5 * lam * float(np.sum(W * W)) + float(np.sum(slacks))
        if not np.isfinite(value):
            raise NumericalError(f"training objective became non-finite (delta_W={system.delta_w:.6g})")
        return value, slacks, system

    W = np.zeros((d_t, d_s))
    value, slacks, system = evaluate(W)
    best_value, best_W, best_slacks = value, W, slacks
    state = TrainingState(slacks=slacks)
    state.objective_trace.append((0, value))
    state.best_trace.append((0, value))
    state.rounds.append(RoundDiagnostics(0, value, system.delta_w, system.eig_min, system.eig_max, system.is_pd, eta0))
    logger.info(f"Initial objective {value:.6g} on {n} instances and {len(classes)} seen classes")

    step = 0
    previous = value
    for outer in range(1, config.outer_iters + 1):
        # Fix the true-class maximizers for this round
        A, B = latent_solutions(system, Phi, Psi)
        Z_t_star = A[:d_t] + B[:d_t, true_index]
        Z_s_star = A[d_t:] + B[d_t:, true_index]
        penalties = _penalties(omega_star, Phi, Psi_true, Z_t_star, Z_s_star)

        eta = eta0
        for inner in range(config.inner_iters):
            if inner > 0:
                system = assemble_joint_system(W, omega_star, spectrum="exact")
            if config.batch_size is None or config.batch_size >= n:
                batch = np.arange(n)
            else:
                batch = np.sort(rng.choice(n, size=config.batch_size, replace=False))

            solutions = latent_solutions(system, Phi[batch], Psi)
            scores = score_matrix(system, Phi[batch], Psi, solutions=solutions)
            y_hat, augmented = _augment(scores, true_index[batch])
            surrogate_true = np.einsum("ij,ik,kj->j", Z_t_star[:, batch], W, Z_s_star[:, batch]) - penalties[batch]
            active = augmented - surrogate_true > 0

            A_b, B_b = solutions
            rows = np.flatnonzero(active)
            Z_t_hat = A_b[:d_t, rows] + B_b[:d_t, y_hat[rows]]
            Z_s_hat = A_b[d_t:, rows] + B_b[d_t:, y_hat[rows]]
            chosen = batch[rows]
            G = Z_t_hat @ Z_s_hat.T - Z_t_star[:, chosen] @ Z_s_star[:, chosen].T
            G *= n / len(batch)

            eta = eta0 / (1.0 + step)
            W = project_pd((W - eta * G) / (1.0 + eta * lam), omega_star, config.pd_margin)
            step += 1
            logger.debug(f"Round {outer} step {inner}: {rows.size} active constraints, eta={eta:.3g}")

        value, slacks, system = evaluate(W)
        state.rounds.append(RoundDiagnostics(outer, value, system.delta_w, system.eig_min, system.eig_max, system.is_pd, eta))
        if value < best_value:
            best_value, best_W, best_slacks = value, W, slacks
        state.objective_trace.append((outer, value))
        state.best_trace.append((outer, best_value))
        logger.info(
            f"Round {outer}: objective {value:.6g} (best {best_value:.6g}), delta_W={system.delta_w:.4g}, "
            f"eig_min={system.eig_min:.4g}, eig_max={system.eig_max:.4g}"
        )

        if abs(previous - value) <= config.tol * max(1.0, abs(previous)):
            state.converged = True
            break
        previous = value

    state.slacks = best_slacks
    return WeightModel(W=best_W, omega=omega_star, lam=lam), state
