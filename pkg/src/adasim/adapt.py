"""
Joint system assembly, adapted features and the adaptive similarity function
"""
import logging
from typing import Literal, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigvalsh, pinvh
from scipy.sparse.linalg import eigsh

from adasim.core import (
    AdaptedPair,
    DomainSpec,
    Factorization,
    JointSystem,
    OmegaParams,
    PairAssembly,
    as_matrix,
    as_vector,
)
from adasim.errors import DimensionError, DivergenceError, NotPositiveDefiniteError, NumericalError, ValidationError

logger = logging.getLogger(__name__)

# Above this many rows of H the spectrum is estimated instead of computed in full
EXACT_SPECTRUM_LIMIT = 2048

Spectrum = Literal["auto", "exact", "bound"]


def row_col_l1_bound(W) -> float:
    """Largest l1 norm over the rows and the columns of W"""
    W = as_matrix(W, "W")
    if W.size == 0:
        return 0.0
    absolute = np.abs(W)
    return float(max(absolute.sum(axis=1).max(), absolute.sum(axis=0).max()))


def _largest_singular_value(W: np.ndarray) -> float:
    gram = W.T @ W if W.shape[1] <= W.shape[0] else W @ W.T
    if gram.shape[0] <= 2:
        return float(np.sqrt(max(eigvalsh(gram)[-1], 0.0)))
    top = eigsh(gram, k=1, which="LA", return_eigenvectors=False)[0]
    return float(np.sqrt(max(top, 0.0)))


def _spectrum_bounds(W: np.ndarray, omega: OmegaParams) -> Tuple[float, float]:
    # Each singular value s of W pairs up eigenvalues of H as roots of (l - w13)(l - w24) = s^2,
    # so the extremes follow from the largest singular value alone.
    sigma = _largest_singular_value(W)
    mid = 0.5 * (omega.w13 + omega.w24)
    radius = 0.5 * np.sqrt((omega.w13 - omega.w24) ** 2 + 4.0 * sigma ** 2)
    return float(mid - radius), float(mid + radius)


def _factorize(H: np.ndarray, is_pd: bool) -> Factorization:
    if is_pd:
        try:
            return Factorization("cholesky", cho_factor(H, lower=True, check_finite=False))
        except LinAlgError:
            logger.warning("Cholesky factorization failed on a nominally PD system, using pseudo-inverse")
    try:
        return Factorization("pinv", pinvh(H))
    except LinAlgError as e:
        raise NumericalError(f"pseudo-inverse of H failed: {e}") from e


def assemble_joint_system(W, omega: OmegaParams, spectrum: Spectrum = "auto") -> JointSystem:
    """Build H from (W, omega), factorize it once and record definiteness diagnostics"""
    W = as_matrix(W, "W")
    d_t, d_s = W.shape
    H = np.block([
        [omega.w13 * np.eye(d_t), -W],
        [-W.T, omega.w24 * np.eye(d_s)],
    ])
    H.setflags(write=False)

    delta_w = row_col_l1_bound(W)
    if delta_w > 0:
        is_diag_dominant = omega.w13 > delta_w and omega.w24 > delta_w
    else:
        is_diag_dominant = True

    approximate = spectrum == "bound" or (spectrum == "auto" and H.shape[0] > EXACT_SPECTRUM_LIMIT)
    if approximate:
        eig_min, eig_max = _spectrum_bounds(W, omega)
        logger.debug("Estimated spectrum of H (%d rows): [%g, %g]", H.shape[0], eig_min, eig_max)
    else:
        try:
            eigenvalues = eigvalsh(H)
        except LinAlgError as e:
            raise NumericalError(f"eigenvalues of H did not converge: {e}") from e
        eig_min, eig_max = float(eigenvalues[0]), float(eigenvalues[-1])

    is_pd = eig_min > 0
    return JointSystem(
        W=W,
        omega=omega,
        H=H,
        factorization=_factorize(H, is_pd),
        delta_w=delta_w,
        eig_min=eig_min,
        eig_max=eig_max,
        is_pd=is_pd,
        is_diag_dominant=is_diag_dominant,
        approximate=approximate,
    )


def assemble_pair(phi, psi, omega: OmegaParams) -> PairAssembly:
    """Linear term g and constant h of the objective rewritten with H"""
    phi = as_vector(phi, "phi")
    psi = as_vector(psi, "psi")
    g = np.concatenate([omega.w1 * phi, omega.w2 * psi])
    g.setflags(write=False)
    h = 0.5 * omega.w1 * float(phi @ phi) + 0.5 * omega.w2 * float(psi @ psi)
    return PairAssembly(g=g, h=h, phi=phi, psi=psi, omega=omega)


def solve(system: JointSystem, G: np.ndarray, allow_indefinite: bool = False) -> np.ndarray:
    """Solve H Z = G with the stored factorization"""
    if not system.is_pd and not allow_indefinite:
        raise NotPositiveDefiniteError(system.eig_min, system.delta_w, system.omega.w13, system.omega.w24)
    if G.shape[0] != system.H.shape[0]:
        raise DimensionError(f"right-hand side has {G.shape[0]} rows, H has {system.H.shape[0]}")
    if system.factorization.kind == "cholesky":
        return cho_solve(system.factorization.payload, G, check_finite=False)
    return system.factorization.payload @ G


def _check_pair(system: JointSystem, pair: PairAssembly) -> None:
    if pair.phi.shape[0] != system.d_t or pair.psi.shape[0] != system.d_s:
        raise DimensionError(
            f"pair has d_t={pair.phi.shape[0]}, d_s={pair.psi.shape[0]}; "
            f"system has d_t={system.d_t}, d_s={system.d_s}"
        )
    if pair.omega != system.omega:
        raise ValidationError("pair and system were assembled with different omega")


def objective_value(W, omega: OmegaParams, phi, psi, z_t, z_s) -> float:
    """Penalized bilinear score of the adapted pair (z_t, z_s)"""
    W = np.asarray(W, dtype=np.float64)
    phi, psi = np.asarray(phi, dtype=np.float64), np.asarray(psi, dtype=np.float64)
    z_t, z_s = np.asarray(z_t, dtype=np.float64), np.asarray(z_s, dtype=np.float64)
    if W.ndim != 2 or phi.shape != z_t.shape or psi.shape != z_s.shape or W.shape != (phi.shape[0], psi.shape[0]):
        raise DimensionError(
            f"inconsistent shapes: W {W.shape}, phi {phi.shape}, psi {psi.shape}, "
            f"z_t {z_t.shape}, z_s {z_s.shape}"
        )
    d_t = z_t - phi
    d_s = z_s - psi
    return float(
        z_t @ W @ z_s
        - 0.5 * omega.w1 * (d_t @ d_t)
        - 0.5 * omega.w2 * (d_s @ d_s)
        - 0.5 * omega.w3 * (z_t @ z_t)
        - 0.5 * omega.w4 * (z_s @ z_s)
    )


def adapt_closed_form(system: JointSystem, pair: PairAssembly, allow_indefinite: bool = False) -> AdaptedPair:
    """Global maximizer z = H^-1 g for an unbounded domain"""
    _check_pair(system, pair)
    z = solve(system, pair.g, allow_indefinite=allow_indefinite)
    z_t, z_s = z[:system.d_t].copy(), z[system.d_t:].copy()
    if not system.is_pd:
        logger.warning("Adapted features computed by pseudo-inverse on an indefinite system")
    return AdaptedPair(
        z_t=z_t,
        z_s=z_s,
        objective=objective_value(system.W, system.omega, pair.phi, pair.psi, z_t, z_s),
        indefinite=not system.is_pd,
    )


def _project_ball(z: np.ndarray, radius: Optional[float]) -> np.ndarray:
    if radius is None:
        return z
    norm = np.linalg.norm(z)
    if norm > radius:
        return z * (radius / norm)
    return z


def adapt_alternating(
    W,
    omega: OmegaParams,
    phi,
    psi,
    domain: Optional[DomainSpec] = None,
    init=None,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> AdaptedPair:
    """Alternate exact maximization over z_t and z_s, projecting onto the domain balls"""
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ValidationError(f"max_iter must be at least 1, got {max_iter}")
    W = as_matrix(W, "W")
    phi = as_vector(phi, "phi", W.shape[0])
    psi = as_vector(psi, "psi", W.shape[1])
    domain = domain or DomainSpec()

    z_s = _project_ball(psi.copy() if init is None else np.array(as_vector(init, "init", W.shape[1])), domain.gamma_s)
    z_t = phi.copy()
    trace = []
    converged = False
    with np.errstate(over="ignore", invalid="ignore"):
        for iteration in range(1, max_iter + 1):
            next_t = _project_ball((omega.w1 * phi + W @ z_s) / omega.w13, domain.gamma_t)
            next_s = _project_ball((omega.w2 * psi + W.T @ next_t) / omega.w24, domain.gamma_s)
            if not (np.all(np.isfinite(next_t)) and np.all(np.isfinite(next_s))):
                raise DivergenceError(iteration)
            value = objective_value(W, omega, phi, psi, next_t, next_s)
            if not np.isfinite(value):
                raise DivergenceError(iteration)
            trace.append(value)

            change = max(np.max(np.abs(next_t - z_t), initial=0.0), np.max(np.abs(next_s - z_s), initial=0.0))
            z_t, z_s = next_t, next_s
            if change < tol:
                converged = True
                break

    if not converged:
        logger.warning(f"Alternating optimization stopped after {max_iter} iterations without converging")
    return AdaptedPair(z_t=z_t, z_s=z_s, objective=trace[-1], trace=trace, converged=converged)


def similarity(system: JointSystem, pair: PairAssembly, allow_indefinite: bool = False) -> float:
    """Adaptive similarity F = 1/2 g^T H^-1 g - h"""
    _check_pair(system, pair)
    z = solve(system, pair.g, allow_indefinite=allow_indefinite)
    return float(0.5 * (pair.g @ z) - pair.h)


def latent_solutions(
    system: JointSystem, Phi: np.ndarray, Psi: np.ndarray, allow_indefinite: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """Solve blocks A = H^-1 [w1 Phi^T; 0] and B = H^-1 [0; w2 Psi^T]

    The maximizer for instance i and class c is the column sum A[:, i] + B[:, c].
    """
    Phi = np.atleast_2d(np.asarray(Phi, dtype=np.float64))
    Psi = np.atleast_2d(np.asarray(Psi, dtype=np.float64))
    if Phi.shape[1] != system.d_t or Psi.shape[1] != system.d_s:
        raise DimensionError(
            f"features have d_t={Phi.shape[1]}, attributes d_s={Psi.shape[1]}; "
            f"system has d_t={system.d_t}, d_s={system.d_s}"
        )
    G_instances = np.vstack([system.omega.w1 * Phi.T, np.zeros((system.d_s, Phi.shape[0]))])
    G_classes = np.vstack([np.zeros((system.d_t, Psi.shape[0])), system.omega.w2 * Psi.T])
    A = solve(system, G_instances, allow_indefinite=allow_indefinite)
    B = solve(system, G_classes, allow_indefinite=allow_indefinite)
    return A, B


def score_matrix(
    system: JointSystem,
    Phi,
    Psi,
    allow_indefinite: bool = False,
    solutions: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> np.ndarray:
    """Adaptive similarity for every (instance row of Phi, class row of Psi) pair

    `solutions` may carry the blocks already returned by `latent_solutions` for the same inputs.
    """
    Phi = np.atleast_2d(np.asarray(Phi, dtype=np.float64))
    Psi = np.atleast_2d(np.asarray(Psi, dtype=np.float64))
    if solutions is None:
        solutions = latent_solutions(system, Phi, Psi, allow_indefinite=allow_indefinite)
    A, B = solutions
    w1, w2 = system.omega.w1, system.omega.w2
    d_t = system.d_t
    # H^-1 is symmetric, so g_c^T A_i = g_i^T B_c and the cross term is one product.
    instance_terms = 0.5 * w1 * np.einsum("ij,ji->i", Phi, A[:d_t]) - 0.5 * w1 * np.einsum("ij,ij->i", Phi, Phi)
    class_terms = 0.5 * w2 * np.einsum("ij,ji->i", Psi, B[d_t:]) - 0.5 * w2 * np.einsum("ij,ij->i", Psi, Psi)
    cross = w1 * (Phi @ B[:d_t])
    return instance_terms[:, None] + cross + class_terms[None, :]


def bilinear_limit(W, phi, psi) -> float:
    """Compatibility phi^T W psi, the limit of the adaptive similarity for large w1, w2"""
    W = as_matrix(W, "W")
    phi = as_vector(phi, "phi", W.shape[0])
    psi = as_vector(psi, "psi", W.shape[1])
    return float(phi @ W @ psi)


def bilinear_scores(W, Phi, Psi) -> np.ndarray:
    """phi^T W psi for every instance row of Phi and class row of Psi"""
    W = as_matrix(W, "W")
    Phi = np.atleast_2d(np.asarray(Phi, dtype=np.float64))
    Psi = np.atleast_2d(np.asarray(Psi, dtype=np.float64))
    if Phi.shape[1] != W.shape[0] or Psi.shape[1] != W.shape[1]:
        raise DimensionError(f"W has shape {W.shape}, features {Phi.shape}, attributes {Psi.shape}")
    return Phi @ W @ Psi.T
