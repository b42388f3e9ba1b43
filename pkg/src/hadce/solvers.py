"""Classical channel estimators: full-overhead LS, OMP and SBL.

The sparse solvers work on the per-antenna compressive model
``y = Phi x + n`` with complex ``Phi`` (R x N) and return an angular
estimate ``x_hat``; ``recover_spatial`` maps it back to ``h_hat = B x_hat``.
"""

from dataclasses import dataclass, field

import numpy as np


class SolverError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    max_iters: int = 200
    residual_tol: float = 0.0
    sparsity_k: int | None = None
    prune_threshold: float = 1e8
    gamma_tol: float = 1e-4

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.residual_tol < 0 or self.gamma_tol < 0:
            raise ValueError("tolerances must be non-negative")


@dataclass
class SparseEstimate:
    x_hat: np.ndarray
    support: list = field(default_factory=list)
    hyperparams: np.ndarray | None = None
    iterations_used: int = 0
    residual_norms: list = field(default_factory=list)
    log_evidence: list = field(default_factory=list)


def recover_spatial(x_hat, basis):
    return basis.b @ np.asarray(x_hat)


# --------------------------------------------------------------------------
# Least squares with N/R pilot slots


def dft_slot_matrices(N, R):
    """Analog combiners for LS: row blocks of the unitary N-point DFT.

    Each block has R rows with entries of modulus 1/sqrt(N). When R does
    not divide N the last block wraps around to the first rows.
    """
    k = np.arange(N)
    F = np.exp(-2j * np.pi * np.outer(k, k) / N) / np.sqrt(N)
    n_slots = -(-N // R)
    idx = np.arange(n_slots * R) % N
    return [F[idx[s * R:(s + 1) * R]] for s in range(n_slots)]


def ls_full_overhead(observations, slot_matrices, sigma2=None):
    """Least-squares channel estimate from stacked slot observations.

    Parameters
    ----------
    observations : sequence of arrays
        One length-R (or R x M) observation per slot.
    slot_matrices : sequence of R x N arrays
        The combiner used in each slot.
    sigma2 : float, optional
        Unused by the estimator; accepted so callers can pass the noise
        level alongside the system.

    Returns
    -------
    h_hat : ndarray
        N (or N x M) spatial channel estimate.
    """
    A = np.vstack(slot_matrices)
    y = np.concatenate([np.asarray(o) for o in observations], axis=0)
    N = A.shape[1]
    if A.shape[0] < N or np.linalg.matrix_rank(A) < N:
        raise SolverError("stacked slot matrix is singular")
    if A.shape[0] == N:
        return np.linalg.solve(A, y)
    return np.linalg.lstsq(A, y, rcond=None)[0]


# --------------------------------------------------------------------------
# Orthogonal matching pursuit


def _omp_core(y, phi, k_max, residual_tol, keep_path):
    R, N = phi.shape
    usable = np.any(phi != 0, axis=0)
    r = y.copy()
    support = []
    coef = np.zeros(0, dtype=complex)
    path = []
    res_norms = [float(np.linalg.norm(r))]
    for _ in range(k_max):
        if res_norms[-1] <= residual_tol:
            break
        # Raw (unnormalized) correlation: near-zero columns of a learned
        # Phi must not be boosted into noise-fitting picks.
        corr = np.abs(phi.conj().T @ r)
        corr[support] = -1.0
        corr[~usable] = -1.0
        k = int(np.argmax(corr))
        if corr[k] < 0:
            break
        support.append(k)
        sub = phi[:, support]
        coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(support):
            raise SolverError(f"support submatrix is rank deficient at size {len(support)}")
        r = y - sub @ coef
        res_norms.append(float(np.linalg.norm(r)))
        if keep_path:
            x = np.zeros(N, dtype=complex)
            x[support] = coef
            path.append(x)
    x = np.zeros(N, dtype=complex)
    x[support] = coef
    return x, support, res_norms, path


def omp(y, phi, cfg=None):
    """Orthogonal matching pursuit.

    Atoms are picked by largest correlation ``|phi_k^H r|`` with the residual,
    and the coefficients are refit by least squares on the whole support
    after every pick. Stops after ``cfg.sparsity_k`` atoms, when the
    residual norm drops to ``cfg.residual_tol``, or after ``cfg.max_iters``.
    """
    cfg = cfg or SolverConfig()
    y = np.asarray(y, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    R = phi.shape[0]
    k_max = min(cfg.sparsity_k or R, R, cfg.max_iters)
    x, support, res, _ = _omp_core(y, phi, k_max, cfg.residual_tol, False)
    return SparseEstimate(
        x_hat=x, support=support, iterations_used=len(support), residual_norms=res
    )


def omp_path(y, phi, k_max=None):
    """Estimates for every sparsity level ``1..k_max`` from one greedy run.

    Because OMP's support grows monotonically, the K-sparse solution is the
    K-th iterate of the K_max run. Returns an array ``(k_max, N)``; levels
    the run never reached repeat the last available estimate.
    """
    y = np.asarray(y, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    R, N = phi.shape
    k_max = k_max or R
    _, _, _, path = _omp_core(y, phi, k_max, 0.0, True)
    out = np.zeros((k_max, N), dtype=complex)
    last = np.zeros(N, dtype=complex)
    for k in range(k_max):
        if k < len(path):
            last = path[k]
        out[k] = last
    return out


# --------------------------------------------------------------------------
# Sparse Bayesian learning (EM)


def sbl_log_evidence(y, phi, sigma2, gamma):
    """``log p(y | gamma)`` for ``y ~ CN(0, sigma2 I + Phi diag(1/gamma) Phi^H)``."""
    R = phi.shape[0]
    C = sigma2 * np.eye(R) + (phi / gamma[None, :]) @ phi.conj().T
    sign, logdet = np.linalg.slogdet(C)
    quad = np.real(np.vdot(y, np.linalg.solve(C, y)))
    return float(-R * np.log(np.pi) - logdet - quad)


def sbl_batch(Y, phi, sigma2, cfg=None, track_evidence=False):
    """SBL over many observations sharing one measurement matrix.

    Parameters
    ----------
    Y : ndarray, shape (R, S)
        One observation per column.
    phi : ndarray, shape (R, N)
    sigma2 : float
        Noise variance, assumed known.

    Returns
    -------
    list of SparseEstimate, one per column.

    Notes
    -----
    Each element of ``x`` gets a zero-mean complex Gaussian prior with
    precision ``gamma_n``. The E-step computes the posterior
    ``Sigma = (Phi^H Phi / sigma2 + diag(gamma))^-1`` and
    ``mu = Sigma Phi^H y / sigma2``; the M-step sets
    ``1/gamma_n = |mu_n|^2 + Sigma_nn``, which never decreases the
    evidence. Precisions are capped at ``cfg.prune_threshold``. Posterior
    moments use the R x R Woodbury form so the cost is cubic in R, not N.
    """
    cfg = cfg or SolverConfig()
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim == 1:
        Y = Y[:, None]
    phi = np.asarray(phi, dtype=complex)
    R, N = phi.shape
    S = Y.shape[1]
    var_floor = 1.0 / cfg.prune_threshold

    v = np.ones((S, N))  # prior variances 1/gamma
    mu = np.zeros((S, N), dtype=complex)
    active = np.ones(S, dtype=bool)
    iters = np.zeros(S, dtype=int)
    evidence = [[] for _ in range(S)]
    eye = np.eye(R)
    phi_h = phi.conj().T

    for it in range(1, cfg.max_iters + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        va = v[idx]
        # C_s = sigma2 I + Phi diag(v_s) Phi^H
        pv = phi[None, :, :] * va[:, None, :]
        C = sigma2 * eye[None] + pv @ phi_h[None]
        ya = Y[:, idx].T[:, :, None]
        if track_evidence:
            for j, s in enumerate(idx):
                _, logdet = np.linalg.slogdet(C[j])
                quad = np.real(np.vdot(ya[j, :, 0], np.linalg.solve(C[j], ya[j, :, 0])))
                evidence[s].append(float(-R * np.log(np.pi) - logdet - quad))
        # Solve once for [y, Phi diag(v)] to get mu and diag(Sigma).
        rhs = np.concatenate([ya, pv], axis=2)
        sol = np.linalg.solve(C, rhs)
        mu_a = va * (phi_h[None] @ sol[:, :, :1])[:, :, 0]
        # diag(Sigma) = v - v^2 * diag(Phi^H C^-1 Phi)
        quad_diag = np.real(np.sum(pv.conj() * sol[:, :, 1:], axis=1))
        sig_diag = np.maximum(va - quad_diag, 0.0)
        v_new = np.maximum(np.abs(mu_a) ** 2 + sig_diag, var_floor)
        if not (np.all(np.isfinite(v_new)) and np.all(np.isfinite(mu_a))):
            raise SolverError(f"non-finite SBL update at iteration {it}")
        rel = np.max(np.abs(1.0 / v_new - 1.0 / va) * va, axis=1)
        v[idx] = v_new
        mu[idx] = mu_a
        iters[idx] = it
        done = rel < cfg.gamma_tol
        active[idx[done]] = False

    # Final posterior mean under the converged hyperparameters.
    pv = phi[None, :, :] * v[:, None, :]
    C = sigma2 * eye[None] + pv @ phi_h[None]
    sol = np.linalg.solve(C, Y.T[:, :, None])
    mu = v * (phi_h[None] @ sol)[:, :, 0]
    if track_evidence:
        for s in range(S):
            evidence[s].append(sbl_log_evidence(Y[:, s], phi, sigma2, 1.0 / v[s]))

    return [
        SparseEstimate(
            x_hat=mu[s],
            hyperparams=1.0 / v[s],
            iterations_used=int(iters[s]),
            log_evidence=evidence[s],
        )
        for s in range(S)
    ]


def sbl(y, phi, sigma2, cfg=None, track_evidence=False):
    """Sparse Bayesian learning for a single observation vector."""
    return sbl_batch(np.asarray(y)[:, None], phi, sigma2, cfg, track_evidence)[0]
