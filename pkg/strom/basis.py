"""
Space-Time POD Basis
Spatial modes from the snapshot SVD, temporal modes per spatial mode from the
reshaped right singular vectors
"""

import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .errors import BasisRankError, DegenerateModeError, DimensionMismatchError
from .fom import Trajectory, check_oracle_size
from .model import Mu

logger = logging.getLogger(__name__)

SvdMethod = Literal["auto", "gram", "direct"]

DEGENERATE_RATIO = 1e-13
GRAM_ASPECT = 10


@dataclass(frozen=True)
class SnapshotMatrix:
    data: np.ndarray
    parameter_order: List[Mu]
    n_steps: int

    @property
    def n_mu(self) -> int:
        return len(self.parameter_order)


@dataclass(frozen=True)
class SpaceTimeBasis:
    """Phi_s (N_s x n_s) and temporal bases phi_t[i] (N_t x n_t) per spatial mode"""

    phi_s: np.ndarray
    phi_t: np.ndarray
    spatial_singular_values: np.ndarray
    n_mu: int
    training_mus: List[Mu] = field(default_factory=list)

    @property
    def n_s(self) -> int:
        return self.phi_s.shape[1]

    @property
    def n_t(self) -> int:
        return self.phi_t.shape[2]

    @property
    def space_dim(self) -> int:
        return self.phi_s.shape[0]

    @property
    def n_steps(self) -> int:
        return self.phi_t.shape[1]

    def truncate(self, n_s: int, n_t: int) -> "SpaceTimeBasis":
        """Leading sub-basis; exact because temporal modes of mode i ignore n_s"""
        if not (1 <= n_s <= self.n_s and 1 <= n_t <= self.n_t):
            raise BasisRankError(
                f"cannot truncate ({self.n_s}, {self.n_t}) basis to ({n_s}, {n_t})",
                bound=min(self.n_s, self.n_t),
            )
        return SpaceTimeBasis(
            phi_s=self.phi_s[:, :n_s],
            phi_t=self.phi_t[:n_s, :, :n_t],
            spatial_singular_values=self.spatial_singular_values,
            n_mu=self.n_mu,
            training_mus=list(self.training_mus),
        )


@dataclass(frozen=True)
class DBlock:
    k: int
    j: int
    diag: np.ndarray


def build_snapshots(trajectories: Sequence[Trajectory]) -> SnapshotMatrix:
    if not trajectories:
        raise DimensionMismatchError("at least one trajectory is required")
    first = trajectories[0]
    for traj in trajectories[1:]:
        if traj.states.shape != first.states.shape:
            raise DimensionMismatchError(
                f"trajectory at mu={traj.mu} is {traj.states.shape}, expected {first.states.shape}"
            )
        if not np.array_equal(traj.time_steps, first.time_steps):
            raise DimensionMismatchError(f"trajectory at mu={traj.mu} uses different time steps")

    data = np.hstack([traj.states for traj in trajectories])
    return SnapshotMatrix(
        data=data,
        parameter_order=[traj.mu for traj in trajectories],
        n_steps=first.n_t,
    )


def _fix_signs(left: np.ndarray, right: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Make the largest-magnitude entry of every left vector positive"""
    if left.shape[1] == 0:
        return left, right
    pivots = np.argmax(np.abs(left), axis=0)  # first maximum wins ties
    signs = np.sign(left[pivots, np.arange(left.shape[1])])
    signs[signs == 0] = 1.0
    return left * signs, right * signs


def _thin_svd(data: np.ndarray, method: SvdMethod) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (W, sigma, V) with W, V column-wise singular vectors, sigma descending"""
    n_rows, n_cols = data.shape
    if method == "auto":
        method = "gram" if max(n_rows, n_cols) >= GRAM_ASPECT * min(n_rows, n_cols) else "direct"

    if method == "direct":
        w, sigma, vt = linalg.svd(data, full_matrices=False)
        return w, sigma, vt.T

    if n_rows >= n_cols:
        lam, v = linalg.eigh(data.T @ data)
        lam, v = lam[::-1], v[:, ::-1]
        sigma = np.sqrt(np.clip(lam, 0.0, None))
        w = data @ v
        nonzero = sigma > 0
        w[:, nonzero] /= sigma[nonzero]
        return w, sigma, v

    lam, w = linalg.eigh(data @ data.T)
    lam, w = lam[::-1], w[:, ::-1]
    sigma = np.sqrt(np.clip(lam, 0.0, None))
    v = data.T @ w
    nonzero = sigma > 0
    v[:, nonzero] /= sigma[nonzero]
    return w, sigma, v


def spatial_pod(snapshots: SnapshotMatrix, n_s: int,
                method: SvdMethod = "auto") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Leading n_s left singular vectors, all singular values, leading n_s right vectors"""
    data = snapshots.data
    n_cols = data.shape[1]
    rank_bound = min(data.shape)
    if not 1 <= n_s <= rank_bound:
        raise BasisRankError(f"n_s={n_s} outside [1, min(N_s, n_mu*N_t)]", bound=rank_bound)
    if n_s >= n_cols:
        raise BasisRankError(f"n_s={n_s} must be smaller than n_mu*N_t", bound=n_cols - 1)

    w, sigma, v = _thin_svd(data, method)
    sigma = sigma[:rank_bound]
    if sigma[0] <= 0 or sigma[n_s - 1] < DEGENERATE_RATIO * sigma[0]:
        raise DegenerateModeError(
            f"singular value {n_s} is {sigma[n_s - 1]:.3e}, below {DEGENERATE_RATIO:g} of the largest"
        )

    phi_s, right = _fix_signs(w[:, :n_s], v[:, :n_s])
    logger.debug(f"Spatial POD kept {n_s} of {rank_bound} modes")
    return phi_s, sigma, right


def temporal_bases(right_vectors: np.ndarray, n_s: int, n_t: int,
                   n_mu: int, n_steps: int) -> np.ndarray:
    """phi_t[i] = leading n_t left singular vectors of T_i = [v_i^1 ... v_i^n_mu]"""
    bound = min(n_steps, n_mu)
    if not 1 <= n_t <= bound:
        raise BasisRankError(f"n_t={n_t} exceeds min(N_t, n_mu)", bound=bound)
    if right_vectors.shape[0] != n_mu * n_steps or right_vectors.shape[1] < n_s:
        raise DimensionMismatchError(
            f"right vectors are {right_vectors.shape}, expected ({n_mu * n_steps}, >= {n_s})"
        )

    phi_t = np.empty((n_s, n_steps, n_t))
    for i in range(n_s):
        # segment p of v_i (length N_t) becomes column p of T_i
        t_i = right_vectors[:, i].reshape(n_mu, n_steps).T
        u, _, vt = linalg.svd(t_i, full_matrices=False)
        u, _ = _fix_signs(u[:, :n_t], vt[:n_t].T)
        phi_t[i] = u
    return phi_t


def build_basis(snapshots: SnapshotMatrix, n_s: int, n_t: int,
                method: SvdMethod = "auto") -> SpaceTimeBasis:
    phi_s, sigma, right = spatial_pod(snapshots, n_s, method)
    phi_t = temporal_bases(right, n_s, n_t, snapshots.n_mu, snapshots.n_steps)
    logger.info(
        f"Built space-time basis n_s={n_s}, n_t={n_t} from {snapshots.n_mu} parameter(s)"
    )
    return SpaceTimeBasis(
        phi_s=phi_s,
        phi_t=phi_t,
        spatial_singular_values=sigma,
        n_mu=snapshots.n_mu,
        training_mus=list(snapshots.parameter_order),
    )


def d_tensor(basis: SpaceTimeBasis) -> np.ndarray:
    """All diagonals at once: D[k, j, i] = phi_t[i][k, j], shape (N_t, n_t, n_s)"""
    return np.transpose(basis.phi_t, (1, 2, 0))


def d_block(basis: SpaceTimeBasis, k: int, j: int) -> DBlock:
    """D_k^j with 1-based k and j"""
    if not 1 <= k <= basis.n_steps:
        raise IndexError(f"time index k={k} outside [1, {basis.n_steps}]")
    if not 1 <= j <= basis.n_t:
        raise IndexError(f"temporal index j={j} outside [1, {basis.n_t}]")
    return DBlock(k=k, j=j, diag=basis.phi_t[:, k - 1, j - 1].copy())


def dense_space_time_basis(basis: SpaceTimeBasis, oracle_cap: Optional[int] = None) -> np.ndarray:
    """Phi_st with column i + n_s*j holding phi_t[i][:, j] kron phi_s[:, i]"""
    check_oracle_size(basis.space_dim * basis.n_steps, oracle_cap)
    blocks = np.einsum("si,ikj->ksji", basis.phi_s, basis.phi_t)
    return blocks.reshape(basis.space_dim * basis.n_steps, basis.n_s * basis.n_t)


def captured_energy(singular_values: np.ndarray, n_s: int) -> float:
    energy = np.square(singular_values)
    total = energy.sum()
    return float(energy[:n_s].sum() / total) if total > 0 else 0.0
