"""Scenes, derived Gram matrices, and measurement synthesis.

A scene holds landmark points p_i (measured as homogeneous points) and
inertial direction vectors v_j (measured as homogeneous directions), each
with a positive weight k_i, landmark weights first.  From it we build the
weighted Gram matrix

    AA = sum_i k_i r_i r_i^T = [[A, b], [b^T, d]],

whose blocks carry everything the observers need: the weighted landmark
centroid p_c = b/d, the centering transform g_c = T(I3, p_c), the reduced
matrix Q = A - b b^T / d (positive semi-definite), and
Qbar = (tr(Q) I3 - Q)/2 (positive definite whenever the scene is
observable).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import se3
from .errors import AssumptionViolated, NumericalFailure, PreconditionFailed

# Scale-invariant collinearity threshold on normalized cross products.
COLLINEAR_TOL = 1e-9

# Jacobi convergence: off-diagonal Frobenius norm below this is "diagonal".
JACOBI_OFFDIAG_TOL = 1e-13

# Maximum cyclic Jacobi sweeps before declaring non-convergence.
JACOBI_MAX_SWEEPS = 50

# Eigenvalues closer than this (relative to the spectral scale) are treated
# as one eigenspace and re-based deterministically.
EIG_CLUSTER_TOL = 1e-8


def hom_point(p):
    """Homogeneous point (p, 1)."""
    return np.concatenate([np.asarray(p, dtype=float), [1.0]])


def hom_direction(v):
    """Homogeneous direction (v, 0)."""
    return np.concatenate([np.asarray(v, dtype=float), [0.0]])


@dataclass(frozen=True)
class Scene:
    """Landmarks, inertial vectors (unit by convention), and weights.

    Weights follow the measurement ordering: one per landmark first, then
    one per vector.  Validation enforces the observability assumption: at
    least one landmark, at least three measurements total, and at least two
    non-collinear members of {p_i - p_c} ∪ {v_j}.
    """

    landmarks: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "landmarks",
                           np.atleast_2d(np.asarray(self.landmarks, dtype=float)))
        object.__setattr__(self, "vectors",
                           np.atleast_2d(np.asarray(self.vectors, dtype=float))
                           if len(self.vectors) else np.zeros((0, 3)))
        object.__setattr__(self, "weights",
                           np.asarray(self.weights, dtype=float))
        validate_scene(self)

    @property
    def n_landmarks(self):
        return self.landmarks.shape[0]

    @property
    def n_vectors(self):
        return self.vectors.shape[0]

    @property
    def references(self):
        """Stacked inertial references r_i as an (n, 4) array."""
        return np.vstack([
            np.hstack([self.landmarks, np.ones((self.n_landmarks, 1))]),
            np.hstack([self.vectors, np.zeros((self.n_vectors, 1))]),
        ])


def validate_scene(scene):
    n1, n2 = scene.n_landmarks, scene.n_vectors
    n = n1 + n2
    if n1 < 1:
        raise AssumptionViolated("need at least one landmark")
    if n < 3:
        raise AssumptionViolated(f"need at least 3 measurements, got {n}")
    if scene.weights.shape != (n,):
        raise AssumptionViolated(
            f"need one weight per measurement: {len(scene.weights)} != {n}")
    if not np.all(scene.weights > 0.0):
        raise AssumptionViolated("all weights must be positive")
    if not (np.isfinite(scene.landmarks).all()
            and np.isfinite(scene.vectors).all()):
        raise AssumptionViolated("landmarks/vectors must be finite")

    # the observability test runs on the centered landmark offsets plus the
    # inertial vectors; zero members cannot witness non-collinearity
    d = scene.weights[:n1].sum()
    p_c = scene.weights[:n1] @ scene.landmarks / d
    members = np.vstack([scene.landmarks - p_c, scene.vectors])
    norms = np.linalg.norm(members, axis=1)
    for i in range(len(members)):
        if norms[i] <= COLLINEAR_TOL:
            continue
        for j in range(i + 1, len(members)):
            if norms[j] <= COLLINEAR_TOL:
                continue
            cross = np.linalg.norm(np.cross(members[i], members[j]))
            if cross / (norms[i] * norms[j]) > COLLINEAR_TOL:
                return
    raise AssumptionViolated(
        "scene is unobservable: all centered landmarks and vectors collinear")


@dataclass(frozen=True)
class SceneMatrices:
    """Derived matrices of an observable scene (see module docstring)."""

    A: np.ndarray
    b: np.ndarray
    d: float
    bbA: np.ndarray
    Q: np.ndarray
    Qbar: np.ndarray
    p_c: np.ndarray
    g_c: np.ndarray
    r_bar: np.ndarray
    eig_Q: list = field(repr=False)


def build_scene_matrices(scene):
    """Gram matrix, its blocks, and the eigendecomposition of Q."""
    r = scene.references
    bbA = (scene.weights[:, None] * r).T @ r
    A = bbA[:3, :3].copy()
    b = bbA[:3, 3].copy()
    d = float(bbA[3, 3])
    Q = A - np.outer(b, b) / d
    Qbar = 0.5 * (np.trace(Q) * np.eye(3) - Q)
    p_c = b / d
    g_c = se3.pose(np.eye(3), p_c)
    r_bar = r @ se3.inverse(g_c).T
    eig_Q = eig_sym3(Q)
    return SceneMatrices(A=A, b=b, d=d, bbA=bbA, Q=Q, Qbar=Qbar,
                         p_c=p_c, g_c=g_c, r_bar=r_bar, eig_Q=eig_Q)


# ---------------------------------------------------------------------------
# measurements

def measure_outputs(g, scene, noise_sigma=0.0, rng=None):
    """Body-frame measurements b_i = g^-1 r_i as an (n, 4) array.

    Gaussian noise of standard deviation noise_sigma is added per component
    to the vector part only; the homogeneous flag is never perturbed.
    Deterministic for a given seed: rng may be an integer seed or a
    numpy Generator.
    """
    B = scene.references @ se3.inverse(g).T
    if noise_sigma > 0.0:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        B[:, :3] += noise_sigma * rng.standard_normal((B.shape[0], 3))
    return B


@dataclass(frozen=True)
class BiasModel:
    """Velocity bias b_a(t): constant, or cosine-modulated cos(w_b t) base."""

    base: np.ndarray
    mode: str = "constant"
    omega_b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float))
        if self.base.shape != (6,):
            raise PreconditionFailed("bias base must be a 6-vector")
        if self.mode not in ("constant", "cosine"):
            raise PreconditionFailed(f"unknown bias mode {self.mode!r}")

    def value(self, t):
        if self.mode == "constant":
            return self.base
        return np.cos(self.omega_b * t) * self.base


def measure_velocity(xi_true, bias, t):
    """Biased velocity reading xi_y = xi + b_a(t)."""
    xi_true = np.asarray(xi_true, dtype=float)
    if bias is None:
        return xi_true
    return xi_true + bias.value(t)


# ---------------------------------------------------------------------------
# symmetric 3x3 eigendecomposition

def eig_sym3(m):
    """Eigen-decompose a symmetric 3x3 matrix by cyclic Jacobi rotations.

    Returns three (eigenvalue, unit eigenvector) pairs sorted ascending.
    Within a repeated eigenvalue's eigenspace the basis is rebuilt by
    Gram-Schmidt against the canonical axes in index order, and every
    eigenvector's sign is fixed so its largest-magnitude component is
    positive: downstream code parameterizes jump sets by these vectors, so
    the output must be reproducible to the bit.
    """
    m = np.asarray(m, dtype=float)
    if np.linalg.norm(m - m.T) > 1e-9:
        raise PreconditionFailed("eig_sym3: matrix is not symmetric")
    a = 0.5 * (m + m.T)
    # absolute tolerance per contract, relaxed proportionally for matrices
    # far above unit scale where it would sit below round-off
    tol = max(JACOBI_OFFDIAG_TOL, 5e-16 * np.abs(a).max())
    V = np.eye(3)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.sqrt(2.0 * (a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2))
        if off < tol:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if apq == 0.0:
                continue
            diff = 0.5 * (a[q, q] - a[p, p])
            if abs(diff) > 1e150 * abs(apq):
                # the ratio diff/apq (and its square) would overflow;
                # use the asymptotic small root t ~ 1/(2 theta)
                t = 0.5 * apq / diff
            else:
                theta = diff / apq
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta)
                                          + np.sqrt(theta * theta + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            J = np.eye(3)
            J[p, p] = J[q, q] = c
            J[p, q] = s
            J[q, p] = -s
            a = J.T @ a @ J
            V = V @ J
    else:
        raise NumericalFailure("eig_sym3: Jacobi sweeps did not converge")

    lam = np.diag(a).copy()
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    vecs = V[:, order]

    vecs = _rebase_repeated(lam, vecs)
    for i in range(3):
        k = int(np.argmax(np.abs(vecs[:, i])))
        if vecs[k, i] < 0.0:
            vecs[:, i] = -vecs[:, i]
    return [(float(lam[i]), vecs[:, i].copy()) for i in range(3)]


def _rebase_repeated(lam, vecs):
    """Deterministic basis for each repeated-eigenvalue cluster."""
    # Relative to the spectral scale: an absolute floor would merge the whole
    # spectrum of a matrix smaller than the floor into one spurious cluster.
    ctol = EIG_CLUSTER_TOL * np.abs(lam).max()
    vecs = vecs.copy()
    i = 0
    while i < 3:
        j = i + 1
        while j < 3 and lam[j] - lam[j - 1] <= ctol:
            j += 1
        size = j - i
        if size > 1:
            W = vecs[:, i:j]
            P = W @ W.T  # orthogonal projector onto the eigenspace
            basis = []
            for e in np.eye(3):
                w = P @ e
                for u in basis:
                    w = w - (u @ w) * u
                norm = np.linalg.norm(w)
                if norm > 1e-6:
                    basis.append(w / norm)
                if len(basis) == size:
                    break
            if len(basis) < size:
                raise NumericalFailure("eig_sym3: eigenspace re-basing failed")
            vecs[:, i:j] = np.column_stack(basis)
        i = j
    return vecs
