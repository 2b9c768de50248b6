"""Reference-driven potential on SE(3) and its jump-set machinery.

The scene's weighted references define the Gram matrix ``A4 = sum_i k_i
r_i r_i^T`` and with it the potential

    U(g) = 1/2 tr((I4 - g) A4 (I4 - g)^T),

which vanishes exactly at the identity and is quadratically sandwiched by
the squared Frobenius distance ``|g|_I^2``.  This module computes U in its
two closed forms (full trace vs. rotation/translation split), the image of
its gradient under the twist projection ``psi``, the critical poses, the
per-direction decrease margin ``delta_Q`` and its min-max value
``delta_star``, the finite set of reset poses used by the hybrid observers,
and sampled/closed-form constants for the quadratic bounds.

All poses are 4x4 homogeneous arrays; direction sets are (m, 3) arrays of
unit rows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import se3
from .errors import GapInfeasible, NumericalFailure, PreconditionFailed
from .scene import EIG_CLUSTER_TOL, Scene, SceneMatrices, build_scene_matrices, eig_sym3

# Relative agreement demanded between two independent closed forms of the
# same quantity (trace vs. split potential, wedge sum vs. gradient formula).
FORMULA_TOL = 1e-10

# Slack accepted on unit-norm direction arguments.
UNIT_TOL = 1e-9

# Grid sizes used to minimize over continua of critical directions when Q
# has repeated eigenvalues: points on the eigen-circle / eigen-sphere.
CIRCLE_GRID = 360
SPHERE_GRID = 1024

# Step of the (rho, phi) grid swept for the extreme eigenvalues of the 2x2
# comparison matrix behind alpha1/alpha2.
ALPHA_GRID_STEP = 1e-3

# Safety factor applied to the strict gap bound (1 - cos theta*) delta_star
# when no explicit gap is requested.
DELTA_SAFETY = 0.9


@dataclass(frozen=True)
class PotentialDef:
    """Scene matrices plus the raw weights/references the measured forms need."""

    matrices: SceneMatrices
    weights: np.ndarray
    r_ref: np.ndarray


@dataclass(frozen=True)
class JumpSetDef:
    """Reset poses and the guaranteed decrease they provide.

    ``Q_list[i]`` rotates by ``theta_star`` about ``U_set[i]`` and translates
    by ``(I3 - R) b / d``, so every reset fixes the scene centroid.  ``delta``
    is the decrease threshold, strictly below ``(1 - cos theta_star) *
    delta_star`` unless explicitly forced to the boundary.
    """

    theta_star: float
    U_set: np.ndarray
    Q_list: list
    delta: float
    delta_star: float


def build_potential(scene: Scene) -> PotentialDef:
    m = build_scene_matrices(scene)
    return PotentialDef(matrices=m, weights=scene.weights.copy(),
                        r_ref=scene.references)


# ---------------------------------------------------------------------------
# potential values
# ---------------------------------------------------------------------------

def potential_value_true(pdef, g):
    """U(g) from the scene matrices, checked against its split form.

    Both ``1/2 tr((I4-g) A4 (I4-g)^T)`` and ``tr(Q(I3-R)) + d/2 ||p_e||^2``
    with ``p_e = p - (I3-R) b/d`` are evaluated; disagreement beyond
    FORMULA_TOL means the scene matrices are inconsistent and raises
    NumericalFailure.
    """
    m = pdef.matrices
    R = g[:3, :3]
    p = g[:3, 3]
    d4 = np.eye(4) - g
    u_trace = 0.5 * np.trace(d4 @ m.bbA @ d4.T)
    p_e = p - (np.eye(3) - R) @ (m.b / m.d)
    u_split = np.trace(m.Q @ (np.eye(3) - R)) + 0.5 * m.d * float(p_e @ p_e)
    if abs(u_trace - u_split) > FORMULA_TOL * max(1.0, abs(u_trace)):
        raise NumericalFailure(
            "potential closed forms disagree: %.17g vs %.17g" % (u_trace, u_split))
    return float(u_trace)


def potential_value_measured(pdef, g_hat, b_meas):
    """1/2 sum_i k_i ||r_i - g_hat b_i||^2 from raw body-frame outputs.

    With noiseless outputs ``b_i = g^{-1} r_i`` this equals
    ``potential_value_true`` at the error ``g g_hat^{-1}``.
    """
    diff = pdef.r_ref - np.asarray(b_meas, dtype=float) @ g_hat.T
    return float(0.5 * pdef.weights @ np.einsum("ij,ij->i", diff, diff))


def potential_value_centered(pdef, g):
    """Potential built on the centroid-frame references (Gram diag(Q, d)).

    Evaluated at the centered error ``g_c^{-1} g~ g_c`` it reproduces
    ``potential_value_true(pdef, g~)``.
    """
    m = pdef.matrices
    a_bar = np.zeros((4, 4))
    a_bar[:3, :3] = m.Q
    a_bar[3, 3] = m.d
    d4 = np.eye(4) - g
    return float(0.5 * np.trace(d4 @ a_bar @ d4.T))


# ---------------------------------------------------------------------------
# gradient images under psi
# ---------------------------------------------------------------------------

def grad_psi_true(pdef, g):
    """psi(g^{-1} grad U(g)) = 1/2 [2 psi_a(Q R) + b^x R^T p_e ; d R^T p_e]."""
    m = pdef.matrices
    R = g[:3, :3]
    p = g[:3, 3]
    p_e = p - (np.eye(3) - R) @ (m.b / m.d)
    rot = se3.psi_a(m.Q @ R) + 0.5 * np.cross(m.b, R.T @ p_e)
    return np.concatenate([rot, 0.5 * m.d * (R.T @ p_e)])


def grad_psi_coadjoint_true(pdef, g):
    """Ad*_{g^{-1}} psi(g^{-1} grad U(g)) = 1/2 [2 R psi_a(Q R) + b^x p_e ; d p_e]."""
    m = pdef.matrices
    R = g[:3, :3]
    p = g[:3, 3]
    p_e = p - (np.eye(3) - R) @ (m.b / m.d)
    rot = R @ se3.psi_a(m.Q @ R) + 0.5 * np.cross(m.b, p_e)
    return np.concatenate([rot, 0.5 * m.d * p_e])


def grad_psi_measured(pdef, g_hat, b_meas):
    """psi of the error gradient from measurements: 1/2 sum k_i (g_hat b_i) ^ r_i."""
    moved = np.asarray(b_meas, dtype=float) @ g_hat.T
    return 0.5 * se3.hom_wedge_sum(pdef.weights, moved, pdef.r_ref)


def grad_psi_adjoint_measured(pdef, g_hat, b_meas):
    """Ad*_{g_hat} image of the same gradient: 1/2 sum k_i b_i ^ (g_hat^{-1} r_i)."""
    pulled = pdef.r_ref @ se3.inverse(g_hat).T
    return 0.5 * se3.hom_wedge_sum(pdef.weights, np.asarray(b_meas, dtype=float), pulled)


def grad_psi_centered_measured(pdef, g_hat, b_meas):
    """Centered-frame gradient image: 1/2 sum k_i (g_c^{-1} g_hat b_i) ^ (g_c^{-1} r_i)."""
    m = pdef.matrices
    moved = np.asarray(b_meas, dtype=float) @ se3.compose(se3.inverse(m.g_c), g_hat).T
    return 0.5 * se3.hom_wedge_sum(pdef.weights, moved, m.r_bar)


def grad_psi_centered_true(pdef, g):
    """psi(g^{-1} grad U_c(g)) for the centered potential: [psi_a(Q R); d/2 R^T p].

    Closed form of ``grad_psi_true`` specialized to the centroid-frame Gram
    matrix diag(Q, d), whose translation offset vanishes.  Evaluated at the
    centered error it matches ``grad_psi_centered_measured`` on noiseless
    outputs.
    """
    m = pdef.matrices
    R = g[:3, :3]
    p = g[:3, 3]
    return np.concatenate([se3.psi_a(m.Q @ R), 0.5 * m.d * (R.T @ p)])


# ---------------------------------------------------------------------------
# critical poses and decrease margins
# ---------------------------------------------------------------------------

def critical_set(pdef):
    """Identity plus the three half-turn poses about the eigenvectors of Q.

    Each undesired critical pose rotates by pi about an eigenvector v and
    translates by ``(I3 - R) b / d``; the gradient vanishes there.
    """
    m = pdef.matrices
    poses = [se3.identity_pose()]
    for _, v in m.eig_Q:
        R = se3.angle_axis(np.pi, v)
        poses.append(se3.pose(R, (np.eye(3) - R) @ (m.b / m.d)))
    return poses


def _check_unit_rows(U):
    norms = np.linalg.norm(U, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise PreconditionFailed("direction vectors must be unit norm")


def delta_Q(Q, u, v):
    """Decrease margin u^T ((tr Q - 2 v^T Q v) I3 - Q + 2 Q v v^T) u.

    At a critical direction v, rotating the error by theta about u lowers
    the potential by ``(1 - cos theta) delta_Q(Q, u, v)``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (3,) or v.shape != (3,):
        raise PreconditionFailed("directions must be 3-vectors")
    _check_unit_rows(np.vstack([u, v]))
    core = (np.trace(Q) - 2.0 * float(v @ Q @ v)) * np.eye(3) - Q \
        + 2.0 * np.outer(Q @ v, v)
    return float(u @ core @ u)


def _delta_grid(Q, U, V):
    """delta_Q for all row pairs: U is (k, 3), V is (m, 3), result (k, m)."""
    uQu = np.einsum("ij,ij->i", U @ Q, U)
    vQv = np.einsum("ij,ij->i", V @ Q, V)
    cross = (U @ Q @ V.T) * (U @ V.T)
    return (np.trace(Q) - 2.0 * vQv)[None, :] - uQu[:, None] + 2.0 * cross


def _fibonacci_sphere(n):
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    th = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(th), r * np.sin(th), z])


def _circle_grid(e1, e2, n):
    # Directions enter quadratically, so [0, pi) covers the whole circle.
    phi = np.linspace(0.0, np.pi, n, endpoint=False)
    return np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2


def _is_orthonormal_triad(U):
    return U.shape[0] == 3 and np.max(np.abs(U @ U.T - np.eye(3))) <= UNIT_TOL


def _matches_double_structure(U, w):
    """True when U is an orthonormal triad with one member along w."""
    if U.shape[0] != 3:
        return False
    aligned = np.abs(U @ w)
    on_axis = np.flatnonzero(aligned >= 1.0 - UNIT_TOL)
    in_plane = np.flatnonzero(aligned <= UNIT_TOL)
    if on_axis.size != 1 or in_plane.size != 2:
        return False
    u1, u2 = U[in_plane]
    return abs(float(u1 @ u2)) <= UNIT_TOL


def _crosscheck_grid(closed, grid, lam_max):
    # The grid minimizes over a finite subset of the critical directions, so
    # it can only overshoot the closed value by the discretization error.
    if grid < closed - 1e-9 * max(1.0, lam_max) \
            or grid > closed + 0.05 * max(1.0, lam_max):
        raise NumericalFailure(
            "grid minimum %.12g inconsistent with closed-form value %.12g"
            % (grid, closed))


def delta_star(Q, U_set):
    """min over critical directions v of max over u in U_set of delta_Q(Q, u, v).

    With three distinct eigenvalues the critical directions are the three
    eigenvectors and the value is an exact enumeration.  Repeated
    eigenvalues make the critical set a circle or the whole sphere; when
    U_set is an orthonormal triad compatible with the eigenstructure the
    exact case values are returned (cross-checked against a dense grid),
    otherwise the grid minimum itself is returned.
    """
    U = np.atleast_2d(np.asarray(U_set, dtype=float))
    if U.shape[0] < 1 or U.shape[1] != 3:
        raise PreconditionFailed("U_set must be a nonempty list of 3-vectors")
    _check_unit_rows(U)
    eig = eig_sym3(Q)
    lam = np.array([pair[0] for pair in eig])
    vecs = np.column_stack([pair[1] for pair in eig])
    scale = max(1.0, float(np.abs(lam).max()))
    if lam[0] < -1e-12 * scale:
        raise PreconditionFailed("Q must be positive semidefinite")
    lam = np.clip(lam, 0.0, None)
    tol = EIG_CLUSTER_TOL * scale
    low_pair = lam[1] - lam[0] <= tol
    high_pair = lam[2] - lam[1] <= tol

    if not low_pair and not high_pair:
        # Distinct spectrum: exact for any direction set.
        return float(_delta_grid(Q, U, vecs.T).max(axis=0).min())

    if low_pair and high_pair:
        # Isotropic Q: every direction is critical.
        grid = float(_delta_grid(Q, U, _fibonacci_sphere(SPHERE_GRID)).max(axis=0).min())
        if _is_orthonormal_triad(U):
            closed = (2.0 / 3.0) * float(lam.mean())
            _crosscheck_grid(closed, grid, float(lam[2]))
            return closed
        return grid

    # One repeated pair: critical directions are the isolated eigenvector
    # plus the circle spanned by the repeated pair.
    if low_pair:
        rep, iso = (0, 1), 2
    else:
        rep, iso = (1, 2), 0
    w = vecs[:, iso]
    circle = _circle_grid(vecs[:, rep[0]], vecs[:, rep[1]], CIRCLE_GRID)
    v_grid = np.vstack([w, circle])
    grid = float(_delta_grid(Q, U, v_grid).max(axis=0).min())
    if _matches_double_structure(U, w):
        lam_rep = float(lam[list(rep)].mean())
        closed = min(2.0 * lam_rep, float(lam[iso]))
        _crosscheck_grid(closed, grid, float(lam[2]))
        return closed
    return grid


# ---------------------------------------------------------------------------
# jump set construction
# ---------------------------------------------------------------------------

def build_jump_set(pdef, theta_star, U_choice="eigenbasis", delta=None):
    """Assemble the reset poses and validate the decrease threshold.

    ``U_choice`` is "eigenbasis" (eigenvectors of Q), "canonical" (standard
    basis; requires tr(Q) - 2 lambda_max > 0), or an explicit (m, 3) array
    of unit directions.  When ``delta`` is omitted it defaults to
    DELTA_SAFETY times the strict bound ``(1 - cos theta_star) delta_star``;
    a supplied value at the boundary only warns, beyond it raises
    GapInfeasible.
    """
    if not 0.0 < theta_star <= np.pi:
        raise PreconditionFailed("theta_star must lie in (0, pi]")
    m = pdef.matrices
    if isinstance(U_choice, str):
        if U_choice == "eigenbasis":
            U = np.vstack([v for _, v in m.eig_Q])
        elif U_choice == "canonical":
            lam_max = m.eig_Q[2][0]
            if np.trace(m.Q) - 2.0 * lam_max <= 0.0:
                raise PreconditionFailed(
                    "canonical directions need tr(Q) - 2 lambda_max > 0")
            U = np.eye(3)
        else:
            raise PreconditionFailed(
                "U_choice must be 'eigenbasis', 'canonical', or an array")
    else:
        U = np.atleast_2d(np.asarray(U_choice, dtype=float))
        if U.shape[1] != 3:
            raise PreconditionFailed("custom directions must be 3-vectors")
        _check_unit_rows(U)

    ds = delta_star(m.Q, U)
    if ds <= 0.0:
        raise GapInfeasible(
            "jump directions give no uniform decrease (delta_star = %.3g)" % ds)
    bound = (1.0 - np.cos(theta_star)) * ds
    if delta is None:
        delta = DELTA_SAFETY * bound
    delta = float(delta)
    if delta <= 0.0:
        raise GapInfeasible("delta must be positive")
    if delta > bound * (1.0 + 1e-9):
        raise GapInfeasible(
            "delta %.6g exceeds the strict bound %.6g" % (delta, bound))
    if delta >= bound * (1.0 - 1e-9):
        warnings.warn(
            "delta %.6g sits at the non-strict bound %.6g; the guaranteed "
            "decrease degenerates" % (delta, bound))

    poses = []
    for u in U:
        R = se3.angle_axis(theta_star, u / np.linalg.norm(u))
        poses.append(se3.pose(R, (np.eye(3) - R) @ (m.b / m.d)))
    return JumpSetDef(theta_star=float(theta_star), U_set=U, Q_list=poses,
                      delta=delta, delta_star=float(ds))


def true_gap(pdef, jump_set, g):
    """U(g) minus the best reachable value min_q U(g g_q)."""
    base = potential_value_true(pdef, g)
    best = min(potential_value_true(pdef, se3.compose(g, gq))
               for gq in jump_set.Q_list)
    return base - best


def in_upsilon(pdef, jump_set, g):
    """Membership in the flow region: no reset improves U by more than delta."""
    return true_gap(pdef, jump_set, g) <= jump_set.delta


# ---------------------------------------------------------------------------
# quadratic bound constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlphaBounds:
    """Constants of the quadratic sandwich and gradient bounds.

    alpha1/alpha2 come from closed forms (worst case of a 2x2 comparison
    matrix over a dense grid); alpha3/alpha4 are empirical extremes over
    sampled poses because the gradient lower bound only holds on the flow
    region, which is defined by the jump set.
    """

    alpha1: float
    alpha2: float
    alpha3: float | None
    alpha4: float
    s1: float
    s2: float
    n_upsilon: int


def _theta1_extremes(rho_max):
    """Extreme eigenvalues of [[1, -r c], [-r c, 1 + r^2]] over the grid."""
    rho = np.arange(0.0, rho_max + ALPHA_GRID_STEP, ALPHA_GRID_STEP)
    cos2 = np.cos(np.arange(0.0, np.pi + ALPHA_GRID_STEP, ALPHA_GRID_STEP)) ** 2
    lo, hi = np.inf, -np.inf
    for start in range(0, rho.size, 512):
        r2 = rho[start:start + 512, None] ** 2
        disc = np.sqrt(r2 * r2 + 4.0 * r2 * cos2[None, :])
        lo = min(lo, 0.5 * float((2.0 + r2 - disc).min()))
        hi = max(hi, 0.5 * float((2.0 + r2 + disc).max()))
    return min(1.0, lo), max(1.0, hi)


def _sample_pose(rng, m, spread=2.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    R = se3.angle_axis(rng.uniform(0.0, np.pi), axis)
    p = (np.eye(3) - R) @ (m.b / m.d) + rng.normal(scale=spread, size=3)
    return se3.pose(R, p)


def alpha_bounds(pdef, jump_set=None, n_samples=2000, rng=None):
    """Quadratic sandwich constants plus sampled gradient-bound extremes.

    alpha1 |g|_I^2 <= U(g) <= alpha2 |g|_I^2 globally.  alpha4 caps
    ||psi||^2 / |g|_I^2 and its coadjoint image over sampled poses; alpha3
    is the sampled minimum of the same ratio restricted to the flow region
    and needs a jump_set (None otherwise).
    """
    m = pdef.matrices
    s1, s2 = _theta1_extremes(float(np.linalg.norm(m.b) / m.d))
    lam_bar = [pair[0] for pair in eig_sym3(m.Qbar)]
    alpha1 = min(0.5 * lam_bar[0], 0.5 * m.d) * s1
    alpha2 = max(0.5 * lam_bar[2], 0.5 * m.d) * s2

    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    alpha4 = 0.0
    for _ in range(n_samples):
        g = _sample_pose(rng, m)
        w = se3.dist_identity(g) ** 2
        if w < 1e-12:
            continue
        grad = grad_psi_true(pdef, g)
        co = grad_psi_coadjoint_true(pdef, g)
        alpha4 = max(alpha4, max(float(grad @ grad), float(co @ co)) / w)

    alpha3 = None
    n_upsilon = 0
    if jump_set is not None:
        ratios = []
        attempts = 0
        while len(ratios) < n_samples and attempts < 50 * n_samples:
            attempts += 1
            g = _sample_pose(rng, m)
            w = se3.dist_identity(g) ** 2
            if w < 1e-12 or true_gap(pdef, jump_set, g) > jump_set.delta:
                continue
            grad = grad_psi_true(pdef, g)
            ratios.append(float(grad @ grad) / w)
        if len(ratios) < max(100, n_samples // 10):
            raise NumericalFailure("too few flow-region samples accepted")
        alpha3 = min(ratios)
        n_upsilon = len(ratios)

    return AlphaBounds(alpha1=float(alpha1), alpha2=float(alpha2),
                       alpha3=alpha3, alpha4=float(alpha4),
                       s1=float(s1), s2=float(s2), n_upsilon=n_upsilon)
