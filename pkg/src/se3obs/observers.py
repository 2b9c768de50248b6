"""The four pose/bias estimation laws: flow fields, jump tests, reset maps.

Every variant shares the generic structure

    d/dt g_hat = g_hat (xi_y - b_hat + k_beta * beta)^wedge,
    d/dt b_hat = -Gamma sigma_b,

and they differ only in where the correction pair (beta, sigma_b) is
expressed:

* ``S``   -- smooth estimate-frame correction, no resets;
* ``H``   -- same correction plus resets through a finite set of
  centroid-fixing poses whenever a reset drops the measured alignment
  cost by at least ``delta``;
* ``HD1`` -- the pose correction is recentered on the weighted landmark
  centroid, which removes the landmark-offset coupling from the
  rotation error flow when the bias estimate is frozen;
* ``HD2`` -- additionally block-rotates the bias correction into the
  estimate frame, fully decoupling the (rotation, gyro-bias) error
  subsystem from translation.

All corrections are computed from raw body-frame measurements, never from
ground truth, so the same code path serves noisy and noiseless runs.  The
optional norm-ball projection keeps the bias estimate inside a
``Delta + epsilon`` shell under persistent measurement noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se3
from .errors import PreconditionFailed
from .potential import (
    JumpSetDef,
    grad_psi_adjoint_measured,
    grad_psi_centered_measured,
    grad_psi_measured,
    potential_value_measured,
)

# Recognized observer tags, in presentation order.
VARIANT_TAGS = ("S", "H", "HD1", "HD2")

# Loose orthonormality guard on states entering the observer maps; strict
# manifold accounting (drift < 1e-9 over a full run) is the simulator's job.
STATE_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class ObserverGains:
    """Correction gains: pose gain k_beta, bias gains (k_omega, k_v).

    ``Gamma = diag(k_omega I3, k_v I3)`` scales the bias update.  All
    gains must be non-negative; zero gains are the degenerate open-loop
    cases (``k_beta = 0`` disables pose correction, zero bias gains freeze
    the bias estimate).  Convergence requires all gains strictly positive,
    and the Lyapunov monitors additionally invert ``Gamma``, so monitored
    runs reject zero bias gains.
    """

    k_beta: float
    k_omega: float
    k_v: float

    def __post_init__(self):
        for name in ("k_beta", "k_omega", "k_v"):
            if getattr(self, name) < 0.0:
                raise PreconditionFailed(
                    "gain %s must be non-negative" % name)

    @property
    def Gamma(self):
        return np.diag([self.k_omega] * 3 + [self.k_v] * 3)


@dataclass(frozen=True)
class ObserverState:
    """Current estimate: pose ``g_hat`` (4x4) and bias ``b_hat`` (rad/s, m/s)."""

    g_hat: np.ndarray
    b_hat: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g_hat, dtype=float)
        b = np.asarray(self.b_hat, dtype=float)
        if g.shape != (4, 4) or b.shape != (6,):
            raise PreconditionFailed("state must be a 4x4 pose and a 6-vector bias")
        if not np.allclose(g[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise PreconditionFailed("pose bottom row must be [0, 0, 0, 1]")
        R = g[:3, :3]
        if np.linalg.norm(R @ R.T - np.eye(3)) > STATE_ORTHO_TOL:
            raise PreconditionFailed("pose rotation block left the manifold")
        object.__setattr__(self, "g_hat", g)
        object.__setattr__(self, "b_hat", b)


@dataclass(frozen=True)
class ObserverVariant:
    """Observer selector: tag in {S, H, HD1, HD2} plus the reset machinery.

    The smooth variant carries no jump set; the hybrid variants require one.
    """

    tag: str
    jump_set: JumpSetDef | None = None

    def __post_init__(self):
        if self.tag not in VARIANT_TAGS:
            raise PreconditionFailed(
                "unknown observer tag %r (expected one of %s)"
                % (self.tag, ", ".join(VARIANT_TAGS)))
        if self.tag == "S" and self.jump_set is not None:
            raise PreconditionFailed("smooth variant S takes no jump set")
        if self.tag != "S" and self.jump_set is None:
            raise PreconditionFailed("hybrid variant %s requires a jump set" % self.tag)

    @property
    def is_hybrid(self):
        return self.tag != "S"


@dataclass(frozen=True)
class ProjectionParams:
    """Norm-ball bias projection: ball radius Delta, blending shell epsilon.

    Disabled by default; intended for noisy runs, where the raw bias
    integrator can drift.  ``per_block`` applies the projection to the
    angular and linear bias halves independently instead of the full
    6-vector.
    """

    Delta: float = 1.0
    epsilon: float = 0.1
    enabled: bool = False
    per_block: bool = False

    def __post_init__(self):
        if not self.Delta > 0.0:
            raise PreconditionFailed("projection radius Delta must be positive")
        if not self.epsilon > 0.0:
            raise PreconditionFailed("projection shell epsilon must be positive")


# ---------------------------------------------------------------------------
# correction terms and flow field
# ---------------------------------------------------------------------------

def correction_terms(variant, pdef, state, b_meas):
    """The variant's correction pair (beta, sigma_b) from raw measurements.

    S and H use the estimate-frame pair

        beta    = Ad_{g_hat^-1} 1/2 sum k_i (g_hat b_i) ^ r_i,
        sigma_b =               1/2 sum k_i b_i ^ (g_hat^-1 r_i);

    HD1 recenters beta on the landmark centroid frame (numerically equal
    to the S/H beta on noiseless data, but built from centered references)
    and keeps the S/H sigma_b; HD2 keeps HD1's beta and block-rotates the
    centered wedge sum by diag(R_hat, R_hat)^T for sigma_b.
    """
    return _correction_pair(variant.tag, pdef, state.g_hat, b_meas)


def _correction_pair(tag, pdef, g_hat, b_meas):
    """Tag-dispatched body of correction_terms on a raw pose array."""
    if tag in ("S", "H"):
        psi_e = grad_psi_measured(pdef, g_hat, b_meas)
        beta = se3.adjoint(se3.inverse(g_hat)) @ psi_e
        sigma_b = grad_psi_adjoint_measured(pdef, g_hat, b_meas)
        return beta, sigma_b
    g_c = pdef.matrices.g_c
    psi_c = grad_psi_centered_measured(pdef, g_hat, b_meas)
    beta = se3.adjoint(se3.compose(se3.inverse(g_hat), g_c)) @ psi_c
    if tag == "HD1":
        sigma_b = grad_psi_adjoint_measured(pdef, g_hat, b_meas)
    else:
        R_hat = g_hat[:3, :3]
        sigma_b = np.concatenate([R_hat.T @ psi_c[:3], R_hat.T @ psi_c[3:]])
    return beta, sigma_b


def flow(variant, pdef, gains, state, xi_y, b_meas, proj=None):
    """Flow field of the estimate: body twist and bias derivative.

    Returns ``xi_hat = xi_y - b_hat + k_beta * beta`` (the twist that
    drives ``d/dt g_hat = g_hat xi_hat^wedge``) and ``db_hat = -Gamma
    sigma_b``.  When ``proj`` is enabled the bias derivative is passed
    through :func:`proj_delta`, damping any outward radial push once the
    estimate crosses the ``Delta`` ball.
    """
    beta, sigma_b = correction_terms(variant, pdef, state, b_meas)
    xi_hat = np.asarray(xi_y, dtype=float) - state.b_hat + gains.k_beta * beta
    db_hat = -(gains.Gamma @ sigma_b)
    if proj is not None and proj.enabled:
        db_hat = proj_delta(state.b_hat, db_hat, gains.Gamma, proj)
    return xi_hat, db_hat


# ---------------------------------------------------------------------------
# jump condition and reset map
# ---------------------------------------------------------------------------

def _require_jump_set(variant):
    if variant.jump_set is None:
        raise PreconditionFailed("variant %s has no jump set" % variant.tag)
    return variant.jump_set


def _candidate_costs(pdef, jump_set, g_hat, b_meas):
    """Measured alignment cost after each candidate reset g_q^-1 g_hat."""
    b_arr = np.asarray(b_meas, dtype=float)
    costs = np.empty(len(jump_set.Q_list))
    for i, g_q in enumerate(jump_set.Q_list):
        moved = se3.compose(se3.inverse(g_q), g_hat)
        costs[i] = potential_value_measured(pdef, moved, b_arr)
    return costs


def jump_condition(variant, pdef, state, b_meas):
    """Whether a reset is worthwhile: (fire, gap).

    ``gap`` is the measured alignment cost at the current estimate minus
    the best cost over the reset candidates,

        1/2 sum k_i ||r_i - g_hat b_i||^2
            - min_q 1/2 sum k_i ||r_i - g_q^-1 g_hat b_i||^2,

    and the jump fires when ``gap >= delta``.  The same expression serves
    every hybrid variant: recentring the references changes neither cost.
    """
    jump_set = _require_jump_set(variant)
    current = potential_value_measured(pdef, state.g_hat, b_meas)
    best = float(np.min(_candidate_costs(pdef, jump_set, state.g_hat, b_meas)))
    gap = current - best
    return gap >= jump_set.delta, gap


def jump_map(variant, pdef, state, b_meas):
    """Reset to the best candidate: g_hat -> g_q*^-1 g_hat, bias unchanged.

    ``q*`` is the argmin of the measured cost over the reset poses, lowest
    index on ties, so the map is deterministic.
    """
    jump_set = _require_jump_set(variant)
    costs = _candidate_costs(pdef, jump_set, state.g_hat, b_meas)
    q_star = int(np.argmin(costs))
    g_plus = se3.compose(se3.inverse(jump_set.Q_list[q_star]), state.g_hat)
    return ObserverState(g_hat=g_plus, b_hat=state.b_hat.copy())


# ---------------------------------------------------------------------------
# norm-ball bias projection
# ---------------------------------------------------------------------------

def proj_delta(b_hat, gamma_sigma, Gamma, params):
    """Damp the outward radial part of a bias update near the norm ball.

    Implements the two-branch rule with distance ``P = ||b_hat|| - Delta``
    and blend ``rho = min(1, P / epsilon)``: the update ``gamma_sigma``
    passes through unchanged while the estimate is inside the ball or the
    update points inward; otherwise its component along the scaled radial
    direction is shrunk by ``rho``, reaching full annihilation on the
    outer shell ``||b_hat|| = Delta + epsilon``.  Closed-loop use therefore
    traps the bias estimate inside that shell.
    """
    b_hat = np.asarray(b_hat, dtype=float)
    update = np.asarray(gamma_sigma, dtype=float)
    if params.per_block:
        return np.concatenate([
            _proj_ball(b_hat[:3], update[:3], Gamma[:3, :3], params),
            _proj_ball(b_hat[3:], update[3:], Gamma[3:, 3:], params),
        ])
    return _proj_ball(b_hat, update, Gamma, params)


def _proj_ball(b_hat, update, Gamma, params):
    norm = float(np.linalg.norm(b_hat))
    dist = norm - params.Delta
    if dist <= 0.0:
        return update.copy()
    grad = b_hat / norm
    outward = float(grad @ update)
    if outward <= 0.0:
        return update.copy()
    rho = min(1.0, dist / params.epsilon)
    scaled = Gamma @ grad
    return update - rho * scaled * (outward / float(grad @ scaled))
