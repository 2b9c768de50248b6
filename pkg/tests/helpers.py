"""Shared random generators for the test suite.

Rotations are sampled by angle-axis with angles bounded away from 0 and pi
so tests never sit on a branch point unless they mean to.
"""

import numpy as np

from se3obs import scene as sc
from se3obs import se3


def random_unit3(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_rotation(rng, max_angle=3.0):
    return se3.angle_axis(rng.uniform(0.05, max_angle), random_unit3(rng))


def random_pose(rng, p_scale=2.0):
    return se3.pose(random_rotation(rng), p_scale * rng.normal(size=3))


def random_twist(rng, scale=1.0):
    return scale * rng.normal(size=6)


def random_homvec(rng, scale=1.0):
    """Homogeneous 4-vector with a random point/direction flag."""
    v = scale * rng.normal(size=3)
    s = float(rng.integers(0, 2))
    return np.concatenate([v, [s]])


def reproduction_scene():
    """One landmark and three orthonormal inertial vectors, unit weights."""
    return sc.Scene(
        landmarks=[[np.sqrt(2) / 2, np.sqrt(2) / 2, 2.0]],
        vectors=[[0.0, 0.0, 1.0],
                 [np.sqrt(3) / 2, 0.5, 0.0],
                 [-0.5, np.sqrt(3) / 2, 0.0]],
        weights=[1.0, 1.0, 1.0, 1.0],
    )


def random_scene(rng, n1=2, n2=2):
    landmarks = rng.normal(scale=2.0, size=(n1, 3))
    vectors = rng.normal(size=(n2, 3))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    weights = rng.uniform(0.5, 2.0, size=n1 + n2)
    return sc.Scene(landmarks=landmarks, vectors=vectors, weights=weights)


def flat_scene():
    """Scene with centroid at the origin; Q = diag(1, 1, 8) has a repeated
    eigenvalue and fails the canonical-direction precondition."""
    return sc.Scene(landmarks=[[0.0, 0.0, 0.0]],
                    vectors=np.eye(3),
                    weights=[1.0, 1.0, 1.0, 8.0])


def centered_half_turn(pdef, v):
    """Pose rotated by pi about v and translated to keep the centroid fixed."""
    m = pdef.matrices
    R = se3.angle_axis(np.pi, v)
    return se3.pose(R, (np.eye(3) - R) @ (m.b / m.d))


def reproduction_velocities():
    """The reproduction run's body-frame profiles, vectorized over time."""

    def omega_fn(t):
        t = np.asarray(t, dtype=float)
        return np.stack([-np.sin(t), np.cos(t), np.zeros_like(t)], axis=-1)

    def v_fn(t):
        t = np.asarray(t, dtype=float)
        return 2.0 * np.stack([np.cos(t), np.sin(t), np.zeros_like(t)],
                              axis=-1)

    return omega_fn, v_fn


def reproduction_initial_pose():
    """Half-turn about e1 with the reproduction run's initial position."""
    return se3.pose(se3.angle_axis(np.pi, np.array([1.0, 0.0, 0.0])),
                    np.array([0.0, 1.0, 4.0]))


REPRODUCTION_BIAS = np.array([-0.02, 0.02, 0.1, 0.2, -0.1, 0.01])
