"""Scenario files: a strict flat key-value format parsed to domain objects.

Format
------
Full-line comments start with ``#``; blank lines are ignored.  A section
header ``[name]`` opens one of the known sections below, each of which may
appear at most once.  Inside a section, lines read ``key = value``; keys
must belong to the section, and only ``landmark`` and ``vector`` may
repeat.  Values are whitespace-separated numbers, single words, or
``true``/``false``.  Anything else is rejected with the offending line
number: silent fallbacks in a scenario file would quietly change the
experiment being run.

Sections and keys (* = required, parenthesised = default)
---------------------------------------------------------
``[scene]``*
    ``landmark``* x y z (repeatable); ``vector`` x y z (repeatable);
    ``weights`` one positive weight per measurement, landmarks first
    (all ones).
``[trajectory]``*
    ``initial_rotation``* angle ux uy uz (radians, axis need not be unit);
    ``initial_position``* x y z; ``profile``* ``circular`` or
    ``constant``.  Circular: ``omega_amplitude`` (1.0), ``v_amplitude``
    (1.0), ``frequency`` (1.0) give omega = a [-sin ft, cos ft, 0] and
    v = b [cos ft, sin ft, 0].  Constant: ``omega``* wx wy wz and
    ``v``* vx vy vz.
``[bias]``
    ``base``* six components (angular then linear); ``mode`` ``constant``
    (default) or ``cosine``; ``frequency``* rad/s, cosine mode only.
    Omitting the section runs without velocity bias.
``[observers]``
    ``run`` subset of S H HD1 HD2 (all four).
``[gains]``
    ``k_beta`` (1.0), ``k_omega`` (1.0), ``k_v`` (1.0).
``[jumps]``
    ``theta_star`` reset rotation angle in (0, pi] (2*pi/3); ``u_choice``
    ``eigenbasis`` (default) or ``canonical``; ``delta`` decrease
    threshold override (derived from theta_star when absent).
``[noise]``
    ``sigma`` measurement noise standard deviation (0.0); ``seed`` (0).
``[projection]``
    ``enabled`` (true when sigma > 0, else false); ``radius`` norm-ball
    radius (1.0); ``epsilon`` blending shell width (0.1); ``per_block``
    (false).
``[integration]``*
    ``duration``* seconds; ``h`` step size (0.001).
``[output]``
    ``directory`` (``out``).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import se3
from .errors import (AssumptionViolated, GapInfeasible, ParseError,
                     PreconditionFailed, ValidationError)
from .observers import VARIANT_TAGS, ObserverGains, ProjectionParams
from .potential import build_jump_set, build_potential
from .scene import BiasModel, Scene

DEFAULT_THETA_STAR = 2.0 * np.pi / 3.0
DEFAULT_STEP = 1e-3
DEFAULT_OUTPUT_DIR = "out"

_REPEATABLE = {("scene", "landmark"), ("scene", "vector")}

_SCHEMA = {
    "scene": ("landmark", "vector", "weights"),
    "trajectory": ("initial_rotation", "initial_position", "profile",
                   "omega_amplitude", "v_amplitude", "frequency",
                   "omega", "v"),
    "bias": ("base", "mode", "frequency"),
    "observers": ("run",),
    "gains": ("k_beta", "k_omega", "k_v"),
    "jumps": ("theta_star", "u_choice", "delta"),
    "noise": ("sigma", "seed"),
    "projection": ("enabled", "radius", "epsilon", "per_block"),
    "integration": ("duration", "h"),
    "output": ("directory",),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """A validated scenario: domain objects plus run-level knobs.

    ``omega_fn`` and ``v_fn`` accept floats and 1-D time arrays, matching
    what the simulator's bulk sampler expects.  ``delta = None`` means the
    jump-set threshold is derived from ``theta_star``.
    """

    scene: Scene
    g0: np.ndarray
    omega_fn: object
    v_fn: object
    bias: BiasModel | None
    observers: tuple
    gains: ObserverGains
    theta_star: float
    u_choice: str
    delta: float | None
    noise_sigma: float
    projection: ProjectionParams
    duration: float
    step: float
    seed: int
    output_dir: str


def bundled_config_path(name):
    """Filesystem path of a configuration shipped inside the package."""
    path = resources.files("se3obs") / "configs" / name
    return Path(str(path))


# ---------------------------------------------------------------------------
# line-level parsing
# ---------------------------------------------------------------------------

def _parse_sections(text):
    """Split config text into {section: [(key, value, line), ...]}."""
    sections = {}
    section_lines = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError("unterminated section header", lineno)
            name = line[1:-1].strip()
            if name not in _SCHEMA:
                raise ParseError(f"unknown section [{name}]", lineno)
            if name in sections:
                raise ParseError(f"duplicate section [{name}]", lineno)
            sections[name] = []
            section_lines[name] = lineno
            current = name
            continue
        if current is None:
            raise ParseError("key outside any section", lineno)
        key, eq, value = line.partition("=")
        if not eq:
            raise ParseError("expected 'key = value'", lineno)
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA[current]:
            raise ParseError(f"unknown key {key!r} in [{current}]", lineno)
        if not value:
            raise ParseError(f"empty value for {key!r}", lineno)
        if ((current, key) not in _REPEATABLE
                and any(k == key for k, _, _ in sections[current])):
            raise ParseError(f"duplicate key {key!r} in [{current}]", lineno)
        sections[current].append((key, value, lineno))
    return sections, section_lines


class _Section:
    """Typed accessors over one section's (key, value, line) entries."""

    def __init__(self, name, entries, header_line):
        self.name = name
        self.entries = entries
        self.header_line = header_line

    def raw(self, key):
        for k, v, ln in self.entries:
            if k == key:
                return v, ln
        return None, None

    def repeated_floats(self, key, n):
        rows = [(self._floats(v, n, ln), ln)
                for k, v, ln in self.entries if k == key]
        return [row for row, _ in rows]

    def floats(self, key, n, default=None):
        v, ln = self.raw(key)
        if v is None:
            return default
        return self._floats(v, n, ln)

    def float(self, key, default=None):
        v, ln = self.raw(key)
        if v is None:
            return default
        return self._floats(v, 1, ln)[0]

    def int(self, key, default=None):
        v, ln = self.raw(key)
        if v is None:
            return default
        try:
            return int(v)
        except ValueError:
            raise ParseError(f"{key!r} expects an integer, got {v!r}", ln)

    def bool(self, key, default=None):
        v, ln = self.raw(key)
        if v is None:
            return default
        if v not in ("true", "false"):
            raise ParseError(f"{key!r} expects true or false, got {v!r}", ln)
        return v == "true"

    def word(self, key, allowed=None, default=None):
        v, ln = self.raw(key)
        if v is None:
            return default
        if allowed is not None and v not in allowed:
            raise ValidationError(
                f"{key!r} must be one of {', '.join(allowed)}; got {v!r}", ln)
        return v

    def words(self, key, default=None):
        v, ln = self.raw(key)
        if v is None:
            return default
        return v.split(), ln

    def line_of(self, key):
        _, ln = self.raw(key)
        return ln if ln is not None else self.header_line

    def require(self, key):
        v, ln = self.raw(key)
        if v is None:
            raise ValidationError(
                f"[{self.name}] is missing required key {key!r}",
                self.header_line)
        return v, ln

    @staticmethod
    def _floats(value, n, line):
        parts = value.split()
        if len(parts) != n:
            raise ParseError(
                f"expected {n} number{'s' if n != 1 else ''}, "
                f"got {len(parts)}", line)
        try:
            return [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"not a number in {value!r}", line)


def _section(parsed, lines, name, required):
    if name not in parsed:
        if required:
            raise ValidationError(f"missing required section [{name}]")
        return _Section(name, [], None)
    return _Section(name, parsed[name], lines[name])


# ---------------------------------------------------------------------------
# section builders
# ---------------------------------------------------------------------------

def _build_scene(sec):
    landmarks = sec.repeated_floats("landmark", 3)
    if not landmarks:
        raise ValidationError(
            "scene defines no landmark: the potential needs at least one "
            "weighted position anchor (pure vector scenes leave translation "
            "unobservable)", sec.header_line)
    vectors = sec.repeated_floats("vector", 3)
    n = len(landmarks) + len(vectors)
    weights = sec.floats("weights", n) if sec.raw("weights")[0] is not None \
        else [1.0] * n
    try:
        return Scene(landmarks=np.array(landmarks),
                     vectors=np.array(vectors) if vectors else [],
                     weights=np.array(weights))
    except AssumptionViolated as exc:
        raise ValidationError(str(exc), sec.header_line)


def _build_trajectory(sec):
    rot = sec.floats("initial_rotation", 4)
    pos = sec.floats("initial_position", 3)
    if rot is None or pos is None:
        sec.require("initial_rotation")
        sec.require("initial_position")
    axis = np.array(rot[1:])
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ValidationError("rotation axis must be non-zero",
                              sec.line_of("initial_rotation"))
    g0 = se3.pose(se3.angle_axis(rot[0], axis / norm), np.array(pos))

    profile, _ = sec.require("profile")
    if profile == "circular":
        for key in ("omega", "v"):
            if sec.raw(key)[0] is not None:
                raise ValidationError(
                    f"{key!r} only applies to the constant profile",
                    sec.line_of(key))
        omega_fn, v_fn = _circular_profiles(
            sec.float("omega_amplitude", 1.0),
            sec.float("v_amplitude", 1.0),
            sec.float("frequency", 1.0))
    elif profile == "constant":
        for key in ("omega_amplitude", "v_amplitude", "frequency"):
            if sec.raw(key)[0] is not None:
                raise ValidationError(
                    f"{key!r} only applies to the circular profile",
                    sec.line_of(key))
        sec.require("omega")
        sec.require("v")
        omega_fn, v_fn = _constant_profiles(
            np.array(sec.floats("omega", 3)), np.array(sec.floats("v", 3)))
    else:
        raise ValidationError(
            f"profile must be circular or constant; got {profile!r}",
            sec.line_of("profile"))
    return g0, omega_fn, v_fn


def _circular_profiles(omega_amp, v_amp, freq):
    def omega_fn(t):
        t = np.asarray(t, dtype=float)
        return omega_amp * np.stack(
            [-np.sin(freq * t), np.cos(freq * t), np.zeros_like(t)], axis=-1)

    def v_fn(t):
        t = np.asarray(t, dtype=float)
        return v_amp * np.stack(
            [np.cos(freq * t), np.sin(freq * t), np.zeros_like(t)], axis=-1)

    return omega_fn, v_fn


def _constant_profiles(omega, v):
    def profile(vec):
        def fn(t):
            t = np.asarray(t, dtype=float)
            if t.ndim == 0:
                return vec.copy()
            return np.broadcast_to(vec, (t.size, 3)).copy()
        return fn

    return profile(omega), profile(v)


def _build_bias(sec):
    if sec.header_line is None and not sec.entries:
        return None
    base, base_line = sec.require("base")
    base = sec.floats("base", 6)
    mode = sec.word("mode", allowed=("constant", "cosine"),
                    default="constant")
    freq = sec.float("frequency")
    if mode == "cosine" and freq is None:
        raise ValidationError("cosine bias needs a frequency",
                              sec.header_line)
    if mode == "constant" and freq is not None:
        raise ValidationError("'frequency' only applies to cosine mode",
                              sec.line_of("frequency"))
    return BiasModel(base=np.array(base), mode=mode,
                     omega_b=freq if freq is not None else 0.0)


def _build_observers(sec):
    got = sec.words("run")
    if got is None:
        return tuple(VARIANT_TAGS)
    tags, line = got
    seen = []
    for tag in tags:
        if tag not in VARIANT_TAGS:
            raise ValidationError(
                f"unknown observer {tag!r} (expected subset of "
                f"{' '.join(VARIANT_TAGS)})", line)
        if tag in seen:
            raise ValidationError(f"observer {tag!r} listed twice", line)
        seen.append(tag)
    return tuple(seen)


def _build_gains(sec):
    try:
        return ObserverGains(k_beta=sec.float("k_beta", 1.0),
                             k_omega=sec.float("k_omega", 1.0),
                             k_v=sec.float("k_v", 1.0))
    except PreconditionFailed as exc:
        raise ValidationError(str(exc), sec.header_line)


def _build_projection(sec, noise_sigma):
    enabled = sec.bool("enabled", noise_sigma > 0.0)
    radius = sec.float("radius", 1.0)
    epsilon = sec.float("epsilon", 0.1)
    per_block = sec.bool("per_block", False)
    if radius <= 0.0 or epsilon <= 0.0:
        raise ValidationError("projection radius and epsilon must be "
                              "positive", sec.header_line)
    return ProjectionParams(Delta=radius, epsilon=epsilon, enabled=enabled,
                            per_block=per_block)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def load_config(path):
    """Parse and validate a scenario file into a ScenarioConfig.

    Errors carry the offending line number: ParseError for malformed
    lines, unknown sections/keys, and untyped values; ValidationError for
    values that parse but describe an impossible scenario (no landmark,
    infeasible reset threshold, non-positive durations, ...).
    """
    text = Path(path).read_text()
    parsed, lines = _parse_sections(text)

    scene_sec = _section(parsed, lines, "scene", required=True)
    traj_sec = _section(parsed, lines, "trajectory", required=True)
    integ_sec = _section(parsed, lines, "integration", required=True)

    scene = _build_scene(scene_sec)
    g0, omega_fn, v_fn = _build_trajectory(traj_sec)
    bias = _build_bias(_section(parsed, lines, "bias", required=False))
    observers = _build_observers(
        _section(parsed, lines, "observers", required=False))
    gains = _build_gains(_section(parsed, lines, "gains", required=False))

    jumps_sec = _section(parsed, lines, "jumps", required=False)
    theta_star = jumps_sec.float("theta_star", DEFAULT_THETA_STAR)
    u_choice = jumps_sec.word("u_choice",
                              allowed=("eigenbasis", "canonical"),
                              default="eigenbasis")
    delta = jumps_sec.float("delta")
    try:
        build_jump_set(build_potential(scene), theta_star,
                       U_choice=u_choice, delta=delta)
    except (GapInfeasible, PreconditionFailed) as exc:
        raise ValidationError(str(exc), jumps_sec.header_line)

    noise_sec = _section(parsed, lines, "noise", required=False)
    noise_sigma = noise_sec.float("sigma", 0.0)
    if noise_sigma < 0.0:
        raise ValidationError("sigma must be non-negative",
                              noise_sec.line_of("sigma"))
    seed = noise_sec.int("seed", 0)

    projection = _build_projection(
        _section(parsed, lines, "projection", required=False), noise_sigma)

    duration_raw, duration_line = integ_sec.require("duration")
    duration = integ_sec.float("duration")
    step = integ_sec.float("h", DEFAULT_STEP)
    if step <= 0.0:
        raise ValidationError("h must be positive", integ_sec.line_of("h"))
    if duration < step:
        raise ValidationError("duration must cover at least one step",
                              duration_line)

    output_dir = _section(parsed, lines, "output", required=False).word(
        "directory", default=DEFAULT_OUTPUT_DIR)

    return ScenarioConfig(
        scene=scene, g0=g0, omega_fn=omega_fn, v_fn=v_fn, bias=bias,
        observers=observers, gains=gains, theta_star=theta_star,
        u_choice=u_choice, delta=delta, noise_sigma=noise_sigma,
        projection=projection, duration=duration, step=step, seed=seed,
        output_dir=output_dir)
