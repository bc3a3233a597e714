"""Limb chain definition, inertial parameters and anatomical sign conventions.

Frames
------
Every segment carries a right-handed frame whose origin is the segment's
proximal endpoint.  In the standing calibration posture the axes coincide
with the anatomical axes of a right forelimb:

* ``x`` cranial (+) / caudal (-)
* ``y`` medial (+) / lateral (-)
* ``z`` proximal (+) / distal (-)

so the segment's long axis points along ``-z`` and the distal endpoint sits
at ``(0, 0, -length)``.  The lab frame is ``x`` forward, ``y`` left, ``z`` up,
which makes the standing segment frames parallel to the lab frame.

Joint rotations are decomposed as right-handed rotations about the segment
axes and then mapped to anatomical angles (alpha adduction, beta flexion,
gamma internal rotation).  All joints follow the right-hand rule except elbow
flexion, which is a negative rotation about the medial axis.

The chain stops at the elbow: its proximal segment (the humerus) is measured
kinematically but carries no inertial parameters.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from .errors import ChainConfigError

logger = logging.getLogger(__name__)

JOINT_NAMES = ("elbow", "carpus", "fetlock", "pastern", "coffin")
# Joints whose translations are used in the inverse solution by default.
TRANSLATING_JOINTS = frozenset({"elbow", "pastern"})

COORDINATE_SYMBOLS = ("x", "y", "z", "alpha", "beta", "gamma")

# Per-joint layout of the six model generalized coordinates: for local slot
# k (0..5) the anatomical symbol it carries and the sign relating them,
# q[6*j + k] = sign * anatomical[symbol].  Torque and power signs equal the
# coordinate sign in every row.
_ELBOW_LAYOUT = (("z", 1), ("x", 1), ("y", 1), ("beta", -1), ("alpha", 1), ("gamma", -1))
_DISTAL_LAYOUT = (("z", -1), ("y", -1), ("x", -1), ("beta", -1), ("alpha", 1), ("gamma", -1))

# Right-hand rotation about (x, y, z) -> anatomical (alpha, beta, gamma).
_ROTATION_SIGNS = {"elbow": (1, -1, 1)}
_DEFAULT_ROTATION_SIGNS = (1, 1, 1)

_MOTION_NAMES = {
    "z": "Proximal/distal",
    "y": "Medial/lateral",
    "x": "Cranial/caudal",
    "beta": "Flexion/extension",
    "alpha": "Adduction/abduction",
    "gamma": "Internal/external",
}


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ChainConfigError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_template(name: str, points: np.ndarray) -> None:
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 3:
        raise ChainConfigError(f"{name}: marker template needs at least 3 points in 3D")
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0 or s[1] <= 1e-9 * max(s[0], 1.0):
        raise ChainConfigError(f"{name}: marker template is collinear")


@dataclass(frozen=True)
class ReferenceSegment:
    """Kinematically tracked parent of the first joint (no inertia)."""

    name: str
    length: float
    marker_labels: tuple[str, ...]
    marker_template: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "marker_template", _frozen(self.marker_template))
        if self.length <= 0:
            raise ChainConfigError(f"{self.name}: length must be positive")
        if len(self.marker_labels) != len(self.marker_template):
            raise ChainConfigError(f"{self.name}: marker labels/points mismatch")
        _check_template(self.name, self.marker_template)

    @property
    def distal_point(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.length])


@dataclass(frozen=True)
class SegmentSpec:
    name: str
    length: float
    mass: float
    com_offset: np.ndarray
    inertia: np.ndarray
    marker_labels: tuple[str, ...]
    marker_template: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "com_offset", _frozen(self.com_offset, (3,)))
        object.__setattr__(self, "inertia", _frozen(self.inertia, (3, 3)))
        object.__setattr__(self, "marker_template", _frozen(self.marker_template))
        if not self.mass > 0:
            raise ChainConfigError(f"{self.name}: mass must be positive")
        if not self.length > 0:
            raise ChainConfigError(f"{self.name}: length must be positive")
        inertia = self.inertia
        if not np.allclose(inertia, inertia.T, atol=1e-12 * max(1.0, np.abs(inertia).max())):
            raise ChainConfigError(f"{self.name}: inertia tensor is not symmetric")
        if np.linalg.eigvalsh(inertia).min() < -1e-12 * max(1.0, np.abs(inertia).max()):
            raise ChainConfigError(f"{self.name}: inertia tensor is not positive semi-definite")
        if len(self.marker_labels) != len(self.marker_template):
            raise ChainConfigError(f"{self.name}: marker labels/points mismatch")
        _check_template(self.name, self.marker_template)

    @property
    def distal_point(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.length])


@dataclass(frozen=True)
class JointSpec:
    name: str
    proximal_segment: str
    distal_segment: str
    center_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translations_enabled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center_offset", _frozen(self.center_offset, (3,)))


@dataclass(frozen=True)
class ConventionRow:
    joint: str
    motion: str
    symbol: str
    q_index: int  # 1-based, as printed in the convention table
    sign: int
    torque_sign: int
    power_sign: int


@dataclass(frozen=True)
class AnatomicalConvention:
    """Sign mapping between model generalized coordinates and anatomical ones.

    Anatomical vectors are laid out per joint as ``(x, y, z, alpha, beta, gamma)``.
    """

    joints: tuple[str, ...]
    rows: tuple[ConventionRow, ...]
    rotation_signs: Mapping[str, tuple[int, int, int]]

    @classmethod
    def for_joints(cls, joints: Sequence[str]) -> "AnatomicalConvention":
        rows = []
        for j, name in enumerate(joints):
            if name not in JOINT_NAMES:
                raise ChainConfigError(f"unknown joint {name!r}; expected one of {JOINT_NAMES}")
            layout = _ELBOW_LAYOUT if name == "elbow" else _DISTAL_LAYOUT
            for k, (symbol, sign) in enumerate(layout):
                rows.append(ConventionRow(name, _MOTION_NAMES[symbol], symbol, 6 * j + k + 1,
                                          sign, sign, sign))
        signs = {name: _ROTATION_SIGNS.get(name, _DEFAULT_ROTATION_SIGNS) for name in joints}
        return cls(tuple(joints), tuple(rows), signs)

    @property
    def size(self) -> int:
        return 6 * len(self.joints)

    def _slots(self):
        for row in self.rows:
            j = self.joints.index(row.joint)
            yield row.q_index - 1, 6 * j + COORDINATE_SYMBOLS.index(row.symbol), row.sign

    def table(self) -> list[ConventionRow]:
        """Rows ordered per joint as translations z, y, x then rotations beta, alpha, gamma."""
        order = {"z": 0, "y": 1, "x": 2, "beta": 3, "alpha": 4, "gamma": 5}
        return sorted(self.rows, key=lambda r: (self.joints.index(r.joint), order[r.symbol]))

    def rotation_sign_vector(self, joint: str) -> np.ndarray:
        return np.array(self.rotation_signs[joint], dtype=float)


def to_anatomical(q, convention: AnatomicalConvention) -> np.ndarray:
    """Map model coordinates ``q`` (last axis) to anatomical coordinates."""
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != convention.size:
        raise ValueError(f"expected {convention.size} coordinates, got {q.shape[-1]}")
    out = np.empty_like(q)
    for qi, ai, sign in convention._slots():
        out[..., ai] = sign * q[..., qi]
    return out


def from_anatomical(anatomical, convention: AnatomicalConvention) -> np.ndarray:
    anatomical = np.asarray(anatomical, dtype=float)
    if anatomical.shape[-1] != convention.size:
        raise ValueError(f"expected {convention.size} coordinates, got {anatomical.shape[-1]}")
    out = np.empty_like(anatomical)
    for qi, ai, sign in convention._slots():
        out[..., qi] = sign * anatomical[..., ai]
    return out


def reference_convention_rows() -> tuple[ConventionRow, ...]:
    """The packaged reference table of the five-joint sign convention (30 rows)."""
    text = resources.files("equikin.data").joinpath("convention_reference.csv").read_text("utf-8")
    rows = []
    for rec in csv.DictReader(text.splitlines()):
        rows.append(ConventionRow(rec["joint"], rec["motion"], rec["symbol"], int(rec["q_index"]),
                                  int(rec["sign"]), int(rec["torque_sign"]),
                                  int(rec["power_sign"])))
    return tuple(rows)


def convention_mismatches(convention: AnatomicalConvention,
                          reference: Sequence[ConventionRow]) -> list[str]:
    """Human-readable differences between a convention and reference rows; empty if equal."""
    actual = {(r.joint, r.symbol): r for r in convention.rows}
    problems = []
    for ref in reference:
        row = actual.pop((ref.joint, ref.symbol), None)
        if row is None:
            problems.append(f"{ref.joint} {ref.symbol}: missing")
        elif row != ref:
            problems.append(f"{ref.joint} {ref.symbol}: expected q{ref.q_index} sign {ref.sign:+d}, "
                            f"got q{row.q_index} sign {row.sign:+d}")
    problems.extend(f"{j} {s}: not in reference" for j, s in actual)
    return problems


@dataclass(frozen=True)
class LimbChain:
    parent: ReferenceSegment
    segments: tuple[SegmentSpec, ...]
    joints: tuple[JointSpec, ...]
    convention: AnatomicalConvention
    body_mass: float

    def __post_init__(self):
        if not self.body_mass > 0:
            raise ChainConfigError("body_mass must be positive")
        if len(self.segments) != len(self.joints):
            raise ChainConfigError("segment count must equal joint count")

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def segment_names(self) -> list[str]:
        return [s.name for s in self.segments]

    @property
    def tracked_segments(self) -> list[str]:
        return [self.parent.name] + self.segment_names

    def segment(self, name: str) -> SegmentSpec:
        for s in self.segments:
            if s.name == name:
                return s
        raise KeyError(name)

    def joint(self, name: str) -> JointSpec:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(name)

    def proximal_of(self, joint: JointSpec) -> SegmentSpec | ReferenceSegment:
        if joint.proximal_segment == self.parent.name:
            return self.parent
        return self.segment(joint.proximal_segment)

    def marker_template(self, segment: str) -> tuple[tuple[str, ...], np.ndarray]:
        seg = self.parent if segment == self.parent.name else self.segment(segment)
        return seg.marker_labels, seg.marker_template

    @property
    def total_mass(self) -> float:
        return float(sum(s.mass for s in self.segments))


# ---------------------------------------------------------------------------
# Inertial parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InertialParameters:
    mass: float
    com_offset: np.ndarray
    inertia: np.ndarray


def inertial_from_body_mass(body_mass: float, scaling_table: Mapping[str, Mapping[str, Any]],
                            lengths: Mapping[str, float]) -> dict[str, InertialParameters]:
    """Scale segment inertial parameters from whole-body mass.

    Each entry of ``scaling_table`` holds ``mass_fraction`` (of body mass),
    ``com_fraction`` (distance of the COM from the proximal end, as a fraction
    of segment length) and ``gyration`` (radii of gyration about the COM along
    x, y, z, as fractions of segment length).  The inertia tensor is diagonal
    in the segment frame.
    """
    if not body_mass > 0:
        raise ValueError("body_mass must be positive")
    out = {}
    for name, length in lengths.items():
        if name not in scaling_table:
            raise ChainConfigError(f"no scaling coefficients for segment {name!r}")
        coeffs = scaling_table[name]
        mass_fraction = float(coeffs["mass_fraction"])
        com_fraction = float(coeffs.get("com_fraction", 0.5))
        gyration = np.asarray(coeffs.get("gyration", (0.3, 0.3, 0.1)), dtype=float)
        if mass_fraction < 0 or com_fraction < 0 or (gyration < 0).any():
            raise ValueError(f"{name}: scaling coefficients must be non-negative")
        mass = mass_fraction * body_mass
        inertia = np.diag(mass * (gyration * length) ** 2)
        out[name] = InertialParameters(mass, np.array([0.0, 0.0, -com_fraction * length]), inertia)
    return out


# ---------------------------------------------------------------------------
# Configuration documents
# ---------------------------------------------------------------------------

def _vec(value, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ChainConfigError(f"{what}: expected a 3-vector")
    return arr


def _markers(spec: Mapping, owner: str, scale: float) -> tuple[tuple[str, ...], np.ndarray]:
    markers = spec.get("markers")
    if not isinstance(markers, Mapping) or not markers:
        raise ChainConfigError(f"{owner}: 'markers' mapping is required")
    labels = tuple(str(k) for k in markers)
    points = np.array([_vec(v, f"{owner} marker {k}") for k, v in markers.items()]) * scale
    return labels, points


def _inertia(value, owner: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == (3,):
        return np.diag(arr)
    if arr.shape == (3, 3):
        return arr
    raise ChainConfigError(f"{owner}: inertia must be 3 principal values or a 3x3 tensor")


def build_chain(config: Mapping[str, Any]) -> LimbChain:
    """Validate a chain-configuration mapping and build a :class:`LimbChain`."""
    try:
        return _build_chain(config)
    except ChainConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ChainConfigError(f"invalid chain configuration: {exc}") from exc


def _build_chain(config: Mapping[str, Any]) -> LimbChain:
    unit = config.get("length_unit", "m")
    if unit not in ("m", "mm"):
        raise ChainConfigError(f"length_unit must be 'm' or 'mm', got {unit!r}")
    scale = 1e-3 if unit == "mm" else 1.0
    body_mass = float(config["body_mass"])
    if not body_mass > 0:
        raise ChainConfigError("body_mass must be positive")

    parent_cfg = config["parent"]
    parent_labels, parent_points = _markers(parent_cfg, str(parent_cfg["name"]), scale)
    parent = ReferenceSegment(str(parent_cfg["name"]), float(parent_cfg["length"]) * scale,
                              parent_labels, parent_points)

    seg_cfgs = list(config["segments"])
    names = [str(s["name"]) for s in seg_cfgs]
    dupes = sorted({n for n in names if names.count(n) > 1} | ({parent.name} & set(names)))
    if dupes:
        raise ChainConfigError(f"duplicate segment names: {dupes}")

    lengths = {}
    for s in seg_cfgs:
        lengths[str(s["name"])] = float(s["length"]) * scale
    scaling = config.get("inertia_model")
    scaled = {}
    needs_scaling = [n for n, s in zip(names, seg_cfgs) if "mass" not in s]
    if needs_scaling:
        if scaling is None:
            raise ChainConfigError(
                f"segments {needs_scaling} omit mass and no inertia_model is given")
        scaled = inertial_from_body_mass(body_mass, scaling,
                                         {n: lengths[n] for n in needs_scaling})

    segments = {}
    for s in seg_cfgs:
        name = str(s["name"])
        labels, points = _markers(s, name, scale)
        if name in scaled:
            params = scaled[name]
            mass, com, inertia = params.mass, params.com_offset, params.inertia
            if "com_offset" in s:
                com = _vec(s["com_offset"], f"{name} com_offset") * scale
            if "inertia" in s:
                inertia = _inertia(s["inertia"], name)
        else:
            mass = float(s["mass"])
            com = (_vec(s["com_offset"], f"{name} com_offset") * scale if "com_offset" in s
                   else np.array([0.0, 0.0, -0.5 * lengths[name]]))
            inertia = _inertia(s["inertia"], name)
        segments[name] = SegmentSpec(name, lengths[name], mass, com, inertia, labels, points)

    joint_cfgs = list(config["joints"])
    joint_names = [str(j["name"]) for j in joint_cfgs]
    if len(set(joint_names)) != len(joint_names):
        raise ChainConfigError("duplicate joint names")
    declared = set(segments) | {parent.name}
    by_proximal: dict[str, Mapping] = {}
    distal_seen = set()
    for j in joint_cfgs:
        prox, dist = str(j["proximal"]), str(j["distal"])
        for ref in (prox, dist):
            if ref not in declared:
                raise ChainConfigError(f"joint {j['name']!r} references undeclared segment {ref!r}")
        if dist == parent.name:
            raise ChainConfigError(f"joint {j['name']!r} uses the parent segment as distal side")
        if prox in by_proximal:
            raise ChainConfigError(f"branching topology: two joints leave segment {prox!r}")
        if dist in distal_seen:
            raise ChainConfigError(f"segment {dist!r} is the distal side of two joints")
        by_proximal[prox] = j
        distal_seen.add(dist)

    ordered = []
    current, visited = parent.name, {parent.name}
    while current in by_proximal:
        j = by_proximal[current]
        current = str(j["distal"])
        if current in visited:
            raise ChainConfigError("cyclic topology")
        visited.add(current)
        ordered.append(j)
    if len(ordered) != len(joint_cfgs):
        raise ChainConfigError("joints do not form a single open chain from the parent segment")
    if len(ordered) != len(segments):
        raise ChainConfigError("segment count must equal joint count")

    joints = []
    for j in ordered:
        name = str(j["name"])
        center = j.get("center_offset", (0.0, 0.0, 0.0))
        joints.append(JointSpec(name, str(j["proximal"]), str(j["distal"]),
                                _vec(center, f"{name} center_offset") * scale,
                                bool(j.get("translations", name in TRANSLATING_JOINTS))))
    convention = AnatomicalConvention.for_joints([j.name for j in joints])
    seg_order = tuple(segments[j.distal_segment] for j in joints)
    return LimbChain(parent, seg_order, tuple(joints), convention, body_mass)


def load_chain(path: str | Path) -> LimbChain:
    path = Path(path)
    try:
        config = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ChainConfigError(f"{path}: {exc}") from exc
    if not isinstance(config, Mapping):
        raise ChainConfigError(f"{path}: top level must be a mapping")
    return build_chain(config)


def default_chain_config(joints: int = 4) -> dict:
    """Bundled forelimb configuration with 4 (elbow..coffin) or 5 joints."""
    if joints not in (4, 5):
        raise ValueError("joints must be 4 or 5")
    text = resources.files("equikin.data").joinpath(f"forelimb{joints}.yaml").read_text("utf-8")
    return yaml.safe_load(text)


def default_chain(joints: int = 4, body_mass: float | None = None) -> LimbChain:
    config = default_chain_config(joints)
    if body_mass is not None:
        config["body_mass"] = body_mass
    return build_chain(config)


def chain_to_config(chain: LimbChain) -> dict:
    """Explicit (fully resolved) configuration mapping that rebuilds ``chain``."""
    def markers(labels, points):
        return {lab: [float(v) for v in p] for lab, p in zip(labels, points)}

    return {
        "body_mass": float(chain.body_mass),
        "length_unit": "m",
        "parent": {
            "name": chain.parent.name,
            "length": float(chain.parent.length),
            "markers": markers(chain.parent.marker_labels, chain.parent.marker_template),
        },
        "segments": [
            {
                "name": s.name,
                "length": float(s.length),
                "mass": float(s.mass),
                "com_offset": [float(v) for v in s.com_offset],
                "inertia": [[float(v) for v in row] for row in s.inertia],
                "markers": markers(s.marker_labels, s.marker_template),
            }
            for s in chain.segments
        ],
        "joints": [
            {
                "name": j.name,
                "proximal": j.proximal_segment,
                "distal": j.distal_segment,
                "center_offset": [float(v) for v in j.center_offset],
                "translations": bool(j.translations_enabled),
            }
            for j in chain.joints
        ],
    }
