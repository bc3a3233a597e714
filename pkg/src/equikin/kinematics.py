"""Marker-based segment poses, joint coordinates and their time derivatives."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import butter, sosfiltfilt
from scipy.spatial.transform import Rotation

from .errors import (AlignmentError, DegenerateConfigurationError, GapTooLongError,
                     SingularAttitudeError)
from .model import AnatomicalConvention, LimbChain, from_anatomical

logger = logging.getLogger(__name__)

UNIFORM_TOL = 1e-9
SINGULAR_LIMIT_DEG = 89.0


def check_uniform(times: np.ndarray, tol: float = UNIFORM_TOL) -> float:
    """Return the sample interval of ``times`` or raise if it is not uniform."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2:
        raise AlignmentError("need at least two timestamps")
    steps = np.diff(times)
    if (steps <= 0).any():
        raise AlignmentError("timestamps must be strictly increasing")
    dt = (times[-1] - times[0]) / (len(times) - 1)
    if np.abs(steps - dt).max() > tol:
        raise AlignmentError(f"timestamps are not uniformly spaced within {tol:g} s")
    return float(dt)


@dataclass
class MarkerFrameSeries:
    """Labeled marker trajectories in the lab frame (meters).

    Labels have the form ``"<segment>:<marker>"``; ``positions`` is
    ``(frames, markers, 3)`` and ``valid`` flags each marker sample.
    """

    times: np.ndarray
    labels: tuple[str, ...]
    positions: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        n, m = len(self.times), len(self.labels)
        if self.positions.shape != (n, m, 3) or self.valid.shape != (n, m):
            raise AlignmentError("marker arrays do not match times/labels")

    @property
    def sample_rate(self) -> float:
        return 1.0 / check_uniform(self.times)

    @property
    def segments(self) -> list[str]:
        seen = []
        for lab in self.labels:
            seg = lab.split(":", 1)[0]
            if seg not in seen:
                seen.append(seg)
        return seen

    def marker_index(self, segment: str, marker: str) -> int:
        return self.labels.index(f"{segment}:{marker}")


@dataclass
class PoseTrack:
    rotation: np.ndarray  # (n, 3, 3), segment -> lab
    translation: np.ndarray  # (n, 3)
    residual: np.ndarray  # (n,) RMS marker mismatch, m
    valid: np.ndarray  # (n,)


@dataclass
class SegmentPoseSeries:
    times: np.ndarray
    tracks: dict[str, PoseTrack]

    def __getitem__(self, segment: str) -> PoseTrack:
        return self.tracks[segment]

    def frame(self, index: int) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        return {k: (v.rotation[index], v.translation[index]) for k, v in self.tracks.items()}


@dataclass(frozen=True)
class RigidFit:
    rotation: np.ndarray
    translation: np.ndarray
    residual: float


# ---------------------------------------------------------------------------
# Rigid registration
# ---------------------------------------------------------------------------

def _fit_batch(template: np.ndarray, observed: np.ndarray, weights: np.ndarray):
    """Weighted least-squares rigid fit for a stack of frames.

    ``template`` is (k, 3), ``observed`` (n, k, 3), ``weights`` (k,).
    """
    w = weights / weights.sum()
    ct = w @ template
    co = np.einsum("k,nkd->nd", w, observed)
    a = template - ct
    b = observed - co[:, None, :]
    h = np.einsum("k,ki,nkj->nij", w, a, b)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(np.einsum("nji,nkj->nik", vt, u)))
    d[d == 0] = 1.0
    fix = np.ones((len(d), 3))
    fix[:, 2] = d
    rot = np.einsum("nji,nj,nkj->nik", vt, fix, u)
    trans = co - np.einsum("nij,j->ni", rot, ct)
    fitted = np.einsum("nij,kj->nki", rot, template) + trans[:, None, :]
    resid = np.sqrt(np.einsum("k,nk->n", w, np.sum((fitted - observed) ** 2, axis=-1)))
    return rot, trans, resid


def _check_configuration(points: np.ndarray, weights: np.ndarray) -> None:
    if len(points) < 3 or np.count_nonzero(weights > 0) < 3:
        raise DegenerateConfigurationError("rigid fit needs at least 3 valid points")
    centered = (points - points.mean(axis=0)) * np.sqrt(weights)[:, None]
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0 or s[1] <= 1e-9 * s[0]:
        raise DegenerateConfigurationError("points are collinear")


def fit_rigid_transform(template, observed, weights=None) -> RigidFit:
    """Least-squares rotation and translation mapping ``template`` onto ``observed``.

    Rows containing NaN in ``observed`` are ignored.  The rotation is proper
    (det = +1) even for reflected point sets.
    """
    template = np.asarray(template, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if template.shape != observed.shape or template.ndim != 2 or template.shape[1] != 3:
        raise ValueError("template and observed must both be (k, 3)")
    w = np.ones(len(template)) if weights is None else np.asarray(weights, dtype=float)
    keep = np.isfinite(observed).all(axis=1) & (w > 0)
    template, observed, w = template[keep], observed[keep], w[keep]
    _check_configuration(template, w)
    _check_configuration(observed, w)
    rot, trans, resid = _fit_batch(template, observed[None], w)
    return RigidFit(rot[0], trans[0], float(resid[0]))


def fill_marker_gaps(markers: MarkerFrameSeries, max_gap: int = 5
                     ) -> tuple[MarkerFrameSeries, np.ndarray]:
    """Bridge interior gaps of at most ``max_gap`` frames by cubic interpolation.

    Returns the repaired series and a ``(frames, markers)`` mask of bridged
    samples.  Longer gaps and gaps touching either end stay invalid.
    """
    pos = markers.positions.copy()
    valid = markers.valid.copy()
    bridged = np.zeros_like(valid)
    n = len(markers.times)
    for m in range(len(markers.labels)):
        ok = valid[:, m]
        if ok.all() or ok.sum() < 4:
            continue
        idx = np.flatnonzero(ok)
        spline = CubicSpline(markers.times[idx], pos[idx, m], axis=0)
        missing = np.flatnonzero(~ok)
        runs = np.split(missing, np.flatnonzero(np.diff(missing) > 1) + 1)
        for run in runs:
            if run[0] == 0 or run[-1] == n - 1 or len(run) > max_gap:
                continue
            pos[run, m] = spline(markers.times[run])
            valid[run, m] = True
            bridged[run, m] = True
    repaired = MarkerFrameSeries(markers.times, markers.labels, pos, valid)
    return repaired, bridged


def fit_segment_poses(markers: MarkerFrameSeries, chain: LimbChain, max_gap: int = 5
                      ) -> SegmentPoseSeries:
    """Fit every tracked segment (parent included) frame by frame."""
    markers, bridged = fill_marker_gaps(markers, max_gap)
    n = len(markers.times)
    tracks = {}
    for segment in chain.tracked_segments:
        labels, template = chain.marker_template(segment)
        try:
            cols = [markers.marker_index(segment, lab) for lab in labels]
        except ValueError as exc:
            raise AlignmentError(f"markers for segment {segment!r} missing: {exc}") from None
        obs = markers.positions[:, cols]
        ok = markers.valid[:, cols]
        if (ok.sum(axis=1) < 3).any():
            first = int(np.flatnonzero(ok.sum(axis=1) < 3)[0])
            raise GapTooLongError(
                f"segment {segment!r} has fewer than 3 usable markers at frame {first}")
        rot = np.empty((n, 3, 3))
        trans = np.empty((n, 3))
        resid = np.empty(n)
        patterns, inverse = np.unique(ok, axis=0, return_inverse=True)
        for p, pattern in enumerate(patterns):
            frames = np.flatnonzero(inverse.ravel() == p)
            _check_configuration(template[pattern], np.ones(pattern.sum()))
            r, t, e = _fit_batch(template[pattern], obs[frames][:, pattern], np.ones(pattern.sum()))
            rot[frames], trans[frames], resid[frames] = r, t, e
        used_bridged = (bridged[:, cols] & ok).any(axis=1)
        tracks[segment] = PoseTrack(rot, trans, resid, ~used_bridged)
    return SegmentPoseSeries(markers.times.copy(), tracks)


def relative_pose(proximal_rotation, proximal_translation, distal_rotation, distal_translation):
    """Pose of the distal frame expressed in the proximal frame.

    Works on single poses or stacks along the leading axis.
    """
    rp = np.asarray(proximal_rotation, dtype=float)
    rd = np.asarray(distal_rotation, dtype=float)
    tp = np.asarray(proximal_translation, dtype=float)
    td = np.asarray(distal_translation, dtype=float)
    rel_rot = np.swapaxes(rp, -1, -2) @ rd
    rel_trans = np.einsum("...ji,...j->...i", rp, td - tp)
    return rel_rot, rel_trans


# ---------------------------------------------------------------------------
# Attitude representation
# ---------------------------------------------------------------------------

def _rx(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1),
                     np.stack([z, s, c], -1)], -2)


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1),
                     np.stack([-s, z, c], -1)], -2)


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1),
                     np.stack([z, z, o], -1)], -2)


def compose_rotation(angles, signs=(1, 1, 1)) -> np.ndarray:
    """Rotation from anatomical angles ``(alpha, beta, gamma)`` (last axis).

    ``signs`` converts anatomical angles to right-hand rotations about the
    segment x, y, z axes; the rotation is applied as the body-fixed sequence
    y (flexion), x (adduction), z (axial rotation).
    """
    rh = np.asarray(angles, dtype=float) * np.asarray(signs, dtype=float)
    return _ry(rh[..., 1]) @ _rx(rh[..., 0]) @ _rz(rh[..., 2])


def decompose_rotation(rotation, reference=None, signs=(1, 1, 1),
                       singular_limit_deg: float = SINGULAR_LIMIT_DEG):
    """Anatomical angles of ``reference.T @ rotation``.

    Returns ``(angles, valid)`` where ``angles[..., :]`` is
    ``(alpha, beta, gamma)`` in radians and ``valid`` is False where the
    adduction angle reaches the singular limit of the y-x-z sequence.
    """
    r = np.asarray(rotation, dtype=float)
    if reference is not None:
        r = np.swapaxes(np.asarray(reference, dtype=float), -1, -2) @ r
    rx = np.arcsin(np.clip(-r[..., 1, 2], -1.0, 1.0))
    ry = np.arctan2(r[..., 0, 2], r[..., 2, 2])
    rz = np.arctan2(r[..., 1, 0], r[..., 1, 1])
    valid = np.abs(rx) < np.deg2rad(singular_limit_deg)
    angles = np.stack([rx, ry, rz], axis=-1) * np.asarray(signs, dtype=float)
    return angles, valid


def helical_vector(rotation, signs=(1, 1, 1)) -> np.ndarray:
    """Finite helical (rotation-vector) representation, anatomical signs applied."""
    r = np.asarray(rotation, dtype=float)
    flat = r.reshape(-1, 3, 3)
    vec = Rotation.from_matrix(flat).as_rotvec().reshape(r.shape[:-2] + (3,))
    return vec * np.asarray(signs, dtype=float)


def cardan_body_rates(angles_rh: np.ndarray, rates_rh: np.ndarray) -> np.ndarray:
    """Angular velocity in the rotated (distal) frame for y-x-z Cardan angles.

    Both inputs hold right-hand rotations ordered (x, y, z).
    """
    a, g = angles_rh[..., 0], angles_rh[..., 2]
    da, db, dg = rates_rh[..., 0], rates_rh[..., 1], rates_rh[..., 2]
    ux = da
    uy = db * np.cos(a)
    uz = dg - db * np.sin(a)
    cg, sg = np.cos(g), np.sin(g)
    return np.stack([cg * ux + sg * uy, -sg * ux + cg * uy, uz], axis=-1)


# ---------------------------------------------------------------------------
# Signal processing
# ---------------------------------------------------------------------------

def low_pass_filter(series, cutoff: float | None, sample_rate: float, order: int = 4,
                    axis: int = 0) -> np.ndarray:
    """Zero-phase Butterworth low-pass (the design is run forward and backward).

    ``cutoff=None`` returns an unfiltered copy.
    """
    x = np.array(series, dtype=float)
    if cutoff is None:
        return x
    nyquist = 0.5 * sample_rate
    if not 0 < cutoff < nyquist:
        raise ValueError(f"cutoff {cutoff} Hz must lie in (0, {nyquist}) Hz")
    sos = butter(order, cutoff / nyquist, output="sos")
    n = x.shape[axis]
    padlen = min(3 * (2 * len(sos) + 1), n - 1)
    return sosfiltfilt(sos, x, axis=axis, padlen=padlen)


def differentiate(series, dt: float, axis: int = 0) -> np.ndarray:
    """Second-order finite differences; output has the input's length."""
    x = np.asarray(series, dtype=float)
    if x.shape[axis] < 3:
        raise ValueError("differentiation needs at least 3 samples")
    return np.gradient(x, dt, axis=axis, edge_order=2)


# ---------------------------------------------------------------------------
# Joint coordinates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Calibration:
    """Standing-posture reference for each joint.

    ``rotation`` is the distal-in-proximal rotation and ``center`` the joint
    center in the proximal frame, both in the posture defined as zero.
    """

    rotation: Mapping[str, np.ndarray]
    center: Mapping[str, np.ndarray]

    @classmethod
    def nominal(cls, chain: LimbChain) -> "Calibration":
        """Segments aligned, each joint center at the proximal segment's distal end."""
        rot = {j.name: np.eye(3) for j in chain.joints}
        center = {j.name: chain.proximal_of(j).distal_point for j in chain.joints}
        return cls(rot, center)

    @classmethod
    def from_poses(cls, chain: LimbChain, poses: Mapping[str, tuple]) -> "Calibration":
        rot, center = {}, {}
        for j in chain.joints:
            rp, tp = poses[j.proximal_segment]
            rd, td = poses[j.distal_segment]
            rot[j.name] = np.asarray(rp).T @ np.asarray(rd)
            p = np.asarray(rd) @ j.center_offset + np.asarray(td)
            center[j.name] = np.asarray(rp).T @ (p - np.asarray(tp))
        return cls(rot, center)


@dataclass
class JointTrack:
    """One joint's coordinates and derivatives (anatomical signs).

    ``angles`` is (alpha, beta, gamma); ``translations`` is (x, y, z) measured
    along the proximal axes from the calibrated joint center.
    ``angular_velocity`` and ``linear_velocity`` are the distal segment's
    motion relative to the proximal one, expressed on the distal anatomical
    axes; these are the quantities that multiply joint moments and forces in
    power calculations.
    """

    angles: np.ndarray
    angle_rates: np.ndarray
    angle_accelerations: np.ndarray
    translations: np.ndarray
    translation_velocity: np.ndarray
    translation_acceleration: np.ndarray
    angular_velocity: np.ndarray
    linear_velocity: np.ndarray
    helical: np.ndarray
    valid: np.ndarray
    translations_enabled: bool


@dataclass
class JointStateSeries:
    times: np.ndarray
    joints: dict[str, JointTrack]
    convention: AnatomicalConvention

    def __getitem__(self, joint: str) -> JointTrack:
        return self.joints[joint]

    def anatomical_vector(self) -> np.ndarray:
        """(frames, 6 * joints) laid out per joint as x, y, z, alpha, beta, gamma."""
        parts = [np.hstack([self.joints[j].translations, self.joints[j].angles])
                 for j in self.convention.joints]
        return np.hstack(parts)

    def model_coordinates(self) -> np.ndarray:
        return from_anatomical(self.anatomical_vector(), self.convention)


def _fill_invalid(values: np.ndarray, valid: np.ndarray, times: np.ndarray) -> np.ndarray:
    if valid.all():
        return values
    out = values.copy()
    for k in range(values.shape[1]):
        out[~valid, k] = np.interp(times[~valid], times[valid], values[valid, k])
    return out


def joint_states(chain: LimbChain, poses: SegmentPoseSeries, calibration: Calibration | None = None,
                 filter_cutoff: float | None = 10.0, decomposition: str = "cardan",
                 ) -> JointStateSeries:
    """Joint angles, translations and their filtered derivatives for every joint."""
    if decomposition not in ("cardan", "helical"):
        raise ValueError("decomposition must be 'cardan' or 'helical'")
    calibration = calibration or Calibration.nominal(chain)
    times = np.asarray(poses.times, dtype=float)
    dt = check_uniform(times)
    rate = 1.0 / dt
    out = {}
    for joint in chain.joints:
        try:
            prox = poses[joint.proximal_segment]
            dist = poses[joint.distal_segment]
        except KeyError as exc:
            raise AlignmentError(f"no pose for segment {exc.args[0]!r}") from None
        signs = chain.convention.rotation_sign_vector(joint.name)
        rel_rot, _ = relative_pose(prox.rotation, prox.translation, dist.rotation, dist.translation)
        r_cal = calibration.rotation[joint.name]
        motion = r_cal.T @ rel_rot
        rh, ok = decompose_rotation(motion)
        if not ok.any():
            raise SingularAttitudeError(f"{joint.name}: every frame is at the singular attitude")
        rh = _fill_invalid(np.unwrap(rh, axis=0), ok, times)
        rh = low_pass_filter(rh, filter_cutoff, rate)
        rh_rates = differentiate(rh, dt)
        motion_f = compose_rotation(rh)
        omega = cardan_body_rates(rh, rh_rates)
        helical = low_pass_filter(helical_vector(motion, signs), filter_cutoff, rate)

        if decomposition == "cardan":
            angles = rh * signs
        else:
            angles = helical
        rates = differentiate(angles, dt)
        accels = differentiate(rates, dt)

        if joint.translations_enabled:
            p = np.einsum("nij,j->ni", dist.rotation, joint.center_offset) + dist.translation
            center = np.einsum("nji,nj->ni", prox.rotation, p - prox.translation)
            trans = low_pass_filter(center - calibration.center[joint.name], filter_cutoff, rate)
            tvel = differentiate(trans, dt)
            tacc = differentiate(tvel, dt)
            rel_f = r_cal @ motion_f
            lin = np.einsum("nji,nj->ni", rel_f, tvel)
        else:
            trans = np.zeros((len(times), 3))
            tvel = np.zeros_like(trans)
            tacc = np.zeros_like(trans)
            lin = np.zeros_like(trans)

        valid = ok & prox.valid & dist.valid
        out[joint.name] = JointTrack(angles, rates, accels, trans, tvel, tacc, omega * signs, lin,
                                     helical, valid, joint.translations_enabled)
    return JointStateSeries(times, out, chain.convention)
