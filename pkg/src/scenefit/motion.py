"""Reference motion clips: representation, procedural generators with exact
ground-truth contact labels, finite-difference velocities, and JSON I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .character import CharacterModel, default_character, state_from_frame

THIGH_LEN = 0.42   # hip-to-knee, matches the default character
SHIN_LEN = 0.38    # knee-to-ankle
HIP_DROP = 0.07    # hip anchor below the pelvis center
ANKLE_OFF = (-0.02, 0.03)  # ankle anchor relative to the foot center


class ClipParseError(ValueError):
    """Malformed clip file; carries the offending field name."""

    def __init__(self, message: str, fieldname: str | None = None):
        super().__init__(message)
        self.fieldname = fieldname


@dataclass
class MotionFrame:
    root: np.ndarray       # (x, z, theta)
    joints: np.ndarray     # one angle per actuated joint
    root_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joint_vel: np.ndarray | None = None


@dataclass
class MotionClip:
    clip_id: int
    fps: float
    frames: list[MotionFrame]
    contacts_gt: list[int] | None = None

    def __post_init__(self):
        if self.clip_id < 0:
            raise ValueError("clip id must be non-negative")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if len(self.frames) < 2:
            raise ValueError("a clip needs at least two frames")
        n_j = len(self.frames[0].joints)
        for i, fr in enumerate(self.frames):
            if len(fr.joints) != n_j:
                raise ValueError(f"frame {i}: joint vector length changed")
        if self.contacts_gt is not None and len(self.contacts_gt) != len(self.frames):
            raise ValueError("contact labels length != frame count")

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def duration(self) -> float:
        return self.n_frames / self.fps


def wrap_angle(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def finite_difference_velocities(clip: MotionClip) -> MotionClip:
    """Central differences inside, one-sided at the ends; angles are
    differenced on the circle so wrap crossings stay continuous."""
    n = clip.n_frames
    fps = clip.fps
    for i, fr in enumerate(clip.frames):
        lo = max(0, i - 1)
        hi = min(n - 1, i + 1)
        span = (hi - lo) / fps
        a, b = clip.frames[lo], clip.frames[hi]
        dvx = (b.root[0] - a.root[0]) / span
        dvz = (b.root[1] - a.root[1]) / span
        dw = wrap_angle(b.root[2] - a.root[2]) / span
        fr.root_vel = np.array([dvx, dvz, dw])
        dj = np.array([wrap_angle(x) for x in (b.joints - a.joints)]) / span
        fr.joint_vel = dj
    return clip


# -- file I/O -----------------------------------------------------------------


def save_clip(clip: MotionClip, path) -> None:
    doc = {
        "id": clip.clip_id,
        "fps": clip.fps,
        "frames": [{"root": [float(v) for v in fr.root],
                    "joints": [float(v) for v in fr.joints]} for fr in clip.frames],
    }
    if clip.contacts_gt is not None:
        doc["contacts_gt"] = [int(v) for v in clip.contacts_gt]
    with open(path, "w") as f:
        json.dump(doc, f)


def load_clip(path) -> MotionClip:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ClipParseError(f"{path}: invalid JSON at line {exc.lineno}") from exc
    for key in ("id", "fps", "frames"):
        if key not in doc:
            raise ClipParseError(f"{path}: missing required key '{key}'", fieldname=key)
    frames = []
    for i, rec in enumerate(doc["frames"]):
        for key in ("root", "joints"):
            if key not in rec:
                raise ClipParseError(f"{path}: frame {i} missing '{key}'", fieldname=key)
        if len(rec["root"]) != 3:
            raise ClipParseError(f"{path}: frame {i} root must be [x, z, theta]",
                                 fieldname="root")
        frames.append(MotionFrame(np.array(rec["root"], dtype=float),
                                  np.array(rec["joints"], dtype=float)))
    clip = MotionClip(int(doc["id"]), float(doc["fps"]), frames, doc.get("contacts_gt"))
    return finite_difference_velocities(clip)


# -- procedural generators -----------------------------------------------------


def _ease(u: float) -> float:
    u = min(1.0, max(0.0, u))
    return 0.5 * (1.0 - math.cos(math.pi * u))


def _ik_leg(hip_x, hip_z, ankle_x, ankle_z, pelvis_th=0.0, foot_th=0.0):
    """Knee-forward two-link IK; returns (hip, knee, ankle) joint angles."""
    dx = ankle_x - hip_x
    dz = ankle_z - hip_z
    d = math.hypot(dx, dz)
    d = min(max(d, abs(THIGH_LEN - SHIN_LEN) + 5e-3), THIGH_LEN + SHIN_LEN - 5e-3)
    delta = math.atan2(dx, -dz)
    cos_a = (THIGH_LEN * THIGH_LEN + d * d - SHIN_LEN * SHIN_LEN) / (2.0 * THIGH_LEN * d)
    a = math.acos(min(1.0, max(-1.0, cos_a)))
    th_thigh = delta + a
    knee_x = hip_x + THIGH_LEN * math.sin(th_thigh)
    knee_z = hip_z - THIGH_LEN * math.cos(th_thigh)
    th_shin = math.atan2(ankle_x - knee_x, -(ankle_z - knee_z))
    return (th_thigh - pelvis_th, th_shin - th_thigh, foot_th - th_shin)


def _leg_angles(pelvis_x, pelvis_z, foot_x, foot_z, pelvis_th=0.0):
    hip_x = pelvis_x + HIP_DROP * math.sin(pelvis_th)
    hip_z = pelvis_z - HIP_DROP * math.cos(pelvis_th)
    ankle_x = foot_x + ANKLE_OFF[0]
    ankle_z = foot_z + ANKLE_OFF[1]
    return _ik_leg(hip_x, hip_z, ankle_x, ankle_z, pelvis_th)


def _plan_quasi_static_walk(pelvis0: float, feet0: float, feet1: float,
                            pelvis1: float, n_frames: int, step_len: float = 0.12,
                            lift: float = 0.02, rest_z: float = 0.03,
                            shift_bias: float = 0.0):
    """Statically balanced stepping: the pelvis translates only while both
    feet are planted and parks over the stance foot during each swing.

    Returns (pelvis_x, left, right) per-frame arrays; both feet end at feet1.
    """
    pelvis = np.empty(n_frames)
    left = np.empty((n_frames, 2))
    right = np.empty((n_frames, 2))
    travel = feet1 - feet0
    if n_frames < 8 or abs(travel) < 0.05:
        # too short to step: slide everything with one ease
        for f in range(n_frames):
            u = _ease(f / max(1, n_frames - 1))
            pelvis[f] = pelvis0 + (pelvis1 - pelvis0) * u
            left[f] = right[f] = (feet0 + travel * u, rest_z)
        return pelvis, left, right

    k = max(1, math.ceil(abs(travel) / step_len))
    # per round: swing left to the next target, shift the pelvis over it,
    # swing right to join; a final shift parks the pelvis at pelvis1.
    # Moves live on a continuous phase axis so resampling at any fps agrees.
    moves = []
    lx = rx = feet0
    px = pelvis0
    for i in range(k):
        tgt = feet0 + travel * (i + 1) / k
        moves.append(("swing_l", lx, tgt, rx, px))
        lx = tgt
        moves.append(("shift", px, tgt + shift_bias, lx, rx))
        px = tgt + shift_bias
        moves.append(("swing_r", rx, tgt, lx, px))
        rx = tgt
    moves.append(("shift", px, pelvis1, lx, rx))

    weights = np.array([1.0 if m[0].startswith("swing") else 0.9 for m in moves])
    bounds = np.concatenate([[0.0], np.cumsum(weights)]) / weights.sum()

    for f in range(n_frames):
        tau = f / n_frames
        mi = min(len(moves) - 1, int(np.searchsorted(bounds, tau, side="right")) - 1)
        kind, start, tgt, other_a, other_b = moves[mi]
        u = (tau - bounds[mi]) / (bounds[mi + 1] - bounds[mi])
        if kind == "shift":
            pelvis[f] = start + (tgt - start) * _ease(u)
            left[f] = (other_a, rest_z)
            right[f] = (other_b, rest_z)
        else:
            sx = start + (tgt - start) * _ease(u)
            sz = rest_z + lift * math.sin(math.pi * min(1.0, u))
            pelvis[f] = other_b
            if kind == "swing_l":
                left[f] = (sx, sz)
                right[f] = (other_a, rest_z)
            else:
                right[f] = (sx, sz)
                left[f] = (other_a, rest_z)
    return pelvis, left, right


_ARM_SHOULDER = 0.25
_ARM_ELBOW = 0.45
_WALK_PELVIS_Z = 0.88
_PRESIT_BACK = 0.06    # pelvis sits this far behind the feet just before lowering
_SIT_FOOT_BASE = 0.12  # foot center ahead of the pelvis when seated


def seated_foot_offset(seat_height: float) -> float:
    """Feet slide forward for low seats so the knees stay inside their limits."""
    return _SIT_FOOT_BASE + max(0.0, 0.45 - seat_height) * 0.6


def synth_sit(seat_height: float, approach: float,
              durations: tuple[float, float, float, float] = (2.4, 0.8, 2.0, 0.8),
              fps: float = 30.0, model: CharacterModel | None = None,
              clip_id: int = 0) -> MotionClip:
    """Walk in, lower onto a seat, hold, and stand back up.

    Ground-truth contact labels are 1 exactly during the seated hold; the held
    pelvis height is seat_height plus the pelvis half-thickness.
    """
    if not 0.1 <= seat_height <= 1.0:
        raise ValueError(f"seat height {seat_height} outside [0.1, 1.0]")
    if any(d <= 0 for d in durations) or len(durations) != 4:
        raise ValueError("all four phase durations must be positive")
    if approach < 0:
        raise ValueError("approach distance must be >= 0")
    model = model or default_character()
    half = model.links[0].shape.b
    z_sit = seat_height + half
    x_hold = 0.0
    x_start = x_hold - approach
    foot_x = x_hold + seated_foot_offset(seat_height)
    x_pre = foot_x - _PRESIT_BACK

    n_w, n_l, n_h, n_r = (max(1, round(d * fps)) for d in durations)
    total = n_w + n_l + n_h + n_r + 1
    if approach < 1e-9:
        # already at the sit spot: feet planted in the seated stance, the
        # walk phase just shifts the weight forward over them
        walk_px = np.array([x_start + (x_pre - x_start) * _ease(f / n_w)
                            for f in range(n_w)])
        gait_l = gait_r = np.array([(foot_x, 0.03)] * n_w)
    else:
        walk_px, gait_l, gait_r = _plan_quasi_static_walk(
            x_start, x_start + 0.02, foot_x, x_pre, n_w)

    frames = []
    labels = []
    for f in range(total):
        if f < n_w:
            px = walk_px[f]
            pz = _WALK_PELVIS_Z
            waist = 0.0
            lf, rf = gait_l[f], gait_r[f]
            label = 0
        elif f < n_w + n_l:
            u = _ease((f - n_w) / n_l)
            px = x_pre + (x_hold - x_pre) * u
            pz = _WALK_PELVIS_Z + (z_sit - _WALK_PELVIS_Z) * u
            waist = -0.3 * math.sin(math.pi * min(1.0, (f - n_w) / n_l))
            lf = rf = (foot_x, 0.03)
            label = 0
        elif f < n_w + n_l + n_h:
            px, pz, waist = x_hold, z_sit, 0.0
            lf = rf = (foot_x, 0.03)
            label = 1
        else:
            u = _ease(min(1.0, (f - n_w - n_l - n_h) / n_r))
            px = x_hold + (x_pre - x_hold) * u
            pz = z_sit + (_WALK_PELVIS_Z - z_sit) * u
            waist = -0.3 * math.sin(math.pi * min(1.0, (f - n_w - n_l - n_h) / n_r))
            lf = rf = (foot_x, 0.03)
            label = 0
        lh, lk, la = _leg_angles(px, pz, lf[0], lf[1])
        rh, rk, ra = _leg_angles(px, pz, rf[0], rf[1])
        joints = np.array([waist, lh, lk, la, rh, rk, ra,
                           _ARM_SHOULDER, _ARM_ELBOW, _ARM_SHOULDER, _ARM_ELBOW])
        frames.append(MotionFrame(np.array([px, pz, 0.0]), joints))
        labels.append(label)
    clip = MotionClip(clip_id, fps, frames, labels)
    return finite_difference_velocities(clip)


_TOP_PELVIS_Z = 0.92


def synth_platform(height: float, fps: float = 30.0,
                   model: CharacterModel | None = None, clip_id: int = 1) -> MotionClip:
    """Walk to a platform, step onto it, stand on top, and step down ahead.

    Contact labels are 1 while any foot is supported by the platform top.
    """
    if not 0.2 <= height <= 1.0:
        raise ValueError(f"platform height {height} outside [0.2, 1.0]")
    model = model or default_character()
    approach = 0.6
    x_mount = 0.0            # pelvis x at the base of the platform
    x_top = 0.44             # pelvis x standing on top
    lead_top, trail_top = 0.42, 0.46
    x_exit = x_top + 0.46
    durations = (2.0, 1.0, 1.0, 1.0, 0.4)
    n_w, n_up, n_h, n_dn, n_end = (max(1, round(d * fps)) for d in durations)
    total = n_w + n_up + n_h + n_dn + n_end + 1
    walk_px, gait_l, gait_r = _plan_quasi_static_walk(
        x_mount - approach, x_mount - approach + 0.02, x_mount + 0.02, x_mount, n_w)

    def mount(u):
        # lead foot first, then the pelvis rises while the trail foot follows
        if u < 0.4:
            s = _ease(u / 0.4)
            lf = (x_mount + 0.02 + (lead_top - x_mount - 0.02) * s,
                  0.03 + (height + 0.03 - 0.03) * s + 0.06 * math.sin(math.pi * s))
            rf = (x_mount + 0.02, 0.03)
            px, pz = x_mount, _WALK_PELVIS_Z
        else:
            s = _ease((u - 0.4) / 0.6)
            lf = (lead_top, height + 0.03)
            rf = (x_mount + 0.02 + (trail_top - x_mount - 0.02) * s,
                  0.03 + (height) * s + 0.06 * math.sin(math.pi * s))
            px = x_mount + (x_top - x_mount) * s
            pz = _WALK_PELVIS_Z + (_TOP_PELVIS_Z + height - _WALK_PELVIS_Z) * s
        return px, pz, lf, rf

    def dismount(u):
        if u < 0.6:
            s = _ease(u / 0.6)
            lf = (lead_top + (x_exit - 0.02 - lead_top) * s,
                  height + 0.03 - height * s + 0.05 * math.sin(math.pi * s))
            rf = (trail_top, height + 0.03)
            px = x_top + (x_exit - x_top) * s * 0.7
            pz = _TOP_PELVIS_Z + height - (height * 0.8) * s
        else:
            s = _ease((u - 0.6) / 0.4)
            lf = (x_exit - 0.02, 0.03)
            rf = (trail_top + (x_exit + 0.02 - trail_top) * s,
                  height + 0.03 - height * s + 0.05 * math.sin(math.pi * s))
            px = x_top + (x_exit - x_top) * (0.7 + 0.3 * s)
            pz = _TOP_PELVIS_Z + height - height * 0.8 - (height * 0.2 + (_TOP_PELVIS_Z - _WALK_PELVIS_Z)) * s
        return px, pz, lf, rf

    frames = []
    labels = []
    for f in range(total):
        if f < n_w:
            px = walk_px[f]
            pz = _WALK_PELVIS_Z
            lf, rf = gait_l[f], gait_r[f]
            label = 0
        elif f < n_w + n_up:
            u = (f - n_w) / n_up
            px, pz, lf, rf = mount(u)
            label = 1 if u >= 0.4 else 0
        elif f < n_w + n_up + n_h:
            px, pz = x_top, _TOP_PELVIS_Z + height
            lf, rf = (lead_top, height + 0.03), (trail_top, height + 0.03)
            label = 1
        elif f < n_w + n_up + n_h + n_dn:
            u = (f - n_w - n_up - n_h) / n_dn
            px, pz, lf, rf = dismount(u)
            label = 1 if u < 0.6 else 0
        else:
            px, pz = x_exit, _WALK_PELVIS_Z
            lf, rf = (x_exit - 0.02, 0.03), (x_exit + 0.02, 0.03)
            label = 0
        lh, lk, la = _leg_angles(px, pz, lf[0], lf[1])
        rh, rk, ra = _leg_angles(px, pz, rf[0], rf[1])
        joints = np.array([0.0, lh, lk, la, rh, rk, ra,
                           _ARM_SHOULDER, _ARM_ELBOW, _ARM_SHOULDER, _ARM_ELBOW])
        frames.append(MotionFrame(np.array([px, pz, 0.0]), joints))
        labels.append(label)
    clip = MotionClip(clip_id, fps, frames, labels)
    return finite_difference_velocities(clip)


# -- clip editing ----------------------------------------------------------------


def translate_clip(clip: MotionClip, dx: float, new_id: int | None = None) -> MotionClip:
    frames = [MotionFrame(fr.root + np.array([dx, 0.0, 0.0]), fr.joints.copy())
              for fr in clip.frames]
    labels = list(clip.contacts_gt) if clip.contacts_gt is not None else None
    out = MotionClip(clip.clip_id if new_id is None else new_id, clip.fps, frames, labels)
    return finite_difference_velocities(out)


def concat_clips(a: MotionClip, b: MotionClip, bridge_s: float = 0.4,
                 new_id: int | None = None) -> MotionClip:
    """Concatenate b after a with a short eased bridge between the end/start poses."""
    if a.fps != b.fps:
        raise ValueError("clips must share fps")
    n_b = max(1, round(bridge_s * a.fps))
    fa, fb = a.frames[-1], b.frames[0]
    frames = [MotionFrame(fr.root.copy(), fr.joints.copy()) for fr in a.frames]
    for k in range(1, n_b + 1):
        u = _ease(k / (n_b + 1))
        root = fa.root + (fb.root - fa.root) * u
        root[2] = fa.root[2] + wrap_angle(fb.root[2] - fa.root[2]) * u
        joints = fa.joints + np.array([wrap_angle(x) for x in fb.joints - fa.joints]) * u
        frames.append(MotionFrame(root, joints))
    frames.extend(MotionFrame(fr.root.copy(), fr.joints.copy()) for fr in b.frames)
    labels = None
    if a.contacts_gt is not None and b.contacts_gt is not None:
        labels = list(a.contacts_gt) + [0] * n_b + list(b.contacts_gt)
    out = MotionClip(a.clip_id if new_id is None else new_id, a.fps, frames, labels)
    return finite_difference_velocities(out)


def make_two_sit(seat_height: float = 0.45, gap: float = 2.5, fps: float = 30.0,
                 model: CharacterModel | None = None, clip_id: int = 2) -> MotionClip:
    """Two sit interactions at locations `gap` apart, joined by a glide
    bridge; used to exercise contact clustering."""
    durations = (0.8, 0.8, 1.5, 0.8)
    first = synth_sit(seat_height, 0.0, durations, fps=fps, model=model, clip_id=clip_id)
    second = translate_clip(
        synth_sit(seat_height, 0.0, durations, fps=fps, model=model, clip_id=clip_id),
        gap, new_id=clip_id)
    return concat_clips(first, second, bridge_s=1.0, new_id=clip_id)


# -- reference track -------------------------------------------------------------


class ReferenceTrack:
    """Per-frame CharacterStates (with key-body FK) for a clip and model."""

    def __init__(self, model: CharacterModel, clip: MotionClip):
        if len(clip.frames[0].joints) != model.n_joints:
            raise ValueError(
                f"clip has {len(clip.frames[0].joints)} joints, model expects {model.n_joints}")
        self.model = model
        self.clip = clip
        self._states = [
            state_from_frame(model, fr.root, fr.joints, fr.root_vel, fr.joint_vel)
            for fr in clip.frames
        ]

    @property
    def n_frames(self) -> int:
        return len(self._states)

    @property
    def fps(self) -> float:
        return self.clip.fps

    @property
    def clip_id(self) -> int:
        return self.clip.clip_id

    def state(self, t: int):
        if not 0 <= t < self.n_frames:
            raise ValueError(f"frame {t} out of range [0, {self.n_frames})")
        return self._states[t]
