"""2D humanoid model: link/joint table, forward kinematics, MDP state
features, reference-state initialization, and early termination."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .physics2d import RevoluteJoint, RigidLink, Shape, SimWorld


@dataclass
class LinkSpec:
    name: str
    shape: Shape
    mass: float
    inertia: float
    pos: tuple[float, float]  # world position in the default standing pose


@dataclass
class KeyBody:
    name: str
    link: int
    offset: tuple[float, float]


@dataclass
class CharacterState:
    """Pose/velocity snapshot used by rewards and featurization."""

    root_x: float
    root_z: float
    root_th: float
    root_vx: float
    root_vz: float
    root_w: float
    q: np.ndarray
    qd: np.ndarray
    keypos: np.ndarray  # (n_key, 2) world positions


class CharacterModel:
    """Ordered link/joint/key-body tables. The joint tree must be connected
    and acyclic with parents preceding children."""

    def __init__(self, links: list[LinkSpec], joints: list[RevoluteJoint],
                 key_bodies: list[KeyBody], ground_contact_links: list[str]):
        self.links = links
        self.joints = joints
        self.key_bodies = key_bodies
        self.ground_contact_links = list(ground_contact_links)
        self.link_index = {l.name: i for i, l in enumerate(links)}
        if len(self.link_index) != len(links):
            raise ValueError("duplicate link names")
        seen = {0}
        for jt in joints:
            if jt.parent not in seen:
                raise ValueError(f"joint {jt.name}: parent {jt.parent} not yet reachable")
            if jt.child in seen:
                raise ValueError(f"joint {jt.name}: child {jt.child} already attached")
            seen.add(jt.child)
        if seen != set(range(len(links))):
            raise ValueError("joint tree does not span all links")
        for kb in key_bodies:
            if not 0 <= kb.link < len(links):
                raise ValueError(f"key body {kb.name}: invalid link {kb.link}")

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_key(self) -> int:
        return len(self.key_bodies)

    def feature_dims(self, n_slots: int = 1, embed_width: int = 128) -> dict[str, int]:
        """Published observation block sizes for this model."""
        j, k = self.n_joints, self.n_key
        s_h = 1 + 2 + 2 + 1 + 2 * j + j + 2 * k
        s_r = 2 + 2 + 2 + 1 + 2 * j + j + 2 * k
        s_e = embed_width * n_slots
        return {"s_h": s_h, "s_r": s_r, "s_e": s_e, "obs": s_h + s_e + s_r}

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "links": [
                {"name": l.name, "shape": {"kind": l.shape.kind, "a": l.shape.a, "b": l.shape.b},
                 "mass": l.mass, "inertia": l.inertia, "pos": list(l.pos)}
                for l in self.links
            ],
            "joints": [
                {"name": j.name, "parent": self.links[j.parent].name,
                 "child": self.links[j.child].name,
                 "anchor_parent": list(j.anchor_parent), "anchor_child": list(j.anchor_child),
                 "limits": list(j.limits), "kp": j.kp, "kd": j.kd,
                 "torque_limit": j.torque_limit}
                for j in self.joints
            ],
            "key_bodies": [
                {"name": k.name, "link": self.links[k.link].name, "offset": list(k.offset)}
                for k in self.key_bodies
            ],
            "ground_contact_links": self.ground_contact_links,
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1)

    @staticmethod
    def load(path) -> "CharacterModel":
        with open(path) as f:
            doc = json.load(f)
        links = []
        for rec in doc["links"]:
            sh = Shape(rec["shape"]["kind"], rec["shape"]["a"], rec["shape"]["b"])
            inertia = rec.get("inertia") or box_inertia(rec["mass"], sh)
            links.append(LinkSpec(rec["name"], sh, rec["mass"], inertia, tuple(rec["pos"])))
        name_to_i = {l.name: i for i, l in enumerate(links)}
        joints = [
            RevoluteJoint(rec["name"], name_to_i[rec["parent"]], name_to_i[rec["child"]],
                          tuple(rec["anchor_parent"]), tuple(rec["anchor_child"]),
                          tuple(rec["limits"]), rec["kp"], rec["kd"], rec["torque_limit"])
            for rec in doc["joints"]
        ]
        keys = [KeyBody(rec["name"], name_to_i[rec["link"]], tuple(rec["offset"]))
                for rec in doc["key_bodies"]]
        return CharacterModel(links, joints, keys, doc["ground_contact_links"])


def box_inertia(mass: float, shape: Shape) -> float:
    if shape.kind == "box":
        w, h = 2.0 * shape.a, 2.0 * shape.b
    else:
        w, h = 2.0 * shape.a, 2.0 * (shape.a + shape.b)
    return mass * (w * w + h * h) / 12.0


def default_character() -> CharacterModel:
    """45 kg / 1.6 m anthropomorphic table; 12 links, 11 actuated joints."""

    def cap(r, hl):
        return Shape("capsule", r, hl)

    def box(hw, hh):
        return Shape("box", hw, hh)

    specs = [
        ("pelvis", box(0.10, 0.125), 8.4, (0.0, 0.93)),
        ("torso", box(0.12, 0.17), 16.6, (0.0, 1.19)),
        ("l_thigh", cap(0.055, 0.19), 4.6, (0.0, 0.65)),
        ("l_shin", cap(0.045, 0.17), 2.2, (0.0, 0.25)),
        ("l_foot", box(0.13, 0.03), 1.0, (0.02, 0.03)),
        ("r_thigh", cap(0.055, 0.19), 4.6, (0.0, 0.65)),
        ("r_shin", cap(0.045, 0.17), 2.2, (0.0, 0.25)),
        ("r_foot", box(0.13, 0.03), 1.0, (0.02, 0.03)),
        ("l_uarm", cap(0.040, 0.12), 1.3, (0.0, 1.20)),
        ("l_farm", cap(0.035, 0.115), 0.9, (0.0, 0.935)),
        ("r_uarm", cap(0.040, 0.12), 1.3, (0.0, 1.20)),
        ("r_farm", cap(0.035, 0.115), 0.9, (0.0, 0.935)),
    ]
    links = [LinkSpec(n, s, m, box_inertia(m, s), p) for (n, s, m, p) in specs]
    idx = {l.name: i for i, l in enumerate(links)}

    def jt(name, parent, child, ap, ac, limits, kp, kd, tl):
        return RevoluteJoint(name, idx[parent], idx[child], ap, ac, limits, kp, kd, tl)

    joints = [
        jt("waist", "pelvis", "torso", (0.0, 0.09), (0.0, -0.17), (-0.9, 0.9), 400.0, 40.0, 250.0),
        jt("l_hip", "pelvis", "l_thigh", (0.0, -0.07), (0.0, 0.21), (-0.7, 2.2), 350.0, 35.0, 250.0),
        jt("l_knee", "l_thigh", "l_shin", (0.0, -0.21), (0.0, 0.19), (-2.4, 0.05), 350.0, 35.0, 250.0),
        jt("l_ankle", "l_shin", "l_foot", (0.0, -0.19), (-0.02, 0.03), (-1.0, 1.0), 700.0, 50.0, 150.0),
        jt("r_hip", "pelvis", "r_thigh", (0.0, -0.07), (0.0, 0.21), (-0.7, 2.2), 350.0, 35.0, 250.0),
        jt("r_knee", "r_thigh", "r_shin", (0.0, -0.21), (0.0, 0.19), (-2.4, 0.05), 350.0, 35.0, 250.0),
        jt("r_ankle", "r_shin", "r_foot", (0.0, -0.19), (-0.02, 0.03), (-1.0, 1.0), 700.0, 50.0, 150.0),
        jt("l_shoulder", "torso", "l_uarm", (0.0, 0.15), (0.0, 0.14), (-2.5, 2.5), 120.0, 12.0, 80.0),
        jt("l_elbow", "l_uarm", "l_farm", (0.0, -0.14), (0.0, 0.125), (-0.05, 2.4), 80.0, 8.0, 50.0),
        jt("r_shoulder", "torso", "r_uarm", (0.0, 0.15), (0.0, 0.14), (-2.5, 2.5), 120.0, 12.0, 80.0),
        jt("r_elbow", "r_uarm", "r_farm", (0.0, -0.14), (0.0, 0.125), (-0.05, 2.4), 80.0, 8.0, 50.0),
    ]
    keys = [
        KeyBody("pelvis", idx["pelvis"], (0.0, 0.0)),
        KeyBody("head", idx["torso"], (0.0, 0.31)),
        KeyBody("l_hand", idx["l_farm"], (0.0, -0.13)),
        KeyBody("r_hand", idx["r_farm"], (0.0, -0.13)),
        KeyBody("l_foot", idx["l_foot"], (0.0, 0.0)),
        KeyBody("r_foot", idx["r_foot"], (0.0, 0.0)),
    ]
    ground_ok = ["pelvis", "l_thigh", "r_thigh", "l_foot", "r_foot"]
    return CharacterModel(links, joints, keys, ground_ok)


STANDING_PELVIS_HEIGHT = 0.93
PELVIS_HALF_THICKNESS = 0.125


# -- world construction and kinematics ----------------------------------------


def build_world(model: CharacterModel, dt: float = 1.0 / 120.0,
                iterations: int = 15, friction: float = 0.8) -> SimWorld:
    world = SimWorld(dt=dt, iterations=iterations, friction=friction)
    for i, spec in enumerate(model.links):
        link = RigidLink(i, spec.name, spec.mass, spec.inertia, spec.shape)
        link.set_pose(spec.pos[0], spec.pos[1], 0.0)
        world.links.append(link)
    world.joints = list(model.joints)
    return world


def forward_kinematics(model: CharacterModel, root_pose, joint_q,
                       root_vel=(0.0, 0.0, 0.0), joint_qd=None):
    """Returns per-link (x, z, th, vx, vz, w) arrays for the given coordinates."""
    n = model.n_links
    if joint_qd is None:
        joint_qd = [0.0] * model.n_joints
    poses = [None] * n
    rx, rz, rth = root_pose
    rvx, rvz, rw = root_vel
    poses[0] = (rx, rz, rth, rvx, rvz, rw)
    for jt, q, qd in zip(model.joints, joint_q, joint_qd):
        px, pz, pth, pvx, pvz, pw = poses[jt.parent]
        cth = pth + q
        cw = pw + qd
        cp, sp = math.cos(pth), math.sin(pth)
        cc, sc = math.cos(cth), math.sin(cth)
        apx, apz = jt.anchor_parent
        acx, acz = jt.anchor_child
        rpx = cp * apx - sp * apz
        rpz = sp * apx + cp * apz
        rcx = cc * acx - sc * acz
        rcz = sc * acx + cc * acz
        cx = px + rpx - rcx
        cz = pz + rpz - rcz
        cvx = pvx - pw * rpz + cw * rcz
        cvz = pvz + pw * rpx - cw * rcx
        poses[jt.child] = (cx, cz, cth, cvx, cvz, cw)
    return poses


def set_world_state(world: SimWorld, model: CharacterModel, root_pose, joint_q,
                    root_vel=(0.0, 0.0, 0.0), joint_qd=None) -> None:
    poses = forward_kinematics(model, root_pose, joint_q, root_vel, joint_qd)
    for link, pose in zip(world.links, poses):
        link.set_pose(*pose)


def key_body_positions(model: CharacterModel, world: SimWorld) -> np.ndarray:
    out = np.empty((model.n_key, 2))
    for i, kb in enumerate(model.key_bodies):
        out[i] = world.links[kb.link].world_point(*kb.offset)
    return out


def get_state(world: SimWorld, model: CharacterModel) -> CharacterState:
    root = world.links[0]
    q = np.array(world.joint_angles())
    qd = np.array(world.joint_velocities())
    return CharacterState(root.x, root.z, root.th, root.vx, root.vz, root.w,
                          q, qd, key_body_positions(model, world))


def state_from_frame(model: CharacterModel, root_pose, joint_q, root_vel, joint_qd) -> CharacterState:
    poses = forward_kinematics(model, root_pose, joint_q, root_vel, joint_qd)
    keypos = np.empty((model.n_key, 2))
    for i, kb in enumerate(model.key_bodies):
        x, z, th = poses[kb.link][:3]
        c, s = math.cos(th), math.sin(th)
        lx, lz = kb.offset
        keypos[i] = (x + c * lx - s * lz, z + s * lx + c * lz)
    return CharacterState(root_pose[0], root_pose[1], root_pose[2],
                          root_vel[0], root_vel[1], root_vel[2],
                          np.asarray(joint_q, dtype=float).copy(),
                          np.asarray(joint_qd, dtype=float).copy(), keypos)


def _lowest_point(link) -> float:
    sh = link.shape
    if sh.kind == "box":
        c, s = math.cos(link.th), math.sin(link.th)
        return link.z - abs(s) * sh.a - abs(c) * sh.b
    return link.z - abs(math.cos(link.th)) * sh.b - sh.a


def ground_clearance_fix(world: SimWorld, clearance: float = 1e-3) -> float:
    """Lifts a ground-penetrating character up to `clearance` above ground."""
    low = min(_lowest_point(l) for l in world.links)
    if low < -1e-6:
        dz = clearance - low
        for l in world.links:
            l.z += dz
        return dz
    return 0.0


# -- featurization -------------------------------------------------------------


def _rot_local(th: float, vx: float, vz: float) -> tuple[float, float]:
    c, s = math.cos(-th), math.sin(-th)
    return (c * vx - s * vz, s * vx + c * vz)


def featurize_proprio(world: SimWorld, model: CharacterModel) -> np.ndarray:
    """Root-local proprioception: height, heading, velocities, joint angles as
    (cos, sin) pairs, joint velocities, key-body offsets from the root."""
    root = world.links[0]
    out = [root.z]
    out.extend((math.cos(root.th), math.sin(root.th)))
    out.extend(_rot_local(root.th, root.vx, root.vz))
    out.append(root.w)
    for q in world.joint_angles():
        out.extend((math.cos(q), math.sin(q)))
    out.extend(world.joint_velocities())
    for kb in model.key_bodies:
        kx, kz = world.links[kb.link].world_point(*kb.offset)
        out.extend(_rot_local(root.th, kx - root.x, kz - root.z))
    return np.array(out)


def featurize_reference(world: SimWorld, model: CharacterModel, ref: CharacterState,
                        scene_embedding: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference-tracking block: the reference root expressed in the simulated
    character's root frame, plus the reference posture in its own root frame."""
    root = world.links[0]
    out = list(_rot_local(root.th, ref.root_x - root.x, ref.root_z - root.z))
    dth = ref.root_th - root.th
    out.extend((math.cos(dth), math.sin(dth)))
    out.extend(_rot_local(root.th, ref.root_vx, ref.root_vz))
    out.append(ref.root_w)
    for q in ref.q:
        out.extend((math.cos(q), math.sin(q)))
    out.extend(ref.qd)
    for kx, kz in ref.keypos:
        out.extend(_rot_local(ref.root_th, kx - ref.root_x, kz - ref.root_z))
    return np.array(out), np.asarray(scene_embedding, dtype=float)


def observe(world: SimWorld, model: CharacterModel, ref: CharacterState,
            scene_embedding: np.ndarray) -> np.ndarray:
    s_h = featurize_proprio(world, model)
    s_r, s_e = featurize_reference(world, model, ref, scene_embedding)
    obs = np.concatenate((s_h, s_e, s_r))
    if not np.all(np.isfinite(obs)):
        raise FloatingPointError("non-finite observation")
    return obs


# -- episode management --------------------------------------------------------


def reset_from_reference(world: SimWorld, model: CharacterModel, track,
                         rng: np.random.Generator, frame: int | None = None) -> int:
    """Reference-state initialization: set the character to a uniformly
    sampled reference frame (or the given one) and fix ground penetration."""
    n = track.n_frames
    t = int(rng.integers(0, max(1, n - 1))) if frame is None else int(frame)
    if not 0 <= t < n:
        raise ValueError(f"frame {t} out of range [0, {n})")
    st = track.state(t)
    set_world_state(world, model, (st.root_x, st.root_z, st.root_th), st.q,
                    (st.root_vx, st.root_vz, st.root_w), st.qd)
    ground_clearance_fix(world)
    return t


def early_terminate(world: SimWorld, model: CharacterModel, ref: CharacterState,
                    root_error_limit: float = 0.5) -> bool:
    """True when tracking has failed: root too far from the reference, or a
    disallowed link touches the ground while the reference is upright."""
    root = world.links[0]
    dx = root.x - ref.root_x
    dz = root.z - ref.root_z
    if math.hypot(dx, dz) > root_error_limit:
        return True
    if ref.root_z > 0.4:
        allowed = set(model.ground_contact_links)
        for link in world.links:
            if link.name in allowed:
                continue
            if _lowest_point(link) < 5e-3:
                return True
    return False
