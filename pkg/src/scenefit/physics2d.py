"""Deterministic 2D sagittal-plane rigid-body simulator.

Maximal-coordinate links, revolute joints with angle limits, static
box-composite obstacles resting on a ground plane, and a fixed-iteration
sequential-impulse velocity solver with Baumgarte stabilization. Semi-implicit
Euler integration. Everything is plain Python floats so that identical inputs
produce bit-identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

GROUND_ID = -1

_MARGIN = 1.0e-3          # speculative contact margin (m)
_SLOP = 5.0e-4            # allowed resting penetration (m)
_BAUMGARTE = 0.2
_MAX_BIAS = 4.0           # cap on positional-correction velocity (m/s)


class SimulationDivergedError(RuntimeError):
    """Link state became NaN/Inf during a step."""

    def __init__(self, link_id: int):
        super().__init__(f"simulation diverged at link {link_id}")
        self.link_id = link_id


class InvalidLayoutError(ValueError):
    """Layout references an object index missing from the object set."""


@dataclass
class Shape:
    """'box' uses (hw, hh) half extents; 'capsule' uses (radius, half_len)."""

    kind: str
    a: float
    b: float

    def __post_init__(self):
        if self.kind not in ("box", "capsule"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.a <= 0.0 or self.b < 0.0:
            raise ValueError("shape extents must be positive")

    @property
    def bottom_offset(self) -> float:
        """Distance from center to lowest point when upright."""
        if self.kind == "box":
            return self.b
        return self.a + self.b


class RigidLink:
    """One rigid body of the articulated character."""

    __slots__ = ("link_id", "name", "mass", "inertia", "inv_m", "inv_i", "shape",
                 "x", "z", "th", "vx", "vz", "w")

    def __init__(self, link_id: int, name: str, mass: float, inertia: float, shape: Shape):
        if mass <= 0.0 or inertia <= 0.0:
            raise ValueError(f"link {name}: mass and inertia must be positive")
        self.link_id = link_id
        self.name = name
        self.mass = mass
        self.inertia = inertia
        self.inv_m = 1.0 / mass
        self.inv_i = 1.0 / inertia
        self.shape = shape
        self.x = 0.0
        self.z = 0.0
        self.th = 0.0
        self.vx = 0.0
        self.vz = 0.0
        self.w = 0.0

    def set_pose(self, x: float, z: float, th: float,
                 vx: float = 0.0, vz: float = 0.0, w: float = 0.0) -> None:
        self.x, self.z, self.th = x, z, th
        self.vx, self.vz, self.w = vx, vz, w

    def world_point(self, lx: float, lz: float) -> tuple[float, float]:
        c, s = math.cos(self.th), math.sin(self.th)
        return (self.x + c * lx - s * lz, self.z + s * lx + c * lz)


@dataclass
class RevoluteJoint:
    """Pin joint between parent and child links with PD actuation data.

    Joint angle is defined as child.th - parent.th; the default model is built
    so all joint angles are zero in the standing pose.
    """

    name: str
    parent: int
    child: int
    anchor_parent: tuple[float, float]
    anchor_child: tuple[float, float]
    limits: tuple[float, float]
    kp: float
    kd: float
    torque_limit: float

    def __post_init__(self):
        lo, hi = self.limits
        if lo > hi:
            raise ValueError(f"joint {self.name}: limits.low > limits.high")
        if self.kp < 0.0 or self.kd < 0.0:
            raise ValueError(f"joint {self.name}: gains must be >= 0")
        if self.torque_limit <= 0.0:
            raise ValueError(f"joint {self.name}: torque limit must be positive")


@dataclass
class BoxObstacle:
    """Static composite of world-frame axis-aligned boxes."""

    obstacle_id: int
    object_id: int
    boxes: list[tuple[float, float, float, float]]  # (cx, cz, hw, hh)


@dataclass
class ContactEvent:
    link: int
    obstacle: int           # obstacle_id, GROUND_ID for the ground plane
    point: tuple[float, float]
    normal: tuple[float, float]
    impulse: float
    step: int


@dataclass
class SimWorld:
    links: list[RigidLink] = field(default_factory=list)
    joints: list[RevoluteJoint] = field(default_factory=list)
    obstacles: list[BoxObstacle] = field(default_factory=list)
    gravity: float = 9.81
    dt: float = 1.0 / 120.0
    friction: float = 0.8
    iterations: int = 10
    step_count: int = 0
    # warm-start caches: accumulated impulses from the previous substep
    _joint_impulses: dict = field(default_factory=dict, repr=False)
    _pd_impulses: dict = field(default_factory=dict, repr=False)
    _contact_impulses: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.iterations < 1:
            raise ValueError("iteration count must be >= 1")

    # -- joint coordinate helpers ------------------------------------------

    def joint_angles(self) -> list[float]:
        return [self.links[j.child].th - self.links[j.parent].th for j in self.joints]

    def joint_velocities(self) -> list[float]:
        return [self.links[j.child].w - self.links[j.parent].w for j in self.joints]

    def state_vector(self) -> list[float]:
        out = []
        for l in self.links:
            out.extend((l.x, l.z, l.th, l.vx, l.vz, l.w))
        return out

    # -- stepping ----------------------------------------------------------

    def step(self, torques, substeps: int = 1) -> list[ContactEvent]:
        if len(torques) != len(self.joints):
            raise ValueError(f"got {len(torques)} torques for {len(self.joints)} joints")
        events: list[ContactEvent] = []
        for _ in range(substeps):
            events.extend(self._substep(torques, None))
        return events

    def step_pd(self, targets, substeps: int = 1) -> list[ContactEvent]:
        """Steps with the joint PD law integrated implicitly in the solver.

        Explicit torque application of stiff PD gains is unstable at this
        timestep for the light links, so actuation solves the same clamped
        spring-damper as an angular impulse alongside the other constraints.
        """
        if len(targets) != len(self.joints):
            raise ValueError(f"got {len(targets)} targets for {len(self.joints)} joints")
        events: list[ContactEvent] = []
        for _ in range(substeps):
            events.extend(self._substep(None, targets))
        return events

    def _substep(self, torques, pd_targets) -> list[ContactEvent]:
        dt = self.dt
        links = self.links

        if torques is not None:
            for jt, tau in zip(self.joints, torques):
                links[jt.child].w += tau * links[jt.child].inv_i * dt
                links[jt.parent].w -= tau * links[jt.parent].inv_i * dt
        gdt = self.gravity * dt
        for l in links:
            l.vz -= gdt

        contacts = self._detect_contacts()
        pd_solvers = []
        if pd_targets is not None:
            pd_solvers = [_PdSolver(self, j, jt, tgt)
                          for j, (jt, tgt) in enumerate(zip(self.joints, pd_targets))]
        joint_solvers = [_JointSolver(self, j, jt) for j, jt in enumerate(self.joints)]
        limit_solvers = []
        for jt in self.joints:
            ls = _LimitSolver.make(self, jt)
            if ls is not None:
                limit_solvers.append(ls)

        inv_dt = 1.0 / dt
        counts: dict = {}
        for c in contacts:
            c.prepare(inv_dt, counts, self._contact_impulses)

        for _ in range(self.iterations):
            for ps in pd_solvers:
                ps.solve()
            for ls in limit_solvers:
                ls.solve()
            for c in contacts:
                c.solve(self.friction)
            for js in joint_solvers:
                js.solve()

        self._joint_impulses = {js.key: (js.px, js.pz) for js in joint_solvers}
        self._pd_impulses = {ps.key: ps.acc for ps in pd_solvers}
        self._contact_impulses = {c.key: (c.pn, c.pt) for c in contacts}

        for l in links:
            l.x += l.vx * dt
            l.z += l.vz * dt
            l.th += l.w * dt

        for l in links:
            if not (math.isfinite(l.x) and math.isfinite(l.z) and math.isfinite(l.th)
                    and math.isfinite(l.vx) and math.isfinite(l.vz) and math.isfinite(l.w)):
                raise SimulationDivergedError(l.link_id)

        self.step_count += 1
        out = []
        for c in contacts:
            if c.depth >= 0.0 or c.pn > 0.0:
                out.append(ContactEvent(c.link.link_id, c.obstacle_id, (c.px, c.pz),
                                        (c.nx, c.nz), c.pn, self.step_count))
        return out

    # -- collision detection -------------------------------------------------

    def _detect_contacts(self) -> list["_Contact"]:
        contacts: list[_Contact] = []
        for l in self.links:
            _collide_ground(l, contacts)
            for obs in self.obstacles:
                for (bx, bz, hw, hh) in obs.boxes:
                    _collide_link_aabb(l, bx, bz, hw, hh, obs.obstacle_id, contacts)
        return contacts


class _Contact:
    __slots__ = ("link", "obstacle_id", "px", "pz", "nx", "nz", "depth",
                 "rx", "rz", "mass_n", "mass_t", "bias", "pn", "pt", "key")

    def __init__(self, link: RigidLink, obstacle_id: int, px, pz, nx, nz, depth):
        self.link = link
        self.obstacle_id = obstacle_id
        self.px, self.pz = px, pz
        self.nx, self.nz = nx, nz
        self.depth = depth
        self.pn = 0.0
        self.pt = 0.0

    def prepare(self, inv_dt: float, counts: dict, warm: dict) -> None:
        l = self.link
        self.rx = self.px - l.x
        self.rz = self.pz - l.z
        rxn = self.rx * self.nz - self.rz * self.nx
        self.mass_n = 1.0 / (l.inv_m + l.inv_i * rxn * rxn)
        # tangent is the normal rotated +90deg
        tx, tz = -self.nz, self.nx
        rxt = self.rx * tz - self.rz * tx
        self.mass_t = 1.0 / (l.inv_m + l.inv_i * rxt * rxt)
        pen = self.depth - _SLOP
        self.bias = 0.0 if pen <= 0.0 else min(_BAUMGARTE * inv_dt * pen, _MAX_BIAS)
        pair = (l.link_id, self.obstacle_id)
        idx = counts.get(pair, 0)
        counts[pair] = idx + 1
        self.key = (l.link_id, self.obstacle_id, idx)
        prev = warm.get(self.key)
        if prev is not None:
            self.pn, self.pt = prev
            ix = self.pn * self.nx + self.pt * tx
            iz = self.pn * self.nz + self.pt * tz
            l.vx += l.inv_m * ix
            l.vz += l.inv_m * iz
            l.w += l.inv_i * (self.rx * iz - self.rz * ix)

    def solve(self, friction: float) -> None:
        l = self.link
        # normal impulse (clamped accumulation)
        vpx = l.vx - l.w * self.rz
        vpz = l.vz + l.w * self.rx
        vn = vpx * self.nx + vpz * self.nz
        dpn = -self.mass_n * (vn - self.bias)
        pn0 = self.pn
        self.pn = pn0 + dpn if pn0 + dpn > 0.0 else 0.0
        dpn = self.pn - pn0
        if dpn != 0.0:
            ix, iz = dpn * self.nx, dpn * self.nz
            l.vx += l.inv_m * ix
            l.vz += l.inv_m * iz
            l.w += l.inv_i * (self.rx * iz - self.rz * ix)
        # friction impulse clamped by the friction cone
        tx, tz = -self.nz, self.nx
        vpx = l.vx - l.w * self.rz
        vpz = l.vz + l.w * self.rx
        vt = vpx * tx + vpz * tz
        dpt = -self.mass_t * vt
        max_pt = friction * self.pn
        pt0 = self.pt
        pt1 = pt0 + dpt
        if pt1 > max_pt:
            pt1 = max_pt
        elif pt1 < -max_pt:
            pt1 = -max_pt
        self.pt = pt1
        dpt = pt1 - pt0
        if dpt != 0.0:
            ix, iz = dpt * tx, dpt * tz
            l.vx += l.inv_m * ix
            l.vz += l.inv_m * iz
            l.w += l.inv_i * (self.rx * iz - self.rz * ix)


class _JointSolver:
    """2x2 point-to-point velocity constraint with Baumgarte position bias."""

    __slots__ = ("p", "c", "rpx", "rpz", "rcx", "rcz", "i00", "i01", "i11",
                 "bx", "bz", "key", "px", "pz")

    def __init__(self, world: SimWorld, index: int, jt: RevoluteJoint):
        p = world.links[jt.parent]
        c = world.links[jt.child]
        self.p, self.c = p, c
        self.key = index
        cp, sp = math.cos(p.th), math.sin(p.th)
        cc, sc = math.cos(c.th), math.sin(c.th)
        apx, apz = jt.anchor_parent
        acx, acz = jt.anchor_child
        self.rpx = cp * apx - sp * apz
        self.rpz = sp * apx + cp * apz
        self.rcx = cc * acx - sc * acz
        self.rcz = sc * acx + cc * acz
        k00 = p.inv_m + c.inv_m + p.inv_i * self.rpz * self.rpz + c.inv_i * self.rcz * self.rcz
        k01 = -p.inv_i * self.rpx * self.rpz - c.inv_i * self.rcx * self.rcz
        k11 = p.inv_m + c.inv_m + p.inv_i * self.rpx * self.rpx + c.inv_i * self.rcx * self.rcx
        det = k00 * k11 - k01 * k01
        inv_det = 1.0 / det
        self.i00 = k11 * inv_det
        self.i01 = -k01 * inv_det
        self.i11 = k00 * inv_det
        # positional error (child anchor minus parent anchor)
        ex = (c.x + self.rcx) - (p.x + self.rpx)
        ez = (c.z + self.rcz) - (p.z + self.rpz)
        scale = -_BAUMGARTE / world.dt
        bx = scale * ex
        bz = scale * ez
        mag = math.hypot(bx, bz)
        if mag > _MAX_BIAS:
            f = _MAX_BIAS / mag
            bx *= f
            bz *= f
        self.bx, self.bz = bx, bz
        prev = world._joint_impulses.get(self.key)
        self.px, self.pz = (0.0, 0.0) if prev is None else prev
        if prev is not None:
            self._apply(self.px, self.pz)

    def _apply(self, ix: float, iz: float) -> None:
        p, c = self.p, self.c
        c.vx += c.inv_m * ix
        c.vz += c.inv_m * iz
        c.w += c.inv_i * (self.rcx * iz - self.rcz * ix)
        p.vx -= p.inv_m * ix
        p.vz -= p.inv_m * iz
        p.w -= p.inv_i * (self.rpx * iz - self.rpz * ix)

    def solve(self) -> None:
        p, c = self.p, self.c
        vrx = (c.vx - c.w * self.rcz) - (p.vx - p.w * self.rpz)
        vrz = (c.vz + c.w * self.rcx) - (p.vz + p.w * self.rpx)
        ex = self.bx - vrx
        ez = self.bz - vrz
        ix = self.i00 * ex + self.i01 * ez
        iz = self.i01 * ex + self.i11 * ez
        self.px += ix
        self.pz += iz
        self._apply(ix, iz)


class _PdSolver:
    """Implicitly integrated clamped PD toward a target joint angle.

    The accumulated angular impulse converges to
    dt * (kp * (target - q - qdot' * dt) - kd * qdot') clamped at the torque
    limit, with qdot' the post-step joint velocity; unconditionally stable
    for any non-negative gains.
    """

    __slots__ = ("p", "c", "err", "gain", "denom", "cap", "dt", "acc", "key")

    def __init__(self, world: SimWorld, index: int, jt: RevoluteJoint, target: float):
        p = world.links[jt.parent]
        c = world.links[jt.child]
        self.p, self.c = p, c
        self.key = index
        dt = world.dt
        self.dt = dt
        self.err = target - (c.th - p.th)
        kii = p.inv_i + c.inv_i
        self.gain = jt.kp * dt + jt.kd
        self.denom = 1.0 / (1.0 + dt * self.gain * kii)
        self.cap = jt.torque_limit * dt
        # precompute the explicit part: dt * kp * err
        self.err *= dt * jt.kp
        self.acc = 0.0
        prev = world._pd_impulses.get(index)
        if prev is not None:
            if prev > self.cap:
                prev = self.cap
            elif prev < -self.cap:
                prev = -self.cap
            self.acc = prev
            c.w += c.inv_i * prev
            p.w -= p.inv_i * prev

    def solve(self) -> None:
        p, c = self.p, self.c
        qd = c.w - p.w
        d = (self.err - self.dt * self.gain * qd - self.acc) * self.denom
        acc1 = self.acc + d
        if acc1 > self.cap:
            acc1 = self.cap
        elif acc1 < -self.cap:
            acc1 = -self.cap
        d = acc1 - self.acc
        self.acc = acc1
        c.w += c.inv_i * d
        p.w -= p.inv_i * d


class _LimitSolver:
    """One-sided angular constraint when a joint angle exceeds its limits."""

    __slots__ = ("p", "c", "mass", "bias", "lo_side", "acc")

    @staticmethod
    def make(world: SimWorld, jt: RevoluteJoint) -> "_LimitSolver | None":
        p = world.links[jt.parent]
        c = world.links[jt.child]
        q = c.th - p.th
        lo, hi = jt.limits
        if q < lo:
            return _LimitSolver(p, c, world.dt, lo - q, True)
        if q > hi:
            return _LimitSolver(p, c, world.dt, q - hi, False)
        return None

    def __init__(self, p: RigidLink, c: RigidLink, dt: float, violation: float, lo_side: bool):
        self.p, self.c = p, c
        self.mass = 1.0 / (p.inv_i + c.inv_i)
        self.bias = min(_BAUMGARTE / dt * violation, _MAX_BIAS)
        self.lo_side = lo_side
        self.acc = 0.0

    def solve(self) -> None:
        p, c = self.p, self.c
        wrel = c.w - p.w
        if self.lo_side:
            lam = self.mass * (self.bias - wrel)
            acc1 = self.acc + lam
            if acc1 < 0.0:
                acc1 = 0.0
        else:
            lam = self.mass * (-self.bias - wrel)
            acc1 = self.acc + lam
            if acc1 > 0.0:
                acc1 = 0.0
        d = acc1 - self.acc
        self.acc = acc1
        c.w += c.inv_i * d
        p.w -= p.inv_i * d


# -- collision routines ------------------------------------------------------


def _collide_ground(link: RigidLink, out: list[_Contact]) -> None:
    sh = link.shape
    if sh.kind == "box":
        c, s = math.cos(link.th), math.sin(link.th)
        hw, hh = sh.a, sh.b
        for lx, lz in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
            wz = link.z + s * lx + c * lz
            depth = -wz
            if depth >= -_MARGIN:
                wx = link.x + c * lx - s * lz
                out.append(_Contact(link, GROUND_ID, wx, wz, 0.0, 1.0, depth))
    else:
        r, hl = sh.a, sh.b
        c, s = math.cos(link.th), math.sin(link.th)
        for sign in (-1.0, 1.0):
            ex = link.x - s * hl * sign
            ez = link.z + c * hl * sign
            depth = r - ez
            if depth >= -_MARGIN:
                out.append(_Contact(link, GROUND_ID, ex, ez - r, 0.0, 1.0, depth))


def _circle_vs_aabb(cx, cz, r, bx, bz, hw, hh):
    dx = cx - bx
    dz = cz - bz
    qx = -hw if dx < -hw else (hw if dx > hw else dx)
    qz = -hh if dz < -hh else (hh if dz > hh else dz)
    ex = dx - qx
    ez = dz - qz
    d2 = ex * ex + ez * ez
    lim = r + _MARGIN
    if d2 > lim * lim:
        return None
    if d2 > 1.0e-18:
        d = math.sqrt(d2)
        nx, nz = ex / d, ez / d
        depth = r - d
    else:
        pen_x = hw - abs(dx)
        pen_z = hh - abs(dz)
        if pen_x < pen_z:
            nx = 1.0 if dx >= 0.0 else -1.0
            nz = 0.0
            depth = r + pen_x
        else:
            nx = 0.0
            nz = 1.0 if dz >= 0.0 else -1.0
            depth = r + pen_z
    return (cx - nx * r, cz - nz * r, nx, nz, depth)


def _seg_seg_closest(p1x, p1z, p2x, p2z, q1x, q1z, q2x, q2z):
    """Closest points between segments; returns (s, t, dist_sq) with params in [0,1]."""
    dpx, dpz = p2x - p1x, p2z - p1z
    dqx, dqz = q2x - q1x, q2z - q1z
    rx, rz = p1x - q1x, p1z - q1z
    a = dpx * dpx + dpz * dpz
    e = dqx * dqx + dqz * dqz
    f = dqx * rx + dqz * rz
    if a <= 1e-18 and e <= 1e-18:
        s = t = 0.0
    elif a <= 1e-18:
        s = 0.0
        t = min(1.0, max(0.0, f / e))
    else:
        c = dpx * rx + dpz * rz
        if e <= 1e-18:
            t = 0.0
            s = min(1.0, max(0.0, -c / a))
        else:
            b = dpx * dqx + dpz * dqz
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > 1e-18 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(1.0, max(0.0, -c / a))
            elif t > 1.0:
                t = 1.0
                s = min(1.0, max(0.0, (b - c) / a))
    cpx, cpz = p1x + s * dpx, p1z + s * dpz
    cqx, cqz = q1x + t * dqx, q1z + t * dqz
    dx, dz = cpx - cqx, cpz - cqz
    return s, t, dx * dx + dz * dz


def _collide_capsule_aabb(link, bx, bz, hw, hh, obstacle_id, out):
    r, hl = link.shape.a, link.shape.b
    c, s = math.cos(link.th), math.sin(link.th)
    ax = link.x - s * hl
    az = link.z + c * hl
    dx_ = link.x + s * hl
    dz_ = link.z - c * hl
    # candidate spine points: both endpoints plus the interior closest approach
    params = [0.0, 1.0]
    best = None
    corners = ((bx - hw, bz - hh), (bx + hw, bz - hh), (bx + hw, bz + hh), (bx - hw, bz + hh))
    for i in range(4):
        q1 = corners[i]
        q2 = corners[(i + 1) % 4]
        sp, _, d2 = _seg_seg_closest(ax, az, dx_, dz_, q1[0], q1[1], q2[0], q2[1])
        if best is None or d2 < best[1] - 1e-15:
            best = (sp, d2)
    if best is not None and 0.02 < best[0] < 0.98:
        params.append(best[0])
    for t in params:
        px = ax + t * (dx_ - ax)
        pz = az + t * (dz_ - az)
        hit = _circle_vs_aabb(px, pz, r, bx, bz, hw, hh)
        if hit is not None:
            out.append(_Contact(link, obstacle_id, hit[0], hit[1], hit[2], hit[3], hit[4]))


def _collide_box_aabb(link, bx, bz, hw, hh, obstacle_id, out):
    """Rotated link box vs static AABB; SAT with reference-face clipping."""
    lb = link.shape
    cb, sb = math.cos(link.th), math.sin(link.th)
    # axes: world x, world z (AABB), link x, link z
    dx = link.x - bx
    dz = link.z - bz
    abs_c, abs_s = abs(cb), abs(sb)
    axes = (
        (1.0, 0.0, hw, lb.a * abs_c + lb.b * abs_s),
        (0.0, 1.0, hh, lb.a * abs_s + lb.b * abs_c),
        (cb, sb, hw * abs_c + hh * abs_s, lb.a),
        (-sb, cb, hw * abs_s + hh * abs_c, lb.b),
    )
    best_pen = math.inf
    best_idx = -1
    for i, (ux, uz, pa, pb) in enumerate(axes):
        sep = abs(dx * ux + dz * uz) - pa - pb
        if sep > _MARGIN:
            return
        if -sep < best_pen - 1e-12:
            best_pen = -sep
            best_idx = i
    ux, uz = axes[best_idx][0], axes[best_idx][1]
    if dx * ux + dz * uz < 0.0:
        ux, uz = -ux, -uz
    # normal (ux, uz) points from the AABB toward the link
    if best_idx < 2:
        # reference face on the AABB
        ref_px, ref_pz = bx, bz
        ref_off = hw if best_idx == 0 else hh
        ref_h = hh if best_idx == 0 else hw
        n_out_x, n_out_z = ux, uz
        inc_cx, inc_cz, inc_axes = link.x, link.z, ((cb, sb, lb.a, -sb, cb, lb.b),
                                                    (-sb, cb, lb.b, cb, sb, lb.a))
    else:
        # reference face on the link box; face outward normal points toward the AABB
        ref_px, ref_pz = link.x, link.z
        ref_off = lb.a if best_idx == 2 else lb.b
        ref_h = lb.b if best_idx == 2 else lb.a
        n_out_x, n_out_z = -ux, -uz
        inc_cx, inc_cz, inc_axes = bx, bz, ((1.0, 0.0, hw, 0.0, 1.0, hh),
                                            (0.0, 1.0, hh, 1.0, 0.0, hw))
    fcx = ref_px + n_out_x * ref_off
    fcz = ref_pz + n_out_z * ref_off
    # incident face: the face of the other box most anti-parallel to n_out
    bestdot = math.inf
    inc = None
    for (nfx, nfz, h_f, tfx, tfz, h_t) in inc_axes:
        for sgn in (1.0, -1.0):
            d = (nfx * sgn) * n_out_x + (nfz * sgn) * n_out_z
            if d < bestdot - 1e-12:
                bestdot = d
                inc = (nfx * sgn, nfz * sgn, h_f, tfx, tfz, h_t)
    nfx, nfz, h_f, tfx, tfz, h_t = inc
    v1x = inc_cx + nfx * h_f + tfx * h_t
    v1z = inc_cz + nfz * h_f + tfz * h_t
    v2x = inc_cx + nfx * h_f - tfx * h_t
    v2z = inc_cz + nfz * h_f - tfz * h_t
    # clip incident segment to the reference face side planes
    tpx, tpz = -n_out_z, n_out_x
    pts = [(v1x, v1z), (v2x, v2z)]
    for sgn in (1.0, -1.0):
        px_, pz_ = tpx * sgn, tpz * sgn
        dmax = px_ * fcx + pz_ * fcz + ref_h
        kept = []
        d0 = px_ * pts[0][0] + pz_ * pts[0][1] - dmax
        d1 = px_ * pts[1][0] + pz_ * pts[1][1] - dmax if len(pts) > 1 else d0
        if d0 <= 0.0:
            kept.append(pts[0])
        if len(pts) > 1:
            if d1 <= 0.0:
                kept.append(pts[1])
            if (d0 < 0.0 < d1) or (d1 < 0.0 < d0):
                t = d0 / (d0 - d1)
                kept.append((pts[0][0] + t * (pts[1][0] - pts[0][0]),
                             pts[0][1] + t * (pts[1][1] - pts[0][1])))
        pts = kept
        if not pts:
            return
    # normal reported from obstacle toward link
    nx_rep, nz_rep = ux, uz
    for (px_, pz_) in pts[:2]:
        sep = n_out_x * (px_ - fcx) + n_out_z * (pz_ - fcz)
        depth = -sep
        if depth >= -_MARGIN:
            out.append(_Contact(link, obstacle_id, px_, pz_, nx_rep, nz_rep, depth))


def _collide_link_aabb(link, bx, bz, hw, hh, obstacle_id, out):
    if link.shape.kind == "capsule":
        _collide_capsule_aabb(link, bx, bz, hw, hh, obstacle_id, out)
    else:
        _collide_box_aabb(link, bx, bz, hw, hh, obstacle_id, out)


# -- public operations --------------------------------------------------------


def pd_control(targets, q, qdot, joints) -> list[float]:
    """Clamped PD torques toward the target joint angles."""
    n = len(joints)
    if len(targets) != n or len(q) != n or len(qdot) != n:
        raise ValueError(
            f"length mismatch: {len(targets)} targets, {len(q)} angles, "
            f"{len(qdot)} velocities for {n} joints")
    out = []
    for j, jt in enumerate(joints):
        tau = jt.kp * (targets[j] - q[j]) - jt.kd * qdot[j]
        lim = jt.torque_limit
        if tau > lim:
            tau = lim
        elif tau < -lim:
            tau = -lim
        out.append(tau)
    return out


def contact_flags(events, obstacle_ids) -> int:
    """1 iff any event touches one of the listed obstacles (ground excluded)."""
    wanted = set(obstacle_ids)
    for ev in events:
        if ev.obstacle != GROUND_ID and ev.obstacle in wanted:
            return 1
    return 0


def apply_layout(world: SimWorld, layout, object_set) -> SimWorld:
    """Replaces the world's obstacles with the layout's placed objects.

    Objects rest on the ground: the catalog frame has z=0 at the object
    bottom, so placement only translates in x (and flips for yaw ~ pi).
    """
    obstacles = []
    for slot, (obj_index, placement) in enumerate(layout_items(layout)):
        try:
            spec = object_set[obj_index]
        except (IndexError, KeyError) as exc:
            raise InvalidLayoutError(f"unknown object index {obj_index}") from exc
        flip = 1.0 if math.cos(placement.yaw) >= 0.0 else -1.0
        boxes = [(placement.tx + flip * cx, cz, hw, hh) for (cx, cz, hw, hh) in spec.boxes]
        obstacles.append(BoxObstacle(obstacle_id=slot, object_id=spec.object_id, boxes=boxes))
    world.obstacles = obstacles
    return world


def layout_items(layout):
    """Accepts a SceneLayout or a plain list of (index, placement) pairs."""
    return layout.items if hasattr(layout, "items") and not isinstance(layout, list) else layout
