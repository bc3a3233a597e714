"""Forward dynamics of a torque-driven hinge chain swinging in the sagittal plane.

Every joint rotates about the medial (y) axis and the chain hangs from a
fixed parent, so the motion stays in the lab x-z plane.  The equations of
motion come from the Lagrangian form ``M(q) q'' = tau + J^T m (g - b)``
written out with plain floats; the integrator is classical fixed-step RK4.
This is deliberately independent of the Newton-Euler code used for the
inverse problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import InputError, IntegrationDivergenceError
from ..model import LimbChain


def _solve(a: list[list[float]], b: list[float]) -> list[float]:
    """Gaussian elimination with partial pivoting for a small dense system."""
    n = len(b)
    m = [row[:] + [b[i]] for i, row in enumerate(a)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(m[r][col]))
        m[col], m[piv] = m[piv], m[col]
        p = m[col][col]
        for r in range(col + 1, n):
            f = m[r][col] / p
            if f:
                row, top = m[r], m[col]
                for c in range(col, n + 1):
                    row[c] -= f * top[c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        s = m[r][n] - sum(m[r][c] * x[c] for c in range(r + 1, n))
        x[r] = s / m[r][r]
    return x


@dataclass(frozen=True)
class _Link:
    mass: float
    iyy: float
    com: tuple[float, float]  # joint center -> COM, segment frame (x, z)
    tip: tuple[float, float]  # joint center -> next joint center, segment frame (x, z)


class PlanarChain:
    """Sagittal-plane hinge chain built from a :class:`LimbChain`.

    The parent segment is fixed with its frame parallel to the lab frame
    and its origin at ``origin``.  Generalized coordinates are right-hand
    rotations about y of each segment relative to its proximal neighbour.
    """

    def __init__(self, chain: LimbChain, origin: Sequence[float], gravity: float):
        self.chain = chain
        self.gravity = gravity
        base = np.asarray(origin, dtype=float) + chain.parent.distal_point
        self.base = (float(base[0]), float(base[2]))
        links = []
        for seg, joint in zip(chain.segments, chain.joints):
            c = seg.com_offset - joint.center_offset
            d = seg.distal_point - joint.center_offset
            links.append(_Link(seg.mass, float(seg.inertia[1, 1]), (float(c[0]), float(c[2])),
                               (float(d[0]), float(d[2]))))
        self.links = links
        self.n = len(links)

    def _geometry(self, q, qd):
        """Joint centers, COM positions, rotated link vectors and absolute rates."""
        px, pz = self.base
        phi = 0.0
        phid = 0.0
        centers, coms, rot_com, rot_tip, rates = [], [], [], [], []
        for link, th, thd in zip(self.links, q, qd):
            phi += th
            phid += thd
            c, s = math.cos(phi), math.sin(phi)
            ux = link.com[0] * c + link.com[1] * s
            uz = -link.com[0] * s + link.com[1] * c
            wx = link.tip[0] * c + link.tip[1] * s
            wz = -link.tip[0] * s + link.tip[1] * c
            centers.append((px, pz))
            coms.append((px + ux, pz + uz))
            rot_com.append((ux, uz))
            rot_tip.append((wx, wz))
            rates.append(phid)
            px, pz = px + wx, pz + wz
        return centers, coms, rot_com, rot_tip, rates

    def accelerations(self, q, qd, tau) -> list[float]:
        n = self.n
        centers, coms, rot_com, rot_tip, rates = self._geometry(q, qd)
        mass = [[0.0] * n for _ in range(n)]
        rhs = list(tau)
        bx = bz = 0.0  # accumulated centripetal acceleration of the joint center
        for k, link in enumerate(self.links):
            w2 = rates[k] * rates[k]
            ax = bx - w2 * rot_com[k][0]
            az = bz - w2 * rot_com[k][1]
            cx, cz = coms[k]
            jac = [(cz - centers[i][1], -(cx - centers[i][0])) for i in range(k + 1)]
            gx, gz = -ax, -self.gravity - az
            for i in range(k + 1):
                ji = jac[i]
                rhs[i] += link.mass * (ji[0] * gx + ji[1] * gz)
                for j in range(i, k + 1):
                    v = link.mass * (ji[0] * jac[j][0] + ji[1] * jac[j][1]) + link.iyy
                    mass[i][j] += v
                    if j != i:
                        mass[j][i] += v
            bx -= w2 * rot_tip[k][0]
            bz -= w2 * rot_tip[k][1]
        return _solve(mass, rhs)

    def energy(self, q, qd) -> tuple[float, float]:
        """Kinetic and potential energy."""
        centers, coms, _, _, rates = self._geometry(q, qd)
        kinetic = potential = 0.0
        for k, link in enumerate(self.links):
            vx = vz = 0.0
            cx, cz = coms[k]
            for i in range(k + 1):
                vx += qd[i] * (cz - centers[i][1])
                vz -= qd[i] * (cx - centers[i][0])
            kinetic += 0.5 * link.mass * (vx * vx + vz * vz) + 0.5 * link.iyy * rates[k] ** 2
            potential += link.mass * self.gravity * cz
        return kinetic, potential

    @property
    def energy_scale(self) -> float:
        length = sum(math.hypot(*l.tip) for l in self.links)
        return max(sum(l.mass for l in self.links) * max(self.gravity, 1.0) * length, 1e-12)


@dataclass
class PlanarTrajectory:
    times: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    tau: np.ndarray
    work: np.ndarray  # cumulative actuator work, J
    kinetic: np.ndarray
    potential: np.ndarray


def integrate_planar(system: PlanarChain, torque: Callable[[float], Sequence[float]],
                     q0: Sequence[float], qd0: Sequence[float], dt: float, n_samples: int,
                     sample_every: int, energy_tolerance: float = 1e-2) -> PlanarTrajectory:
    """Fixed-step RK4; state is recorded every ``sample_every`` steps.

    Actuator work is integrated alongside the state, so each recorded sample
    can be checked against ``E - E0 = W``; a violation larger than
    ``energy_tolerance`` times the chain's energy scale, or any non-finite
    value, raises :class:`IntegrationDivergenceError`.
    """
    if not dt > 0 or not math.isfinite(dt):
        raise InputError("integration step must be positive")
    n = system.n
    q, qd = [float(v) for v in q0], [float(v) for v in qd0]
    if len(q) != n or len(qd) != n:
        raise InputError(f"initial state needs {n} angles and {n} rates")
    work = 0.0

    def deriv(t, q, qd):
        tau = torque(t)
        return qd, system.accelerations(q, qd, tau), sum(a * b for a, b in zip(tau, qd))

    out_q = np.empty((n_samples, n))
    out_qd = np.empty((n_samples, n))
    out_qdd = np.empty((n_samples, n))
    out_tau = np.empty((n_samples, n))
    out_w = np.empty(n_samples)
    out_ke = np.empty(n_samples)
    out_pe = np.empty(n_samples)
    ke0, pe0 = system.energy(q, qd)
    scale = system.energy_scale
    step = 0
    for s in range(n_samples):
        t = step * dt
        tau = list(torque(t))
        ke, pe = system.energy(q, qd)
        if not all(math.isfinite(v) for v in q + qd) or not math.isfinite(ke):
            raise IntegrationDivergenceError(f"state became non-finite at t = {t:.6g} s")
        drift = abs(ke + pe - ke0 - pe0 - work)
        if drift > energy_tolerance * max(scale, abs(work), ke):
            raise IntegrationDivergenceError(
                f"energy balance violated by {drift:.3g} J at t = {t:.6g} s; reduce the step")
        out_q[s], out_qd[s], out_tau[s] = q, qd, tau
        out_qdd[s] = system.accelerations(q, qd, tau)
        out_w[s], out_ke[s], out_pe[s] = work, ke, pe
        if s == n_samples - 1:
            break
        for _ in range(sample_every):
            t = step * dt
            h = 0.5 * dt
            k1q, k1v, k1w = deriv(t, q, qd)
            q2 = [a + h * b for a, b in zip(q, k1q)]
            v2 = [a + h * b for a, b in zip(qd, k1v)]
            k2q, k2v, k2w = deriv(t + h, q2, v2)
            q3 = [a + h * b for a, b in zip(q, k2q)]
            v3 = [a + h * b for a, b in zip(qd, k2v)]
            k3q, k3v, k3w = deriv(t + h, q3, v3)
            q4 = [a + dt * b for a, b in zip(q, k3q)]
            v4 = [a + dt * b for a, b in zip(qd, k3v)]
            k4q, k4v, k4w = deriv(t + dt, q4, v4)
            q = [a + dt / 6.0 * (b + 2 * c + 2 * d + e)
                 for a, b, c, d, e in zip(q, k1q, k2q, k3q, k4q)]
            qd = [a + dt / 6.0 * (b + 2 * c + 2 * d + e)
                  for a, b, c, d, e in zip(qd, k1v, k2v, k3v, k4v)]
            work += dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
            step += 1
            if not (abs(q[0]) < 1e6 and abs(qd[0]) < 1e9):
                raise IntegrationDivergenceError(f"state diverged at t = {step * dt:.6g} s")
    times = np.arange(n_samples) * (sample_every * dt)
    return PlanarTrajectory(times, out_q, out_qd, out_qdd, out_tau, out_w, out_ke, out_pe)
