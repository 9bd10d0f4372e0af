"""Parallel transport along curves, holonomy of two-leg loops and the
leading-order curvature check for small geodesic parallelograms."""

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT
from .errors import CurveInvalid, TrajectoryLeftDomain
from .geodesic import Curve, concat, integrate, log_many, shoot
from .manifold import DUAL, PRIMAL, Tangent, curvature_at, curvature_operator
from .report import CheckReport


def _components(v):
    return v.components if isinstance(v, Tangent) else np.asarray(v, dtype=float)


def _transport_rk4(m, kind, c, W, reverse=False):
    # dW/dt = -Gamma(x)(x', W) on the node grid of c, curve data from c.eval
    ts = c.ts[::-1] if reverse else c.ts
    W = np.array(W, dtype=float)
    for t0, t1 in zip(ts[:-1], ts[1:]):
        h = t1 - t0
        x, v = c.eval(np.array([t0, t0 + 0.5 * h, t1]))

        def rate(i, W):
            G = m.christoffel(kind, x[i])
            return -np.einsum("kij,i,mj->mk", G, v[i], W)

        k1 = rate(0, W)
        k2 = rate(1, W + 0.5 * h * k1)
        k3 = rate(1, W + 0.5 * h * k2)
        k4 = rate(2, W + h * k3)
        W = W + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return W


def _transport_many(m, kind, c, W, reverse=False):
    """Transport the rows of W (shape (k, n)) along c, optionally from end to start."""
    if c.segments:
        segs = c.segments[::-1] if reverse else c.segments
        for seg in segs:
            W = _transport_many(m, kind, seg, W, reverse)
        return W
    if c.origin is not None:
        p, v = c.origin
        if reverse:
            p, v = c.end, -c.vs[-1]
        flow = integrate(m, c.kind, p[None], v[None], c.steps, carry=[(kind, W[None])])
        if not flow.ok[0]:
            raise TrajectoryLeftDomain("carrier geodesic left the domain", flow.exit_t[0])
        return flow.carried[0][0]
    return _transport_rk4(m, kind, c, W, reverse)


def transport_along(m, kind, c, v, reverse=False):
    """Parallel transport of v from c(0) to c(1) (or back when ``reverse``)."""
    if not isinstance(c, Curve):
        raise CurveInvalid("transport needs a Curve")
    comp = _components(v)
    W = _transport_many(m, kind, c, comp[None], reverse)[0]
    return Tangent(c.start if reverse else c.end, W)


def dual_isometry_deviation(m, c, v, w):
    """|<P v, P* w> at c(1) minus <v, w> at c(0)|."""
    v, w = _components(v), _components(w)
    Pv = _transport_many(m, PRIMAL, c, v[None])[0]
    Pw = _transport_many(m, DUAL, c, w[None])[0]
    return float(abs(m.inner(c.end, Pv, Pw) - m.inner(c.start, v, w)))


@dataclass
class Loop:
    """Closed path: forward along ``out``, then backward along ``back``."""

    out: Curve
    back: Curve

    def __post_init__(self):
        m = self.out.manifold
        if (np.linalg.norm(m.wrap_delta(self.out.start - self.back.start)) > 1e-9
                or np.linalg.norm(m.wrap_delta(self.out.end - self.back.end)) > 1e-9):
            raise CurveInvalid("loop legs must share both endpoints")


def holonomy_map(m, loop, Z, kind=PRIMAL):
    W = _transport_many(m, kind, loop.out, np.atleast_2d(Z))
    return _transport_many(m, kind, loop.back, W, reverse=True)


def holonomy_defect(m, loop, z, kind=PRIMAL):
    """P_loop z - z for transport out along one leg and back along the other."""
    comp = _components(z)
    return Tangent(loop.out.start, holonomy_map(m, loop, comp, kind)[0] - comp)


def parallelogram_loop(m, p, x, y, scale, kind=PRIMAL, cfg=DEFAULT):
    """Geodesic quadrilateral spanned by scale*x, scale*y at p.

    One leg runs along x and then along the transported y; the other runs
    along y and then straight to the far corner.  The loop goes out along
    the y-leg and returns along the x-leg, the orientation for which the
    defect is +scale^2 R(x, y) z at leading order.
    """
    p = np.asarray(p, dtype=float)
    x, y = _components(x), _components(y)
    a = shoot(m, kind, p, scale * x, cfg.ode_steps, check=False)
    ya = _transport_many(m, kind, a, (scale * y)[None])[0]
    far = shoot(m, kind, a.end, ya, cfg.ode_steps, check=False)
    b = shoot(m, kind, p, scale * y, cfg.ode_steps, check=False)
    vb = log_many(m, kind, b.end[None], far.end[None], cfg).V[0]
    close = shoot(m, kind, b.end, vb, cfg.ode_steps, check=False)
    return Loop(concat(b, close), concat(a, far))


def holonomy_curvature_check(m, p, x, y, z, scale=0.05, kind=PRIMAL, tol=0.1, cfg=DEFAULT):
    """Compare the loop defect with scale^2 R(x, y) z.

    Passes when the relative mismatch at ``scale`` is within ``tol``, the
    defect shrinks by a factor in [3.5, 4.5] when the scale is halved, and the
    mismatch itself shrinks at least like scale^2.5 (leading term matched).
    Flat connections pass when the defect vanishes to 1e-10.
    """
    p = np.asarray(p, dtype=float)
    x, y, z = _components(x), _components(y), _components(z)
    R, _ = curvature_at(m, kind, p, cfg.curvature_step)
    Rz = curvature_operator(R, x, y, z)
    rows = []
    for s in (scale, 0.5 * scale):
        d = holonomy_defect(m, parallelogram_loop(m, p, x, y, s, kind, cfg), z, kind).components
        rows.append({"scale": s, "defect": d, "predicted": s * s * Rz,
                     "residual": float(np.linalg.norm(d - s * s * Rz))})
    lead = float(np.linalg.norm(rows[0]["predicted"]))
    if lead < 1e-12:
        err = max(float(np.linalg.norm(r["defect"])) for r in rows)
        return CheckReport("holonomy_curvature", err, 1e-10, 2, rows)
    rel = rows[0]["residual"] / lead
    ratio = float(np.linalg.norm(rows[0]["defect"]) / np.linalg.norm(rows[1]["defect"]))
    res_ratio = rows[0]["residual"] / max(rows[1]["residual"], 1e-300)
    for r in rows:
        r["relative_mismatch"] = r["residual"] / float(np.linalg.norm(r["predicted"]))
    details = rows + [{"defect_ratio": ratio, "residual_ratio": res_ratio}]
    failures = int(not 3.5 <= ratio <= 4.5) + int(res_ratio < 2 ** 2.5)
    return CheckReport("holonomy_curvature", rel, tol, 2, details, failures)


def latitude_loop(m, theta0, steps=400):
    """Full circle of colatitude theta0 on the sphere chart, split at phi = +-pi."""
    def leg(sign):
        def path(t):
            t = np.asarray(t, dtype=float)
            x = np.stack([np.full_like(t, theta0), sign * np.pi * t], -1)
            v = np.broadcast_to([0.0, sign * np.pi], x.shape).copy()
            return x, v
        return Curve.from_path(m, path, steps)
    return Loop(leg(1.0), leg(-1.0))


def latitude_holonomy_angle(m, theta0, steps=400):
    """Rotation angle in (-pi, pi] after transporting d_theta once around the latitude."""
    loop = latitude_loop(m, theta0, steps)
    z = np.array([1.0, 0.0])
    w = holonomy_map(m, loop, z, PRIMAL)[0]
    return float(np.arctan2(np.sin(theta0) * w[1], w[0]))


def cap_area_check(m, theta0=np.pi / 3, tol=1e-3, steps=400):
    """Latitude holonomy angle against the enclosed cap area 2 pi (1 - cos theta0), mod 2 pi."""
    angle = latitude_holonomy_angle(m, theta0, steps)
    area = 2 * np.pi * (1 - np.cos(theta0))
    err = abs((angle - area + np.pi) % (2 * np.pi) - np.pi)
    return CheckReport("cap_holonomy", float(err), tol, 1,
                       [{"theta0": theta0, "angle": angle, "cap_area": area}])
