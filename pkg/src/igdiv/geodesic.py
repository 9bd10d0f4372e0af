"""Geodesic initial and boundary value problems.

The integrator is a fixed-step classical RK4 on (x, x') that can carry any
number of vectors parallel transported along the trajectory, each under its
own connection.  Everything is batched over a leading row axis so that the
hundreds of small boundary-value problems behind one divergence evaluation
are solved in a single sweep.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .config import DEFAULT
from .errors import (CurveInvalid, ShootingDiverged, StepCountTooSmall,
                     TrajectoryLeftDomain)
from .manifold import LEVI_CIVITA, Tangent

RESIDUAL_BOUND = 1e-6


def _accel(G, v):
    # -Gamma^k_ij v^i v^j, contracted through the flattened (i, j) pair
    B, n = v.shape
    vv = (v[:, :, None] * v[:, None, :]).reshape(B, n * n)
    return -np.einsum("bkm,bm->bk", G.reshape(B, n, n * n), vv)


def _transport_rate(G, v, W):
    Gv = np.einsum("bkij,bi->bkj", G, v)
    return -np.einsum("bkj,bmj->bmk", Gv, W)


class _Field:
    """Christoffel evaluations shared between the geodesic and its passengers."""

    def __init__(self, m, kinds):
        self.m = m
        self.kinds = kinds
        self.lo = m.lower + 0.5 * m.boundary_margin
        self.hi = m.upper - 0.5 * m.boundary_margin

    def __call__(self, x):
        xc = np.clip(x, self.lo, self.hi)
        cache = {}
        for k in self.kinds:
            if k not in cache:
                cache[k] = self.m.christoffel(k, xc)
        return cache


@dataclass
class Flow:
    """Raw output of a batched integration."""

    x: np.ndarray
    v: np.ndarray
    carried: list
    exit_t: np.ndarray
    xs: Optional[np.ndarray] = None
    vs: Optional[np.ndarray] = None
    acc: Optional[np.ndarray] = None

    @property
    def ok(self):
        return np.isnan(self.exit_t)


def integrate(m, kind, x0, v0, steps=200, carry=(), record=False):
    """RK4 flow of the geodesic equation of ``kind`` over t in [0, 1].

    ``carry`` is a sequence of ``(connection, W)`` with ``W`` of shape
    ``(B, k, n)``; each set of vectors is parallel transported along the
    trajectory under its connection.  Rows that leave the domain get their
    exit time recorded and NaN end states.
    """
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    B = x.shape[0]
    Ws = [np.array(W, dtype=float) for _, W in carry]
    ckinds = [k for k, _ in carry]
    field = _Field(m, [kind] + ckinds)
    h = 1.0 / steps
    exit_t = np.full(B, np.nan)
    if record:
        xs = np.empty((steps + 1, B, m.dim))
        vs = np.empty_like(xs)
        acc = np.empty_like(xs)

    def rhs(x, v, Ws):
        G = field(x)
        a = _accel(G[kind], v)
        return v, a, [_transport_rate(G[k], v, W) for k, W in zip(ckinds, Ws)]

    # rows that blow up are caught by the domain test below
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = rhs(x, v, Ws)
        for s in range(steps):
            if record:
                xs[s], vs[s], acc[s] = x, v, k1[1]
            k2 = rhs(x + 0.5 * h * k1[0], v + 0.5 * h * k1[1],
                     [W + 0.5 * h * d for W, d in zip(Ws, k1[2])])
            k3 = rhs(x + 0.5 * h * k2[0], v + 0.5 * h * k2[1],
                     [W + 0.5 * h * d for W, d in zip(Ws, k2[2])])
            k4 = rhs(x + h * k3[0], v + h * k3[1],
                     [W + h * d for W, d in zip(Ws, k3[2])])
            x = x + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            v = v + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            Ws = [W + h / 6 * (a + 2 * b + 2 * c + d)
                  for W, a, b, c, d in zip(Ws, k1[2], k2[2], k3[2], k4[2])]
            out = ~m.inside(x) & np.isnan(exit_t)
            if out.any():
                exit_t[out] = (s + 1) * h
            k1 = rhs(x, v, Ws)
    if record:
        xs[steps], vs[steps], acc[steps] = x, v, k1[1]
    bad = ~np.isnan(exit_t)
    if bad.any():
        x, v = x.copy(), v.copy()
        x[bad] = np.nan
        v[bad] = np.nan
        for W in Ws:
            W[bad] = np.nan
    flow = Flow(x, v, Ws, exit_t)
    if record:
        flow.xs, flow.vs, flow.acc = xs, vs, acc
    return flow


# ---------------------------------------------------------------- curves

def _hermite(h, s, y0, y1, d0, d1):
    """Cubic Hermite value and derivative on an interval of width h, s in [0, 1]."""
    s2, s3 = s * s, s * s * s
    val = ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0
           + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1)
    der = ((6 * s2 - 6 * s) * y0 / h + (3 * s2 - 4 * s + 1) * d0
           + (-6 * s2 + 6 * s) * y1 / h + (3 * s2 - 2 * s) * d1)
    return val, der


class Curve:
    """Parameterised path on t in [0, 1] with dense evaluation.

    Nodes hold positions and velocities (and accelerations for solved
    geodesics).  Between nodes the position is the cubic Hermite
    interpolant of (x, x'); when accelerations are known the velocity is the
    Hermite interpolant of (x', x'') so that it keeps the same order.
    A geodesic curve also remembers its initial data so that transports can
    re-integrate the joint system on the same step grid, and a generic curve
    may carry the exact path it was sampled from.
    """

    def __init__(self, manifold, kind, ts, xs, vs, acc=None, origin=None, path=None):
        ts = np.asarray(ts, dtype=float)
        xs = np.asarray(xs, dtype=float)
        vs = np.asarray(vs, dtype=float)
        if ts.ndim != 1 or len(ts) < 2:
            raise CurveInvalid("a curve needs at least two nodes")
        if abs(ts[0]) > 1e-14 or abs(ts[-1] - 1) > 1e-14 or np.any(np.diff(ts) <= 0):
            raise CurveInvalid("curve nodes must increase strictly from t=0 to t=1")
        if xs.shape[0] != len(ts) or vs.shape != xs.shape:
            raise CurveInvalid("node arrays do not match the parameter grid")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(vs))):
            raise CurveInvalid("curve nodes contain non-finite values")
        self.manifold = manifold
        self.kind = kind
        self.ts, self.xs, self.vs, self.acc = ts, xs, vs, acc
        self.origin = origin
        self.path = path
        self.segments = None

    @classmethod
    def from_path(cls, manifold, path, steps=200):
        """Sample ``path(t) -> (x, x')`` (vectorised over t) on a uniform grid."""
        ts = np.linspace(0.0, 1.0, steps + 1)
        xs, vs = path(ts)
        return cls(manifold, None, ts, xs, vs, path=path)

    @property
    def steps(self):
        return len(self.ts) - 1

    @property
    def start(self):
        return self.xs[0]

    @property
    def end(self):
        return self.xs[-1]

    def eval(self, t):
        """Return (position, velocity) at t (scalar or 1-d array)."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any((t < -1e-12) | (t > 1 + 1e-12)):
            raise ValueError("curve parameter outside [0, 1]")
        if self.segments:
            k = len(self.segments)
            j = np.minimum((t * k).astype(int), k - 1)
            parts = [seg.eval(np.clip(t[j == i] * k - i, 0.0, 1.0)) for i, seg in enumerate(self.segments)]
            x = np.concatenate([pt[0] for pt in parts])
            v = k * np.concatenate([pt[1] for pt in parts])
            order = np.argsort(np.argsort(j, kind="stable"), kind="stable")
            x, v = x[order], v[order]
        elif self.path is not None:
            x, v = self.path(t)
        else:
            i = np.clip(np.searchsorted(self.ts, t, side="right") - 1, 0, self.steps - 1)
            h = self.ts[i + 1] - self.ts[i]
            s = (t - self.ts[i]) / h
            shape = (-1,) + (1,) * (self.xs.ndim - 1)
            hh, ss = h.reshape(shape), s.reshape(shape)
            x, dx = _hermite(hh, ss, self.xs[i], self.xs[i + 1], self.vs[i], self.vs[i + 1])
            if self.acc is not None:
                v, _ = _hermite(hh, ss, self.vs[i], self.vs[i + 1], self.acc[i], self.acc[i + 1])
            else:
                v = dx
        if scalar:
            return x[0], v[0]
        return x, v

    def length(self, samples=400):
        """Riemannian length by the trapezoid rule on a fine grid."""
        if self.segments:
            # the speed jumps at the joins, so integrate piece by piece
            return sum(seg.length(samples) for seg in self.segments)
        t = np.linspace(0, 1, samples + 1)
        x, v = self.eval(t)
        speed = np.sqrt(np.maximum(self.manifold.inner(x, v, v), 0.0))
        return np.trapezoid(speed, t, axis=0)


def shoot(m, kind, p, v, steps=200, check=True):
    """Solve the geodesic initial value problem from (p, v) and return its curve."""
    p = m.require(p)
    v = v.components if isinstance(v, Tangent) else np.asarray(v, dtype=float)
    flow = integrate(m, kind, p[None], v[None], steps, record=True)
    if not flow.ok[0]:
        raise TrajectoryLeftDomain(
            f"geodesic left the domain of {m.name} at t={flow.exit_t[0]:.4f}", flow.exit_t[0])
    curve = Curve(m, kind, np.linspace(0, 1, steps + 1), flow.xs[:, 0], flow.vs[:, 0],
                  flow.acc[:, 0], origin=(p, v))
    if check:
        res = geodesic_residual(curve)
        if res > RESIDUAL_BOUND * max(1.0, float(np.linalg.norm(v))) ** 3:
            raise StepCountTooSmall(
                f"geodesic residual {res:.2e} too large at {steps} steps; increase ode_steps")
    return curve


def exp_map(m, kind, p, v, steps=200):
    return shoot(m, kind, p, v, steps, check=False).end


def exp_many(m, kind, P, V, steps=200):
    """Endpoints and end velocities for a batch of initial data."""
    flow = integrate(m, kind, np.atleast_2d(P), np.atleast_2d(V), steps)
    return flow.x, flow.v, flow.exit_t


def geodesic_residual(curve, probes=None):
    """Max |x'' + Gamma(x', x')| at interval midpoints (or given probe times)."""
    m = curve.manifold
    if probes is None:
        probes = 0.5 * (curve.ts[1:] + curve.ts[:-1])
    t = np.asarray(probes, dtype=float)
    i = np.clip(np.searchsorted(curve.ts, t, side="right") - 1, 0, curve.steps - 1)
    h = (curve.ts[i + 1] - curve.ts[i])[:, None]
    s = ((t - curve.ts[i]) / h[:, 0])[:, None]
    x, _ = _hermite(h, s, curve.xs[i], curve.xs[i + 1], curve.vs[i], curve.vs[i + 1])
    v, a = _hermite(h, s, curve.vs[i], curve.vs[i + 1], curve.acc[i], curve.acc[i + 1])
    G = m.christoffel(curve.kind, x)
    return float(np.max(np.abs(a - _accel(G, v))))


# ---------------------------------------------------------------- shooting

@dataclass(frozen=True)
class ShootingResult:
    initial_velocity: Tangent
    iterations: int
    final_gap: float


@dataclass
class ShootingBatch:
    V: np.ndarray
    iterations: np.ndarray
    gaps: np.ndarray
    ok: np.ndarray


def _target(cfg, dist, Q):
    # relative to the separation so tiny finite-difference offsets stay accurate;
    # floored at a few ulps of the coordinates
    floor = 64 * np.finfo(float).eps * np.maximum(1.0, np.abs(Q).max(axis=-1))
    return np.maximum(cfg.shooting_tol * np.minimum(1.0, dist), floor)


def _newton(m, kind, P, Q, V, cfg):
    """Damped Newton with a forward-difference Jacobian.

    The Jacobian of a row is reused while full steps keep shrinking the gap
    at least tenfold, and refreshed otherwise; a row fails only when a step
    with a fresh Jacobian cannot reduce the gap, unless the gap has already
    stalled at rounding level (1024 ulps of the target coordinates).
    Converged rows get one extra polishing step.
    """
    B, n = P.shape
    steps, hj = cfg.ode_steps, cfg.jac_step
    dist = np.linalg.norm(m.wrap_delta(Q - P), axis=-1)
    target = _target(cfg, dist, Q)
    # gap at which a stalled iteration is accepted as limited by rounding in the ODE
    roundoff = np.maximum(target, 1024 * np.finfo(float).eps * np.maximum(1.0, np.abs(Q).max(axis=-1)))
    iters = np.zeros(B, dtype=int)
    polished = np.zeros(B, dtype=bool)
    done = np.zeros(B, dtype=bool)
    failed = np.zeros(B, dtype=bool)
    Jinv = np.full((B, n, n), np.nan)
    stale = np.ones(B, dtype=bool)

    def miss(rows, Vr):
        X, _, _ = exp_many(m, kind, P[rows], Vr, steps)
        F = m.wrap_delta(X - Q[rows])
        g = np.linalg.norm(F, axis=-1)
        g[~np.isfinite(g)] = np.inf
        return F, g

    F, gap = miss(np.arange(B), V)
    failed |= ~np.isfinite(gap)
    for _ in range(cfg.max_iters):
        act = np.flatnonzero(~done & ~failed)
        if act.size == 0:
            break
        conv = gap[act] <= target[act]
        done[act[conv & polished[act]]] = True
        polished[act[conv]] = True
        act = np.flatnonzero(~done & ~failed)
        if act.size == 0:
            break
        upd = act[stale[act]]
        if upd.size:
            # forward-difference Jacobian, all rows and directions in one sweep
            Vp = (V[upd][:, None, :] + hj * np.eye(n)).reshape(-1, n)
            Xp, _, _ = exp_many(m, kind, np.repeat(P[upd], n, axis=0), Vp, steps)
            X0 = Q[upd] + F[upd]
            J = np.swapaxes(m.wrap_delta(Xp.reshape(upd.size, n, n) - X0[:, None, :]) / hj, -1, -2)
            good = np.all(np.isfinite(J), axis=(1, 2))
            good[good] &= np.abs(np.linalg.det(J[good])) > 1e-300
            Jinv[upd[good]] = np.linalg.inv(J[good])
            failed[upd[~good]] = True
            fresh = np.zeros(B, dtype=bool)
            fresh[upd] = True
            stale[upd] = False
        else:
            fresh = np.zeros(B, dtype=bool)
        act = act[~failed[act]]
        dv = -np.einsum("bij,bj->bi", Jinv[act], F[act])
        iters[act] += 1
        # damping: halve the step per row until the gap decreases
        lam = np.ones(act.size)
        pending = np.ones(act.size, dtype=bool)
        old = gap[act].copy()
        for _ in range(30):
            rows = np.flatnonzero(pending)
            if rows.size == 0:
                break
            idx = act[rows]
            Vc = V[idx] + lam[rows, None] * dv[rows]
            Fc, gc = miss(idx, Vc)
            better = (gc < gap[idx]) | (gc <= target[idx])
            acc = idx[better]
            V[acc], F[acc], gap[acc] = Vc[better], Fc[better], gc[better]
            pending[rows[better]] = False
            # an old Jacobian gets one try before being refreshed
            giveup = rows[~better & ~fresh[idx]]
            pending[giveup] = False
            lam[rows[~better]] *= 0.5
        slow = (lam < 1) | (gap[act] > 0.1 * old)
        stale[act[slow]] = True
        stuck = act[pending]
        conv_stuck = gap[stuck] <= roundoff[stuck]
        done[stuck[conv_stuck]] = True
        failed[stuck[~conv_stuck]] = True
    ok = (gap <= target) | (done & (gap <= roundoff))
    return V, iters, gap, ok


def log_many(m, kind, P, Q, cfg=DEFAULT, guess=None, strict=True, node_t=None,
             continuation=True):
    """Batched inverse exponential map by damped Newton shooting.

    Returns a :class:`ShootingBatch`.  Coincident pairs return the zero
    vector without iterating.  Rows that fail get one continuation attempt
    through the chart midpoint; remaining failures raise
    :class:`ShootingDiverged` when ``strict`` (else they are flagged in ``ok``).
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    P, Q = np.broadcast_arrays(P, Q)
    P, Q = P.copy(), Q.copy()
    B, n = P.shape
    delta = m.wrap_delta(Q - P)
    V = np.zeros((B, n))
    iters = np.zeros(B, dtype=int)
    gaps = np.zeros(B)
    ok = np.ones(B, dtype=bool)
    live = np.flatnonzero(np.linalg.norm(delta, axis=-1) >= 1e-12)
    if live.size:
        V0 = delta[live] if guess is None else np.array(np.broadcast_to(guess, (B, n))[live], dtype=float)
        Vl, il, gl, okl = _newton(m, kind, P[live], Q[live], V0.copy(), cfg)
        if continuation and not okl.all():
            bad = np.flatnonzero(~okl)
            rows = live[bad]
            mid = P[rows] + 0.5 * delta[rows]
            Vm, im, _, okm = _newton(m, kind, P[rows], mid, 0.5 * delta[rows], cfg)
            Vr, ir, gr, okr = _newton(m, kind, P[rows], Q[rows], 2.0 * Vm, cfg)
            Vl[bad[okr]], gl[bad[okr]], okl[bad[okr]] = Vr[okr], gr[okr], True
            il[bad] += im + ir
        V[live], iters[live], gaps[live], ok[live] = Vl, il, gl, okl
    if strict and not ok.all():
        bad = np.flatnonzero(~ok)
        where = "" if node_t is None else f" at node t={node_t}"
        raise ShootingDiverged(
            f"shooting failed for {bad.size} of {B} pairs on {m.name}{where}; "
            f"worst gap {np.max(gaps[bad]):.2e}", bad, node_t)
    return ShootingBatch(V, iters, gaps, ok)


def log(m, kind, p, q, cfg=DEFAULT):
    p, q = m.require(p), m.require(q)
    res = log_many(m, kind, p[None], q[None], cfg)
    return ShootingResult(Tangent(p, res.V[0]), int(res.iterations[0]), float(res.gaps[0]))


def geodesic_between(m, kind, p, q, cfg=DEFAULT):
    res = log(m, kind, p, q, cfg)
    return shoot(m, kind, p, res.initial_velocity, cfg.ode_steps, check=False)


def riemannian_distance(m, p, q, cfg=DEFAULT):
    res = log(m, LEVI_CIVITA, p, q, cfg)
    v = res.initial_velocity.components
    return float(np.sqrt(max(m.inner(np.asarray(p, float), v, v), 0.0)))


def chart_cubic(m, p, q, a=None, b=None, steps=200):
    """Non-geodesic test path p + t(q - p) + t(1 - t)(a + b t) in chart coordinates."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    d = m.wrap_delta(q - p)
    a = np.zeros_like(p) if a is None else np.asarray(a, dtype=float)
    b = np.zeros_like(p) if b is None else np.asarray(b, dtype=float)

    def path(t):
        t = np.asarray(t, dtype=float)[:, None]
        x = p + t * d + t * (1 - t) * (a + b * t)
        v = d + (1 - 2 * t) * a + (2 * t - 3 * t * t) * b
        return x, v

    return Curve.from_path(m, path, steps)


def concat(*curves):
    """Join curves end to start; segment i occupies t in [i/k, (i+1)/k]."""
    k = len(curves)
    m = curves[0].manifold
    for a, b in zip(curves, curves[1:]):
        if np.linalg.norm(m.wrap_delta(a.end - b.start)) > 1e-9:
            raise CurveInvalid("curve segments do not join")
    ts = np.concatenate([curves[0].ts / k] + [(i + c.ts[1:]) / k for i, c in enumerate(curves) if i])
    xs = np.concatenate([curves[0].xs] + [c.xs[1:] for c in curves[1:]])
    vs = k * np.concatenate([curves[0].vs] + [c.vs[1:] for c in curves[1:]])
    out = Curve(m, None, ts, xs, vs)
    kinds = {c.kind for c in curves}
    out.kind = kinds.pop() if len(kinds) == 1 else None
    out.segments = list(curves)
    return out
