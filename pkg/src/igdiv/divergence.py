"""Divergences and related path integrals on a statistical manifold.

Every quantity has a batched form working on pair arrays ``P, Q`` of shape
``(B, n)``.  Path integrals use Gauss-Legendre quadrature of order ``n`` and
``n/2`` evaluated in one sweep; the difference of the two is reported as the
error estimate.  Dual-oriented quantities are obtained by running the primal
construction on the manifold with the two connections exchanged.
"""

import dataclasses
import enum
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT
from .errors import (FiniteDifferenceStencilOutOfDomain, GradientInversionFailed,
                     NotHessianManifold, ShootingDiverged, TrajectoryLeftDomain)
from .geodesic import Curve, _hermite, integrate, log_many
from .manifold import DUAL, LEVI_CIVITA, PRIMAL, Tangent, small_inverse


class Orientation(enum.Enum):
    PRIMAL = "primal"
    DUAL = "dual"


@dataclass(frozen=True)
class DivergenceValue:
    value: float
    quadrature_order: int
    est_error: float


def swapped(m):
    """The same manifold with nabla and nabla* exchanged."""
    name = m.name[:-1] if m.name.endswith("*") else m.name + "*"
    return dataclasses.replace(m, name=name, primal_fn=m.dual_fn, dual_fn=m.primal_fn)


def oriented(m, orient):
    orient = Orientation(orient.value if isinstance(orient, Orientation) else orient)
    return m if orient is Orientation.PRIMAL else swapped(m)


def gauss_nodes(order):
    """Nodes on [0, 1] for orders n and n/2 stacked, with their weights split."""
    x1, w1 = np.polynomial.legendre.leggauss(order)
    x2, w2 = np.polynomial.legendre.leggauss(max(order // 2, 1))
    t = 0.5 * np.concatenate([x1, x2]) + 0.5
    W = np.zeros((2, t.size))
    W[0, :order] = 0.5 * w1
    W[1, order:] = 0.5 * w2
    return t, W


def _quadrature(F, W):
    """F has shape (B, K); returns (value at order n, |difference to order n/2|)."""
    both = F @ W.T
    return both[:, 0], np.abs(both[:, 0] - both[:, 1])


def _pairs(P, Q):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    P, Q = np.broadcast_arrays(P, Q)
    return P.copy(), Q.copy()


def _live(m, P, Q):
    return np.linalg.norm(m.wrap_delta(Q - P), axis=-1) >= 1e-12


def _solve(m, kind, P, Q, cfg, guess=None, nodes=None, strict=True):
    res = log_many(m, kind, P, Q, cfg, guess=guess, strict=False)
    if strict and not res.ok.all():
        bad = np.flatnonzero(~res.ok)
        t = None if nodes is None else float(nodes[bad[0]])
        where = "" if t is None else f" at node t={t:.6f}"
        raise ShootingDiverged(f"shooting failed on {m.name}{where} "
                               f"({bad.size} of {len(P)} solves)", bad, t)
    V = res.V.copy()
    V[~res.ok] = np.nan
    return V


def _flow(m, kind, X0, V0, cfg, carry=()):
    flow = integrate(m, kind, X0, V0, cfg.ode_steps, carry)
    bad = ~flow.ok
    if bad.any():
        # only reachable for rows whose solve already failed (NaN input) or a true exit
        real = bad & np.all(np.isfinite(V0), axis=-1)
        if real.any():
            raise TrajectoryLeftDomain(f"geodesic left the domain of {m.name}",
                                       float(np.nanmin(flow.exit_t[real])))
    return flow


def _geodesic_nodes(m, kind, P, V, t, cfg):
    """sigma(t_k) and sigma'(t_k) for geodesics (P, V), all rows and nodes at once."""
    B, K = len(P), len(t)
    Pr = np.repeat(P, K, axis=0)
    Vr = (V[:, None, :] * t[None, :, None]).reshape(B * K, -1)
    f = _flow(m, kind, Pr, Vr, cfg)
    vel = f.v.reshape(B, K, -1) / t[None, :, None]
    return Pr, Vr, f.x.reshape(B, K, -1), vel


# ---------------------------------------------------------------- vector fields

def logs_many(m, P, Q, cfg=DEFAULT, strict=True):
    return _solve(m, PRIMAL, P, Q, cfg, strict=strict), _solve(m, DUAL, P, Q, cfg, strict=strict)


def pi_many(m, P, Q, cfg=DEFAULT, V=None, Vs=None, strict=True):
    """(Pi, Pi*) at Q for each pair; Pi is the nabla-transport of the nabla-log
    along the nabla*-geodesic, Pi* the mirror construction."""
    P, Q = _pairs(P, Q)
    if V is None:
        V = _solve(m, PRIMAL, P, Q, cfg, strict=strict)
    if Vs is None:
        Vs = _solve(m, DUAL, P, Q, cfg, strict=strict)
    Pi = _flow(m, DUAL, P, Vs, cfg, [(PRIMAL, V[:, None, :])]).carried[0][:, 0]
    Pis = _flow(m, PRIMAL, P, V, cfg, [(DUAL, Vs[:, None, :])]).carried[0][:, 0]
    return Pi, Pis


def pi_vectors(m, p, q, cfg=DEFAULT):
    p, q = m.require(p), m.require(q)
    Pi, Pis = pi_many(m, p[None], q[None], cfg)
    return Tangent(q, Pi[0]), Tangent(q, Pis[0])


def _pi_at(m, P, Y, t, cfg, logp=None, logd=None, guess_p=None, guess_d=None, strict=True):
    """Pi_y(p) for rows (P, Y); known logs skip their shooting solve."""
    if logp is None:
        logp = _solve(m, PRIMAL, P, Y, cfg, guess=guess_p, nodes=t, strict=strict)
    if logd is None:
        logd = _solve(m, DUAL, P, Y, cfg, guess=guess_d, nodes=t, strict=strict)
    return _flow(m, DUAL, P, logd, cfg, [(PRIMAL, logp[:, None, :])]).carried[0][:, 0]


# ---------------------------------------------------------------- quantities

def pseudo_distance_many(m, P, Q, cfg=DEFAULT, strict=True):
    P, Q = _pairs(P, Q)
    V, Vs = logs_many(m, P, Q, cfg, strict)
    return m.inner(P, V, Vs), np.zeros(len(P))


def standard_many(m, P, Q, cfg=DEFAULT, strict=True):
    P, Q = _pairs(P, Q)
    V = _solve(m, PRIMAL, P, Q, cfg, strict=strict)
    return m.inner(P, V, V), np.zeros(len(P))


def distance_many(m, P, Q, cfg=DEFAULT, strict=True):
    P, Q = _pairs(P, Q)
    V = _solve(m, LEVI_CIVITA, P, Q, cfg, strict=strict)
    return np.sqrt(np.maximum(m.inner(P, V, V), 0.0)), np.zeros(len(P))


def _masked(fn):
    """Run fn on non-coincident pairs only; coincident pairs are exactly 0.

    With ``strict=False`` failed solves leave NaN in their rows instead of
    raising.
    """
    def wrapped(m, P, Q, cfg=DEFAULT, strict=True):
        P, Q = _pairs(P, Q)
        val, err = np.zeros(len(P)), np.zeros(len(P))
        live = np.flatnonzero(_live(m, P, Q))
        if live.size:
            try:
                val[live], err[live] = fn(m, P[live], Q[live], cfg, strict)
            except ShootingDiverged as e:
                # node-level failures index (pair, node) rows
                K = cfg.quad_order + max(cfg.quad_order // 2, 1) if e.node_t is not None else 1
                rows = sorted({int(live[min(i // K, live.size - 1)]) for i in e.indices})
                raise ShootingDiverged(str(e), rows, e.node_t) from e
        return val, err
    wrapped.__name__ = fn.__name__
    wrapped.__doc__ = fn.__doc__
    return wrapped


@_masked
def canonical_many(m, P, Q, cfg=DEFAULT, strict=True):
    """D(p, q): integral of <Pi_t(p), sigma'(t)> along the nabla-geodesic p -> q."""
    t, W = gauss_nodes(cfg.quad_order)
    B, K = len(P), len(t)
    V = _solve(m, PRIMAL, P, Q, cfg, strict=strict)
    Vs = _solve(m, DUAL, P, Q, cfg, strict=strict)
    Pr, Vr, Y, vel = _geodesic_nodes(m, PRIMAL, P, V, t, cfg)
    Yf = Y.reshape(B * K, -1)
    guess = (Vs[:, None, :] * t[None, :, None]).reshape(B * K, -1)
    Pi = _pi_at(m, Pr, Yf, np.tile(t, B), cfg, logp=Vr, guess_d=guess, strict=strict)
    F = m.inner(Yf, Pi, vel.reshape(B * K, -1)).reshape(B, K)
    return _quadrature(F, W)


@_masked
def phi_many(m, P, Q, cfg=DEFAULT, strict=True):
    """phi(p, q) = int <log_p(exp*_p(t X*)), X*>_p dt with X* the nabla*-log of q."""
    t, W = gauss_nodes(cfg.quad_order)
    B, K = len(P), len(t)
    V = _solve(m, PRIMAL, P, Q, cfg, strict=strict)
    Vs = _solve(m, DUAL, P, Q, cfg, strict=strict)
    Pr, _, Y, _ = _geodesic_nodes(m, DUAL, P, Vs, t, cfg)
    guess = (V[:, None, :] * t[None, :, None]).reshape(B * K, -1)
    U = _solve(m, PRIMAL, Pr, Y.reshape(B * K, -1), cfg, guess=guess, nodes=np.tile(t, B), strict=strict)
    F = m.inner(Pr, U, np.repeat(Vs, K, axis=0)).reshape(B, K)
    return _quadrature(F, W)


@_masked
def phi_direct_many(m, P, Q, cfg=DEFAULT, strict=True):
    """phi(p, q) straight from its definition: <Pi_t(p), sigma*'(t)> along the
    nabla*-geodesic.  Slower than :func:`phi_many`; kept as a cross-check."""
    t, W = gauss_nodes(cfg.quad_order)
    B, K = len(P), len(t)
    V = _solve(m, PRIMAL, P, Q, cfg, strict=strict)
    Vs = _solve(m, DUAL, P, Q, cfg, strict=strict)
    Pr, Vr, Y, vel = _geodesic_nodes(m, DUAL, P, Vs, t, cfg)
    Yf = Y.reshape(B * K, -1)
    guess = (V[:, None, :] * t[None, :, None]).reshape(B * K, -1)
    Pi = _pi_at(m, Pr, Yf, np.tile(t, B), cfg, logd=Vr, guess_p=guess, strict=strict)
    F = m.inner(Yf, Pi, vel.reshape(B * K, -1)).reshape(B, K)
    return _quadrature(F, W)


@_masked
def ay_amari_many(m, P, Q, cfg=DEFAULT, strict=True):
    """int t |sigma'(t)|^2 dt along the nabla-geodesic p -> q."""
    t, W = gauss_nodes(cfg.quad_order)
    B, K = len(P), len(t)
    V = _solve(m, PRIMAL, P, Q, cfg, strict=strict)
    _, _, Y, vel = _geodesic_nodes(m, PRIMAL, P, V, t, cfg)
    Yf, vf = Y.reshape(B * K, -1), vel.reshape(B * K, -1)
    F = t[None, :] * m.inner(Yf, vf, vf).reshape(B, K)
    return _quadrature(F, W)


@_masked
def henmi_many(m, P, Q, cfg=DEFAULT, strict=True):
    """W(p||q) = -int <gamma'(t), X*_t(q)> along the nabla-geodesic q -> p,
    X*_t(q) being the nabla*-log of q seen from gamma(t)."""
    t, W = gauss_nodes(cfg.quad_order)
    B, K = len(P), len(t)
    w = _solve(m, PRIMAL, Q, P, cfg, strict=strict)
    _, _, Y, vel = _geodesic_nodes(m, PRIMAL, Q, w, t, cfg)
    Yf, vf = Y.reshape(B * K, -1), vel.reshape(B * K, -1)
    X = _solve(m, DUAL, Yf, np.repeat(Q, K, axis=0), cfg, nodes=np.tile(t, B), strict=strict)
    F = -m.inner(Yf, vf, X).reshape(B, K)
    return _quadrature(F, W)


def path_pi_integrals(m, p, c, cfg=DEFAULT):
    """(int <Pi_c(t)(p), c'>, int <Pi*_c(t)(p), c'>) along an arbitrary curve from p."""
    t, W = gauss_nodes(cfg.quad_order)
    p = np.asarray(p, dtype=float)
    Y, Yd = c.eval(t)
    Pr = np.repeat(p[None], len(t), axis=0)
    Pi = _pi_at(m, Pr, Y, t, cfg)
    Pis = _pi_at(swapped(m), Pr, Y, t, cfg)
    F = np.stack([m.inner(Y, Pi, Yd), m.inner(Y, Pis, Yd)])
    val, err = _quadrature(F, W)
    order = cfg.quad_order
    return (DivergenceValue(float(val[0]), order, float(err[0])),
            DivergenceValue(float(val[1]), order, float(err[1])))


# ---------------------------------------------------------------- pseudo-energy

def transport_profile(m, kind, c, X, t, cfg=DEFAULT):
    """Parallel transport of X from c(0) to c(t_k), with c'(t_k), for all nodes."""
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    if c.origin is not None and not c.segments:
        p, v0 = c.origin
        Pr = np.repeat(p[None], len(t), axis=0)
        f = _flow(m, c.kind, Pr, v0[None] * t[:, None], cfg,
                  [(kind, np.repeat(X[None, None], len(t), axis=0))])
        return f.carried[0][:, 0], f.v / t[:, None]
    # generic curve: RK4 on the node grid, then Hermite with the ODE rate as slope
    Ws = [X]
    W = X[None]
    ts = c.ts
    for t0, t1 in zip(ts[:-1], ts[1:]):
        h = t1 - t0
        x, v = c.eval(np.array([t0, t0 + 0.5 * h, t1]))
        G = m.christoffel(kind, x)

        def rate(i, W):
            return -np.einsum("kij,i,mj->mk", G[i], v[i], W)

        k1 = rate(0, W)
        k2 = rate(1, W + 0.5 * h * k1)
        k3 = rate(1, W + 0.5 * h * k2)
        k4 = rate(2, W + h * k3)
        W = W + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        Ws.append(W[0])
    Ws = np.array(Ws)
    xs, vs = c.eval(ts)
    rates = -np.einsum("nkij,ni,nj->nk", m.christoffel(kind, xs), vs, Ws)
    i = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
    h = (ts[i + 1] - ts[i])[:, None]
    s = ((t - ts[i]) / h[:, 0])[:, None]
    Wt, _ = _hermite(h, s, Ws[i], Ws[i + 1], rates[i], rates[i + 1])
    return Wt, c.eval(t)[1]


def pseudo_energy_integrand(m, c, orient, anchor_q, cfg=DEFAULT, t=None):
    """Nodes, integrand <c'(t), P_t X> and weights for the pseudo-energy."""
    orient = Orientation(orient.value if isinstance(orient, Orientation) else orient)
    # the curve belongs to m, so the dual orientation picks the connection
    # on m instead of swapping the manifold under the curve
    kind = PRIMAL if orient is Orientation.PRIMAL else DUAL
    p = c.start
    X = _solve(m, kind, p[None], np.asarray(anchor_q, dtype=float)[None], cfg)[0]
    nodes, W = gauss_nodes(cfg.quad_order)
    if t is None:
        t = nodes
    PX, vel = transport_profile(m, kind, c, X, t, cfg)
    x, _ = c.eval(t)
    return t, m.inner(x, vel, PX), W


def pseudo_energy(m, c, orient, anchor_q, cfg=DEFAULT):
    """L(c) = int <c'(t), P_t X(p, q)> dt; the dual orientation swaps the connections."""
    t, F, W = pseudo_energy_integrand(m, c, orient, anchor_q, cfg)
    val, err = _quadrature(F[None], W)
    return DivergenceValue(float(val[0]), cfg.quad_order, float(err[0]))


# ---------------------------------------------------------------- Bregman

def legendre_inverse(m, eta, tol=1e-12, max_iter=100):
    """theta with grad phi(theta) = eta, by safeguarded Newton on the domain."""
    pot = m.potential
    eta = np.asarray(eta, dtype=float)
    lo, hi = m.lower + m.boundary_margin, m.upper - m.boundary_margin
    if m.dim == 1:
        a, b = lo[0], hi[0]
        ga = pot.grad(np.array([a]))[0] - eta[0]
        gb = pot.grad(np.array([b]))[0] - eta[0]
        if ga * gb > 0:
            raise GradientInversionFailed(f"eta={eta[0]:.6g} outside the gradient image")
        x = 0.5 * (a + b)
        for _ in range(max_iter):
            g = pot.grad(np.array([x]))[0] - eta[0]
            if abs(g) <= tol:
                return np.array([x])
            if g < 0:
                a = x
            else:
                b = x
            step = x - g / pot.hess(np.array([x]))[0, 0]
            x = step if a < step < b else 0.5 * (a + b)
        raise GradientInversionFailed("gradient inversion did not converge")
    # n-d: damped Newton on the strictly convex phi(theta) - theta . eta
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        g = pot.grad(x) - eta
        if np.linalg.norm(g) <= tol:
            return x
        step = -np.linalg.solve(pot.hess(x), g)
        f0 = pot.value(x) - x @ eta
        lam = 1.0
        while lam > 1e-12:
            y = x + lam * step
            if np.all((y > lo) & (y < hi)) and pot.value(y) - y @ eta <= f0 + 1e-4 * lam * (g @ step):
                break
            lam *= 0.5
        x = x + lam * step
    if np.linalg.norm(pot.grad(x) - eta) <= 1e3 * tol:
        return x
    raise GradientInversionFailed("gradient inversion did not converge")


def legendre_dual(m, eta):
    theta = legendre_inverse(m, eta)
    return float(theta @ eta - m.potential.value(theta))


def bregman_divergence(m, p, q):
    """phi(theta_p) + phi*(eta_q) - theta_p . eta_q."""
    if m.potential is None:
        raise NotHessianManifold(f"{m.name} has no potential")
    p, q = m.require(p), m.require(q)
    if np.linalg.norm(q - p) < 1e-12:
        return 0.0
    eta_q = m.potential.grad(q)
    return float(m.potential.value(p) + legendre_dual(m, eta_q) - p @ eta_q)


def bregman_many(m, P, Q, cfg=DEFAULT, strict=True):
    P, Q = _pairs(P, Q)
    return np.array([bregman_divergence(m, p, q) for p, q in zip(P, Q)]), np.zeros(len(P))


# ---------------------------------------------------------------- registry

def _dual_of(fn):
    def wrapped(m, P, Q, cfg=DEFAULT, strict=True):
        return fn(swapped(m), P, Q, cfg, strict)
    return wrapped


QUANTITIES = {
    "D": canonical_many,
    "Dstar": _dual_of(canonical_many),
    "phi": phi_many,
    "phistar": _dual_of(phi_many),
    "r": pseudo_distance_many,
    "ayamari": ay_amari_many,
    "bregman": bregman_many,
    "henmiW": henmi_many,
    "henmiWstar": _dual_of(henmi_many),
    "standard": standard_many,
    "distance": distance_many,
}


def evaluate_many(m, name, P, Q, cfg=DEFAULT, strict=True):
    """Values and error estimates of a named quantity for every pair."""
    if name not in QUANTITIES:
        raise KeyError(f"unknown quantity {name!r}; choose from {sorted(QUANTITIES)}")
    P, Q = _pairs(P, Q)
    m.require(P)
    m.require(Q)
    return QUANTITIES[name](m, P, Q, cfg, strict)


def _single(name, m, p, q, cfg):
    val, err = evaluate_many(m, name, np.asarray(p, float)[None], np.asarray(q, float)[None], cfg)
    order = cfg.quad_order if name not in ("r", "standard", "distance", "bregman") else 0
    return DivergenceValue(float(val[0]), order, float(err[0]))


def canonical_divergence(m, p, q, orient=Orientation.PRIMAL, cfg=DEFAULT):
    return _single("D" if Orientation(orient) is Orientation.PRIMAL else "Dstar", m, p, q, cfg)


def phi(m, p, q, orient=Orientation.PRIMAL, cfg=DEFAULT):
    return _single("phi" if Orientation(orient) is Orientation.PRIMAL else "phistar", m, p, q, cfg)


def henmi_kobayashi(m, p, q, orient=Orientation.PRIMAL, cfg=DEFAULT):
    return _single("henmiW" if Orientation(orient) is Orientation.PRIMAL else "henmiWstar", m, p, q, cfg)


def pseudo_distance(m, p, q, cfg=DEFAULT):
    return _single("r", m, p, q, cfg)


def ay_amari_divergence(m, p, q, cfg=DEFAULT):
    return _single("ayamari", m, p, q, cfg)


def standard_divergence(m, p, q, cfg=DEFAULT):
    return _single("standard", m, p, q, cfg).value


def grad_many(m, name, P, Q, h=1e-5, cfg=DEFAULT, strict=True):
    """Central-difference gradient in the second argument, index raised with g(q)^-1."""
    P, Q = _pairs(P, Q)
    B, n = P.shape
    E = h * np.eye(n)
    Qs = np.concatenate([Q[:, None, :] + E, Q[:, None, :] - E], axis=1).reshape(-1, n)
    if not np.all(m.inside(Qs)):
        raise FiniteDifferenceStencilOutOfDomain(f"stencil of width {h} leaves the domain")
    fn = name if callable(name) else QUANTITIES[name]
    vals, _ = fn(m, np.repeat(P, 2 * n, axis=0), Qs, cfg, strict)
    vals = vals.reshape(B, 2, n)
    d = (vals[:, 0] - vals[:, 1]) / (2 * h)
    return np.einsum("bij,bj->bi", small_inverse(m.metric(Q)), d)


def grad_divergence(m, f, p, q, h=1e-5, cfg=DEFAULT):
    q = np.asarray(q, dtype=float)
    return Tangent(q, grad_many(m, f, np.asarray(p, float)[None], q[None], h, cfg)[0])
