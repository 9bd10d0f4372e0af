"""Single-chart statistical manifolds (g, nabla, nabla*) and the built-in zoo.

All geometric callbacks are vectorised over leading axes: a point array of
shape ``(..., n)`` yields a metric of shape ``(..., n, n)`` and Christoffel
symbols of the second kind laid out as ``G[..., k, i, j] = Gamma^k_ij``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (ConfigError, FiniteDifferenceStencilOutOfDomain,
                     PointOutOfDomain)
from .report import CheckReport


@dataclass(frozen=True)
class Connection:
    """Member of the alpha-family; alpha=1 is nabla, -1 is nabla*, 0 Levi-Civita."""

    alpha: float

    @property
    def dual(self):
        return Connection(-self.alpha)

    @property
    def name(self):
        return {1.0: "primal", -1.0: "dual", 0.0: "levi_civita"}.get(
            float(self.alpha), f"alpha({self.alpha:g})")

    def __repr__(self):
        return f"Connection.{self.name}"


PRIMAL = Connection(1.0)
DUAL = Connection(-1.0)
LEVI_CIVITA = Connection(0.0)


def Alpha(alpha):
    return Connection(float(alpha))


@dataclass(frozen=True)
class Tangent:
    base: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float))
        object.__setattr__(self, "components", np.asarray(self.components, dtype=float))
        if self.base.shape != self.components.shape:
            raise ValueError("tangent components must match the base point dimension")
        if not np.all(np.isfinite(self.components)):
            raise ValueError("tangent components must be finite")


class Potential:
    """Convex potential in nabla-affine coordinates with analytic derivatives."""

    def __init__(self, name, value, grad, hess, third):
        self.name = name
        self.value = value
        self.grad = grad
        self.hess = hess
        self.third = third


def _bernoulli_potential():
    def sig(x):
        return 1.0 / (1.0 + np.exp(-x[..., 0]))

    def value(x):
        return np.logaddexp(0.0, x[..., 0])

    def grad(x):
        return sig(x)[..., None]

    def hess(x):
        s = sig(x)
        return (s * (1 - s))[..., None, None]

    def third(x):
        s = sig(x)
        return (s * (1 - s) * (1 - 2 * s))[..., None, None, None]

    return Potential("bernoulli", value, grad, hess, third)


def _gaussian_natural_potential():
    # log-partition of N(mu, s^2) in natural parameters (mu/s^2, -1/(2 s^2))
    def value(x):
        a, b = x[..., 0], x[..., 1]
        return -a * a / (4 * b) - 0.5 * np.log(-2 * b)

    def grad(x):
        a, b = x[..., 0], x[..., 1]
        return np.stack([-a / (2 * b), a * a / (4 * b * b) - 1 / (2 * b)], axis=-1)

    def hess(x):
        a, r = x[..., 0], 1.0 / x[..., 1]
        h = np.empty(x.shape[:-1] + (2, 2))
        h[..., 0, 0] = -0.5 * r
        h[..., 0, 1] = h[..., 1, 0] = 0.5 * a * r * r
        h[..., 1, 1] = (0.5 - 0.5 * a * a * r) * r * r
        return h

    def third(x):
        a, r = x[..., 0], 1.0 / x[..., 1]
        r2 = r * r
        t = np.empty(x.shape[:-1] + (2, 2, 2))
        t[..., 0, 0, 0] = 0.0
        t[..., 0, 0, 1] = t[..., 0, 1, 0] = t[..., 1, 0, 0] = 0.5 * r2
        t[..., 0, 1, 1] = t[..., 1, 0, 1] = t[..., 1, 1, 0] = -a * r2 * r
        t[..., 1, 1, 1] = (1.5 * a * a * r - 1.0) * r2 * r
        return t

    return Potential("gaussian_natural", value, grad, hess, third)


def _polynomial_potential(coeffs):
    poly = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    d1, d2, d3 = poly.deriv(1), poly.deriv(2), poly.deriv(3)
    return Potential(
        "polynomial",
        lambda x: poly(x[..., 0]),
        lambda x: d1(x[..., 0])[..., None],
        lambda x: d2(x[..., 0])[..., None, None],
        lambda x: np.broadcast_to(d3(x[..., 0]), x.shape[:-1])[..., None, None, None].copy(),
    )


@dataclass(frozen=True)
class ManifoldHandle:
    """Immutable chart description of a statistical manifold.

    ``primal`` and ``dual`` return Christoffel symbols of the second kind for
    nabla and nabla*.  ``category`` is one of ``self_dual``, ``dually_flat``
    or ``generic``; ``symmetric`` flags manifolds known to satisfy (S) and (S)*.
    ``periods`` lets a coordinate be identified modulo a period (used for the
    azimuth of the sphere so loops around the pole can close in the chart).
    """

    name: str
    dim: int
    domain: tuple
    metric_fn: Callable = field(repr=False)
    primal_fn: Callable = field(repr=False)
    dual_fn: Callable = field(repr=False)
    potential: Optional[Potential] = field(default=None, repr=False)
    boundary_margin: float = 1e-6
    category: str = "generic"
    symmetric: bool = False
    sample_box: Optional[tuple] = None
    pair_radius: float = 0.3
    periods: Optional[tuple] = None
    spec: dict = field(default_factory=dict, compare=False)

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.domain], dtype=float)

    @property
    def upper(self):
        return np.array([hi for _, hi in self.domain], dtype=float)

    def inside(self, x, margin=None):
        x = np.asarray(x, dtype=float)
        m = self.boundary_margin if margin is None else margin
        return np.all((x > self.lower + m) & (x < self.upper - m), axis=-1)

    def require(self, x, error=PointOutOfDomain):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise PointOutOfDomain(f"expected {self.dim} coordinates, got {x.shape[-1]}")
        if not np.all(self.inside(x)):
            raise error(f"point {np.round(x, 6).tolist()} violates the domain of {self.name}")
        return x

    def metric(self, x):
        return self.metric_fn(np.asarray(x, dtype=float))

    def christoffel(self, kind, x):
        x = np.asarray(x, dtype=float)
        a = float(kind.alpha)
        if a == 1.0:
            return self.primal_fn(x)
        if a == -1.0:
            return self.dual_fn(x)
        return 0.5 * (1 + a) * self.primal_fn(x) + 0.5 * (1 - a) * self.dual_fn(x)

    def inner(self, x, u, v):
        g = self.metric(x)
        return np.einsum("...i,...ij,...j->...", u, g, v)

    def wrap_delta(self, d):
        """Chart difference reduced modulo the coordinate periods."""
        d = np.array(d, dtype=float)
        if self.periods:
            for i, per in enumerate(self.periods):
                if per:
                    d[..., i] = (d[..., i] + 0.5 * per) % per - 0.5 * per
        return d


def small_inverse(A):
    """Inverse of a stack of square matrices, closed form for sizes 1 and 2."""
    n = A.shape[-1]
    if n == 1:
        return 1.0 / A
    if n == 2:
        a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
        det = a * d - b * c
        return np.stack([np.stack([d, -b], -1), np.stack([-c, a], -1)], -2) / det[..., None, None]
    return np.linalg.inv(A)


# ---------------------------------------------------------------- zoo

def euclidean(n=2):
    n = int(n)
    if n < 1:
        raise ConfigError("euclidean dimension must be positive")

    def metric(x):
        return np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()

    def zero(x):
        return np.zeros(x.shape[:-1] + (n, n, n))

    return ManifoldHandle(f"euclidean:{n}", n, tuple((-50.0, 50.0) for _ in range(n)),
                          metric, zero, zero, category="self_dual", symmetric=True,
                          sample_box=tuple((-1.0, 1.0) for _ in range(n)), pair_radius=0.3,
                          spec={"type": "euclidean", "dim": n})


def sphere2():
    def metric(x):
        s = np.sin(x[..., 0])
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = s * s
        return g

    def gamma(x):
        th = x[..., 0]
        G = np.zeros(x.shape[:-1] + (2, 2, 2))
        G[..., 0, 1, 1] = -np.sin(th) * np.cos(th)
        cot = np.cos(th) / np.sin(th)
        G[..., 1, 0, 1] = cot
        G[..., 1, 1, 0] = cot
        return G

    return ManifoldHandle("sphere2", 2, ((0.05, np.pi - 0.05), (-3 * np.pi, 3 * np.pi)),
                          metric, gamma, gamma, category="self_dual", symmetric=True,
                          sample_box=((0.7, np.pi - 0.7), (-1.0, 1.0)), pair_radius=0.5,
                          periods=(None, 2 * np.pi), spec={"type": "sphere2"})


def hessian(potential="bernoulli", coeffs=None, domain=None):
    """Dually flat manifold of a convex potential, in nabla-affine coordinates."""
    if potential == "bernoulli":
        pot = _bernoulli_potential()
        dom = domain or [[-8.0, 8.0]]
        box, radius = ((-1.5, 1.5),), 0.3
    elif potential == "gaussian_natural":
        pot = _gaussian_natural_potential()
        dom = domain or [[-3.0, 3.0], [-3.0, -0.15]]
        box, radius = ((-0.6, 0.6), (-1.2, -0.6)), 0.3
    elif potential == "polynomial":
        if not coeffs:
            raise ConfigError("polynomial potential requires coeffs")
        if not domain:
            raise ConfigError("polynomial potential requires an explicit domain")
        pot = _polynomial_potential(coeffs)
        dom = domain
        lo, hi = dom[0]
        w = hi - lo
        box, radius = ((lo + 0.25 * w, hi - 0.25 * w),), min(0.3, 0.2 * w)
    else:
        raise ConfigError(f"unknown potential {potential!r}")
    dom = tuple((float(lo), float(hi)) for lo, hi in dom)
    n = len(dom)
    if potential == "polynomial":
        if n != 1:
            raise ConfigError("polynomial potentials are one-dimensional")
        grid = np.linspace(dom[0][0], dom[0][1], 401)[:, None]
        if np.any(pot.hess(grid)[..., 0, 0] <= 0):
            raise ConfigError("polynomial potential is not strictly convex on its domain")

    def metric(x):
        return pot.hess(x)

    def primal(x):
        return np.zeros(x.shape[:-1] + (n, n, n))

    def dual(x):
        # Gamma*^k_ij = g^kl phi_ijl; matmul is much faster than a batched einsum here
        return np.moveaxis(pot.third(x) @ small_inverse(pot.hess(x))[..., None, :, :], -1, -3)

    spec = {"type": "hessian", "potential": potential, "domain": [list(d) for d in dom]}
    if coeffs is not None:
        spec["coeffs"] = list(coeffs)
    return ManifoldHandle(f"hessian:{potential}", n, dom, metric, primal, dual,
                          potential=pot, category="dually_flat", sample_box=box,
                          pair_radius=radius, spec=spec)


def gaussian_cubic_tensor(x):
    """Amari-Chentsov tensor E[dl dl dl] of N(mu, sigma^2) in (mu, sigma)."""
    s = x[..., 1]
    T = np.zeros(x.shape[:-1] + (2, 2, 2))
    c = 2.0 / s ** 3
    for idx in ((0, 0, 1), (0, 1, 0), (1, 0, 0)):
        T[(...,) + idx] = c
    T[..., 1, 1, 1] = 8.0 / s ** 3
    return T


def alpha_gaussian(alpha=0.5):
    """Gaussian family in (mu, sigma) with nabla = alpha-, nabla* = (-alpha)-connection."""
    alpha = float(alpha)

    def metric(x):
        s = x[..., 1]
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = 1 / s ** 2
        g[..., 1, 1] = 2 / s ** 2
        return g

    def symbols(x, a):
        # Levi-Civita minus (a/2) times the raised cubic tensor, in closed form
        r = 1.0 / x[..., 1]
        G = np.zeros(x.shape[:-1] + (2, 2, 2))
        G[..., 0, 0, 1] = G[..., 0, 1, 0] = -(1 + a) * r
        G[..., 1, 0, 0] = 0.5 * (1 - a) * r
        G[..., 1, 1, 1] = -(1 + 2 * a) * r
        return G

    def primal(x):
        return symbols(x, alpha)

    def dual(x):
        return symbols(x, -alpha)

    category = "self_dual" if alpha == 0 else "generic"
    return ManifoldHandle(f"alpha_gaussian:{alpha:g}", 2, ((-10.0, 10.0), (0.1, 10.0)),
                          metric, primal, dual, category=category, symmetric=(alpha == 0),
                          sample_box=((-1.0, 1.0), (0.8, 1.6)), pair_radius=0.2,
                          spec={"type": "alpha_gaussian", "alpha": alpha})


def custom(dim, domain, metric, primal, dual, potential=None, vectorized=False,
           name="custom", seed=0, boundary_margin=1e-6):
    """Build a handle from raw callbacks after checking the duality relation.

    Non-vectorised callbacks take a single ``(dim,)`` point and are looped.
    Construction fails if the duality residual exceeds 1e-5 at any of 20
    sampled interior points.
    """
    if not vectorized:
        metric, primal, dual = (_loop(f) for f in (metric, primal, dual))
    dom = tuple((float(lo), float(hi)) for lo, hi in domain)
    m = ManifoldHandle(name, int(dim), dom, metric, primal, dual, potential=potential,
                       boundary_margin=boundary_margin,
                       sample_box=tuple((lo + 0.2 * (hi - lo), hi - 0.2 * (hi - lo)) for lo, hi in dom),
                       spec={"type": "custom"})
    rng = np.random.default_rng(seed)
    lo, hi = np.array(m.sample_box).T
    pts = lo + (hi - lo) * rng.random((20, m.dim))
    worst = max(check_duality_relation(m, p, 1e-5, 1e-5).max_error for p in pts)
    if not worst <= 1e-5:
        raise ConfigError(f"callbacks violate the duality relation (residual {worst:.2e})")
    return m


def _loop(fn):
    def wrapped(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        out = np.array([np.asarray(fn(p), dtype=float) for p in flat])
        return out.reshape(x.shape[:-1] + out.shape[1:])
    return wrapped


def from_spec(spec):
    """Construct a zoo manifold from its JSON description or ``name[:param]`` shorthand."""
    if isinstance(spec, str):
        name, _, param = spec.partition(":")
        name = name.strip().lower()
        if name == "euclidean":
            return euclidean(int(param or 2))
        if name == "sphere2":
            return sphere2()
        if name == "hessian":
            return hessian(param or "bernoulli")
        if name == "alpha_gaussian":
            return alpha_gaussian(float(param or 0.5))
        raise ConfigError(f"unknown manifold shorthand {spec!r}")
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("manifold spec must be an object with a 'type' key")
    kind = spec["type"]
    allowed = {"euclidean": {"type", "dim"}, "sphere2": {"type"},
               "hessian": {"type", "potential", "coeffs", "domain"},
               "alpha_gaussian": {"type", "alpha"}}
    if kind not in allowed:
        raise ConfigError(f"unknown manifold type {kind!r}")
    extra = set(spec) - allowed[kind]
    if extra:
        raise ConfigError(f"unknown keys for {kind}: {sorted(extra)}")
    if kind == "euclidean":
        return euclidean(spec.get("dim", 2))
    if kind == "sphere2":
        return sphere2()
    if kind == "hessian":
        return hessian(spec.get("potential", "bernoulli"), spec.get("coeffs"), spec.get("domain"))
    return alpha_gaussian(spec.get("alpha", 0.5))


# ---------------------------------------------------------------- local geometry

def metric_at(m, p):
    p = m.require(p)
    return m.metric(p)


def lower_index(m, x, G):
    """Gamma_ijk = g_il Gamma^l_jk."""
    return np.einsum("...il,...ljk->...ijk", m.metric(x), G)


def christoffels_at(m, kind, p):
    p = m.require(p)
    G = m.christoffel(kind, p)
    return G, lower_index(m, p, G)


def cubic_tensor_at(m, p):
    """T_ijk = Gamma*_ijk - Gamma_ijk."""
    p = m.require(p)
    return lower_index(m, p, m.dual_fn(p) - m.primal_fn(p))


def _stencil(m, p, h):
    p = np.asarray(p, dtype=float)
    eye = np.eye(m.dim) * h
    plus, minus = p[..., None, :] + eye, p[..., None, :] - eye
    if not (np.all(m.inside(plus)) and np.all(m.inside(minus))):
        raise FiniteDifferenceStencilOutOfDomain(
            f"finite-difference stencil of width {h} leaves the domain of {m.name}")
    return plus, minus


def christoffel_derivative(m, kind, p, h=1e-4):
    """dG[..., a, k, i, j] = d_a Gamma^k_ij by central differences."""
    plus, minus = _stencil(m, p, h)
    return (m.christoffel(kind, plus) - m.christoffel(kind, minus)) / (2 * h)


def curvature_from(G, dG):
    """R^l_ijk for R(d_i, d_j) d_k = R^l_ijk d_l, array layout R[..., l, i, j, k]."""
    d_i = np.einsum("...iljk->...lijk", dG)
    d_j = np.einsum("...jlik->...lijk", dG)
    quad = (np.einsum("...lim,...mjk->...lijk", G, G)
            - np.einsum("...ljm,...mik->...lijk", G, G))
    return d_i - d_j + quad


def curvature_at(m, kind, p, h=1e-4):
    """Return (R^l_ijk, R_ijkl) with R_ijkl = R(d_i, d_j, d_k, d_l) = g_lm R^m_ijk."""
    p = m.require(p)
    R = curvature_from(m.christoffel(kind, p), christoffel_derivative(m, kind, p, h))
    R4 = np.einsum("...lm,...mijk->...ijkl", m.metric(p), R)
    return R, R4


def curvature_operator(R, x, y, z):
    """R(x, y) z from the layout of :func:`curvature_at`."""
    return np.einsum("...lijk,...i,...j,...k->...l", R, x, y, z)


def bianchi_residual(R):
    """max |R(X,Y)Z + R(Y,Z)X + R(Z,X)Y| over coordinate triples."""
    cyc = R + np.einsum("...lijk->...ljki", R) + np.einsum("...lijk->...lkij", R)
    return float(np.max(np.abs(cyc)))


def check_curvature_duality(m, p, tol=1e-6, h=1e-4):
    """R(X,Y,Z,W) = -R*(X,Y,W,Z) componentwise."""
    _, R4 = curvature_at(m, PRIMAL, p, h)
    _, R4s = curvature_at(m, DUAL, p, h)
    res = np.abs(R4 + np.swapaxes(R4s, -1, -2))
    err = float(np.max(res))
    return CheckReport("curvature_duality", err, tol, 1,
                       [{"point": np.asarray(p).tolist(), "residual": err}])


def check_duality_relation(m, p, h=1e-5, tol=1e-7):
    """d_k g_ij = Gamma_ijk + Gamma*_ijk with Gamma_ijk = g_il Gamma^l_jk."""
    p = m.require(p, FiniteDifferenceStencilOutOfDomain)
    plus, minus = _stencil(m, p, h)
    dg = (m.metric(plus) - m.metric(minus)) / (2 * h)    # dg[k, i, j]
    lhs = np.moveaxis(dg, -3, -1)                        # [i, j, k]
    g = m.metric(p)
    G = np.einsum("il,ljk->ijk", g, m.primal_fn(p))
    Gs = np.einsum("il,ljk->ijk", g, m.dual_fn(p))
    # d_k g_ij = g(nabla_k d_i, d_j) + g(d_i, nabla*_k d_j) = Gamma_jki + Gamma*_ikj
    rhs = np.einsum("jki->ijk", G) + np.einsum("ikj->ijk", Gs)
    err = float(np.max(np.abs(lhs - rhs)))
    return CheckReport("duality_relation", err, tol, 1,
                       [{"point": p.tolist(), "residual": err}])
