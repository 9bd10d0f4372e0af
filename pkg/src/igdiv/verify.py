"""Numerical checks of the identities relating divergences, transported
difference vectors and the dual geometry.

Every check takes a manifold handle and a :class:`SampleScheme`, draws its
samples deterministically from the scheme seed and returns a
:class:`~igdiv.report.CheckReport`.  Solver failures on individual samples
are recorded as failures with diagnostics instead of aborting the check.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import DEFAULT
from .divergence import (QUANTITIES, gauss_nodes, path_pi_integrals, pi_many,
                         pseudo_energy_integrand, _quadrature)
from .errors import (ConfigError, FiniteDifferenceStencilOutOfDomain, IGError,
                     LevelCurveTraceFailed, LevelSetNotFound, PointOutOfDomain)
from .geodesic import chart_cubic, exp_many, log_many, shoot
from .manifold import (DUAL, PRIMAL, check_curvature_duality, check_duality_relation,
                       curvature_at, small_inverse)
from .report import CheckReport, merge
from .transport import cap_area_check, dual_isometry_deviation, holonomy_curvature_check


# ---------------------------------------------------------------- sampling

@dataclass(frozen=True)
class SampleScheme:
    """Seeded sampler of base points and nearby pairs.

    ``pair_radius`` bounds the chart distance between the points of a pair;
    ``None`` uses the manifold's own default.  Each check draws from its own
    stream (``salt``) so adding samples to one check never shifts another.
    """

    seed: int = 0
    count: int = 20
    pair_radius: Optional[float] = None
    manifold: str = ""

    def rng(self, salt=0):
        return np.random.default_rng([int(self.seed), int(salt)])

    def radius(self, m):
        return m.pair_radius if self.pair_radius is None else float(self.pair_radius)

    def points(self, m, count=None, salt=0):
        count = self.count if count is None else count
        lo, hi = np.array(m.sample_box or m.domain, dtype=float).T
        return lo + (hi - lo) * self.rng(salt).random((count, m.dim))

    def pairs(self, m, count=None, salt=1):
        """Pairs (p, q) with chart separation in [0.2, 1] times the radius."""
        count = self.count if count is None else count
        rng = self.rng(salt)
        lo, hi = np.array(m.sample_box or m.domain, dtype=float).T
        rad = self.radius(m)
        P, Q = [], []
        for _ in range(1000 * max(count, 1)):
            if len(P) == count:
                break
            p = lo + (hi - lo) * rng.random(m.dim)
            u = rng.normal(size=m.dim)
            q = p + rad * rng.uniform(0.2, 1.0) * u / np.linalg.norm(u)
            if m.inside(q, 10 * m.boundary_margin):
                P.append(p)
                Q.append(q)
        return np.array(P).reshape(-1, m.dim), np.array(Q).reshape(-1, m.dim)

    def unit_vectors(self, m, X, salt=2):
        """One seeded g-unit tangent at each row of X."""
        U = self.rng(salt).normal(size=np.shape(X))
        return U / np.sqrt(m.inner(X, U, U))[:, None]


def _g_norm(m, x, v):
    return np.sqrt(np.maximum(m.inner(x, v, v), 0.0))


def _evaluate(m, name, P, Q, cfg):
    """Values of a named quantity with NaN in failed rows, plus per-row messages."""
    fn = QUANTITIES[name]
    try:
        val, err = fn(m, P, Q, cfg, False)
        return np.asarray(val, float), np.asarray(err, float), {}
    except IGError:
        pass
    val, err, notes = np.full(len(P), np.nan), np.full(len(P), np.nan), {}
    for i in range(len(P)):
        try:
            v, e = fn(m, P[i:i + 1], Q[i:i + 1], cfg, False)
            val[i], err[i] = v[0], e[0]
        except IGError as exc:
            notes[i] = f"{name}: {exc}"
    return val, err, notes


def _grad(m, name, P, Q, h, cfg):
    """Raised FD gradient in q; rows whose stencil leaves the domain are NaN."""
    n = m.dim
    E = h * np.eye(n)
    Qs = np.concatenate([Q[:, None, :] + E, Q[:, None, :] - E], axis=1)
    ok = np.all(m.inside(Qs), axis=-1)
    out = np.full(P.shape, np.nan)
    notes = {int(i): f"{name}: finite-difference stencil of width {h} leaves the domain"
             for i in np.flatnonzero(~ok)}
    rows = np.flatnonzero(ok)
    if rows.size:
        Pr = np.repeat(P[rows], 2 * n, axis=0)
        vals, _, bad = _evaluate(m, name, Pr, Qs[rows].reshape(-1, n), cfg)
        for i in bad:
            notes.setdefault(int(rows[i // (2 * n)]), bad[i])
        vals = vals.reshape(rows.size, 2, n)
        d = (vals[:, 0] - vals[:, 1]) / (2 * h)
        out[rows] = np.einsum("bij,bj->bi", small_inverse(m.metric(Q[rows])), d)
    return out, notes


def _report(name, errors, tol, scheme_count, details, notes=None, extra_failures=0):
    """Report from per-sample errors; non-finite errors count as failures."""
    errors = np.asarray(errors, dtype=float)
    finite = np.isfinite(errors)
    for i, msg in (notes or {}).items():
        if i < len(details):
            details[i]["failure"] = msg
    failures = int((~finite).sum()) + extra_failures
    max_err = float(np.max(errors[finite])) if finite.any() else float("nan")
    return CheckReport(name, max_err, tol, int(finite.sum()), details, failures,
                       required_samples=scheme_count)


def _ratio_report(name, parts, samples, required, details, failures=0):
    """Combine parts ``(label, errors, tol)`` into one report.

    ``tol`` may vary per sample.  The component with the largest
    error / tolerance ratio decides: its raw error and tolerance become the
    report's ``max_error`` and ``tolerance``, so a report passes iff every
    component is within its own tolerance.
    """
    labels = [lab for lab, _, _ in parts]
    E = np.stack([np.asarray(e, dtype=float) for _, e, _ in parts])
    T = np.stack([np.broadcast_to(np.asarray(t, dtype=float), E.shape[1:]) for _, _, t in parts])
    bad = ~np.all(np.isfinite(E), axis=0)
    if (~bad).any():
        Rg = np.where(bad[None], -np.inf, E / T)
        c, i = np.unravel_index(np.argmax(Rg), Rg.shape)
        max_err, tol, worst = float(E[c, i]), float(T[c, i]), labels[c]
    else:
        max_err, tol, worst = float("nan"), float(T.flat[0]) if T.size else 1.0, None
    details = list(details) + [{"worst_component": worst}]
    return CheckReport(name, max_err, tol, int(samples - bad.sum()), details,
                       failures + int(bad.sum()), required_samples=required)


# ---------------------------------------------------------------- gradient identity

def check_grad_pseudo_distance(m, scheme, h=None, tol=1e-4, cfg=DEFAULT):
    """FD gradient of r(p, .) at q against Pi + Pi*, relative g-norm error per pair."""
    h = cfg.fd_step if h is None else h
    P, Q = scheme.pairs(m, salt=11)
    Pi, Pis = pi_many(m, P, Q, cfg, strict=False)
    S = Pi + Pis
    G, notes = _grad(m, "r", P, Q, h, cfg)
    err = _g_norm(m, Q, G - S) / np.maximum(1.0, _g_norm(m, Q, S))
    details = [{"p": p, "q": q, "grad_r": g, "pi_sum": s, "error": e}
               for p, q, g, s, e in zip(P, Q, G, S, err)]
    return _report("grad_r", err, tol, scheme.count, details, notes)


# ---------------------------------------------------------------- level sets

def _ray_directions(m, scheme, count, salt):
    if m.dim == 2:
        a = 2 * np.pi * (np.arange(count) + scheme.rng(salt).random()) / count
        return np.stack([np.cos(a), np.sin(a)], -1)
    U = scheme.rng(salt).normal(size=(count, m.dim))
    return U / np.linalg.norm(U, axis=-1, keepdims=True)


def level_set_points(m, p, kappa, U, cfg=DEFAULT, tol=1e-12, max_iter=200):
    """Points q = p + s u with r(p, q) = kappa along each chart ray.

    The root is bracketed and then refined by bracketing regula falsi with
    the Illinois modification, which keeps the bisection guarantee while
    converging superlinearly; rows stop when the bracket is below ``tol`` or
    the residual is at rounding level.
    """
    p = np.asarray(p, dtype=float)
    B = len(U)
    P = np.repeat(p[None], B, axis=0)
    r_fn = QUANTITIES["r"]

    def r_at(rows, s):
        X = P[rows] + s[:, None] * U[rows]
        inside = m.inside(X)
        out = np.full(len(rows), np.nan)
        if inside.any():
            out[inside] = r_fn(m, P[rows][inside], X[inside], cfg, False)[0]
        return out - kappa

    gu = m.inner(P, U, U)
    hi = np.sqrt(kappa / gu)
    lo = np.zeros(B)
    f_lo = np.full(B, -float(kappa))
    f_hi = r_at(np.arange(B), hi)
    for _ in range(60):
        short = np.flatnonzero(f_hi < 0)
        if short.size == 0:
            break
        lo[short], f_lo[short] = hi[short], f_hi[short]
        hi[short] *= 1.5
        f_hi[short] = r_at(short, hi[short])
        if np.any(np.isnan(f_hi)):
            raise LevelSetNotFound(f"ray left the convex region before reaching r = {kappa}")
    else:
        raise LevelSetNotFound(f"could not bracket r = {kappa}")
    s = 0.5 * (lo + hi)
    side = np.zeros(B, dtype=int)
    active = np.ones(B, dtype=bool)
    for _ in range(max_iter):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            return P + s[:, None] * U
        x = (lo * f_hi - hi * f_lo)[rows] / (f_hi - f_lo)[rows]
        x = np.where((x > lo[rows]) & (x < hi[rows]), x, 0.5 * (lo + hi)[rows])
        f = r_at(rows, x)
        if np.any(np.isnan(f)):
            raise LevelSetNotFound("pseudo-squared-distance undefined inside the bracket")
        s[rows] = x
        up = f >= 0
        r_up, r_dn = rows[up], rows[~up]
        hi[r_up], f_hi[r_up] = x[up], f[up]
        lo[r_dn], f_lo[r_dn] = x[~up], f[~up]
        # Illinois: halve the stale end when the same side moves twice
        f_lo[r_up[side[r_up] == 1]] *= 0.5
        f_hi[r_dn[side[r_dn] == -1]] *= 0.5
        side[r_up], side[r_dn] = 1, -1
        done = (hi - lo)[rows] <= tol
        done |= np.abs(f) <= 4 * np.finfo(float).eps * kappa
        active[rows[done]] = False
    raise LevelSetNotFound("root refinement did not converge")


def default_kappa(m):
    return {"euclidean": 0.25, "sphere2": 0.09}.get(m.spec.get("type"), 0.04)


def _center(m):
    return np.array([0.5 * (lo + hi) for lo, hi in (m.sample_box or m.domain)])


def check_level_set_orthogonality(m, p=None, kappa=None, scheme=None, tol=1e-3, cfg=DEFAULT):
    """Pi + Pi* at points of {r(p, .) = kappa} is g-orthogonal to the level set.

    Tangents come from projecting the chart basis onto the kernel of the FD
    differential of r(p, .).
    """
    scheme = scheme or SampleScheme()
    if m.dim < 2:
        raise ConfigError("level-set tangency needs dimension >= 2")
    p = _center(m) if p is None else np.asarray(p, dtype=float)
    kappa = default_kappa(m) if kappa is None else kappa
    U = _ray_directions(m, scheme, scheme.count, salt=21)
    Q = level_set_points(m, p, kappa, U, cfg)
    P = np.repeat(p[None], len(Q), axis=0)
    Pi, Pis = pi_many(m, P, Q, cfg, strict=False)
    S = Pi + Pis
    G, notes = _grad(m, "r", P, Q, cfg.fd_step, cfg)
    dr = np.einsum("bij,bj->bi", m.metric(Q), G)         # differential (covector)
    errs, details = [], []
    for i in range(len(Q)):
        if not np.all(np.isfinite(dr[i])):
            errs.append(np.nan)
            details.append({"q": Q[i]})
            continue
        T = np.linalg.svd(dr[i][None])[2][1:]            # chart kernel of dr
        worst = 0.0
        for u in T:
            num = abs(m.inner(Q[i], S[i], u))
            den = _g_norm(m, Q[i], S[i]) * _g_norm(m, Q[i], u)
            worst = max(worst, num / den)
        errs.append(worst)
        details.append({"q": Q[i], "pi_sum": S[i], "residual": worst})
    return _report("level_sets", errs, tol, scheme.count, details, notes)


# ---------------------------------------------------------------- decompositions

def check_decompositions(m, scheme, tol=1e-3, cfg=DEFAULT, tol_identity=1e-7):
    """Decomposition identities of r and the splittings of Pi and Pi*.

    Identities r = D + phi* and r = D* + phi, and the integral of Pi + Pi*
    along a seeded non-geodesic path, must hold within
    ``tol_identity + 5 * est_error``.  The splittings Pi = grad D + X,
    Pi = grad phi + V and their mirrors are checked through the inner
    products that must vanish, normalised by |Pi|.  The report is on the
    scale error / tolerance.
    """
    P, Q = scheme.pairs(m, salt=31)
    B = len(P)
    notes = {}
    vals = {}
    for name in ("r", "D", "Dstar", "phi", "phistar"):
        v, e, bad = _evaluate(m, name, P, Q, cfg)
        vals[name] = (v, e)
        notes.update(bad)
    r = vals["r"][0]
    id1 = np.abs(r - vals["D"][0] - vals["phistar"][0])
    tid1 = tol_identity + 5 * (vals["D"][1] + vals["phistar"][1])
    id2 = np.abs(r - vals["Dstar"][0] - vals["phi"][0])
    tid2 = tol_identity + 5 * (vals["Dstar"][1] + vals["phi"][1])

    # path independence of the Pi + Pi* integral along a bent chart path
    rng = scheme.rng(32)
    path, tpath = np.full(B, np.nan), np.full(B, tol_identity)
    for i in range(B):
        d = np.linalg.norm(Q[i] - P[i])
        a, b = 0.3 * d * rng.normal(size=(2, m.dim))
        c = chart_cubic(m, P[i], Q[i], a, b, cfg.ode_steps)
        try:
            if not np.all(m.inside(c.xs)):
                raise PointOutOfDomain("bent path leaves the domain")
            I, Is = path_pi_integrals(m, P[i], c, cfg)
            path[i] = abs(I.value + Is.value - r[i])
            tpath[i] = tol_identity + 5 * (I.est_error + Is.est_error)
        except IGError as exc:
            notes[i] = f"path integral: {exc}"

    # splittings
    Pi, Pis = pi_many(m, P, Q, cfg, strict=False)
    V = log_many(m, PRIMAL, P, Q, cfg, strict=False).V
    Vs = log_many(m, DUAL, P, Q, cfg, strict=False).V
    _, sv, _ = exp_many(m, PRIMAL, P, V, cfg.ode_steps)     # sigma'(1)
    _, svs, _ = exp_many(m, DUAL, P, Vs, cfg.ode_steps)     # sigma*'(1)
    grads = {}
    for name in ("D", "Dstar", "phi", "phistar"):
        grads[name], bad = _grad(m, name, P, Q, cfg.fd_step, cfg)
        notes.update(bad)

    def ip(a, b):
        return m.inner(Q, a, b)

    nPi, nPis = _g_norm(m, Q, Pi), _g_norm(m, Q, Pis)
    X = Pi - grads["D"]
    Xs = Pis - grads["Dstar"]
    Vq = Pi - grads["phi"]
    Vqs = Pis - grads["phistar"]
    orth = {
        "X_sigma": np.abs(ip(X, sv)) / (nPi * _g_norm(m, Q, sv)),
        "gradD_X": np.abs(ip(grads["D"], X)) / nPi ** 2,
        "Xstar_sigmastar": np.abs(ip(Xs, svs)) / (nPis * _g_norm(m, Q, svs)),
        "gradDstar_Xstar": np.abs(ip(grads["Dstar"], Xs)) / nPis ** 2,
        "V_sigmastar": np.abs(ip(Vq, svs)) / (nPi * _g_norm(m, Q, svs)),
        "Vstar_sigma": np.abs(ip(Vqs, sv)) / (nPis * _g_norm(m, Q, sv)),
    }
    details = []
    for i in range(B):
        rec = {"p": P[i], "q": Q[i], "r": r[i],
               "identity_D_phistar": id1[i], "identity_Dstar_phi": id2[i],
               "path_integral": path[i], "tol_identity_D_phistar": tid1[i],
               "tol_identity_Dstar_phi": tid2[i], "tol_path_integral": tpath[i]}
        rec.update({k: v[i] for k, v in orth.items()})
        if i in notes:
            rec["failure"] = notes[i]
        details.append(rec)
    parts = ([("identity_D_phistar", id1, tid1), ("identity_Dstar_phi", id2, tid2),
              ("path_integral", path, tpath)] + [(k, v, tol) for k, v in orth.items()])
    return _ratio_report("decompositions", parts, B, scheme.count, details)


# ---------------------------------------------------------------- Eguchi relations

def _grid_offsets(n):
    return np.array(np.meshgrid(*[[-1, 0, 1]] * n, indexing="ij")).reshape(n, -1).T


def _hessian_from_grid(F, offsets, h):
    """Second derivatives from values on the 3^n grid {-1, 0, 1}^n * h."""
    n = offsets.shape[1]
    idx = {tuple(o): k for k, o in enumerate(offsets)}
    c = F[..., idx[(0,) * n]]
    H = np.zeros(F.shape[:-1] + (n, n))
    for i in range(n):
        e = [0] * n
        e[i] = 1
        fp, fm = F[..., idx[tuple(e)]], F[..., idx[tuple(-x for x in e)]]
        H[..., i, i] = (fp - 2 * c + fm) / h ** 2
        for j in range(i + 1, n):
            def at(a, b):
                o = [0] * n
                o[i], o[j] = a, b
                return F[..., idx[tuple(o)]]
            H[..., i, j] = H[..., j, i] = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h * h)
    return H


def eguchi_derivatives(m, name, p0, cfg=DEFAULT, h_metric=1e-4, h3=5e-3):
    """Metric d'_i d'_j F and third derivatives d_k d'_i d'_j F at the diagonal.

    Returns ``(g, T)`` with ``T[k, i, j]``.  The metric step stays well
    above the shooting floor (about 1e-14 in the endpoint), whose effect on
    second differences grows like 1 / h.  Third derivatives use central
    differences at steps h3 and h3/2 combined by Richardson extrapolation.
    """
    p0 = np.asarray(p0, dtype=float)
    n = m.dim
    off = _grid_offsets(n)
    rows_p, rows_q = [], []
    # metric block
    rows_p.append(np.repeat(p0[None], len(off), axis=0))
    rows_q.append(p0 + h_metric * off)
    # third-derivative blocks: p shifted along e_k, q on a grid around p0
    for s in (h3, 0.5 * h3):
        for k in range(n):
            for sign in (1, -1):
                pk = p0 + sign * s * np.eye(n)[k]
                rows_p.append(np.repeat(pk[None], len(off), axis=0))
                rows_q.append(p0 + s * off)
    Pr, Qr = np.concatenate(rows_p), np.concatenate(rows_q)
    if not (np.all(m.inside(Pr)) and np.all(m.inside(Qr))):
        raise FiniteDifferenceStencilOutOfDomain("Eguchi stencil leaves the domain")
    val, _, notes = _evaluate(m, name, Pr, Qr, cfg)
    if notes:
        raise IGError(next(iter(notes.values())))
    K = len(off)
    g = _hessian_from_grid(val[:K], off, h_metric)
    blocks = val[K:].reshape(2, n, 2, K)
    T = []
    for b, s in zip(blocks, (h3, 0.5 * h3)):
        H = _hessian_from_grid(b, off, s)              # [k, sign, i, j]
        T.append((H[:, 0] - H[:, 1]) / (2 * s))
    return g, (4 * T[1] - T[0]) / 3


def lowered_symbols(m, kind, p):
    """Gamma_ijk = g(nabla_{d_i} d_j, d_k) = Gamma^l_ij g_lk."""
    return np.einsum("lij,lk->ijk", m.christoffel(kind, p), m.metric(p))


def taylor_slope(m, name, p0, u, cfg=DEFAULT, eps=None):
    """Log-log slope of |F(p, p + e u) - quadratic - cubic| over e, with
    cubic coefficient Lambda = 2 Gamma* + Gamma.  Returns (slope, remainders)."""
    eps = np.logspace(-2, -1, 6) if eps is None else eps
    p0 = np.asarray(p0, dtype=float)
    g = m.metric(p0)
    Lam = 2 * lowered_symbols(m, DUAL, p0) + lowered_symbols(m, PRIMAL, p0)
    Z = eps[:, None] * u[None]
    val, _, notes = _evaluate(m, name, np.repeat(p0[None], len(eps), axis=0), p0 + Z, cfg)
    model = 0.5 * np.einsum("bi,ij,bj->b", Z, g, Z) + np.einsum("ijk,bi,bj,bk->b", Lam, Z, Z, Z) / 6
    rem = np.abs(val - model)
    scale = np.abs(val).max()
    if np.all(rem <= 1e-13 * max(1.0, scale)):
        return 4.0, rem                                   # remainder vanishes identically
    good = rem > 0
    slope = float(np.polyfit(np.log(eps[good]), np.log(rem[good]), 1)[0])
    return slope, rem


def check_eguchi_consistency(m, scheme, tol_g=1e-4, tol_gamma=1e-3, tol_slope=0.3, cfg=DEFAULT):
    """Metric and connection symbols recovered from derivatives of the divergences.

    D and phi give g from second q-derivatives and -Gamma* from
    d_k d'_i d'_j at the diagonal; D* and phi* give -Gamma.  The quartic
    Taylor remainder of D and phi must have slope 4 +- tol_slope.
    """
    pts = scheme.points(m, salt=41)
    dirs = scheme.unit_vectors(m, pts, salt=42)
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    g_err, c_err, s_err, details = [], [], [], []
    for p, u in zip(pts, dirs):
        rec = {"p": p}
        try:
            g = m.metric(p)
            targets = {PRIMAL: -lowered_symbols(m, DUAL, p), DUAL: -lowered_symbols(m, PRIMAL, p)}
            ge, ce, se = 0.0, 0.0, 0.0
            for name, side in (("D", PRIMAL), ("phi", PRIMAL), ("Dstar", DUAL), ("phistar", DUAL)):
                gF, T = eguchi_derivatives(m, name, p, cfg)
                # T[k, i, j] = d_k d'_i d'_j F  against  -Gamma_{ijk}
                target = np.einsum("ijk->kij", targets[side])
                ge = max(ge, float(np.max(np.abs(gF - g))))
                ce = max(ce, float(np.max(np.abs(T - target))))
                rec[f"{name}_metric_error"] = float(np.max(np.abs(gF - g)))
                rec[f"{name}_symbol_error"] = float(np.max(np.abs(T - target)))
            for name in ("D", "phi"):
                slope, _ = taylor_slope(m, name, p, u, cfg)
                se = max(se, abs(slope - 4.0))
                rec[f"{name}_taylor_slope"] = slope
            g_err.append(ge)
            c_err.append(ce)
            s_err.append(se)
        except IGError as exc:
            rec["failure"] = str(exc)
            g_err.append(np.nan)
            c_err.append(np.nan)
            s_err.append(np.nan)
        details.append(rec)
    parts = [("metric", g_err, tol_g), ("symbols", c_err, tol_gamma),
             ("taylor_slope", s_err, tol_slope)]
    return _ratio_report("eguchi", parts, len(pts), scheme.count, details)


# ---------------------------------------------------------------- special cases

def check_special_cases(m, scheme, tol=1e-6, cfg=DEFAULT):
    """Closed-form coincidences expected from the class of the manifold.

    Self-dual: every divergence equals d^2 / 2, r and the standard divergence
    equal d^2, and r = D + D*.  Dually flat: D equals the Bregman and Ay-Amari
    divergences and D*(p, q) = D(q, p).  Symmetric: D equals the Ay-Amari
    divergence and W*(q || p).
    """
    P, Q = scheme.pairs(m, salt=51)
    notes = {}

    def get(name, A=P, B=Q):
        v, _, bad = _evaluate(m, name, A, B, cfg)
        notes.update(bad)
        return v

    D = get("D")
    res = {}
    if m.category == "self_dual":
        d2 = get("distance") ** 2
        for name in ("Dstar", "phi", "phistar", "ayamari", "henmiW", "henmiWstar"):
            res[name] = np.abs(get(name) - 0.5 * d2)
        res["D"] = np.abs(D - 0.5 * d2)
        res["standard"] = np.abs(get("standard") - d2)
        r = get("r")
        res["r"] = np.abs(r - d2)
        res["r_D_Dstar"] = np.abs(r - D - get("Dstar"))
    if m.category == "dually_flat":
        res["bregman"] = np.abs(D - get("bregman"))
        res["ayamari"] = np.abs(D - get("ayamari"))
        res["Dstar_swap"] = np.abs(get("Dstar") - get("D", Q, P))
    if m.symmetric:
        res.setdefault("ayamari", np.abs(D - get("ayamari")))
        res["henmiWstar_swap"] = np.abs(D - get("henmiWstar", Q, P))
    if not res:
        raise ConfigError(f"{m.name} has no special-case identities (category {m.category})")
    err = np.max(np.stack(list(res.values())), axis=0)
    details = [{"p": P[i], "q": Q[i], "D": D[i], **{k: v[i] for k, v in res.items()}}
               for i in range(len(P))]
    return _report("special_cases", err, tol, scheme.count, details, notes)


# ---------------------------------------------------------------- pseudo-energy

def check_energy_invariants(m, scheme, tol=1e-8, tol_energy=1e-7, cfg=DEFAULT):
    """Constancy of the pseudo-energy integrand along geodesics and dual isometry.

    Along the nabla*-geodesic from p to q the integrand of L is constant
    and L equals r(p, q); the mirror statement holds for L* along the
    nabla-geodesic.  Along seeded bent paths the pairing of nabla- and
    nabla*-transported vectors is preserved (deviation per unit length).
    """
    P, Q = scheme.pairs(m, salt=61)
    rng = scheme.rng(62)
    t, W = gauss_nodes(cfg.quad_order)
    node_dev, energy_dev, iso_dev, details = [], [], [], []
    for p, q in zip(P, Q):
        rec = {"p": p, "q": q}
        try:
            r = QUANTITIES["r"](m, p[None], q[None], cfg)[0][0]
            worst_node, worst_energy = 0.0, 0.0
            for orient, kind in (("primal", DUAL), ("dual", PRIMAL)):
                v = log_many(m, kind, p[None], q[None], cfg).V[0]
                c = shoot(m, kind, p, v, cfg.ode_steps, check=False)
                _, F, _ = pseudo_energy_integrand(m, c, orient, q, cfg)
                L, _ = _quadrature(F[None], W)
                worst_node = max(worst_node, float(np.ptp(F)))
                worst_energy = max(worst_energy, abs(float(L[0]) - r))
                rec[f"L_{orient}"] = float(L[0])
            rec["r"] = r
            a, b = 0.3 * np.linalg.norm(q - p) * rng.normal(size=(2, m.dim))
            c = chart_cubic(m, p, q, a, b, cfg.ode_steps)
            if not np.all(m.inside(c.xs)):
                raise PointOutOfDomain("bent path leaves the domain")
            v, w = scheme.unit_vectors(m, np.stack([p, p]), salt=int(rng.integers(1 << 30)))
            iso = dual_isometry_deviation(m, c, v, w) / max(c.length(), 1e-12)
            rec.update(node_spread=worst_node, energy_error=worst_energy, isometry=iso)
        except IGError as exc:
            rec["failure"] = str(exc)
            worst_node = worst_energy = iso = np.nan
        node_dev.append(worst_node)
        energy_dev.append(worst_energy)
        iso_dev.append(iso)
        details.append(rec)
    parts = [("node_spread", node_dev, tol), ("energy", energy_dev, tol_energy),
             ("isometry", iso_dev, tol)]
    return _ratio_report("energy", parts, len(P), scheme.count, details)


# ---------------------------------------------------------------- symmetry relations

def trace_level_curve(f, starts, level=None, step=0.02, points=32, h=1e-5, tol=1e-10,
                      max_corr=20):
    """Predictor-corrector trace of a level set {q : f(q) = c} in a 2-d chart.

    ``f`` maps points (B, 2) to values (B,).  Several arcs are traced at
    once, one from each row of ``starts``, so every evaluation is batched.
    Each step predicts along the chart tangent of the level set and then
    applies chord corrections along the gradient, taken once per point from
    a batched 5-point stencil, until |f - c| <= tol |c|.  Returns ``(points, c)``.
    """
    X = np.atleast_2d(np.asarray(starts, dtype=float)).copy()
    A = len(X)
    per_arc = -(-points // A)
    E = h * np.eye(2)
    offs = np.concatenate([np.zeros((1, 2)), E, -E])

    def stencil(Y):
        v = f((Y[:, None, :] + offs[None]).reshape(-1, 2)).reshape(len(Y), 5)
        if not np.all(np.isfinite(v)):
            raise LevelCurveTraceFailed(f"divergence undefined near {Y.tolist()}")
        return v[:, 0], (v[:, 1:3] - v[:, 3:5]) / (2 * h)

    c = float(f(X[:1])[0]) if level is None else float(level)
    if not np.isfinite(c):
        raise LevelCurveTraceFailed("level value undefined at the start point")

    def correct(Y):
        # chord iteration: one full stencil, then centre values only
        v, G = stencil(Y)
        act = np.arange(len(Y))
        for it in range(max_corr):
            if it:
                v = f(Y[act])
                if not np.all(np.isfinite(v)):
                    raise LevelCurveTraceFailed(f"divergence undefined near {Y[act].tolist()}")
            g = G[act]
            res = v - c
            conv = np.abs(res) <= tol * abs(c)
            act, res, g = act[~conv], res[~conv], g[~conv]
            if act.size == 0:
                return Y, G
            Y[act] -= (res / np.einsum("bi,bi->b", g, g))[:, None] * g
        raise LevelCurveTraceFailed(f"corrector did not converge near {Y[act].tolist()}")

    def tangent(G, prev=None):
        T = np.stack([-G[:, 1], G[:, 0]], -1)
        T /= np.linalg.norm(T, axis=-1, keepdims=True)
        if prev is not None:
            T *= np.where(np.einsum("bi,bi->b", T, prev) >= 0, 1.0, -1.0)[:, None]
        return T

    X, G = correct(X)
    tau = tangent(G)
    out = [X.copy()]
    for _ in range(per_arc - 1):
        X, G = correct(X + step * tau)
        tau = tangent(G, tau)
        out.append(X.copy())
    return np.stack(out, 1).reshape(-1, 2)[:points], c


def check_symmetry_relations(m, scheme, tol=1e-3, cfg=DEFAULT, p=None, rho=0.1, step=0.02,
                             arcs=4, inner_points=8):
    """D(q, p) and phi(q, p) are constant on level curves of D*(p, .).

    The level through p + rho u0 is traced with ``scheme.count`` points in
    ``arcs`` arcs started at evenly spread chart directions.  Constancy is
    the spread (max - min) / |mean| of the values along the trace.  A second,
    inner level through chart radius 0.6 rho must give a smaller D*, and a
    smaller mean D(., p) and phi(., p) (local monotonicity).
    """
    if m.dim != 2:
        raise ConfigError("level-curve tracing needs a two-dimensional chart")
    p = _center(m) if p is None else np.asarray(p, dtype=float)
    U = _ray_directions(m, scheme, arcs, salt=71)

    def dstar(X):
        X = np.atleast_2d(X)
        out = np.full(len(X), np.nan)
        ok = m.inside(X)
        if ok.any():
            out[ok] = QUANTITIES["Dstar"](m, np.repeat(p[None], ok.sum(), axis=0), X[ok], cfg, False)[0]
        return out

    levels, details, errs = [], [], []
    failures = 0
    for scale, count in ((1.0, scheme.count), (0.6, inner_points)):
        rec = {"rho": rho * scale}
        try:
            c = float(dstar(p + rho * scale * U[:1])[0])
            pts, c = trace_level_curve(dstar, p + rho * scale * U, c, step * scale, count,
                                       h=cfg.fd_step)
            Pp = np.repeat(p[None], len(pts), axis=0)
            Dqp, _, n1 = _evaluate(m, "D", pts, Pp, cfg)
            Fqp, _, n2 = _evaluate(m, "phi", pts, Pp, cfg)
            if n1 or n2:
                raise LevelCurveTraceFailed(next(iter({**n1, **n2}.values())))
            spread_D = float(np.ptp(Dqp) / abs(np.mean(Dqp)))
            spread_phi = float(np.ptp(Fqp) / abs(np.mean(Fqp)))
            rec.update(level=c, points=pts, D_qp=Dqp, phi_qp=Fqp,
                       spread_D=spread_D, spread_phi=spread_phi)
            levels.append((c, float(np.mean(Dqp)), float(np.mean(Fqp))))
            errs.append(max(spread_D, spread_phi))
        except IGError as exc:
            rec["failure"] = str(exc)
            failures += 1
            errs.append(np.nan)
        details.append(rec)
    if len(levels) == 2:
        (c1, d1, f1), (c2, d2, f2) = levels
        mono = c1 > c2 and d1 > d2 and f1 > f2
        details.append({"monotone": mono, "levels": [c1, c2], "mean_D": [d1, d2],
                        "mean_phi": [f1, f2]})
        failures += int(not mono)
    finite = [e for e in errs if np.isfinite(e)]
    max_err = max(finite) if finite else float("nan")
    samples = scheme.count if np.isfinite(errs[0]) else 0
    return CheckReport("symmetry", max_err, tol, samples, details, failures,
                       required_samples=scheme.count)


# ---------------------------------------------------------------- condition (S)

def covariant_curvature_derivative(m, kind, p, step=1e-3, h=None):
    """(nabla_a R)^l_ijk at p from central differences of the curvature, [a, l, i, j, k]."""
    h = DEFAULT.curvature_step if h is None else h
    p = np.asarray(p, dtype=float)
    n = m.dim
    E = step * np.eye(n)
    if not (np.all(m.inside(p + E)) and np.all(m.inside(p - E))):
        raise FiniteDifferenceStencilOutOfDomain("curvature stencil leaves the domain")
    dR = np.stack([(curvature_at(m, kind, p + E[a], h)[0] - curvature_at(m, kind, p - E[a], h)[0])
                   / (2 * step) for a in range(n)])
    R, _ = curvature_at(m, kind, p, h)
    G = m.christoffel(kind, p)                 # G[m, a, i] = Gamma^m_ai
    return (dR
            + np.einsum("lam,mijk->alijk", G, R)
            - np.einsum("mai,lmjk->alijk", G, R)
            - np.einsum("maj,limk->alijk", G, R)
            - np.einsum("mak,lijm->alijk", G, R))


def check_condition_S(m, scheme, tol=1e-4, tol_rxyyy=1e-6, cfg=DEFAULT, step=1e-3):
    """Empirical test of R(X,Y,Y,Y) = 0 and nabla R = 0, for nabla and nabla*.

    The report passes iff both (S) and (S)* hold at every sampled point.
    Details also carry the smallest R(X,Y,Y,Y) seen (sign condition).
    """
    pts = scheme.points(m, salt=81)
    X = scheme.unit_vectors(m, pts, salt=82)
    Y = scheme.unit_vectors(m, pts, salt=83)
    Z = scheme.unit_vectors(m, pts, salt=84)
    rx, dr, details = [], [], []
    for i, p in enumerate(pts):
        rec = {"p": p}
        try:
            vals = {}
            for kind, tag in ((PRIMAL, "S"), (DUAL, "S*")):
                _, R4 = curvature_at(m, kind, p, cfg.curvature_step)
                ryyy = float(np.einsum("ijkl,i,j,k,l->", R4, X[i], Y[i], Y[i], Y[i]))
                nR = np.einsum("alijk,a->lijk", covariant_curvature_derivative(
                    m, kind, p, step, cfg.curvature_step), Z[i])
                vals[tag] = (ryyy, float(np.max(np.abs(nR))))
                rec[f"R_XYYY[{tag}]"], rec[f"nablaR[{tag}]"] = vals[tag]
            rx.append(max(abs(v[0]) for v in vals.values()))
            dr.append(max(v[1] for v in vals.values()))
            rec["sign_condition"] = min(v[0] for v in vals.values()) >= -tol_rxyyy
        except IGError as exc:
            rec["failure"] = str(exc)
            rx.append(np.nan)
            dr.append(np.nan)
        details.append(rec)
    rep = _ratio_report("condition_S", [("R_XYYY", rx, tol_rxyyy), ("nablaR", dr, tol)], len(pts), scheme.count, details)
    rep.details.append({"holds_S_and_Sstar": rep.passed,
                        "max_R_XYYY": float(np.nanmax(rx)) if np.isfinite(rx).any() else None,
                        "max_nablaR": float(np.nanmax(dr)) if np.isfinite(dr).any() else None})
    return rep


# ---------------------------------------------------------------- transport suites

def check_holonomy(m, scheme, cfg=DEFAULT, scale=0.05, tol=0.1):
    """Small parallelogram defects against scale^2 R(x, y) z at seeded points;
    on the sphere also the latitude-cap holonomy angle."""
    if m.dim < 2:
        raise ConfigError("holonomy needs dimension >= 2")
    pts = scheme.points(m, salt=91)
    X = scheme.unit_vectors(m, pts, salt=92)
    Y = scheme.unit_vectors(m, pts, salt=93)
    Z = scheme.unit_vectors(m, pts, salt=94)
    reports = []
    for p, x, y, z in zip(pts, X, Y, Z):
        y = y - m.inner(p, x, y) * x                     # g-orthonormal pair
        y = y / _g_norm(m, p, y)
        try:
            reports.append(holonomy_curvature_check(m, p, x, y, z, scale, PRIMAL, tol, cfg))
        except IGError as exc:
            reports.append(CheckReport("holonomy_curvature", float("nan"), tol, 0,
                                       [{"p": p, "failure": str(exc)}], 1))
    if m.spec.get("type") == "sphere2":
        reports.append(cap_area_check(m))
    rep = merge("holonomy", reports)
    rep.samples = sum(r.samples > 0 for r in reports)
    rep.required_samples = len(reports)
    return rep


def check_structure(m, scheme, cfg=DEFAULT, tol=1e-7, tol_curv=1e-6):
    """Duality relation of (g, nabla, nabla*) and R = -R* (last pair swapped)."""
    pts = scheme.points(m, salt=101)
    reports = []
    for p in pts:
        try:
            reports.append(check_duality_relation(m, p, cfg.fd_step, tol))
            reports.append(check_curvature_duality(m, p, tol_curv, cfg.curvature_step))
        except IGError as exc:
            reports.append(CheckReport("structure", float("nan"), tol, 0,
                                       [{"p": p, "failure": str(exc)}], 1))
    rep = merge("structure", reports)
    rep.samples = len(pts) - sum(r.failures > 0 for r in reports)
    rep.required_samples = scheme.count
    return rep


def check_round_trip(m, scheme, cfg=DEFAULT, tol=1e-8):
    """log_p(exp_p(v)) recovers v for both connections (relative g-norm error)."""
    P, Q = scheme.pairs(m, salt=111)
    V0 = m.wrap_delta(Q - P)
    errs = np.zeros(len(P))
    details = [{"p": p, "v": v} for p, v in zip(P, V0)]
    for kind in (PRIMAL, DUAL):
        X, _, exit_t = exp_many(m, kind, P, V0, cfg.ode_steps)
        ok = np.isnan(exit_t)
        res = log_many(m, kind, P[ok], X[ok], cfg, strict=False)
        e = np.full(len(P), np.nan)
        e[ok] = _g_norm(m, P[ok], res.V - V0[ok]) / _g_norm(m, P[ok], V0[ok])
        e[np.flatnonzero(ok)[~res.ok]] = np.nan
        errs = np.fmax(errs, e) if kind is DUAL else e
        for i in range(len(P)):
            details[i][f"error[{kind.name}]"] = e[i]
    errs[~np.isfinite(errs)] = np.nan
    return _report("round_trip", errs, tol, scheme.count, details)


# ---------------------------------------------------------------- convex radius probe

def probe_convex_radius(m, p=None, radii=None, directions=16, cfg=DEFAULT):
    """Largest probed chart radius around p where both logs converge uniquely.

    For each radius, points on a chart sphere around p are joined to p by
    nabla- and nabla*-geodesics solved from two different initial guesses;
    a radius passes when every solve converges, stays in the domain and
    both guesses agree.
    """
    p = _center(m) if p is None else np.asarray(p, dtype=float)
    radii = np.geomspace(0.05, 3.2, 13) if radii is None else radii
    U = _ray_directions(m, SampleScheme(cfg.seed), directions, salt=121)
    best = 0.0
    for rad in radii:
        Q = p + rad * U
        if not np.all(m.inside(Q)):
            break
        P = np.repeat(p[None], len(Q), axis=0)
        ok = True
        for kind in (PRIMAL, DUAL):
            a = log_many(m, kind, P, Q, cfg, strict=False)
            b = log_many(m, kind, P, Q, cfg, guess=1.5 * (Q - P), strict=False, continuation=False)
            same = np.linalg.norm(a.V - b.V, axis=-1) <= 1e-6 * rad
            if not (a.ok.all() and b.ok.all() and same.all()):
                ok = False
                break
        if not ok:
            break
        best = float(rad)
    return best


# ---------------------------------------------------------------- suite registry

def _two_d(m):
    return m.dim == 2


def _has_special(m):
    return m.category in ("self_dual", "dually_flat") or m.symmetric


def _expects_S(m):
    return m.symmetric or m.category == "dually_flat"


@dataclass(frozen=True)
class Check:
    run: object
    count: int
    applies: object = None
    description: str = ""


SUITE = {
    "grad_r": Check(lambda m, s, c: check_grad_pseudo_distance(m, s, cfg=c), 50,
                    None, "grad of r against Pi + Pi*"),
    "level_sets": Check(lambda m, s, c: check_level_set_orthogonality(m, scheme=s, cfg=c), 16,
                        lambda m: m.dim >= 2, "Pi + Pi* normal to level sets of r"),
    "decompositions": Check(lambda m, s, c: check_decompositions(m, s, cfg=c), 20,
                            None, "r = D + phi*, splittings of Pi and Pi*"),
    "eguchi": Check(lambda m, s, c: check_eguchi_consistency(m, s, cfg=c), 3,
                    None, "g, Gamma, Gamma* from divergence derivatives"),
    "special_cases": Check(lambda m, s, c: check_special_cases(m, s, cfg=c), 50,
                           _has_special, "closed forms on special classes"),
    "energy": Check(lambda m, s, c: check_energy_invariants(m, s, cfg=c), 20,
                    None, "pseudo-energy constancy and dual isometry"),
    "symmetry": Check(lambda m, s, c: check_symmetry_relations(m, s, cfg=c), 32,
                      _two_d, "D(q,p), phi(q,p) constant on levels of D*(p,.)"),
    "condition_S": Check(lambda m, s, c: check_condition_S(m, s, cfg=c), 10,
                         _expects_S, "R(X,Y,Y,Y) = 0 and nabla R = 0"),
    "holonomy": Check(lambda m, s, c: check_holonomy(m, s, cfg=c), 4,
                      lambda m: m.dim >= 2, "loop defects against curvature"),
    "structure": Check(lambda m, s, c: check_structure(m, s, cfg=c), 20,
                       None, "duality relation and R = -R*"),
    "round_trip": Check(lambda m, s, c: check_round_trip(m, s, cfg=c), 50,
                        None, "log(exp(v)) = v"),
}


def resolve_suite(m, names):
    """Check names for ``names`` (a list or 'all'); 'all' skips inapplicable checks."""
    if names in ("all", ["all"], ("all",)):
        return [k for k, c in SUITE.items() if c.applies is None or c.applies(m)]
    unknown = [n for n in names if n not in SUITE]
    if unknown:
        raise ConfigError(f"unknown checks {unknown}; choose from {sorted(SUITE)}")
    return list(names)


def run_check(m, name, seed=0, cfg=DEFAULT, count=None):
    """Run one registered check with its default sample count."""
    chk = SUITE[name]
    scheme = SampleScheme(seed, chk.count if count is None else count, None, m.name)
    return chk.run(m, scheme, cfg)


def run_suite(m, names="all", seed=0, cfg=DEFAULT):
    return [run_check(m, n, seed, cfg) for n in resolve_suite(m, names)]
