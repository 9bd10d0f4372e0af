"""Independent reference values: closed forms and symbolic derivations."""

import functools

import numpy as np
import sympy as sp


def bernoulli_kl(theta_a, theta_b):
    """KL(Ber(a) || Ber(b)) for natural parameters theta_a, theta_b."""
    a = 1.0 / (1.0 + np.exp(-np.asarray(theta_a, dtype=float)))
    b = 1.0 / (1.0 + np.exp(-np.asarray(theta_b, dtype=float)))
    return a * np.log(a / b) + (1 - a) * np.log((1 - a) / (1 - b))


def bernoulli_fisher_distance(theta_a, theta_b):
    a = 1.0 / (1.0 + np.exp(-np.asarray(theta_a, dtype=float)))
    b = 1.0 / (1.0 + np.exp(-np.asarray(theta_b, dtype=float)))
    return 2 * np.abs(np.arcsin(np.sqrt(a)) - np.arcsin(np.sqrt(b)))


def gaussian_from_natural(theta):
    theta = np.asarray(theta, dtype=float)
    var = -1.0 / (2 * theta[..., 1])
    return theta[..., 0] * var, var


def gaussian_kl(theta_a, theta_b):
    """KL(N_a || N_b) with both laws given in natural parameters."""
    mu_a, va = gaussian_from_natural(theta_a)
    mu_b, vb = gaussian_from_natural(theta_b)
    return 0.5 * (np.log(vb / va) + (va + (mu_a - mu_b) ** 2) / vb - 1)


def great_circle(p, q):
    """Arc length between points given by (colatitude, azimuth)."""
    def unit(x):
        x = np.asarray(x, dtype=float)
        th, ph = x[..., 0], x[..., 1]
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1)
    a, b = unit(p), unit(q)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.arctan2(cross, np.sum(a * b, axis=-1))


@functools.lru_cache(maxsize=None)
def _gaussian_alpha_symbols():
    """Fisher metric, cubic tensor and alpha-connection of N(mu, sigma^2),
    derived from the log-likelihood by Gaussian moment substitution."""
    mu, s, z, a = sp.symbols("mu sigma z alpha", real=True)
    s = sp.Symbol("sigma", positive=True)
    x = mu + s * z
    ell = -sp.log(s) - (x - mu) ** 2 / (2 * s ** 2)
    xs = sp.Symbol("x", real=True)
    ell_x = -sp.log(s) - (xs - mu) ** 2 / (2 * s ** 2)
    coords = (mu, s)
    score = [sp.diff(ell_x, c).subs(xs, x) for c in coords]
    hess = [[sp.diff(ell_x, c1, c2).subs(xs, x) for c2 in coords] for c1 in coords]

    def expect(expr):
        poly = sp.Poly(sp.expand(expr), z)
        total = 0
        for (k,), coeff in poly.terms():
            moment = 0 if k % 2 else sp.factorial2(k - 1) if k else 1
            total += coeff * moment
        return sp.simplify(total)

    n = 2
    g = sp.Matrix(n, n, lambda i, j: expect(score[i] * score[j]))
    T = [[[expect(score[i] * score[j] * score[k]) for k in range(n)] for j in range(n)] for i in range(n)]
    # Gamma^(alpha)_{ij,k} = E[(d_i d_j l + (1 - alpha)/2 d_i l d_j l) d_k l]
    low = [[[expect((hess[i][j] + (1 - a) / 2 * score[i] * score[j]) * score[k])
             for k in range(n)] for j in range(n)] for i in range(n)]
    ginv = g.inv()
    up = [[[sp.simplify(sum(ginv[k, l] * low[i][j][l] for l in range(n)))
            for j in range(n)] for i in range(n)] for k in range(n)]
    return (mu, s, a), g, T, up


def alpha_gaussian_symbols(point, alpha):
    """Gamma^k_ij of the alpha-connection at (mu, sigma), layout [k, i, j]."""
    (mu, s, a), _, _, up = _gaussian_alpha_symbols()
    f = sp.lambdify((mu, s, a), sp.Array(up), "numpy")
    return np.array(f(point[0], point[1], alpha), dtype=float)


def alpha_gaussian_metric(point):
    (mu, s, a), g, _, _ = _gaussian_alpha_symbols()
    return np.array(sp.lambdify((mu, s), g, "numpy")(point[0], point[1]), dtype=float)


@functools.lru_cache(maxsize=None)
def _alpha_curvature():
    (mu, s, a), g, _, up = _gaussian_alpha_symbols()
    coords = (mu, s)
    n = 2
    R = [[[[sp.simplify(sp.diff(up[l][j][k], coords[i]) - sp.diff(up[l][i][k], coords[j])
                        + sum(up[l][i][m] * up[m][j][k] - up[l][j][m] * up[m][i][k] for m in range(n)))
            for k in range(n)] for j in range(n)] for i in range(n)] for l in range(n)]
    return sp.lambdify((mu, s, a), sp.Array(R), "numpy")


def alpha_gaussian_curvature(point, alpha):
    """R^l_ijk with R(d_i, d_j) d_k = R^l_ijk d_l, layout [l, i, j, k]."""
    return np.array(_alpha_curvature()(point[0], point[1], alpha), dtype=float)
