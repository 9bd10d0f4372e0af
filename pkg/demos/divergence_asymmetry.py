"""Canonical divergence and its dual on the Gaussian family with the
alpha = 0.5 connection, against the Kullback-Leibler divergence of the
dually flat natural-parameter chart.

Run: python3 demos/divergence_asymmetry.py
"""

import numpy as np

from igdiv import alpha_gaussian, evaluate_many, hessian

m = alpha_gaussian(0.5)
p = np.array([0.0, 1.0])
Q = p + 0.15 * np.array([[np.cos(a), np.sin(a)] for a in np.linspace(0, 2 * np.pi, 8, endpoint=False)])
P = np.repeat(p[None], len(Q), axis=0)

print("alpha_gaussian:0.5, p = (mu, sigma) =", p)
print(f"{'q':>22} {'D(p,q)':>12} {'D(q,p)':>12} {'D*(p,q)':>12} {'r(p,q)':>12}")
D = evaluate_many(m, "D", P, Q)[0]
Dqp = evaluate_many(m, "D", Q, P)[0]
Ds = evaluate_many(m, "Dstar", P, Q)[0]
r = evaluate_many(m, "r", P, Q)[0]
for q, a, b, c, d in zip(Q, D, Dqp, Ds, r):
    print(f"{np.array2string(q, precision=4):>22} {a:12.8f} {b:12.8f} {c:12.8f} {d:12.8f}")

# on the dually flat chart D is a KL divergence
g = hessian("gaussian_natural")
pn, qn = np.array([[0.0, -0.5]]), np.array([[0.2, -0.6]])
print("\ngaussian natural chart: D =", evaluate_many(g, "D", pn, qn)[0][0],
      " bregman =", evaluate_many(g, "bregman", pn, qn)[0][0])
