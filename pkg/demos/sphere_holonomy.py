"""Holonomy on the unit sphere: small geodesic parallelograms against the
curvature term, and the rotation after one trip around a latitude circle.

Run: python3 demos/sphere_holonomy.py
"""

import numpy as np

from igdiv import holonomy_curvature_check, sphere2
from igdiv.transport import latitude_holonomy_angle

m = sphere2()
p = np.array([np.pi / 3, 0.0])
g = m.metric(p)
x = np.array([1.0, 0.0]) / np.sqrt(g[0, 0])
y = np.array([0.0, 1.0]) / np.sqrt(g[1, 1])

for scale in (0.2, 0.1, 0.05):
    rep = holonomy_curvature_check(m, p, x, y, x, scale=scale)
    first = rep.details[0]
    print(f"scale {scale:5.3f}: defect {first['defect']}, predicted {first['predicted']}, "
          f"relative mismatch {first['relative_mismatch']:.2e}")

print("\ncolatitude   holonomy angle   cap area mod 2 pi")
for theta0 in (np.pi / 6, np.pi / 4, np.pi / 3, np.pi / 2):
    area = 2 * np.pi * (1 - np.cos(theta0))
    wrapped = (area + np.pi) % (2 * np.pi) - np.pi
    print(f"{theta0:10.4f}   {latitude_holonomy_angle(m, theta0):14.8f}   {wrapped:14.8f}")
