"""Run the quick checks on every manifold of the zoo and print one line each.

Run: python3 demos/verify_zoo.py [check,check,...]
The default set finishes in a few minutes; pass "all" for everything.
"""

import sys

from igdiv import from_spec, run_suite

ZOO = ["euclidean:2", "sphere2", "hessian:bernoulli", "hessian:gaussian_natural", "alpha_gaussian:0.5"]
names = sys.argv[1] if len(sys.argv) > 1 else "grad_r,round_trip,structure"

for spec in ZOO:
    m = from_spec(spec)
    wanted = "all" if names == "all" else names.split(",")
    for rep in run_suite(m, wanted):
        print(f"{spec:26s} {rep.summary()}")
