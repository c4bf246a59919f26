"""Size of the exact unconditional test across the nuisance parameter.

The p-value takes a supremum over the common response probability, so the
rejection probability can never exceed the nominal level no matter what the
true rate is. This script traces that rejection probability over theta for
two small lattices and reports the worst case on a dense grid.
"""

import numpy as np

from rdtrial.exact import exact_rejection_prob, ss_test

alpha = 0.05

for n1, n0 in ((10, 10), (15, 15)):
    print(f"arms of {n1} and {n0}, alpha = {alpha}")
    print(f"{'theta':>6s} {'exact size':>11s}")
    for theta in (0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9):
        size = exact_rejection_prob(n1, n0, theta, alpha)
        print(f"{theta:6.2f} {size:11.4f}")
    dense = max(exact_rejection_prob(n1, n0, t, alpha)
                for t in np.linspace(0.01, 0.99, 197))
    print(f"worst case over a dense grid: {dense:.4f} (never above {alpha})")
    print()

res = ss_test(7, 10, 2, 10)
print(f"example table 7/10 vs 2/10: p = {res.p_value:.4f} "
      f"(sup attained at theta = {res.theta_argsup:.3f})")
res1 = ss_test(7, 10, 2, 10, ordering="delta")
print(f"one-sided raw-difference ordering: p = {res1.p_value:.4f}")
