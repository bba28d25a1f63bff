"""
Two correlated users, one receiver
==================================

Two single-antenna users observe strongly correlated Gaussian samples and
send them uncoded to a two-antenna receiver. Full power is not always best:
when the correlation is high, the weaker-channel user's signal mostly
repeats what the other user already delivers, and backing off one user
lowers the sum-MSE.
"""

import numpy as np

from corrmac import two_user_optimal, two_user_sum_mse
from corrmac.two_user import two_user_region

h1 = np.array([1.0, 1.0])
h2 = np.array([1.0, 0.5])
T1, T2 = 700.0, 200.0

# %%
# The optimum switches from full power to a reduced first user as rho grows.
for rho in (0.5, 0.9, 0.95, 0.99):
    sol = two_user_optimal(h1, h2, T1, T2, rho)
    print(f"rho={rho:<5} region={two_user_region(T1, T2, h1, h2, rho)}  "
          f"P1={sol.P1:8.2f}  P2={sol.P2:6.1f}  xi={sol.xi:.5f}")

# %%
# At rho = 0.99, scan the first user's power with the second at full power
# and the optimal phase: the minimum sits well inside the budget.
rho = 0.99
sol = two_user_optimal(h1, h2, T1, T2, rho)
P1 = np.linspace(T1 / 14, T1, 14)
xi = two_user_sum_mse(P1, T2, sol.phi_d, h1, h2, rho)
for p, x in zip(P1, xi):
    bar = "#" * int(round(40 * (x - xi.min()) / (xi.max() - xi.min())))
    print(f"P1={p:6.1f}  xi={x:.5f}  {bar}")
print(f"closed-form optimum P1={sol.P1:.2f}, xi={sol.xi:.5f}")
