"""Exponential values: quantiles, the truncation plan and a posted price."""
import math
from fractions import Fraction as F

from symmech import Setting
from symmech.mhr import Exponential, alpha, plan, posted_price_revenue, truncate_and_discretize, value_grid

E = Exponential(1.0)
for p in (2, 4, 8):
    print(f"alpha_{p} = {alpha(E, p):.6f}   ln {p} = {math.log(p):.6f}")

setting = Setting.k_items(1, 4)  # four bidders, one item
tp = plan([E], F(1, 4), setting)
print(f"zeta {tp.zeta}, truncation {tp.xi:.4f}, posted price {tp.xi_prime:.4f}")

est = posted_price_revenue(value_grid([E], setting), tp.xi_prime, 50_000, seed=0)
exact = tp.xi_prime * (1 - (1 - 1 / 4) ** 4)
print(f"posted price revenue {est.mean:.4f} +- {est.stderr:.4f}, exact {exact:.4f}")

masses = truncate_and_discretize(E, tp.xi, F(1, 4))
print("rounded coordinate law (units of the threshold):", {str(k): round(float(v), 4) for k, v in masses.items()})
