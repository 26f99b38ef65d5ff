"""How the smoothing weight shapes the learned policy.

For a fixed state and fixed Q-function parameters, sweep the smoothing
weight mu and print the support interval, its width, and the peak density.
The width grows like mu**(1/3) and the peak falls like mu**(-1/3), so the
policy moves smoothly from near-deterministic to diffuse.

Run:  python3 demos/support_vs_mu.py
"""

import numpy as np

from quasiopt.model import (BasisSpec, ModelParams, peak_density, support)


def main():
    basis = BasisSpec("polynomial_degree_2", d_s=2)
    rng = np.random.default_rng(0)
    m = basis.m
    params = ModelParams(theta1=rng.uniform(-0.5, 0.5, m),
                         theta2=rng.uniform(-0.5, 0.5, m),
                         theta3=rng.uniform(-0.5, 0.5, m),
                         xi=rng.uniform(-0.5, 0.5, basis.d_s))
    s = np.array([0.3, -0.4])

    print(f"{'mu':>8} {'support':>22} {'width':>10} {'peak':>10}")
    prev_width = None
    for mu in (0.01, 0.05, 0.1, 0.2, 0.5, 1.0):
        lo, hi = support(s, params, basis, mu)
        width = hi - lo
        pk = peak_density(s, params, basis, mu)
        ratio = "" if prev_width is None else \
            f"   width ratio {width / prev_width:.3f}"
        print(f"{mu:8.2f} [{lo:9.4f}, {hi:9.4f}] {width:10.4f} {pk:10.4f}"
              f"{ratio}")
        prev_width = width
    print("\nEach 2x increase in mu multiplies the width by about "
          f"2**(1/3) = {2 ** (1 / 3):.3f}.")


if __name__ == "__main__":
    main()
