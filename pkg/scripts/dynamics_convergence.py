"""Self-convergence of the scheme and the vanishing-regularization trend.

    python scripts/dynamics_convergence.py

Part 1 runs the pure porous-medium case (v = 0) on n = 256..2048 and prints
L1 differences between consecutive grids. Part 2 runs the coupled system
with the regularized kernel at eps = 4dx, 2dx, dx and prints the L1 distance
to the Newtonian run.
"""
import numpy as np

from critchemo.core import RadialField, make_grid, symmetric_params
from critchemo.dynamics import Controls, evolve, initial_state

T_END = 0.1
R_MAX = 6.0


def final_u(n, v_amp, eps=0.0):
    p = symmetric_params(3)
    g = make_grid(R_MAX, n)
    prof = np.exp(-g.r**2)
    s0 = initial_state(RadialField(g, prof), RadialField(g, v_amp * prof), p, eps=eps)
    return g, evolve(s0, T_END, Controls(sample_every=T_END)).states[-1].u.values


def coarsen(f, g):
    w = g.weights
    return (f[0::2] * w[0::2] + f[1::2] * w[1::2]) / (w[0::2] + w[1::2])


def main():
    sol = {n: final_u(n, 0.0) for n in (256, 512, 1024, 2048)}
    errs = []
    for n in (256, 512, 1024):
        gc, uc = sol[n]
        gf, uf = sol[2 * n]
        errs.append(float(np.dot(np.abs(uc - coarsen(uf, gf)), gc.weights)))
    print("porous medium, L1 difference to the next grid:", ", ".join(f"{e:.3e}" for e in errs))
    print("ratios:", ", ".join(f"{a / b:.2f}" for a, b in zip(errs, errs[1:])))

    n = 256
    g, ref = final_u(n, 1.0)
    dx = R_MAX / n
    gaps = [float(np.dot(np.abs(final_u(n, 1.0, e * dx)[1] - ref), g.weights)) for e in (4, 2, 1)]
    print("regularized kernel, L1 distance to eps = 0 for eps = 4dx, 2dx, dx:",
          ", ".join(f"{e:.3e}" for e in gaps))


if __name__ == "__main__":
    main()
