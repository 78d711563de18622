"""Sharp HLS constant by alternating maximisation against the closed form and the general bound.

    python scripts/hls_constant.py
"""
from critchemo.core import make_grid, partner_exponent, validate_params
from critchemo.stationary import critical_thresholds, estimate_sharp_constant, hls_sharp_symmetric, solve_steady


def main():
    for m1 in (1.2, 1.25, 1.3):
        p = validate_params(3, m1, partner_exponent(3, m1))
        for n in (512, 1024, 2048):
            g = make_grid(60, n)
            cs = estimate_sharp_constant(p, g)
            th = critical_thresholds(cs, p)
            st = solve_steady(p, g)
            gap = abs(st.norm_u_m1**p.m1 / th.x_star - 1)
            exact = f"{hls_sharp_symmetric(3, 1):.8f}" if p.symmetric else "-"
            print(f"m1={p.m1:.4f} m2={p.m2:.4f} n={n:5d} C*={cs.cstar:.8f} exact={exact} "
                  f"bound={cs.upper_bound:.4f} iters={cs.iterations:3d} threshold gap={gap:.2e}")


if __name__ == "__main__":
    main()
