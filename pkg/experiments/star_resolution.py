"""Why the star problem with beta = (1, 10) converges slowly on N <= 80.

Outside the star, u = cos(psi) / beta+ with psi ~ r^4, so near the corners of
(-2, 2)^2 the solution oscillates with wavelength ~ 2 pi / |grad psi| ~ 0.04,
comparable to h = 4 / N.  The script prints solver and projection errors split
by subdomain; the plus-side error of the solver tracks the projection error
(which on plain elements is nodal interpolation, independent of the scheme),
while the minus side converges at the optimal rate.

    python experiments/star_resolution.py [--m 1] [--beta-plus 10] [--N 10 20 40 80 160]
"""

import argparse

import numpy as np

from frenet_sdg import (DiscreteSolution, SchemeParams, assemble, build_global_space, build_mesh, classify,
                        error_norms, project, solve, star_problem)


def wavelength_at_corner(P, n=2000):
    # |grad psi| along the domain boundary, by differences of the level set
    t = np.linspace(-2, 2, n)
    X = np.r_[np.c_[t, np.full(n, 2.0)], np.c_[np.full(n, 2.0), t]]
    h = 1e-6
    g = np.stack([(P.curve.level_set(*(X + h * e).T) - P.curve.level_set(*(X - h * e).T)) / (2 * h)
                  for e in np.eye(2)], -1)
    return 2 * np.pi / np.linalg.norm(g, axis=1).max()


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--beta-plus", type=float, default=10.0)
    ap.add_argument("--N", type=int, nargs="+", default=[10, 20, 40, 80, 160])
    a = ap.parse_args(argv)
    beta = (1.0, a.beta_plus)
    P = star_problem(beta=beta)
    print(f"shortest outer wavelength ~ {wavelength_at_corner(P):.3f}")
    scheme = SchemeParams.from_rules(a.m, beta, -1, "large")
    for N in a.N:
        cl = classify(build_mesh(P.domain, N, a.m), P.curve)
        space = build_global_space(cl, a.m, "sdg", beta)
        uh = DiscreteSolution(space, solve(assemble(space, P, scheme)), scheme)
        for tag, sol in (("solve", uh), ("project", project(P, space))):
            r = error_norms(P, sol, scheme)
            print(f"N={N:4d} h={4 / N:.4f} {tag:8s} L2 -{r.l2_minus:.2e} +{r.l2_plus:.2e}   "
                  f"H1 -{r.h1_minus:.2e} +{r.h1_plus:.2e}")


if __name__ == "__main__":
    main()
