"""Spectral radius of the frozen-coefficient series against the chart radius.

The radius should scale roughly linearly in rho while 4 rho kappa is small,
and the extrapolated threshold rho / radius marks where contraction is lost.
"""
import argparse

import numpy as np

from vbmo.freezing import frozen_operator, neumann_series_diagnostics
from vbmo.geometry import Domain

ap = argparse.ArgumentParser()
ap.add_argument("--domain", default="star", choices=["disk", "ellipse", "star"])
ap.add_argument("--N", type=int, default=256)
ap.add_argument("--chart", type=int, default=0)
args = ap.parse_args()

base = getattr(Domain, args.domain)(N=args.N)
print(f"reach {base.reach:.4f}, default rho {base.rho:.4f}")
print(f"{'rho':>8} {'radius':>8} {'max_ratio':>10} {'terms':>6} {'threshold':>10}")
for f in 2.0 ** np.arange(-3, 2):
    dom = base.with_(rho=base.rho * f)
    j = min(args.chart, dom.n_charts - 1)
    d = neumann_series_diagnostics(frozen_operator(dom, j))
    print(f"{dom.rho:8.4f} {d['spectral_radius']:8.4f} {d['max_ratio']:10.4f} {len(d['term_norms']):6d} "
          f"{d['rho_threshold']:10.4f}")
