"""Print the b^nu growth table for mollified jumps and the log-linear fit."""
import argparse

from vbmo.counterexample import ce_growth_demo, growth_fit, is_strictly_increasing

ap = argparse.ArgumentParser()
ap.add_argument("--ell-max", type=int, default=10)
ap.add_argument("--torus-N", type=int, default=1 << 16)
args = ap.parse_args()

rows = ce_growth_demo(args.ell_max, N=args.torus_N)
print(f"{'ell':>4} {'bnu_tan':>10} {'bnu_nor':>10} {'sup_nor':>10} {'sup_tan':>10}")
for r in rows:
    print(f"{r.ell:4d} {r.bnu_tangential:10.5f} {r.bnu_normal:10.5f} {r.sup_normal:10.5f} {r.sup_tangential:10.3f}")
fit = growth_fit(rows)
bt = [r.bnu_tangential for r in rows]
print(f"increasing: {is_strictly_increasing(bt)}  slope per ell: {fit['slope']:.4f}  r2: {fit['r2']:.3f}")
