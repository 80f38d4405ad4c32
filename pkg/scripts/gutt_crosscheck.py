"""Gutt product through the BCH phase integral versus PBW symmetrization."""

import time

from qmomap.algebra import GaussianRational, MultiPoly, multi_indices, theta_universe
from qmomap.config import GuttConfig, config_from_args
from qmomap.momentum import load_bundle
from qmomap.quantization import gutt_via_phase


def main(argv=None):
    cfg = config_from_args(GuttConfig, argv)
    bad = 0
    for name in cfg.algebras:
        alg = load_bundle(name, check_mc=False).algebra
        T = theta_universe(alg.dim)
        monos = [MultiPoly(T, {tuple(a): GaussianRational(1)}) for a in multi_indices(alg.dim, cfg.max_degree)]
        pairs = [(f, g) for f in monos for g in monos if f.degree() + g.degree() <= cfg.max_degree]
        t0 = time.perf_counter()
        mism = [(f, g) for f, g in pairs if gutt_via_phase(alg, f, g, cfg.order) != alg.gutt_pbw(f, g, cfg.order)]
        bad += len(mism)
        print(f"{name}: {len(pairs) - len(mism)}/{len(pairs)} pairs agree at N={cfg.order} ({time.perf_counter() - t0:.1f}s)")
        for f, g in mism[:5]:
            print(f"  mismatch on {f} * {g}")
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())
