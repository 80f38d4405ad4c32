"""Graph classes per (externals, power) and the Wick pairing cross-check."""

from qmomap.config import GraphConfig, config_from_args
from qmomap.feynman import enumerate_graphs, wick_bookkeeping


def main(argv=None):
    cfg = config_from_args(GraphConfig, argv)
    print("n_ext  " + "  ".join(f"P<={p:d}" for p in range(cfg.max_power + 1)) + "  pairing check")
    ok = True
    for n_ext in range(1, cfg.max_ext + 1):
        counts = [len(enumerate_graphs(n_ext, p)) for p in range(cfg.max_power + 1)]
        book = wick_bookkeeping(n_ext, cfg.max_power)
        good = all(a == b for a, b in book.values())
        ok &= good
        print(f"{n_ext:5d}  " + "  ".join(f"{c:5d}" for c in counts) + f"  {len(book)} groups {'ok' if good else 'MISMATCH'}")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
