"""Run every verification suite on the bundled models and print a table."""

import time

from qmomap.config import VerifyConfig, config_from_args
from qmomap.momentum import load_bundle, run_suite, verify_mc


def main(argv=None):
    cfg = config_from_args(VerifyConfig, argv)
    failures = 0
    for name in cfg.models:
        model = load_bundle(name, N=cfg.order, M=cfg.vdeg, check_mc=False)
        mc = verify_mc(model)
        row = [f"{name:13s}", f"mc {mc.status}"]
        for suite in cfg.suites:
            if suite == "mc" or (suite == "casimir" and not model.casimirs):
                continue
            if not mc.ok:
                row.append(f"{suite} SKIP")
                continue
            t0 = time.perf_counter()
            checks = run_suite(model, suite, deg=cfg.deg)
            bad = sum(not c.ok for c in checks)
            failures += bad
            row.append(f"{suite} {len(checks) - bad}/{len(checks)} ({time.perf_counter() - t0:.1f}s)")
        failures += not mc.ok
        print("  ".join(row))
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
