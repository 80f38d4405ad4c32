"""Quantized versus naive invariant Hamiltonian on one model.

The comomentum pullback J*f of a Casimir f commutes with the classical
action, but its standard quantization need not commute with the quantized
action; J^a f does."""

from qmomap.config import AnomalyConfig, config_from_args
from qmomap.momentum import load_bundle, qmm_apply, verify_invariant_hamiltonian


def main(argv=None):
    cfg = config_from_args(AnomalyConfig, argv)
    model = load_bundle(cfg.model, N=cfg.order)
    f = model.universe.parse(cfg.casimir)
    print(f"model {model.name}, f = {f}, N = {cfg.order}")
    print(f"J* f     = {model.action.comomentum_pullback(f)}")
    print(f"J^a f    = {qmm_apply(model, f)}")
    check = verify_invariant_hamiltonian(model, f)
    for i, (q, n) in enumerate(zip(check.residual, check.extra["naive"])):
        print(f"e{i + 1}: [t, Op(J^a f)] = {q or 0}    [t, Op(J* f)] = {n or 0}")
    return 0 if check.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
