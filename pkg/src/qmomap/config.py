"""Dataclass configs for the experiment scripts, with argparse glue."""

from __future__ import annotations

import argparse
import dataclasses
import typing
from dataclasses import dataclass, field


def config_from_args(cls, argv=None, description: str | None = None):
    """Build ``cls`` from command-line flags named after its fields.

    Tuples of strings take comma-separated values; booleans become
    ``--flag/--no-flag`` switches."""
    hints = typing.get_type_hints(cls)
    parser = argparse.ArgumentParser(description=description or (cls.__doc__ or "").strip().splitlines()[0])
    for f in dataclasses.fields(cls):
        flag = "--" + f.name.replace("_", "-")
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        tp = hints[f.name]
        if tp is bool:
            parser.add_argument(flag, action=argparse.BooleanOptionalAction, default=default)
        elif typing.get_origin(tp) is tuple:
            parser.add_argument(flag, default=",".join(map(str, default)),
                                type=lambda s: tuple(x.strip() for x in s.split(",") if x.strip()))
        else:
            parser.add_argument(flag, type=tp, default=default)
    ns = parser.parse_args(argv)
    return cls(**{f.name: getattr(ns, f.name) for f in dataclasses.fields(cls)})


@dataclass
class VerifyConfig:
    """Run the verification suites on bundled models."""

    models: tuple[str, ...] = ("translations", "so3rot", "heisenberg", "quadratic1d")
    suites: tuple[str, ...] = ("mc", "unital", "linear", "morphism", "second", "equivariance", "casimir")
    order: int = 2
    vdeg: int = 6
    deg: int = 2


@dataclass
class GraphConfig:
    """Count Feynman graph classes and compare with Wick pairing counts."""

    max_ext: int = 3
    max_power: int = 3


@dataclass
class AnomalyConfig:
    """Contrast quantized and naive invariant Hamiltonians."""

    model: str = "quadratic1d"
    casimir: str = "th1^2"
    order: int = 2


@dataclass
class GuttConfig:
    """Compare the phase and PBW routes to the Gutt product."""

    algebras: tuple[str, ...] = ("so3rot", "heisenberg")
    max_degree: int = 4
    order: int = 4
    seed: int = field(default=0)
