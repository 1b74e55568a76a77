"""Numerical tolerances shared across modules.

Defaults can be overridden for a block of code::

    with tolerances(incidence=1e-7):
        ...
"""
from __future__ import annotations

import contextlib
import contextvars
import dataclasses


@dataclasses.dataclass(frozen=True)
class Tolerances:
    # relative, applied to sup-norm normalized homogeneous inputs
    incidence: float = 1e-9
    # relative singular value threshold for rank decisions
    rank: float = 1e-9
    # |disc| <= double_root * scale  ->  double root
    double_root: float = 1e-12
    # same, when derivatives come from finite differences
    double_root_fd: float = 1e-8


_current = contextvars.ContextVar("linegeom_tolerances", default=Tolerances())


def get() -> Tolerances:
    return _current.get()


@contextlib.contextmanager
def tolerances(**overrides):
    token = _current.set(dataclasses.replace(_current.get(), **overrides))
    try:
        yield _current.get()
    finally:
        _current.reset(token)
