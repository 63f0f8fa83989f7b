"""Tiled level-3 BLAS on a simulated multi-device fabric.

Each routine returns ``(result, metrics)`` where ``result`` is a new
Fortran-ordered array and ``metrics`` the parsed metrics document. Inputs are
never modified.

    >>> import numpy as np, tilert
    >>> a, b = np.ones((4, 3)), np.ones((3, 5))
    >>> c, m = tilert.gemm(a, b, tile_size=2)
    >>> float(c[0, 0]), m["devices"][0]["tasks_completed"]
    (3.0, 6)
"""

import json
import os

import numpy as np

from ._core import (
    CapacityDeadlock,
    ConfigError,
    InvalidArgument,
    InvalidTopology,
    SingularMatrix,
    TilertError,
    default_topology,
    degree_of_parallelism,
    gemm_flop_fraction,
    parse_topology,
)
from . import _core

__all__ = [
    "gemm", "syrk", "syr2k", "symm", "trmm", "trsm", "run",
    "degree_of_parallelism", "gemm_flop_fraction", "parse_topology", "default_topology",
    "TilertError", "InvalidArgument", "SingularMatrix", "CapacityDeadlock", "InvalidTopology", "ConfigError",
]


def _topology_text(topology):
    if topology is None:
        return None
    if isinstance(topology, os.PathLike) or (isinstance(topology, str) and "\n" not in topology):
        with open(topology, encoding="utf-8") as f:
            return f.read()
    return topology


def _operand(x):
    return None if x is None else np.asfortranarray(x, dtype=np.float64)


def run(routine, a=None, b=None, c=None, *, topology=None, trace=False, **options):
    """Run one call. ``topology`` is a YAML path, YAML text or None for one
    default accelerator. The output operand (``b`` for trmm/trsm, else ``c``)
    is copied, so the caller's array is left untouched. With ``trace`` the
    event trace CSV is returned as a third element."""
    a, b, c = _operand(a), _operand(b), _operand(c)
    if routine in ("trmm", "trsm"):
        b = None if b is None else b.copy(order="F")
        out = b
    else:
        c = None if c is None else c.copy(order="F")
        out = c
    metrics, csv = _core.run(routine, a, b, c, topology_yaml=_topology_text(topology), trace=trace, **options)
    if trace:
        return out, json.loads(metrics), csv
    return out, json.loads(metrics)


def _zeros_like_output(rows, cols):
    return np.zeros((rows, cols), order="F")


def gemm(a, b, c=None, *, alpha=1.0, beta=0.0, trans_a=False, trans_b=False, **options):
    """alpha * op(A) @ op(B) + beta * C."""
    if c is None:
        rows = np.shape(a)[1] if trans_a else np.shape(a)[0]
        cols = np.shape(b)[0] if trans_b else np.shape(b)[1]
        c = _zeros_like_output(rows, cols)
    return run("gemm", a, b, c, alpha=alpha, beta=beta, trans_a=trans_a, trans_b=trans_b, **options)


def syrk(a, c=None, *, alpha=1.0, beta=0.0, trans=False, uplo="upper", **options):
    """alpha * A @ A.T + beta * C on the ``uplo`` triangle (A.T @ A with ``trans``)."""
    if c is None:
        order = np.shape(a)[1] if trans else np.shape(a)[0]
        c = _zeros_like_output(order, order)
    return run("syrk", a, None, c, alpha=alpha, beta=beta, trans_a=trans, uplo=uplo, **options)


def syr2k(a, b, c=None, *, alpha=1.0, beta=0.0, trans=False, uplo="upper", **options):
    """alpha * (A @ B.T + B @ A.T) + beta * C on the ``uplo`` triangle."""
    if c is None:
        order = np.shape(a)[1] if trans else np.shape(a)[0]
        c = _zeros_like_output(order, order)
    return run("syr2k", a, b, c, alpha=alpha, beta=beta, trans_a=trans, uplo=uplo, **options)


def symm(a, b, c=None, *, alpha=1.0, beta=0.0, side="left", uplo="upper", **options):
    """alpha * A @ B + beta * C (B @ A on the right), A symmetric from its ``uplo`` triangle."""
    if c is None:
        c = _zeros_like_output(*np.shape(b))
    return run("symm", a, b, c, alpha=alpha, beta=beta, side=side, uplo=uplo, **options)


def trmm(a, b, *, alpha=1.0, side="left", uplo="upper", trans=False, unit_diag=False, **options):
    """alpha * op(A) @ B (B @ op(A) on the right), A triangular."""
    return run("trmm", a, b, None, alpha=alpha, side=side, uplo=uplo, trans_a=trans, unit_diag=unit_diag,
               **options)


def trsm(a, b, *, alpha=1.0, side="left", uplo="upper", trans=False, unit_diag=False, **options):
    """Solve op(A) @ X = alpha * B (X @ op(A) on the right), A triangular."""
    return run("trsm", a, b, None, alpha=alpha, side=side, uplo=uplo, trans_a=trans, unit_diag=unit_diag,
               **options)
