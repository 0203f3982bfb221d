"""Batch evaluation of compiled expression tapes.

This is the hot loop of the engine: every lattice seed, grid oracle and
inversion scan funnels through `eval_tape`. Two interchangeable builds:

* `_eval_tape_numba`: per-row stack machine under numba @njit.
* `_eval_tape_numpy`: the same opcode loop vectorized across rows.

The numba build is selected unless the environment variable
``DUALWHEEL_PURE_NUMPY=1`` is set at import time (or numba is missing).
Invalid operations (ln of a nonpositive, 0^negative, ...) produce NaN/inf
instead of raising; lattice scans mask those out. Strict scalar evaluation
with real errors lives in exprdsl.
"""

from __future__ import annotations

import os

import numpy as np

from .exprdsl import (
    OP_ADD,
    OP_CONST,
    OP_DIV,
    OP_EXP,
    OP_LN,
    OP_MUL,
    OP_NEG,
    OP_POW,
    OP_SQRT,
    OP_SUB,
    OP_VAR,
)


def _eval_tape_numpy(codes, args, q):
    n_ops = codes.shape[0]
    stack = np.empty((n_ops, q.shape[0]))
    sp = 0
    with np.errstate(all="ignore"):
        for k in range(n_ops):
            op = codes[k]
            if op == OP_CONST:
                stack[sp] = args[k]
                sp += 1
            elif op == OP_VAR:
                stack[sp] = q[:, int(args[k])]
                sp += 1
            elif op == OP_NEG:
                np.negative(stack[sp - 1], out=stack[sp - 1])
            elif op == OP_LN:
                np.log(stack[sp - 1], out=stack[sp - 1])
            elif op == OP_EXP:
                np.exp(stack[sp - 1], out=stack[sp - 1])
            elif op == OP_SQRT:
                np.sqrt(stack[sp - 1], out=stack[sp - 1])
            else:
                sp -= 1
                a, b = stack[sp - 1], stack[sp]
                if op == OP_ADD:
                    np.add(a, b, out=a)
                elif op == OP_SUB:
                    np.subtract(a, b, out=a)
                elif op == OP_MUL:
                    np.multiply(a, b, out=a)
                elif op == OP_DIV:
                    np.divide(a, b, out=a)
                elif op == OP_POW:
                    np.power(a, b, out=a)
    return stack[0].copy()


try:
    from numba import njit

    HAVE_NUMBA = True

    @njit(cache=True, error_model="numpy")
    def _eval_tape_numba(codes, args, q):  # pragma: no cover - jitted
        n_rows = q.shape[0]
        n_ops = codes.shape[0]
        out = np.empty(n_rows)
        stack = np.empty(n_ops)
        for r in range(n_rows):
            sp = 0
            for k in range(n_ops):
                op = codes[k]
                if op == OP_CONST:
                    stack[sp] = args[k]
                    sp += 1
                elif op == OP_VAR:
                    stack[sp] = q[r, int(args[k])]
                    sp += 1
                elif op == OP_NEG:
                    stack[sp - 1] = -stack[sp - 1]
                elif op == OP_LN:
                    stack[sp - 1] = np.log(stack[sp - 1])
                elif op == OP_EXP:
                    stack[sp - 1] = np.exp(stack[sp - 1])
                elif op == OP_SQRT:
                    stack[sp - 1] = np.sqrt(stack[sp - 1])
                else:
                    sp -= 1
                    a = stack[sp - 1]
                    b = stack[sp]
                    if op == OP_ADD:
                        stack[sp - 1] = a + b
                    elif op == OP_SUB:
                        stack[sp - 1] = a - b
                    elif op == OP_MUL:
                        stack[sp - 1] = a * b
                    elif op == OP_DIV:
                        stack[sp - 1] = a / b
                    elif op == OP_POW:
                        stack[sp - 1] = a ** b
            out[r] = stack[0]
        return out

except ImportError:  # pragma: no cover - environment without numba
    HAVE_NUMBA = False
    _eval_tape_numba = None


USING_NUMBA = HAVE_NUMBA and os.environ.get("DUALWHEEL_PURE_NUMPY", "0") not in (
    "1",
    "true",
    "yes",
)

# Measured crossover: the per-row jitted loop wins by ~20x at N=1 (the scalar
# root-finding hot path) and loses to whole-array numpy ops past a few
# hundred rows, so batches above this go to the vectorized interpreter.
NUMBA_MAX_ROWS = 192


def backend() -> str:
    """Name of the active evaluation backend, 'numba' or 'numpy'."""
    return "numba" if USING_NUMBA else "numpy"


def eval_tape(codes: np.ndarray, args: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Evaluate a compiled tape at an (N, n_goods) bundle array."""
    if q.ndim != 2:
        raise ValueError("bundle array must be 2-D (N, n_goods)")
    if USING_NUMBA and q.shape[0] <= NUMBA_MAX_ROWS:
        return _eval_tape_numba(codes, args, q)
    return _eval_tape_numpy(codes, args, q)
