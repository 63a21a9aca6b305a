"""Brute-force references for the recurrence, always float64, never chunked.

sequential_ssm steps token by token exactly as the defining recurrence reads:
decay the state, add the step-scaled outer product, read out. dense_ssm is a
second, independent formulation (the full T x T causal decay matrix applied
as a matrix-vector product) used to validate the sequential oracle itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class OracleReport:
    """Elementwise comparison: pass iff |actual - expected| <= atol + rtol*|expected|."""

    max_abs_err: float
    max_rel_err: float
    worst_index: tuple
    passed: bool
    rtol: float
    atol: float

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"{status}: max_abs={self.max_abs_err:.3e} max_rel={self.max_rel_err:.3e} "
            f"at {self.worst_index} (rtol={self.rtol:g}, atol={self.atol:g})"
        )


def _broadcast_heads(mat: np.ndarray, heads: int) -> np.ndarray:
    groups = mat.shape[2]
    if groups == heads:
        return mat
    return np.repeat(mat, heads // groups, axis=2)


def sequential_ssm(
    X: np.ndarray,
    dt: np.ndarray,
    a: np.ndarray,
    Bmat: np.ndarray,
    Cmat: np.ndarray,
    D: np.ndarray | None = None,
    initial_state: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-token recurrence h <- exp(a*dt_t) h + dt_t (x_t outer B_t), y_t = C_t.h + D x_t.

    Shapes as in SsdInputs plus optional D: (H,). Runs entirely in float64
    with a plain time loop; the chunked engine is never consulted.
    """
    X = np.asarray(X, dtype=np.float64)
    dt = np.asarray(dt, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    batch, seq, heads, pdim = X.shape
    ndim = Bmat.shape[-1]
    Bh = _broadcast_heads(np.asarray(Bmat, dtype=np.float64), heads)
    Ch = _broadcast_heads(np.asarray(Cmat, dtype=np.float64), heads)

    if initial_state is None:
        h = np.zeros((batch, heads, pdim, ndim), dtype=np.float64)
    else:
        h = np.asarray(initial_state, dtype=np.float64).copy()

    Y = np.empty((batch, seq, heads, pdim), dtype=np.float64)
    for t in range(seq):
        decay = np.exp(a * dt[:, t])  # (B, H)
        h = decay[:, :, None, None] * h + (
            dt[:, t, :, None, None] * X[:, t, :, :, None] * Bh[:, t, :, None, :]
        )
        Y[:, t] = np.einsum("bhn,bhpn->bhp", Ch[:, t], h)
    if D is not None:
        Y = Y + np.asarray(D, dtype=np.float64)[None, None, :, None] * X
    return Y, h


def dense_ssm(
    X: np.ndarray,
    dt: np.ndarray,
    a: np.ndarray,
    Bmat: np.ndarray,
    Cmat: np.ndarray,
    D: np.ndarray | None = None,
) -> np.ndarray:
    """Unrolled T x T formulation: Y = (L .* C B^T) Xbar, built entry by entry.

    M[t, s] = sum_n C[t, n] B[s, n] * exp(sum_{k=s+1..t} a*dt_k) * dt_s for
    s <= t. O(T^2) memory, intended for T <= 64; zero initial state only.
    """
    X = np.asarray(X, dtype=np.float64)
    dt = np.asarray(dt, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    batch, seq, heads, _ = X.shape
    if seq > 64:
        raise ValueError("dense oracle is capped at T = 64")
    Bh = _broadcast_heads(np.asarray(Bmat, dtype=np.float64), heads)
    Ch = _broadcast_heads(np.asarray(Cmat, dtype=np.float64), heads)

    Y = np.zeros_like(X)
    for b in range(batch):
        for hh in range(heads):
            log_decay = a[hh] * dt[b, :, hh]
            for t in range(seq):
                for s in range(t + 1):
                    weight = float(np.dot(Ch[b, t, hh], Bh[b, s, hh]))
                    weight *= float(np.exp(np.sum(log_decay[s + 1 : t + 1])))
                    Y[b, t, hh] += weight * dt[b, s, hh] * X[b, s, hh]
    if D is not None:
        Y = Y + np.asarray(D, dtype=np.float64)[None, None, :, None] * X
    return Y


def compare(
    actual: np.ndarray, expected: np.ndarray, rtol: float = 1e-5, atol: float = 2e-4
) -> OracleReport:
    """Elementwise |a - e| <= atol + rtol*|e| with the worst offender located."""
    actual = np.asarray(actual)
    expected = np.asarray(expected)
    if actual.shape != expected.shape:
        raise ValueError(f"shape mismatch: {actual.shape} vs {expected.shape}")
    abs_err = np.abs(actual.astype(np.float64) - expected.astype(np.float64))
    bound = atol + rtol * np.abs(expected.astype(np.float64))
    margin = abs_err - bound
    worst_flat = int(np.argmax(margin)) if margin.size else 0
    worst = np.unravel_index(worst_flat, actual.shape) if actual.size else ()
    denom = np.abs(expected.astype(np.float64))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(denom > 0, abs_err / denom, np.where(abs_err > 0, np.inf, 0.0))
    return OracleReport(
        max_abs_err=float(abs_err.max()) if abs_err.size else 0.0,
        max_rel_err=float(rel.max()) if rel.size else 0.0,
        worst_index=tuple(int(i) for i in worst),
        passed=bool(np.all(abs_err <= bound)),
        rtol=rtol,
        atol=atol,
    )
