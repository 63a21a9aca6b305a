"""The core identity: one chunked pass equals the token-by-token recurrence.

Builds a random per-head SSM instance, runs the sequential reference, then the
chunked scan at several chunk sizes, and shows that every chunk size lands on
the same answer - the whole point of the duality is that chunking is a
reorganization of the same computation, not an approximation.
"""

import numpy as np

from ssd_engine import SsdInputs, sequential_ssm, ssd_forward

rng = np.random.default_rng(0)
batch, seq, heads, head_dim, state = 1, 96, 2, 4, 8

inst = SsdInputs(
    X=rng.standard_normal((batch, seq, heads, head_dim)),
    dt=rng.uniform(0.0, 1.0, (batch, seq, heads)),
    a=-rng.uniform(0.5, 4.0, heads),
    Bmat=rng.standard_normal((batch, seq, 1, state)),
    Cmat=rng.standard_normal((batch, seq, 1, state)),
)

print(f"instance: B={batch} T={seq} H={heads} P={head_dim} N={state}")
print("reference: sequential recurrence, one token at a time, float64\n")
y_ref, state_ref = sequential_ssm(inst.X, inst.dt, inst.a, inst.Bmat, inst.Cmat)

print(f"{'chunk size':>10} {'max |Y - Y_ref|':>18} {'max |state diff|':>18}")
for chunk in (1, 4, 12, 32, 96):
    out = ssd_forward(inst, chunk)
    print(
        f"{chunk:>10} {np.abs(out.Y - y_ref).max():>18.3e} "
        f"{np.abs(out.final_state - state_ref).max():>18.3e}"
    )

print(
    "\nEvery chunk size reproduces the recurrence to float64 round-off."
    "\nIntra-chunk work is dense matrix algebra; only one small state per"
    "\nchunk crosses chunk boundaries."
)
