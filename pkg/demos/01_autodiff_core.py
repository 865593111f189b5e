"""Tour of the numerics core: tensors, the tape, gradients, and Adam.

Every model in this package is built from the handful of primitives shown
here. The demo records a small computation, pulls gradients off the tape,
confirms one of them against central finite differences, and runs a few
Adam steps on a toy least-squares problem.
"""

import numpy as np

import ncgc.numerics as nm
from ncgc.rng import RngState

rng = RngState(0)

# --- record a computation on a tape ---------------------------------------
x = rng.normal((4, 3))
w = nm.Parameter(rng.normal((3, 2)), name="w")
target = rng.normal((4, 2))

tape = nm.Tape()
with tape:
    h = nm.relu(nm.matmul(x, w))
    loss = nm.frobenius_sq_diff(h, target)
print(f"loss = {loss.item():.6f} (tape recorded {len(tape)} ops)")

nm.backward(tape, loss)
print("dL/dw:\n", w.grad)

# --- sanity: finite differences agree --------------------------------------
step = 1e-5
fd = np.zeros_like(w.value)
for idx in np.ndindex(w.value.shape):
    orig = w.value[idx]
    for sign in (+1, -1):
        w.value[idx] = orig + sign * step
        h = nm.relu(nm.matmul(x, w))
        fd[idx] += sign * nm.frobenius_sq_diff(h, target).item() / (2 * step)
    w.value[idx] = orig
print(f"max |tape grad - finite diff| = {np.abs(w.grad - fd).max():.2e}")

# --- a few Adam steps -------------------------------------------------------
state = nm.AdamState([w])
for it in range(200):
    w.zero_grad()
    tape = nm.Tape()
    with tape:
        loss = nm.frobenius_sq_diff(nm.relu(nm.matmul(x, w)), target)
    nm.backward(tape, loss)
    nm.adam_step([w], state, lr=0.05, weight_decay=0.0)
    if it % 50 == 0 or it == 199:
        print(f"step {it:3d}  loss = {loss.item():.6f}")

# --- the probability toolbox ------------------------------------------------
logits = nm.Tensor([[2.0, 0.0, -1.0]])
probs = nm.softmax_rows(logits)
print("softmax:", np.round(probs.value, 5))
print("log of softmax (fused, stable):", np.round(nm.log_elementwise(probs).value, 5))
