"""The float64 MLP substrate: forward passes, exact backprop, Adam.

Every loss in this package differentiates through these nets, so the first
thing worth seeing is that the hand-written backward pass agrees with
central finite differences to many digits, and that Adam actually descends.
"""

import numpy as np

from dsqil import nets
from dsqil.nets import MlpSpec

rng = np.random.default_rng(0)

# A 1-8-8-1 tanh net fitting y = sin(3x) on [-1, 1].
spec = MlpSpec((1, 8, 8, 1), hidden_activation="tanh", output_activation="identity")
params = nets.init_params(spec, rng)

xs = np.linspace(-1, 1, 64)[:, None]
ys = np.sin(3 * xs)


def mse_and_grad():
    pred, cache = nets.forward_cached(spec, params, xs)
    err = pred - ys
    loss = float(np.mean(err**2))
    grad, _ = nets.backward(spec, params, xs, 2 * err / len(xs), cache=cache)
    return loss, grad


# 1. gradient check against central differences on a few random entries
loss, grad = mse_and_grad()
h = 1e-6
checked = 0
worst = 0.0
for w, g in zip(params.weights, grad.weights):
    flat_w, flat_g = w.ravel(), g.ravel()
    for idx in rng.choice(flat_w.size, size=3, replace=False):
        orig = flat_w[idx]
        flat_w[idx] = orig + h
        up = mse_and_grad()[0]
        flat_w[idx] = orig - h
        down = mse_and_grad()[0]
        flat_w[idx] = orig
        fd = (up - down) / (2 * h)
        worst = max(worst, abs(fd - flat_g[idx]))
        checked += 1
print(f"checked {checked} parameter derivatives: worst |analytic - fd| = {worst:.2e}")

# 2. Adam descends the fitting loss
state = nets.adam_init(params)
print(f"initial mse {loss:.4f}")
for step in range(1, 2001):
    loss, grad = mse_and_grad()
    nets.adam_step(params, grad, state, lr=1e-2)
    if step % 500 == 0:
        print(f"  step {step:4d}: mse {loss:.6f}")

# 3. Polyak tracking: a frozen copy drifts toward the online net
target = nets.init_params(spec, rng)
gap = lambda: max(float(np.max(np.abs(t - o)))
                  for t, o in zip(target.arrays(), params.arrays()))
print(f"target gap before tracking {gap():.3f}")
for _ in range(500):
    nets.polyak_update(target, params, rate=5e-3)
print(f"target gap after 500 updates at rate 5e-3: {gap():.3f}")
