"""Constant rewards versus discriminator-shaped rewards.

The constant scheme pays every demonstration transition 1 and every sampled
transition 0. The shaped scheme halves a discriminator score D(s, a) and
adds a 1/(2 lambda_demo) bonus on the demo side, which pins all rewards
inside [0, 1] at lambda_demo = 1 and makes the demo/sample gap exactly 0.5
for any pair. Early on (untrained D = 0.5) the shaped rewards sit at
0.75 / 0.25 and behave like a softened version of the constants.
"""

import numpy as np

from dsqil.discriminator import ConstantDiscriminator, Discriminator, dsqil_rewards

rng = np.random.default_rng(1)

# the degenerate case: a scorer frozen at 1 on demos and 0 on samples
stub = ConstantDiscriminator(demo_value=1.0, samp_value=0.0)
pair = np.zeros((1, 4))
print("frozen-perfect scorer:",
      f"demo reward {dsqil_rewards(stub, pair, 'demo', 1.0)[0]:.2f},",
      f"sample reward {dsqil_rewards(stub, pair, 'sample', 1.0)[0]:.2f}",
      "(the constant-reward scheme, recovered exactly)")

# an actual discriminator on two separable state-action clouds
demo_cloud = rng.normal(1.2, 0.4, size=(512, 4))
samp_cloud = rng.normal(-1.2, 0.4, size=(512, 4))
disc = Discriminator(input_dim=4, rng=rng, hidden=(64, 64), warmup=0)

print("\ntraining the discriminator on the clouds:")
for step in range(1, 401):
    demo_batch = demo_cloud[rng.integers(0, 512, size=128)]
    samp_batch = samp_cloud[rng.integers(0, 512, size=128)]
    _, loss = disc.update(demo_batch, samp_batch, samp_buffer_size=10_000)
    if step % 100 == 0:
        d_demo = float(np.mean(disc.predict(demo_cloud)))
        d_samp = float(np.mean(disc.predict(samp_cloud)))
        print(f"  step {step:3d}: loss {loss:.4f}  mean D(demo) {d_demo:.3f}  "
              f"mean D(sample) {d_samp:.3f}")

# shaped rewards on a spectrum of points sliding from sample-like to demo-like
print("\nshaped rewards along the line between the clouds (lambda_demo = 1):")
line = np.linspace(-1.2, 1.2, 7)[:, None] * np.ones((1, 4))
demo_r = dsqil_rewards(disc, line, "demo", 1.0)
samp_r = dsqil_rewards(disc, line, "sample", 1.0)
for x, dr, sr in zip(line[:, 0], demo_r, samp_r):
    print(f"  point {x:+.1f}: demo reward {dr:.3f}, sample reward {sr:.3f}")
print("gap is exactly 0.5 on every pair:", bool(np.all(demo_r == samp_r + 0.5)))
