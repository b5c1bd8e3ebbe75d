#! /usr/bin/env python3
"""With beta = 0 the filter is Gaussian and known in closed form.

Here the Monte Carlo density is normalized on a grid and compared with the
Kalman posterior. The relative error should be a few percent at most within
two posterior standard deviations.
"""

import numpy as np

from zakai import (
    EstimatorConfig,
    ExampleModelParams,
    StreamFamily,
    TimeGrid,
    build_example_model,
    estimate_grid,
    kalman_bucy_density,
    kalman_filter,
    simulate_signal_observation,
)

params = ExampleModelParams(d=1, beta=0.0, gamma=1.0)
model = build_example_model(params)
obs = simulate_signal_observation(model, TimeGrid(0.5, 100), params.alpha, StreamFamily(5))

post = kalman_filter(params, obs)
m, sd = post.mean[0], np.sqrt(post.cov[0, 0])
print(f"Kalman posterior: mean {m:+.4f}, sd {sd:.4f}; true Y_N {obs.Y_N[0]:+.4f}")

xs = m + sd * np.linspace(-6, 6, 49)
est = estimate_grid(model, obs, xs[:, None], EstimatorConfig(M=40_000, seed=5, chunk_size=4096))
vals = np.array([e.value for e in est])
density = vals / np.trapezoid(vals, xs)
exact = kalman_bucy_density(params, obs, xs[:, None])

for x, a, b in zip(xs[16:33:2], density[16:33:2], exact[16:33:2]):
    print(f"x = {x:+.3f}   MC {a:.4f}   Kalman {b:.4f}   rel {abs(a - b) / b:6.2%}")
