"""Monte Carlo check of how often a single-sample policy gradient points the right way.

Toy game: N agents, binary actions with P(a_i = 1) = theta_i, reward 1 only when
all actions agree. The likelihood-ratio estimate from one joint sample is
``r * d/dtheta log p(a)``; we count samples whose estimate has a positive inner
product with the all-ones ascent direction (toward the all-ones consensus).
"""

from __future__ import annotations

import numpy as np


def single_sample_gradients(actions: np.ndarray, theta: np.ndarray) -> np.ndarray:
    consensus = np.all(actions == actions[:, :1], axis=1).astype(float)
    score = np.where(actions == 1, 1.0 / theta, -1.0 / (1.0 - theta))
    return consensus[:, None] * score


def prop1_estimate(num_agents: int, samples: int, rng, theta: float = 0.5) -> float:
    if num_agents < 1 or samples < 1:
        raise ValueError("need num_agents >= 1 and samples >= 1")
    th = np.full(num_agents, float(theta))
    actions = (rng.random((samples, num_agents)) < th).astype(int)
    grads = single_sample_gradients(actions, th)
    return float(np.mean(grads.sum(axis=1) > 0))


def decay_slope(estimates: dict) -> float:
    """Least-squares slope of log2(p) against N."""
    ns = np.array(sorted(estimates), dtype=float)
    ps = np.array([estimates[n] for n in sorted(estimates)])
    return float(np.polyfit(ns, np.log2(ps), 1)[0])
