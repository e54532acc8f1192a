"""Exact CE-on-uniform regret via forward DP over the budget distribution.

CE's acceptance at a step depends only on (remaining budget b, remaining time
tau) and the uniform draw: accept iff u >= p, p = max(0, 1 - b/tau).
Value collected in expectation: integral_p^1 u du = (1 - p^2)/2.
Budget transitions: b -> b-1 w.p. (1-p) (for b > 0).
Offline: E[top-B of T uniforms] = B(2T - B + 1)/(2(T+1)) exactly.
"""
import math
import numpy as np
import multisec as ms


def exact_ce_uniform_regret(T, B):
    dist = np.zeros(B + 1)
    dist[B] = 1.0
    value = 0.0
    for t in range(T):
        tau = T - t
        b = np.arange(B + 1)
        p = np.maximum(0.0, 1.0 - b / tau)
        acc_prob = 1.0 - p
        acc_prob[0] = 0.0  # no budget: cannot accept (p=1 => prob 0 anyway)
        gain = (1.0 - p**2) / 2.0
        gain[0] = 0.0
        value += float(np.sum(dist * gain))
        new = np.zeros_like(dist)
        new += dist * (1.0 - acc_prob)
        new[:-1] += dist[1:] * acc_prob[1:]
        dist = new
    offline = B * (2 * T - B + 1) / (2.0 * (T + 1))
    return offline - value


def mc_ce_uniform_regret(T, B, reps=4000):
    u = ms.Uniform()
    cfg = ms.ExperimentConfig(model=u, policies=("ce",), horizons=(T,),
                              reps=reps, seed=123, budget_ratio=None, budget=B)
    est = ms.run_experiment(cfg, threads=4)
    return est.mean["ce"][0], est.stderr["ce"][0]


if __name__ == "__main__":
    for T in (100, 1000, 10000):
        B = T // 2
        exact = exact_ce_uniform_regret(T, B)
        mc, se = mc_ce_uniform_regret(T, B, reps=4000 if T <= 1000 else 2000)
        print(f"T={T:6d}  exact={exact:.4f}  mc={mc:.4f}±{se:.4f}  diff={mc-exact:+.4f}")
