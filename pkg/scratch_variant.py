import math
import numpy as np
from numba import njit
import multisec as ms


@njit
def cwg_variant_value(u, vals, budget, qstar, t_tilde, radius_scale):
    T = u.shape[0]
    b = budget
    acc = 0.0
    for t in range(t_tilde):
        rem = T - t
        p = 1.0 - b / rem
        if p < 0.0:
            p = 0.0
        radius = radius_scale * math.sqrt(2.0 * math.log(rem) / rem)
        thr = qstar if abs(p - qstar) <= radius else p
        if u[t] >= thr and b > 0:
            acc += vals[t]
            b -= 1
    if t_tilde < T:
        pf = 1.0 - b / (T - t_tilde)
        if pf < 0.0:
            pf = 0.0
        for t in range(t_tilde, T):
            if u[t] >= pf and b > 0:
                acc += vals[t]
                b -= 1
    return acc


def main():
    f0 = ms.FBeta(0.0)
    R = 150
    variants = (
        ("scale=1.0 tau0=44 (mine)", 1.0, 44),
        ("scale=0.659 tau0=19 (log10)", 0.659, 19),
        ("scale=0.5  tau0=44", 0.5, 44),
        ("scale=0.35 tau0=44", 0.35, 44),
        ("scale=0.0  tau0=44 (no snap=CE+tail)", 0.0, 44),
    )
    for T in (1000, 10000, 100000):
        B = T // 2
        print(f"T={T}")
        paths = []
        for r in range(R):
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([77, T, r])))
            paths.append(ms.draw_path(f0, T, rng))
        offs = [ms.offline_value(p, B)[0] for p in paths]
        for label, scale, tau0 in variants:
            tt = max(0, T - tau0)
            regs = [
                off - cwg_variant_value(p.uniforms, p.values, B, 0.5, tt, scale)
                for p, off in zip(paths, offs)
            ]
            m = float(np.mean(regs))
            se = float(np.std(regs, ddof=1) / math.sqrt(R))
            print(f"  {label:38s} regret {m:8.3f} ± {se:.3f}")


if __name__ == "__main__":
    main()
