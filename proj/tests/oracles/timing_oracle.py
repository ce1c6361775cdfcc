"""Closed-form timing means and sampling tolerances."""
import math

DEFAULT = dict(c0=0.05, c1=1e-6, tpot=0.02, net_mu=0.05, net_sigma=0.003, noise_rel=0.001,
               outlier_p=0.02, outlier_scale=5.0)


def prefill_mean(n, k, p=DEFAULT):
    return p["c0"] + p["c1"] * (n - k) * n + p["net_mu"]


def effective_sigma(p=DEFAULT):
    return math.sqrt((1 - p["outlier_p"]) * p["noise_rel"] ** 2
                     + p["outlier_p"] * (p["noise_rel"] * p["outlier_scale"]) ** 2)


def expected():
    cases = [(800, 0), (800, 16), (800, 400), (800, 800), (1600, 0), (1600, 32), (400, 0), (16, 16)]
    out = {"prefill_mean": [{"n": n, "k": k, "mean": prefill_mean(n, k)} for n, k in cases]}
    draws, tokens = 20000, 50
    base = DEFAULT["tpot"] * tokens
    out["decode"] = {"tokens": tokens, "draws": draws, "mean": base,
                     "tolerance": 5 * base * effective_sigma() / math.sqrt(draws)}
    # Prefill draws at (800, 0): compute noise scaled by the base plus network noise.
    pbase = DEFAULT["c0"] + DEFAULT["c1"] * 800 * 800
    sd = math.sqrt((pbase * effective_sigma()) ** 2 + DEFAULT["net_sigma"] ** 2)
    out["prefill_sample"] = {"n": 800, "k": 0, "draws": draws, "mean": prefill_mean(800, 0),
                             "tolerance": 5 * sd / math.sqrt(draws)}
    # Gap between adjacent block levels at n=800, block 16.
    out["gap_800"] = DEFAULT["c1"] * 16 * 800
    return out
