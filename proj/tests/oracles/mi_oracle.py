"""Sampling bias of the plug-in mutual information estimate under independence."""


def expected(n=10000, diseases=40, cells=18):
    # Miller-Madow: E[I_hat] ~ (|X|-1)(|Y|-1) / (2N) nats for independent X, Y.
    bias = (diseases - 1) * (cells - 1) / (2.0 * n)
    return {"records": n, "bias_nats": bias, "bound_nats": 3.0 * bias}
