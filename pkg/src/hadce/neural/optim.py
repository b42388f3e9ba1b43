import numpy as np


def adam_init():
    return {"t": 0, "m": {}, "v": {}}


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update of every parameter that has a gradient.

    Parameters without an entry in ``grads`` (frozen groups) are untouched.
    """
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, g in grads.items():
        m = state["m"].get(name)
        if m is None:
            m = state["m"][name] = np.zeros_like(g)
            state["v"][name] = np.zeros_like(g)
        v = state["v"][name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] -= (lr / c1) * m / (np.sqrt(v / c2) + eps)
    return params, state
