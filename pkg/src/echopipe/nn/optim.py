"""RMSProp."""
from __future__ import annotations

import numpy as np


def rmsprop_step(param, grad, v, lr=1e-3, rho=0.9, eps=1e-8):
    """One RMSProp update; returns ``(new_param, new_v)``.

    v <- rho * v + (1 - rho) * g**2 ;  param <- param - lr * g / sqrt(v + eps)
    """
    v = rho * v + (1 - rho) * np.square(grad)
    return param - lr * grad / np.sqrt(v + eps), v


class RMSProp:
    def __init__(self, lr=1e-3, rho=0.9, eps=1e-8):
        self.lr, self.rho, self.eps = lr, rho, eps
        self.state = None

    def step(self, params, grads):
        """Update every ParamBlock in place from the matching (dw, db) pairs."""
        if self.state is None:
            self.state = [(np.zeros_like(p.weight), np.zeros_like(p.bias)) for p in params]
        for k, (p, (dw, db)) in enumerate(zip(params, grads)):
            vw, vb = self.state[k]
            p.weight, vw = rmsprop_step(p.weight, dw, vw, self.lr, self.rho, self.eps)
            p.bias, vb = rmsprop_step(p.bias, db, vb, self.lr, self.rho, self.eps)
            p.weight = p.weight.astype(dw.dtype, copy=False)
            p.bias = p.bias.astype(db.dtype, copy=False)
            self.state[k] = (vw, vb)
