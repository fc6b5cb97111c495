import numpy as np


class Adam:
    """Adaptive moment estimation over a dict of parameter tensors."""

    def __init__(self, params: dict, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr, self.betas, self.eps = lr, betas, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state(self, prefix):
        out = {f"{prefix}.t": np.array(self.t)}
        for k in self.params:
            out[f"{prefix}.m.{k}"] = self.m[k]
            out[f"{prefix}.v.{k}"] = self.v[k]
        return out

    def load(self, arrays, prefix):
        self.t = int(arrays[f"{prefix}.t"])
        for k in self.params:
            self.m[k] = np.array(arrays[f"{prefix}.m.{k}"], dtype=float)
            self.v[k] = np.array(arrays[f"{prefix}.v.{k}"], dtype=float)
