import numpy as np

from dynattn.static import attention


def rel_err(got, want):
    return abs(got - want) / abs(want) if want != 0 else abs(got - want)


def random_qkv(seed, n, d, scale=0.5):
    rng = np.random.default_rng(seed)
    Q = rng.uniform(-scale, scale, (n, d))
    K = rng.uniform(-scale, scale, (n, d))
    V = rng.uniform(1.0, 2.0, (n, d))
    return Q, K, V


class Mirror:
    """Applies the same updates to plain copies of K and V for oracle comparison."""

    def __init__(self, Q, K, V):
        self.Q, self.K, self.V = Q.copy(), K.copy(), V.copy()

    def update_k(self, i, j, delta):
        self.K[i, j] += delta

    def update_v(self, i, j, delta):
        self.V[i, j] += delta

    def output(self):
        return attention(self.Q, self.K, self.V)
