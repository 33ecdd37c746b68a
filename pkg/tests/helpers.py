"""Random model instances and small numerical utilities shared by the tests."""
import numpy as np
import scipy.sparse as sps

from remlkit.model import Theta, model_from_arrays

TOY_Z = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)
TOY_Y = np.array([1.0, 2.0, 3.0, 4.0])


def toy_model():
    return model_from_arrays(np.ones(4), [TOY_Z], TOY_Y, names=["group"])


def _indicator(codes, nlev):
    used = np.unique(codes)
    remap = -np.ones(nlev, dtype=int)
    remap[used] = np.arange(used.size)
    c = remap[codes]
    return sps.csc_matrix((np.ones(c.size), (np.arange(c.size), c)), shape=(c.size, used.size))


def random_model(rng, n=60, q=2, p=1, levels=(4, 12)):
    """Crossed random factors with random level counts; X = [1, covariates]."""
    Zs = []
    for _ in range(q):
        while True:
            nlev = int(rng.integers(levels[0], levels[1] + 1))
            codes = rng.integers(0, nlev, size=n)
            if np.unique(codes).size >= 2:
                break
        Zs.append(_indicator(codes, nlev))
    X = np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(p - 1)])
    theta = random_theta(rng, q)
    y = simulate_y(rng, X, Zs, theta)
    return model_from_arrays(X, Zs, y), theta


def random_theta(rng, q):
    return Theta(float(rng.uniform(0.5, 2.0)), rng.uniform(0.1, 2.0, size=q))


def simulate_y(rng, X, Zs, theta, size=None):
    n = X.shape[0]
    shape = (n,) if size is None else (n, size)
    y = (X @ rng.normal(size=X.shape[1]))[:, None] if size else X @ rng.normal(size=X.shape[1])
    s = np.sqrt(theta.sigma2)
    for k, Z in enumerate(Zs):
        b = Z.shape[1]
        u = rng.normal(size=(b,) if size is None else (b, size)) * s * np.sqrt(theta.kappa[k])
        y = y + Z @ u
    return y + rng.normal(size=shape) * s


def rel_err(a, b, floor=0.0):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))
