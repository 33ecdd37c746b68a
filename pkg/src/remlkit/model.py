"""Linear mixed model y = X tau + Z u + e with variance-component structure.

The variance of y is sigma2 * H(kappa) with

    H(kappa) = I + sum_k kappa_k Z_k Z_k^T,

i.e. R = I and G = blockdiag(kappa_k I_{b_k}).  The derivative matrices
dH/dkappa_k = Z_k Z_k^T are never materialized; ``hdot_matvec`` applies them.
Random-factor indices ``k`` are zero-based throughout the package.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sps

from .errors import DataError, RankDeficientError

KAPPA_MIN = 1e-8


@dataclass(frozen=True, eq=False)
class RandomFactor:
    """One random term: indicator design Z_k (n x b_k, CSC) and its level labels."""

    name: str
    Z: sps.csc_matrix
    levels: tuple

    @property
    def size(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Immutable container for X, the random factors and y."""

    X: np.ndarray
    factors: tuple
    y: np.ndarray
    fixed_names: tuple = ("(intercept)",)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return len(self.factors)

    @property
    def sizes(self) -> tuple:
        return tuple(f.size for f in self.factors)

    @property
    def b(self) -> int:
        return int(sum(self.sizes))

    @property
    def order(self) -> int:
        """Order p + b of the mixed-model equations."""
        return self.p + self.b

    @property
    def names(self) -> tuple:
        return tuple(f.name for f in self.factors)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Start of each random block inside the (p + b) effect vector; length q + 1."""
        return self.p + np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)

    @cached_property
    def Z(self) -> sps.csc_matrix:
        if not self.factors:
            return sps.csc_matrix((self.n, 0))
        return sps.hstack([f.Z for f in self.factors], format="csc")

    @cached_property
    def W(self) -> sps.csc_matrix:
        return sps.hstack([sps.csc_matrix(self.X), self.Z], format="csc")


@dataclass(frozen=True, eq=False)
class Theta:
    """Variance parameters: residual scale sigma2 and variance ratios kappa."""

    sigma2: float
    kappa: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float)).copy()
        kappa.setflags(write=False)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if kappa.ndim != 1 or not np.all(np.isfinite(kappa)) or np.any(kappa < 0):
            raise ValueError(f"kappa must be finite and nonnegative, got {kappa}")

    @property
    def q(self) -> int:
        return self.kappa.size

    def vector(self) -> np.ndarray:
        return np.concatenate([[self.sigma2], self.kappa])

    @classmethod
    def from_vector(cls, v) -> "Theta":
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1:])

    def replace(self, sigma2=None, kappa=None) -> "Theta":
        return Theta(self.sigma2 if sigma2 is None else sigma2,
                     self.kappa if kappa is None else kappa)

    def __repr__(self):
        k = ", ".join(f"{x:.6g}" for x in self.kappa)
        return f"Theta(sigma2={self.sigma2:.6g}, kappa=[{k}])"


def _is_missing(values: pd.Series) -> np.ndarray:
    miss = values.isna().to_numpy()
    if values.dtype == object:
        miss |= values.astype(str).str.strip().eq("").to_numpy()
    return miss


def _factor_codes(frame: pd.DataFrame, term: str):
    """Integer codes (first-appearance order, -1 = unobserved) for a term 'a' or 'a.b'."""
    parts = term.split(".")
    for part in parts:
        if part not in frame.columns:
            raise DataError(f"random term {term!r} refers to unknown column {part!r}")
    codes, labels = None, None
    for part in parts:
        col = frame[part]
        miss = _is_missing(col)
        c, lev = pd.factorize(col.where(~miss), sort=False, use_na_sentinel=True)
        c = np.where(miss, -1, c).astype(np.int64)
        lev = [str(x) for x in lev]
        if codes is None:
            codes, labels = c, [(x,) for x in lev]
            continue
        width = max(len(lev), 1)
        combined = np.where((codes >= 0) & (c >= 0), codes * width + c, -1)
        kept = combined >= 0
        new_codes = np.full(combined.shape, -1, dtype=np.int64)
        if kept.any():
            nc, uniq = pd.factorize(combined[kept], sort=False)
            new_codes[kept] = nc
            labels = [labels[u // width] + (lev[u % width],) for u in uniq]
        else:
            labels = []
        codes = new_codes
    return codes, tuple(".".join(lab) for lab in labels)


def indicator_matrix(codes: np.ndarray, nlevels: int) -> sps.csc_matrix:
    """n x nlevels 0/1 matrix with a single one per observed row."""
    rows = np.flatnonzero(codes >= 0)
    data = np.ones(rows.size)
    return sps.csc_matrix((data, (rows, codes[rows])), shape=(codes.size, nlevels))


def _check_rank(X: np.ndarray, names: Sequence[str]):
    n, p = X.shape
    if n <= p:
        raise DataError(f"n must exceed p (n={n}, p={p})")
    if np.linalg.matrix_rank(X) == p:
        return
    bad, kept = [], []
    for j in range(p):
        trial = kept + [j]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            kept = trial
        else:
            bad.append(names[j])
    raise RankDeficientError(
        "fixed-effect design is rank deficient; dependent columns: " + ", ".join(bad), bad)


def build_model(data, response, random: Sequence[str] = (), fixed: Sequence[str] = ()) -> ModelSpec:
    """Materialize X, Z_1..Z_q and y from factor-coded records.

    ``data`` is a DataFrame or a mapping of column name to values.  ``response``
    is a column name or an explicit vector.  ``random`` lists random terms;
    an interaction is written ``"a.b"``.  ``fixed`` lists numeric covariates
    added to the intercept column.
    """
    frame = data if isinstance(data, pd.DataFrame) else pd.DataFrame(dict(data))
    if isinstance(response, str):
        if response not in frame.columns:
            raise DataError(f"response column {response!r} not found")
        y = pd.to_numeric(frame[response], errors="coerce").to_numpy(dtype=float)
    else:
        y = np.asarray(response, dtype=float).ravel()
    n = y.size
    if n == 0:
        raise DataError("empty data")
    if len(frame) not in (0, n) or (len(frame) == 0 and (random or fixed)):
        raise DataError(f"response has {n} values but table has {len(frame)} rows")
    if not np.all(np.isfinite(y)):
        raise DataError("response contains missing or non-finite values")

    cols = [np.ones(n)]
    names = ["(intercept)"]
    for name in fixed:
        if name not in frame.columns:
            raise DataError(f"fixed column {name!r} not found")
        x = pd.to_numeric(frame[name], errors="coerce").to_numpy(dtype=float)
        if not np.all(np.isfinite(x)):
            raise DataError(f"fixed column {name!r} has missing or non-numeric values")
        cols.append(x)
        names.append(name)
    X = np.column_stack(cols)
    _check_rank(X, names)

    factors = []
    for term in random:
        codes, labels = _factor_codes(frame, term)
        if len(labels) == 0:
            raise DataError(f"random term {term!r} has no observed levels")
        if len(labels) == 1:
            raise DataError(f"random term {term!r} has a single level (degenerate Z)")
        factors.append(RandomFactor(term, indicator_matrix(codes, len(labels)), labels))
    return ModelSpec(X=X, factors=tuple(factors), y=y, fixed_names=tuple(names))


def model_from_arrays(X, Zs, y, names=None) -> ModelSpec:
    """Build a ModelSpec from explicit matrices (used by tests and simulations)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise DataError("X and y disagree on n")
    fixed_names = ["(intercept)"] + [f"x{j}" for j in range(1, X.shape[1])]
    _check_rank(X, fixed_names)
    names = names or [f"u{k + 1}" for k in range(len(Zs))]
    factors = []
    for name, Z in zip(names, Zs):
        Z = sps.csc_matrix(Z, dtype=float)
        if Z.shape[0] != y.size:
            raise DataError(f"Z for {name!r} has {Z.shape[0]} rows, expected {y.size}")
        factors.append(RandomFactor(name, Z, tuple(str(j) for j in range(Z.shape[1]))))
    return ModelSpec(X=X, factors=tuple(factors), y=y, fixed_names=tuple(fixed_names))


def _kappa(model: ModelSpec, theta) -> np.ndarray:
    kappa = theta.kappa if isinstance(theta, Theta) else np.atleast_1d(np.asarray(theta, dtype=float))
    if kappa.size != model.q:
        raise ValueError(f"expected {model.q} variance ratios, got {kappa.size}")
    return kappa


def _check_rows(model: ModelSpec, v: np.ndarray):
    if v.shape[0] != model.n:
        raise ValueError(f"dimension mismatch: vector has {v.shape[0]} rows, model has n={model.n}")


def hdot_matvec(model: ModelSpec, k: int, v) -> np.ndarray:
    """Apply dH/dkappa_k = Z_k Z_k^T to v (vector or n x r block)."""
    if not 0 <= k < model.q:
        raise IndexError(f"random factor index {k} out of range 0..{model.q - 1}")
    v = np.asarray(v, dtype=float)
    _check_rows(model, v)
    Z = model.factors[k].Z
    return Z @ (Z.T @ v)


def h_matvec(model: ModelSpec, theta, v) -> np.ndarray:
    """Apply H(kappa) = I + sum_k kappa_k Z_k Z_k^T to v without forming H."""
    kappa = _kappa(model, theta)
    v = np.asarray(v, dtype=float)
    _check_rows(model, v)
    out = v.copy()
    for k, f in enumerate(model.factors):
        if kappa[k] != 0.0:
            out += kappa[k] * (f.Z @ (f.Z.T @ v))
    return out


# -- model descriptor ("key = value" lines) ---------------------------------

@dataclass(frozen=True)
class ModelDescriptor:
    response: str
    fixed: tuple = ()
    random: tuple = ()


def _split_list(value: str) -> tuple:
    return tuple(t for t in re.split(r"[\s,]+", value.strip()) if t)


def parse_keyvalue(text: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().lower()] = value.strip()
    return out


def parse_descriptor(text: str) -> ModelDescriptor:
    kv = parse_keyvalue(text)
    if "response" not in kv:
        raise DataError("model descriptor lacks 'response'")
    return ModelDescriptor(response=kv["response"],
                           fixed=_split_list(kv.get("fixed", "")),
                           random=_split_list(kv.get("random", "")))


def read_table(path) -> pd.DataFrame:
    """Read a CSV table keeping factor codes as strings."""
    return pd.read_csv(Path(path), dtype=str, keep_default_na=False, na_values=[""])


def load_model(table_path, descriptor_path) -> ModelSpec:
    desc = parse_descriptor(Path(descriptor_path).read_text())
    return build_model(read_table(table_path), desc.response, desc.random, desc.fixed)
