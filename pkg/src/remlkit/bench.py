"""Three-way crossed variety-trial benchmark data (year x centre x variety).

Structure: a trial runs in each (year, centre) with probability ``trial_prob``.
Control varieties are entered in every year; the others enter in a uniformly
drawn year and stay for 1 + Poisson(``poisson_mean``) years (clipped to the
study period).  Each variety active in a year appears in each of that year's
trials with probability ``entry_prob``, with ``reps`` records per appearance.

Response: grand mean plus normal effects for year, centre, variety and the
three two-way interactions, plus a normal residual.  Effect variances are
sigma2 * gamma_k.  Randomness comes from three independent PCG64 streams
spawned from one seed (structure, effects, residuals), so the layout does not
depend on the variance components.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError
from .model import ModelSpec, Theta, build_model, parse_keyvalue

TERMS = ("year", "centre", "variety", "year.centre", "year.variety", "variety.centre")
DEFAULT_GAMMA = {"year": 0.5, "centre": 0.3, "variety": 1.0,
                 "year.centre": 0.4, "year.variety": 0.2, "variety.centre": 0.1}
SUMMARY_FIELDS = ("y", "c", "v", "y.c", "y.v", "v.c", "units", "v/y", "y/v")

# published benchmark rows: y, c, v, y.c, y.v, v.c, units, v/y, y/v, controls
TABLE2 = {
    "P1": (12, 22, 130, 132, 673, 2518, 6667, 56.1, 5.2, 10),
    "P2": (15, 25, 160, 180, 888, 3527, 9595, 59.2, 5.6, 10),
    "P3": (22, 25, 188, 264, 1177, 4215, 12718, 53.5, 6.3, 12),
    "P4": (25, 25, 262, 300, 1612, 5907, 17420, 64.5, 6.2, 12),
    "P5": (25, 25, 390, 300, 2345, 8625, 25334, 93.8, 6.0, 15),
    "P6": (25, 35, 390, 425, 2345, 12249, 35887, 93.8, 6.0, 15),
    "P7": (30, 35, 470, 510, 3013, 15087, 46113, 100.4, 6.4, 20),
    "P8": (30, 35, 620, 510, 3835, 19737, 58685, 127.8, 6.2, 20),
    "P9": (35, 40, 720, 700, 4522, 26432, 81396, 129.2, 6.3, 20),
    "P10": (40, 50, 820, 1000, 5262, 37701, 118403, 131.6, 6.4, 20),
}
# published symbolic statistics: order, nnz(C), nnz(L), LDL^T flops
TABLE3 = {
    "P1": (3488, 56946, 112618, 8943842),
    "P2": (4796, 80946, 172023, 17175555),
    "P3": (5892, 105059, 273315, 40768817),
    "P4": (8132, 144240, 377761, 60714709),
    "P5": (11711, 209235, 507711, 75897428),
    "P6": (15470, 291318, 718701, 149074099),
    "P7": (19146, 370799, 1020414, 270835518),
    "P8": (24768, 473891, 1196903, 290699965),
    "P9": (32450, 648237, 1779662, 600925570),
    "P10": (44874, 932054, 2817463, 1391099157),
}


@dataclass(frozen=True)
class BenchParams:
    years: int
    centres: int
    varieties: int
    controls: int = 10
    poisson_mean: float = 4.0
    trial_prob: float = 0.5
    entry_prob: float = 0.9
    reps: int = 1
    mean: float = 10.0
    sigma2: float = 1.0
    gamma: dict = field(default_factory=lambda: dict(DEFAULT_GAMMA))
    seed: int = 0

    def __post_init__(self):
        for name in ("years", "centres", "varieties", "reps"):
            if int(getattr(self, name)) < 1:
                raise DataError(f"{name} must be at least 1")
        if not 0 <= self.controls <= self.varieties:
            raise DataError("controls must lie between 0 and the number of varieties")
        if not self.poisson_mean > 0:
            raise DataError("poisson_mean must be positive")
        for name in ("trial_prob", "entry_prob"):
            if not 0 < getattr(self, name) <= 1:
                raise DataError(f"{name} must lie in (0, 1]")
        if not self.sigma2 > 0:
            raise DataError("sigma2 must be positive")
        g = dict(self.gamma)
        unknown = set(g) - set(TERMS)
        if unknown:
            raise DataError(f"unknown variance terms: {sorted(unknown)}")
        if any(not v >= 0 for v in g.values()):
            raise DataError("variance ratios must be nonnegative")
        object.__setattr__(self, "gamma", {t: float(g.get(t, DEFAULT_GAMMA[t])) for t in TERMS})

    @property
    def theta(self) -> Theta:
        return Theta(self.sigma2, [self.gamma[t] for t in TERMS])

    def with_seed(self, seed: int) -> "BenchParams":
        return replace(self, seed=int(seed))


def _preset(name, poisson_mean, **kw):
    y, c, v, *_, controls = TABLE2[name]
    return BenchParams(years=y, centres=c, varieties=v, controls=controls,
                       poisson_mean=poisson_mean, **kw)


# poisson means chosen so realized y.v lands near the published y.v (see calibrate_poisson_mean)
PRESETS = {
    "P1": _preset("P1", 5.2),
    "P2": _preset("P2", 4.9),
    "P3": _preset("P3", 4.8),
    "P4": _preset("P4", 4.9),
    "P5": _preset("P5", 4.9),
    "P6": _preset("P6", 4.8),
    "P7": _preset("P7", 5.0),
    "P8": _preset("P8", 4.9),
    "P9": _preset("P9", 5.0),
    "P10": _preset("P10", 5.0),
    "P1-mini": BenchParams(years=3, centres=4, varieties=10, controls=4, poisson_mean=1.0,
                           trial_prob=1.0, entry_prob=1.0, reps=7),
}


@dataclass(eq=False)
class BenchDataset:
    records: pd.DataFrame
    params: BenchParams
    counts: dict

    @property
    def theta(self) -> Theta:
        return self.params.theta

    @property
    def units(self) -> int:
        return len(self.records)

    def model(self) -> ModelSpec:
        """Grand mean fixed, all six terms random."""
        return build_model(self.records, "response", random=TERMS)


def _structure(p: BenchParams, rng: np.random.Generator):
    """(year, centre, variety) index arrays of all records."""
    Y, C, V = p.years, p.centres, p.varieties
    trials = rng.random((Y, C)) < p.trial_prob
    active = np.zeros((Y, V), dtype=bool)
    active[:, :p.controls] = True
    others = V - p.controls
    if others:
        life = 1 + rng.poisson(p.poisson_mean, size=others)
        start = rng.integers(0, Y, size=others)
        for j in range(others):
            active[start[j]:min(start[j] + life[j], Y), p.controls + j] = True
    # every (year, variety, centre) with a trial that year and an active variety
    yy, vv = np.nonzero(active)
    rows = []
    for t in range(Y):
        cs = np.flatnonzero(trials[t])
        vs = vv[yy == t]
        if cs.size == 0 or vs.size == 0:
            continue
        keep = rng.random((vs.size, cs.size)) < p.entry_prob
        vi, ci = np.nonzero(keep)
        rows.append(np.column_stack([np.full(vi.size, t), cs[ci], vs[vi]]))
    if not rows:
        raise DataError("parameters imply zero records")
    cells = np.vstack(rows)
    if cells.shape[0] == 0:
        raise DataError("parameters imply zero records")
    return np.repeat(cells, p.reps, axis=0)


def generate(params: BenchParams) -> BenchDataset:
    """Deterministic for a fixed seed."""
    p = params
    s_struct, s_eff, s_res = np.random.SeedSequence(p.seed).spawn(3)
    cells = _structure(p, np.random.Generator(np.random.PCG64(s_struct)))
    yi, ci, vi = cells[:, 0], cells[:, 1], cells[:, 2]

    eff_rng = np.random.Generator(np.random.PCG64(s_eff))
    Y, C, V = p.years, p.centres, p.varieties
    shapes = {"year": (Y,), "centre": (C,), "variety": (V,),
              "year.centre": (Y, C), "year.variety": (Y, V), "variety.centre": (V, C)}
    index = {"year": (yi,), "centre": (ci,), "variety": (vi,),
             "year.centre": (yi, ci), "year.variety": (yi, vi), "variety.centre": (vi, ci)}
    response = np.full(len(cells), p.mean)
    for term in TERMS:
        sd = np.sqrt(p.sigma2 * p.gamma[term])
        effects = eff_rng.standard_normal(shapes[term]) * sd
        response += effects[index[term]]
    res_rng = np.random.Generator(np.random.PCG64(s_res))
    response += res_rng.standard_normal(len(cells)) * np.sqrt(p.sigma2)

    wy, wc, wv = len(str(Y)), len(str(C)), len(str(V))
    frame = pd.DataFrame({
        "year": [f"Y{t + 1:0{wy}d}" for t in yi],
        "centre": [f"C{c + 1:0{wc}d}" for c in ci],
        "variety": [f"V{v + 1:0{wv}d}" for v in vi],
        "response": response,
    })
    return BenchDataset(records=frame, params=p, counts=_counts(frame))


def _counts(frame: pd.DataFrame) -> dict:
    pairs = lambda a, b: int(frame[[a, b]].drop_duplicates().shape[0])  # noqa: E731
    return {"y": int(frame["year"].nunique()), "c": int(frame["centre"].nunique()),
            "v": int(frame["variety"].nunique()), "y.c": pairs("year", "centre"),
            "y.v": pairs("year", "variety"), "v.c": pairs("variety", "centre"),
            "units": int(len(frame))}


def summarize(dataset: BenchDataset) -> dict:
    """Benchmark row: y, c, v, y.c, y.v, v.c, units, v/y, y/v."""
    k = dataset.counts
    row = {f: k[f] for f in SUMMARY_FIELDS[:7]}
    row["v/y"] = round(k["y.v"] / k["y"], 1)
    row["y/v"] = round(k["y.v"] / k["v"], 1)
    return row


def mme_order(counts: dict) -> int:
    """1 (grand mean) + the level counts of the six random terms."""
    return 1 + sum(int(counts[t]) for t in ("y", "c", "v", "y.c", "y.v", "v.c"))


def published_counts(name: str) -> dict:
    y, c, v, yc, yv, vc, units, *_ = TABLE2[name]
    return {"y": y, "c": c, "v": v, "y.c": yc, "y.v": yv, "v.c": vc, "units": units}


def write_dataset(dataset: BenchDataset, out_dir, stem: str = "bench") -> tuple:
    """CSV of records plus a JSON sidecar with params, true theta and counts."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    csv_path, meta_path = d / f"{stem}.csv", d / f"{stem}.json"
    dataset.records.to_csv(csv_path, index=False, float_format="%.17g", lineterminator="\n")
    th = dataset.theta
    meta = {"params": asdict(dataset.params),
            "theta": {"sigma2": th.sigma2, "kappa": dict(zip(TERMS, th.kappa.tolist()))},
            "counts": dataset.counts, "summary": summarize(dataset),
            "model": {"response": "response", "fixed": [], "random": list(TERMS)}}
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path, meta_path


def model_descriptor_text() -> str:
    return "response = response\nrandom = " + " ".join(TERMS) + "\n"


_INT_KEYS = ("years", "centres", "varieties", "controls", "reps", "seed")
_FLOAT_KEYS = ("poisson_mean", "trial_prob", "entry_prob", "mean", "sigma2")


def params_from_text(text: str, seed: int | None = None) -> BenchParams:
    """Parse ``key = value`` parameters; ``preset = P1`` supplies defaults.

    Variance ratios are given as ``gamma.<term> = value``.
    """
    kv = parse_keyvalue(text)
    base = {}
    if "preset" in kv:
        name = kv.pop("preset")
        key = next((k for k in PRESETS if k.lower() == name.lower()), None)
        if key is None:
            raise DataError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        base = asdict(PRESETS[key])
    gamma = dict(base.get("gamma", DEFAULT_GAMMA))
    for k, v in kv.items():
        try:
            if k.startswith("gamma."):
                gamma[k[6:]] = float(v)
            elif k in _INT_KEYS:
                base[k] = int(v)
            elif k in _FLOAT_KEYS:
                base[k] = float(v)
            else:
                raise DataError(f"unknown parameter {k!r}")
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"parameter {k!r}: cannot parse {v!r}") from None
    base["gamma"] = gamma
    if seed is not None:
        base["seed"] = int(seed)
    missing = [k for k in ("years", "centres", "varieties") if k not in base]
    if missing:
        raise DataError(f"missing parameters: {', '.join(missing)}")
    return BenchParams(**base)


def calibrate_poisson_mean(name: str, seeds=range(5), grid=np.arange(2.0, 9.01, 0.1)) -> float:
    """Poisson mean whose average realized y.v is closest to the published value."""
    target = TABLE2[name][4]
    base = PRESETS[name]
    best, best_err = None, np.inf
    for lam in grid:
        vals = []
        for s in seeds:
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(s).spawn(3)[0]))
            cells = _structure(replace(base, poisson_mean=float(lam), entry_prob=1.0,
                                       trial_prob=1.0), rng)
            vals.append(np.unique(cells[:, 0] * base.varieties + cells[:, 2]).size)
        err = abs(np.mean(vals) - target)
        if err < best_err:
            best, best_err = float(lam), err
    return best
