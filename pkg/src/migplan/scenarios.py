"""Monte Carlo scenarios for RES availability and load variation.

Random streams come from numpy's PCG64 bit generator. Scenario ``n`` of a
run with seed ``s`` draws from ``PCG64(SeedSequence([s, n]))``, so sets can
be generated in any order or in parallel with identical results.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, special

from .data_model import PlanningProblem, ValidationError

SCHEMA_VERSION = 1
PROB_TOL = 1e-9
BINARY_MAGIC = b"MIGSCEN1"
PROVENANCES = ("generated", "reduced", "loaded")


def _ro(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---- profile ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProfileSpec:
    """Mean typical-day curves plus dispersion parameters.

    ``wind_shape`` holds one Weibull shape per day type, ``solar_beta`` the
    Beta attenuation ``(a, b)`` per (day, hour) and ``load_std`` the
    lognormal sigma per hour. ``None`` (or zero std) switches a source's
    randomness off so draws equal the mean curve.
    """

    wind_mean: np.ndarray            # (D, H) in [0, 1]
    solar_mean: np.ndarray           # (D, H) in [0, 1]
    load_mean: np.ndarray            # (D, H) > 0
    wind_shape: np.ndarray | None = None   # (D,)
    solar_beta: np.ndarray | None = None   # (D, H, 2)
    load_std: np.ndarray | None = None     # (H,)
    cut_in: float = 3.0
    rated_speed: float = 12.0
    cut_out: float = 25.0

    def __post_init__(self):
        wm, sm, lm = _ro(self.wind_mean), _ro(self.solar_mean), _ro(self.load_mean)
        if wm.ndim != 2 or sm.shape != wm.shape or lm.shape != wm.shape:
            raise ValidationError("profile", "mean curves must share one (days, hours) shape")
        if np.any((wm < 0) | (wm > 1)) or np.any((sm < 0) | (sm > 1)):
            raise ValidationError("profile", "RES mean curves must lie in [0, 1]")
        if np.any(lm <= 0):
            raise ValidationError("profile.load_mean", "must be > 0")
        D, H = wm.shape
        object.__setattr__(self, "wind_mean", wm)
        object.__setattr__(self, "solar_mean", sm)
        object.__setattr__(self, "load_mean", lm)
        if self.wind_shape is not None:
            ws = _ro(self.wind_shape)
            if ws.shape != (D,) or np.any(ws <= 0):
                raise ValidationError("profile.wind_shape", f"need {D} positive values")
            object.__setattr__(self, "wind_shape", ws)
        if self.solar_beta is not None:
            sb = _ro(self.solar_beta)
            if sb.shape != (D, H, 2) or np.any(sb <= 0):
                raise ValidationError("profile.solar_beta", f"need positive (a, b) per {(D, H)}")
            object.__setattr__(self, "solar_beta", sb)
        if self.load_std is not None:
            ls = _ro(self.load_std)
            if ls.shape != (H,) or np.any(ls < 0):
                raise ValidationError("profile.load_std", f"need {H} values >= 0")
            object.__setattr__(self, "load_std", ls)
        if not 0 <= self.cut_in < self.rated_speed < self.cut_out:
            raise ValidationError("profile", "need 0 <= cut_in < rated_speed < cut_out")

    @property
    def days(self) -> int:
        return self.wind_mean.shape[0]

    @property
    def hours(self) -> int:
        return self.wind_mean.shape[1]

    def to_dict(self) -> dict:
        def opt(a):
            return None if a is None else a.tolist()
        return {"wind_mean": self.wind_mean.tolist(), "solar_mean": self.solar_mean.tolist(),
                "load_mean": self.load_mean.tolist(), "wind_shape": opt(self.wind_shape),
                "solar_beta": opt(self.solar_beta), "load_std": opt(self.load_std),
                "cut_in": self.cut_in, "rated_speed": self.rated_speed, "cut_out": self.cut_out}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProfileSpec":
        keys = ("wind_mean", "solar_mean", "load_mean", "wind_shape", "solar_beta", "load_std",
                "cut_in", "rated_speed", "cut_out")
        return cls(**{k: d[k] for k in keys if k in d and d[k] is not None})

    def without_dispersion(self) -> "ProfileSpec":
        return ProfileSpec(self.wind_mean, self.solar_mean, self.load_mean,
                           cut_in=self.cut_in, rated_speed=self.rated_speed, cut_out=self.cut_out)


def _time_of_day(H: int) -> np.ndarray:
    return 24.0 * (np.arange(H) + 0.5) / H


def default_profile(days: int = 4, hours: int = 24, load_std: float = 0.05) -> ProfileSpec:
    """Four seasonal day types (winter, spring, summer, autumn) cycled over ``days``."""
    season = np.arange(days) * 4 // max(days, 1) if days >= 4 else np.arange(days) % 4
    tod = _time_of_day(hours)
    wind_level = np.array([0.42, 0.36, 0.24, 0.33])[season]
    wind = wind_level[:, None] * (1.0 + 0.25 * np.cos(2 * np.pi * (tod - 3.0) / 24.0))[None, :]
    solar_peak = np.array([0.42, 0.60, 0.68, 0.50])[season]
    daylight = np.clip(np.sin(np.pi * (tod - 6.0) / 12.0), 0.0, None)
    solar = solar_peak[:, None] * daylight[None, :]
    load_level = np.array([0.95, 0.80, 1.00, 0.85])[season]
    diurnal = 0.62 + 0.38 * np.exp(-((tod - 19.0) / 3.5) ** 2) + 0.18 * np.exp(-((tod - 11.0) / 3.0) ** 2)
    load = load_level[:, None] * (diurnal / diurnal.max())[None, :]
    beta = np.empty((days, hours, 2))
    beta[..., 0], beta[..., 1] = 8.0, 2.0
    return ProfileSpec(
        wind_mean=np.clip(wind, 0.0, 1.0), solar_mean=solar, load_mean=load,
        wind_shape=np.full(days, 2.0), solar_beta=beta, load_std=np.full(hours, load_std))


# ---- wind power curve ----------------------------------------------------------

def power_curve(speed: np.ndarray, cut_in: float, rated: float, cut_out: float) -> np.ndarray:
    v = np.asarray(speed, dtype=float)
    ramp = (v - cut_in) / (rated - cut_in)
    return np.where(v < cut_in, 0.0, np.where(v < rated, ramp, np.where(v < cut_out, 1.0, 0.0)))


def expected_capacity_factor(scale: float, shape: float, cut_in: float, rated: float,
                             cut_out: float) -> float:
    """E[power_curve(V)] for V ~ Weibull(shape, scale), in closed form."""
    if scale <= 0:
        return 0.0

    def cdf(v):
        return -math.expm1(-((v / scale) ** shape))

    def partial_mean(v):  # E[V; V < v]
        return scale * math.gamma(1 + 1 / shape) * special.gammainc(1 + 1 / shape, (v / scale) ** shape)

    ramp = (partial_mean(rated) - partial_mean(cut_in) - cut_in * (cdf(rated) - cdf(cut_in))) / (rated - cut_in)
    return ramp + cdf(cut_out) - cdf(rated)


@lru_cache(maxsize=4096)
def weibull_scale_for(mean_cf: float, shape: float, cut_in: float, rated: float,
                      cut_out: float) -> float:
    """Weibull scale whose expected capacity factor equals ``mean_cf``.

    Targets above the curve's attainable maximum are clipped to it.
    """
    if mean_cf <= 0:
        return 0.0
    f = lambda c: expected_capacity_factor(c, shape, cut_in, rated, cut_out)
    res = optimize.minimize_scalar(lambda c: -f(c), bounds=(cut_in * 0.5, cut_out * 2.0),
                                   method="bounded", options={"xatol": 1e-10})
    c_best, f_best = float(res.x), -float(res.fun)
    if mean_cf >= f_best:
        return c_best
    return float(optimize.brentq(lambda c: f(c) - mean_cf, 1e-6, c_best, xtol=1e-13))


# ---- scenario containers -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scenario:
    """A view on one scenario of a ScenarioSet."""

    id: int
    probability: float
    res_availability: Mapping[str, np.ndarray]   # resource -> (T, D, H)
    load_factor: np.ndarray                      # (T, D, H)

    def availability(self, resource: str) -> np.ndarray:
        try:
            return self.res_availability[resource]
        except KeyError:
            raise ValidationError("scenario", f"no availability series for resource {resource!r}") from None


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """``N`` scenarios stored as dense arrays.

    ``availability`` has shape ``(N, R, T, D, H)`` with one slot per entry of
    ``resources``; ``load`` has shape ``(N, T, D, H)``.
    """

    resources: tuple[str, ...]
    availability: np.ndarray
    load: np.ndarray
    probabilities: np.ndarray
    seed: int = 0
    provenance: str = "generated"
    source_size: int = 0
    source_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        av, ld, pr = _ro(self.availability), _ro(self.load), _ro(self.probabilities)
        if ld.ndim != 4:
            raise ValidationError("scenarios.load", "expected shape (N, T, D, H)")
        N = ld.shape[0]
        if av.shape != (N, len(self.resources)) + ld.shape[1:]:
            raise ValidationError("scenarios.availability", "shape does not match load and resources")
        if pr.shape != (N,) or N < 1:
            raise ValidationError("scenarios.probabilities", "need one probability per scenario")
        if np.any(pr <= 0) or np.any(pr > 1):
            raise ValidationError("scenarios.probabilities", "each probability must be in (0, 1]")
        if abs(math.fsum(pr) - 1.0) > PROB_TOL:
            raise ValidationError("scenarios.probabilities",
                                  f"probabilities sum to {math.fsum(pr)!r}, not 1")
        if np.any(av < 0) or np.any(av > 1) or not np.all(np.isfinite(av)):
            raise ValidationError("scenarios.availability", "values must lie in [0, 1]")
        if np.any(ld < 0) or not np.all(np.isfinite(ld)):
            raise ValidationError("scenarios.load", "load factors must be finite and >= 0")
        if self.provenance not in PROVENANCES:
            raise ValidationError("scenarios.provenance", f"must be one of {PROVENANCES}")
        object.__setattr__(self, "availability", av)
        object.__setattr__(self, "load", ld)
        object.__setattr__(self, "probabilities", pr)
        object.__setattr__(self, "resources", tuple(self.resources))
        if not self.source_size:
            object.__setattr__(self, "source_size", N)
        if not self.source_ids:
            object.__setattr__(self, "source_ids", tuple(range(1, N + 1)))

    def __len__(self) -> int:
        return self.load.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.load.shape[1:])

    @property
    def uniform(self) -> bool:
        return bool(np.all(self.probabilities == self.probabilities[0]))

    def __getitem__(self, i: int) -> Scenario:
        return Scenario(i + 1, float(self.probabilities[i]),
                        {r: self.availability[i, j] for j, r in enumerate(self.resources)},
                        self.load[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, indices: Sequence[int], renormalize: bool = True) -> "ScenarioSet":
        idx = np.asarray(indices, dtype=int)
        pr = self.probabilities[idx]
        if renormalize:
            pr = pr / math.fsum(pr)
        return ScenarioSet(self.resources, self.availability[idx], self.load[idx], pr,
                           self.seed, self.provenance, self.source_size,
                           tuple(self.source_ids[i] for i in idx))

    def with_probabilities(self, probabilities) -> "ScenarioSet":
        return ScenarioSet(self.resources, self.availability, self.load, probabilities,
                           self.seed, self.provenance, self.source_size, self.source_ids)

    def check_compatible(self, problem: PlanningProblem) -> None:
        want = (problem.years, problem.typical_days, problem.hours)
        if self.dims != want:
            raise ValidationError("scenarios", f"dimensions {self.dims} do not match problem {want}")
        missing = [r for r in problem.resources if r not in self.resources]
        if missing:
            raise ValidationError("scenarios", f"missing availability for resources {missing}")

    def vectors(self) -> np.ndarray:
        """One flat row per scenario: availability series then load."""
        N = len(self)
        return np.concatenate([self.availability.reshape(N, -1), self.load.reshape(N, -1)], axis=1)


# ---- generation ---------------------------------------------------------------------

def _check_spec(spec: ProfileSpec, problem: PlanningProblem) -> None:
    if (spec.days, spec.hours) != (problem.typical_days, problem.hours):
        raise ValidationError("profile", f"profile covers {(spec.days, spec.hours)} "
                              f"but problem needs {(problem.typical_days, problem.hours)}")
    unknown = [r for r in problem.resources if r not in ("wind", "solar")]
    if unknown:
        raise ValidationError("profile", f"no profile for resources {unknown}; use 'wind' or 'solar'")


def _wind_scales(spec: ProfileSpec) -> np.ndarray:
    out = np.zeros((spec.days, spec.hours))
    for d in range(spec.days):
        for h in range(spec.hours):
            out[d, h] = weibull_scale_for(float(spec.wind_mean[d, h]), float(spec.wind_shape[d]),
                                          spec.cut_in, spec.rated_speed, spec.cut_out)
    return out


def _draw_one(spec: ProfileSpec, T: int, seed: int, n: int, scales) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, n])))
    D, H = spec.days, spec.hours
    shape = (T, D, H)
    if spec.wind_shape is None:
        wind = np.broadcast_to(spec.wind_mean, shape).copy()
    else:
        speed = scales[None] * rng.weibull(np.broadcast_to(spec.wind_shape[:, None], (D, H))[None], size=shape)
        wind = power_curve(speed, spec.cut_in, spec.rated_speed, spec.cut_out)
    if spec.solar_beta is None:
        solar = np.broadcast_to(spec.solar_mean, shape).copy()
    else:
        a, b = spec.solar_beta[..., 0], spec.solar_beta[..., 1]
        clear_sky = np.minimum(spec.solar_mean / (a / (a + b)), 1.0)
        solar = clear_sky[None] * rng.beta(a[None], b[None], size=shape)
    if spec.load_std is None or not np.any(spec.load_std > 0):
        load = np.broadcast_to(spec.load_mean, shape).copy()
    else:
        s = spec.load_std[None, None, :]
        load = spec.load_mean[None] * np.exp(s * rng.standard_normal(shape) - 0.5 * s ** 2)
    return np.clip(wind, 0.0, 1.0), np.clip(solar, 0.0, 1.0), load


def generate(spec: ProfileSpec, problem: PlanningProblem, count: int, seed: int) -> ScenarioSet:
    """``count`` equiprobable Monte Carlo scenarios over every (year, day, hour)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    _check_spec(spec, problem)
    T = problem.years
    scales = _wind_scales(spec) if spec.wind_shape is not None else None
    resources = tuple(problem.resources) or ("wind",)
    av = np.empty((count, len(resources), T, spec.days, spec.hours))
    ld = np.empty((count, T, spec.days, spec.hours))
    for n in range(count):
        wind, solar, load = _draw_one(spec, T, seed, n, scales)
        for j, r in enumerate(resources):
            av[n, j] = wind if r == "wind" else solar
        ld[n] = load
    return ScenarioSet(resources, av, ld, np.full(count, 1.0 / count), seed=seed,
                       provenance="generated", source_size=count)


def nominal_scenarios(spec: ProfileSpec, problem: PlanningProblem) -> ScenarioSet:
    """Single scenario holding the mean curves."""
    return generate(spec.without_dispersion(), problem, 1, 0)


# ---- reduction ------------------------------------------------------------------------

def _pairwise_distances(vec: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", vec, vec)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (vec @ vec.T)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(np.maximum(d2, 0.0))


def reduce(scenarios: ScenarioSet, target: int, reweight: bool = True) -> ScenarioSet:
    """Fast forward selection down to ``target`` scenarios.

    Each dropped scenario hands its probability to the nearest kept one
    (Euclidean distance over the concatenated series). With
    ``reweight=False`` the kept scenarios get uniform weights instead.
    """
    N = len(scenarios)
    if not 1 <= target <= N:
        raise ValueError(f"target must be in 1..{N}")
    p = scenarios.probabilities
    dist = _pairwise_distances(scenarios.vectors())
    nearest = np.full(N, np.inf)
    selected: list[int] = []
    free = np.ones(N, dtype=bool)
    for _ in range(target):
        cost = p @ np.minimum(nearest[:, None], dist)
        cost[~free] = np.inf
        u = int(np.argmin(cost))
        selected.append(u)
        free[u] = False
        nearest = np.minimum(nearest, dist[:, u])
    keep = sorted(selected)
    weights = {u: Fraction(float(p[u])) for u in keep}
    keep_arr = np.array(keep)
    for k in np.flatnonzero(free):
        owner = int(keep_arr[np.argmin(dist[k, keep_arr])])
        weights[owner] += Fraction(float(p[k]))
    total = sum(weights.values(), Fraction(0))
    if reweight:
        probs = np.array([float(weights[u] / total) for u in keep])
    else:
        probs = np.full(len(keep), 1.0 / len(keep))
    return ScenarioSet(scenarios.resources, scenarios.availability[keep_arr],
                       scenarios.load[keep_arr], probs, seed=scenarios.seed,
                       provenance="reduced", source_size=N,
                       source_ids=tuple(scenarios.source_ids[u] for u in keep))


# ---- persistence ----------------------------------------------------------------------

def _header(s: ScenarioSet) -> dict:
    N = len(s)
    T, D, H = s.dims
    return {"schema_version": SCHEMA_VERSION, "seed": int(s.seed), "provenance": s.provenance,
            "source_size": int(s.source_size), "source_ids": list(s.source_ids),
            "dims": {"N": N, "T": T, "D": D, "H": H}, "resources": list(s.resources)}


def save(scenarios: ScenarioSet, path: str | Path) -> None:
    """Write JSON (``.json``) or the binary columnar format (anything else)."""
    path = Path(path)
    head = _header(scenarios)
    if path.suffix == ".json":
        doc = dict(head, probabilities=scenarios.probabilities.tolist(),
                   availability=scenarios.availability.tolist(), load=scenarios.load.tolist())
        path.write_text(json.dumps(doc))
        return
    hb = json.dumps(head, sort_keys=True).encode()
    payload = np.concatenate([scenarios.probabilities, scenarios.availability.ravel(),
                              scenarios.load.ravel()]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        fh.write(payload.tobytes())


def _from_header(head: Mapping, probs, av, ld) -> ScenarioSet:
    if head.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError("scenarios.schema_version",
                              f"unsupported version {head.get('schema_version')}")
    return ScenarioSet(tuple(head["resources"]), av, ld, probs, seed=int(head["seed"]),
                       provenance="loaded", source_size=int(head["source_size"]),
                       source_ids=tuple(head["source_ids"]))


def load(path: str | Path) -> ScenarioSet:
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(BINARY_MAGIC):
        off = len(BINARY_MAGIC)
        if len(raw) < off + 8:
            raise ValidationError(str(path), "truncated scenario file")
        (hlen,) = struct.unpack_from("<Q", raw, off)
        off += 8
        try:
            head = json.loads(raw[off:off + hlen])
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise ValidationError(str(path), "truncated or corrupt scenario header") from None
        off += hlen
        dims = head["dims"]
        N, T, D, H = dims["N"], dims["T"], dims["D"], dims["H"]
        R = len(head["resources"])
        sizes = (N, N * R * T * D * H, N * T * D * H)
        need = 8 * sum(sizes)
        if len(raw) - off != need:
            raise ValidationError(str(path), f"payload has {len(raw) - off} bytes, expected {need}")
        data = np.frombuffer(raw, dtype="<f8", offset=off).astype(float)
        probs = data[:N]
        av = data[N:N + sizes[1]].reshape(N, R, T, D, H)
        ld = data[N + sizes[1]:].reshape(N, T, D, H)
        return _from_header(head, probs, av, ld)
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise ValidationError(str(path), "malformed or truncated scenario file") from None
    try:
        return _from_header(doc, np.array(doc["probabilities"], dtype=float),
                            np.array(doc["availability"], dtype=float),
                            np.array(doc["load"], dtype=float))
    except KeyError as exc:
        raise ValidationError(str(path), f"missing field {exc.args[0]}") from None


def summarize(scenarios: ScenarioSet) -> dict:
    """Counts, probability mass and per-series moments for ``scen inspect``."""
    N = len(scenarios)
    out = {"count": N, "dims": dict(zip("TDH", scenarios.dims)), "provenance": scenarios.provenance,
           "seed": scenarios.seed, "source_size": scenarios.source_size,
           "probability_sum": math.fsum(scenarios.probabilities),
           "series": {}}
    w = scenarios.probabilities
    for j, r in enumerate(scenarios.resources):
        a = scenarios.availability[:, j]
        out["series"][r] = {"mean": float(np.tensordot(w, a, axes=1).mean()),
                            "min": float(a.min()), "max": float(a.max())}
    ld = scenarios.load
    out["series"]["load"] = {"mean": float(np.tensordot(w, ld, axes=1).mean()),
                             "min": float(ld.min()), "max": float(ld.max())}
    return out
