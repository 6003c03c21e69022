"""Seeded generators for every fitted model family.

Random numbers come from numpy's ``Generator`` wrapping the PCG64 bit
generator (``numpy.random.default_rng(seed)``), whose stream is stable
across numpy releases and platforms.  Noise is multiplicative
lognormal: value = model(r) * exp(eps), eps ~ Normal(0, sigma^2), with
eps drawn in rank order r = 1..N.  Noisy values are re-sorted
descending; labels keep the rank each value was generated at.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import _kernels
from .errors import InvalidSpec
from .genmodels import GenFit
from .rankfit import RankSeries

MAX_SEED = 2**64 - 1


class Family(str, enum.Enum):
    POWER = "power"
    SEGMENTED = "segmented"
    DGBD = "dgbd"
    AC5 = "ac5"
    YULE = "yule"


_REQUIRED = {
    Family.POWER: ("y0", "beta"),
    Family.SEGMENTED: ("y0", "slopes", "breakpoints_log10"),
    Family.DGBD: ("A", "a", "b"),
    Family.AC5: ("A", "a", "b", "c", "d"),
    Family.YULE: ("alpha",),
}


@dataclass(frozen=True)
class SynthSpec:
    """``n`` is the series length, or the step count for the Yule family."""

    family: Family
    params: Mapping[str, Any] = field(default_factory=dict)
    n: int = 1000
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", Family(self.family))
        except ValueError:
            raise InvalidSpec(f"unknown family {self.family!r}") from None
        object.__setattr__(self, "params", dict(self.params))
        validate(self)

    def to_dict(self) -> dict:
        return {"family": self.family.value, "params": dict(self.params), "n": self.n,
                "noise_sigma": self.noise_sigma, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SynthSpec":
        unknown = set(d) - {"family", "params", "n", "noise_sigma", "seed"}
        if unknown:
            raise InvalidSpec(f"unknown spec keys: {sorted(unknown)}")
        if "family" not in d:
            raise InvalidSpec("spec needs a family")
        return cls(d["family"], d.get("params", {}), d.get("n", 1000),
                   d.get("noise_sigma", 0.0), d.get("seed", 0))


def validate(spec: SynthSpec) -> None:
    p = spec.params
    missing = [k for k in _REQUIRED[spec.family] if k not in p]
    if missing:
        raise InvalidSpec(f"{spec.family.value} spec missing {missing}")
    if not isinstance(spec.n, int) or isinstance(spec.n, bool) or spec.n < 1:
        raise InvalidSpec("n must be a positive integer")
    if not (isinstance(spec.noise_sigma, (int, float)) and math.isfinite(spec.noise_sigma)
            and spec.noise_sigma >= 0):
        raise InvalidSpec("noise_sigma must be finite and >= 0")
    if not isinstance(spec.seed, int) or not 0 <= spec.seed <= MAX_SEED:
        raise InvalidSpec("seed must be an integer in [0, 2^64)")
    fam = spec.family
    if fam in (Family.POWER, Family.SEGMENTED) and not p["y0"] > 0:
        raise InvalidSpec("y0 must be positive")
    if fam in (Family.DGBD, Family.AC5) and not p["A"] > 0:
        raise InvalidSpec("A must be positive")
    if fam is Family.AC5 and not (p["c"] > -1 and p["d"] > -1):
        raise InvalidSpec("c and d must exceed -1")
    if fam is Family.SEGMENTED:
        slopes, bps = list(p["slopes"]), list(p["breakpoints_log10"])
        if len(slopes) != len(bps) + 1:
            raise InvalidSpec("segmented spec needs one more slope than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise InvalidSpec("breakpoints must be strictly ascending")
        if bps and not (0 < bps[0] and bps[-1] < math.log10(spec.n)):
            raise InvalidSpec("breakpoints must lie strictly inside (0, log10 n)")
    if fam is Family.YULE and not 0 < p["alpha"] <= 1:
        raise InvalidSpec("alpha must be in (0, 1]")


def grid_breakpoint(rank: int) -> float:
    """log10 midpoint between ``rank`` and ``rank + 1``.

    Segmented fits search breakpoints on these midpoints, so a spec using
    them can be recovered exactly from noise-free data.
    """
    if rank < 1:
        raise InvalidSpec("rank must be >= 1")
    return 0.5 * (math.log10(rank) + math.log10(rank + 1))


def model_values(spec: SynthSpec) -> np.ndarray:
    """Noise-free model evaluated at ranks 1..n."""
    p = spec.params
    r = np.arange(1, spec.n + 1, dtype=np.float64)
    x = np.log10(r)
    if spec.family is Family.POWER:
        return p["y0"] * r ** p["beta"]
    if spec.family is Family.SEGMENTED:
        # continuous broken line in log-log space
        slopes = list(p["slopes"])
        ly = math.log10(p["y0"]) + slopes[0] * x
        for bp, s_prev, s_next in zip(p["breakpoints_log10"], slopes, slopes[1:]):
            ly += (s_next - s_prev) * np.maximum(x - bp, 0.0)
        return 10.0 ** ly
    if spec.family in (Family.DGBD, Family.AC5):
        c = p.get("c", 0.0) if spec.family is Family.AC5 else 0.0
        d = p.get("d", 0.0) if spec.family is Family.AC5 else 0.0
        return GenFit(p["A"], p["a"], p["b"], c, d, spec.n).predict(r)
    raise InvalidSpec(f"{spec.family.value} has no closed-form model")


def generate(spec: SynthSpec) -> RankSeries:
    if spec.family is Family.YULE:
        return generate_yule(spec.params["alpha"], spec.n, spec.seed)
    values = model_values(spec)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        values = values * np.exp(rng.normal(0.0, spec.noise_sigma, spec.n))
    if not np.all(np.isfinite(values) & (values > 0)):
        raise InvalidSpec("model produced non-positive or non-finite values")
    return RankSeries.from_values(values, metric="value")


def generate_yule(alpha: float, steps: int, seed: int = 0) -> RankSeries:
    """Preferential-attachment counts, largest first.

    Two uniform streams are drawn up front, ``u_create`` then ``u_pick``
    (``steps`` each), so the compiled and Python kernels see identical
    inputs.
    """
    if not 0 < alpha <= 1:
        raise InvalidSpec("alpha must be in (0, 1]")
    if not isinstance(steps, (int, np.integer)) or steps < 1:
        raise InvalidSpec("steps must be a positive integer")
    rng = np.random.default_rng(seed)
    u_create = rng.random(steps)
    u_pick = rng.random(steps)
    counts = _kernels.yule_counts(float(alpha), u_create, u_pick)
    width = len(str(counts.size))
    labels = [f"E{i + 1:0{width}d}" for i in range(counts.size)]
    order = np.argsort(-counts, kind="stable")
    return RankSeries(tuple(labels[i] for i in order), counts[order].astype(np.float64), "count")


# ---------------------------------------------------------------------------
# serialization


def load_spec(path: str | os.PathLike) -> SynthSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise InvalidSpec(f"spec is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise InvalidSpec("spec must be a JSON object")
    return SynthSpec.from_dict(data)


def dump_spec(spec: SynthSpec, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(spec.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_series_csv(series: RankSeries, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "label", "value"])
        for i, (label, v) in enumerate(zip(series.labels, series.values), start=1):
            w.writerow([i, label, repr(float(v))])


def read_series_csv(path: str | os.PathLike, metric: str = "value") -> RankSeries:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return RankSeries(tuple(r["label"] for r in rows),
                      np.array([float(r["value"]) for r in rows]), metric)
