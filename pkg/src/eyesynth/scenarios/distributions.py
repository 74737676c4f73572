"""Scalar parameter distributions, described by small config dicts.

A distribution is written in a preset as e.g. ``{"kind": "uniform", "lo": 1,
"hi": 30}``.  Plain numbers are accepted where a distribution is expected and
mean "always this value".
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

KINDS = ("uniform", "log_uniform", "normal", "exponential", "weibull", "integer")


@dataclass(frozen=True)
class Distribution:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.params
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind in ("uniform", "log_uniform", "integer"):
            if p["lo"] > p["hi"]:
                raise ValueError(f"{self.kind}: lo > hi ({p['lo']} > {p['hi']})")
            if self.kind == "log_uniform" and p["lo"] <= 0:
                raise ValueError("log_uniform needs lo > 0")
        elif self.kind == "normal":
            if p["std"] < 0:
                raise ValueError("normal: std must be >= 0")
        elif p["scale"] <= 0:
            raise ValueError(f"{self.kind}: scale must be > 0")
        if self.kind == "weibull" and p["shape"] <= 0:
            raise ValueError("weibull: shape must be > 0")

    @classmethod
    def from_config(cls, spec):
        if isinstance(spec, Distribution):
            return spec
        if isinstance(spec, (int, float)):
            return cls("uniform", {"lo": float(spec), "hi": float(spec)})
        spec = dict(spec)
        kind = spec.pop("kind")
        return cls(kind, spec)

    def to_config(self):
        return {"kind": self.kind, **self.params}

    def draw(self, rng):
        p = self.params
        kind = self.kind
        if kind == "uniform":
            lo, hi = p["lo"], p["hi"]
            return lo if lo == hi else lo + (hi - lo) * rng.random()
        if kind == "log_uniform":
            lo, hi = p["lo"], p["hi"]
            if lo == hi:
                return lo
            return min(hi, lo * math.exp(math.log(hi / lo) * rng.random()))
        if kind == "integer":
            return int(rng.integers(p["lo"], p["hi"] + 1))
        if kind == "normal":
            value = rng.normal(p["mean"], p["std"])
            if "clip" in p:
                lo, hi = p["clip"]
                value = min(max(value, lo), hi)
            return value
        if kind == "exponential":
            return p.get("offset", 0.0) + rng.exponential(p["scale"])
        return p.get("offset", 0.0) + p["scale"] * rng.weibull(p["shape"])

    def bounds(self):
        """Support of the distribution as ``(lo, hi)``; may be infinite."""
        p = self.params
        if self.kind in ("uniform", "log_uniform", "integer"):
            return p["lo"], p["hi"]
        if self.kind == "normal":
            return tuple(p.get("clip", (-math.inf, math.inf)))
        return p.get("offset", 0.0), math.inf

    def mean(self):
        p = self.params
        if self.kind in ("uniform", "integer"):
            return 0.5 * (p["lo"] + p["hi"])
        if self.kind == "log_uniform":
            lo, hi = p["lo"], p["hi"]
            return lo if lo == hi else (hi - lo) / math.log(hi / lo)
        if self.kind == "normal":
            return p["mean"]
        if self.kind == "exponential":
            return p.get("offset", 0.0) + p["scale"]
        return p.get("offset", 0.0) + p["scale"] * math.gamma(1.0 + 1.0 / p["shape"])


def draw(spec, rng):
    """Draw once from a distribution spec or plain number."""
    if isinstance(spec, (int, float)):
        return spec
    return Distribution.from_config(spec).draw(rng)
