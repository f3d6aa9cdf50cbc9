"""DARE-TIES parameter merging over named weight maps.

Merging operates on ParameterMap directories (manifest.json plus one raw
little-endian float32 binary per named array). The chain is fixed as
dare-then-ties: task vectors are computed against a shared base, DARE drops
and rescales each one, TIES trims / elects signs / disjoint-merges them,
and the merged delta is added back onto the base.

Arithmetic runs in float64 and the result is cast back to float32, so the
degenerate single-model chain (drop 0, density 1, weight 1) reproduces the
input bit for bit. The DARE RNG is split per (seed, model index, array
name), which makes parallel per-name execution bit-identical to serial.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import xxhash


class MergeError(Exception):
    pass


@dataclass
class ParameterMap:
    """Named flat float32 arrays plus free-form string metadata."""

    entries: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def validate(self) -> "ParameterMap":
        for name, arr in self.entries.items():
            if arr.ndim != 1:
                raise MergeError(f"array {name!r} is not flat")
            if not np.isfinite(arr).all():
                raise MergeError(f"array {name!r} contains NaN or Inf")
        return self

    def save(self, directory: str | Path):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {"arrays": {}, "metadata": self.metadata}
        for name in sorted(self.entries):
            filename = f"{name}.f32"
            arr = self.entries[name].astype("<f4")
            (directory / filename).write_bytes(arr.tobytes())
            manifest["arrays"][name] = {
                "length": int(arr.shape[0]),
                "dtype": "f32",
                "file": filename,
            }
        with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory: str | Path) -> "ParameterMap":
        directory = Path(directory)
        with open(directory / "manifest.json", "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        entries = {}
        for name, info in manifest["arrays"].items():
            if info["dtype"] != "f32":
                raise MergeError(f"array {name!r} has unsupported dtype {info['dtype']}")
            raw = (directory / info["file"]).read_bytes()
            arr = np.frombuffer(raw, dtype="<f4").copy()
            if arr.shape[0] != info["length"]:
                raise MergeError(f"array {name!r} length mismatch")
            entries[name] = arr
        pm = cls(entries=entries, metadata=dict(manifest.get("metadata", {})))
        return pm.validate()


@dataclass
class TaskVector:
    """Per-name weight deltas (model minus base), float64 internally."""

    entries: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class MergeRatio:
    w: float

    def __post_init__(self):
        if not 0 <= self.w <= 0.5:
            raise MergeError("w must lie in [0, 0.5]")

    @property
    def weight_a(self) -> float:
        return 0.5 + self.w

    @property
    def weight_b(self) -> float:
        return 0.5 - self.w


def _check_shapes(reference: ParameterMap, other: ParameterMap, label: str):
    missing = sorted(set(reference.entries) ^ set(other.entries))
    if missing:
        raise MergeError(f"{label}: mismatched array names: {missing}")
    bad = sorted(
        name
        for name in reference.entries
        if reference.entries[name].shape != other.entries[name].shape
    )
    if bad:
        raise MergeError(f"{label}: mismatched array shapes: {bad}")


def task_vector(model: ParameterMap, base: ParameterMap) -> TaskVector:
    """Elementwise model - base per array name."""
    _check_shapes(base, model, "task_vector")
    return TaskVector(
        entries={
            name: model.entries[name].astype(np.float64) - base.entries[name].astype(np.float64)
            for name in base.entries
        }
    )


def apply_task_vector(base: ParameterMap, tv: TaskVector) -> ParameterMap:
    _check_shapes(base, ParameterMap(entries=tv.entries), "apply_task_vector")
    return ParameterMap(
        entries={
            name: (base.entries[name].astype(np.float64) + tv.entries[name]).astype(np.float32)
            for name in base.entries
        },
        metadata=dict(base.metadata),
    )


def _name_key(name: str) -> int:
    return xxhash.xxh64_intdigest(name, 0)


def dare(tv: TaskVector, drop_prob: float, seed: int, stream: tuple = ()) -> TaskVector:
    """Drop elements with probability drop_prob, rescale survivors by 1/(1-p).

    The expectation of the output equals the input. drop_prob 0 is an exact
    identity (no RNG is consumed). The RNG stream is keyed by
    (seed, *stream, name) so per-name work can run in parallel without
    changing results.
    """
    if not 0 <= drop_prob < 1:
        raise MergeError("drop_prob must lie in [0, 1)")
    if drop_prob == 0:
        return TaskVector(entries={n: v.copy() for n, v in tv.entries.items()})
    out = {}
    for name, vec in tv.entries.items():
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, *stream, _name_key(name)])
        )
        keep = rng.random(vec.shape[0]) >= drop_prob
        out[name] = np.where(keep, vec / (1.0 - drop_prob), 0.0)
    return TaskVector(entries=out)


def _trim(vec: np.ndarray, density: float) -> np.ndarray:
    """Zero all but the top ceil(density * len) entries by magnitude.

    Ties at the cutoff keep the lower index (stable order on (-|v|, index)).
    """
    n = vec.shape[0]
    keep = math.ceil(density * n)
    if keep >= n:
        return vec.copy()
    order = np.lexsort((np.arange(n), -np.abs(vec)))
    trimmed = np.zeros_like(vec)
    idx = order[:keep]
    trimmed[idx] = vec[idx]
    return trimmed


def ties_merge(tvs: Sequence[tuple[TaskVector, float]], density: float = 0.5) -> TaskVector:
    """Trim, elect signs, and disjoint-merge weighted task vectors.

    Per coordinate the elected sign is the sign of the weighted sum of
    trimmed values (ties elect +); the output averages the weighted values
    of sign-agreeing vectors, and is 0 where no nonzero value agrees.
    """
    if not tvs:
        raise MergeError("ties_merge needs at least one task vector")
    if not 0 < density <= 1:
        raise MergeError("density must lie in (0, 1]")
    if any(w < 0 for _, w in tvs):
        raise MergeError("weights must be >= 0")
    names = tvs[0][0].entries.keys()
    for tv, _ in tvs[1:]:
        if tv.entries.keys() != names:
            raise MergeError("task vectors must share array names")
    out = {}
    for name in names:
        trimmed = [(_trim(tv.entries[name], density), w) for tv, w in tvs]
        weighted_sum = sum(w * v for v, w in trimmed)
        elected = np.where(weighted_sum >= 0, 1.0, -1.0)
        num = np.zeros_like(weighted_sum)
        den = np.zeros_like(weighted_sum)
        for v, w in trimmed:
            agree = (v != 0) & (np.sign(v) == elected)
            num += np.where(agree, w * v, 0.0)
            den += np.where(agree, w, 0.0)
        out[name] = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return TaskVector(entries=out)


def dare_ties(
    base: ParameterMap,
    models: Sequence[tuple[ParameterMap, float]],
    drop_prob: float = 0.5,
    density: float = 0.5,
    seed: int = 0,
) -> ParameterMap:
    """base + ties_merge([dare(model - base)] ...); deterministic given seed."""
    if not models:
        raise MergeError("dare_ties needs at least one model")
    tvs = []
    for index, (model, weight) in enumerate(models):
        tv = task_vector(model, base)
        tvs.append((dare(tv, drop_prob, seed, stream=(index,)), weight))
    merged = ties_merge(tvs, density=density)
    return apply_task_vector(base, merged)


def grid_search(
    base: ParameterMap,
    model_a: ParameterMap,
    model_b: ParameterMap,
    scorer: Callable[[ParameterMap], float],
    step: float = 0.05,
    drop_prob: float = 0.5,
    density: float = 0.5,
    seed: int = 0,
) -> tuple[MergeRatio, list[tuple[float, Optional[float]]]]:
    """Scan merge ratios (0.5+w):(0.5-w) for w in 0..0.5 and keep the argmax.

    step must divide 0.5 evenly. A scorer failure records the point as None
    and skips it; all points failing is an error. Ties take the smaller w.
    """
    if step <= 0:
        raise MergeError("step must be positive")
    n_steps = 0.5 / step
    if abs(n_steps - round(n_steps)) > 1e-9:
        raise MergeError(f"step {step} does not divide 0.5")
    n_steps = round(n_steps)
    table: list[tuple[float, Optional[float]]] = []
    best: Optional[tuple[float, float]] = None
    for i in range(n_steps + 1):
        w = i * step
        merged = dare_ties(
            base,
            [(model_a, 0.5 + w), (model_b, 0.5 - w)],
            drop_prob=drop_prob,
            density=density,
            seed=seed,
        )
        try:
            value = float(scorer(merged))
        except Exception:  # scorer is external; record and move on
            table.append((w, None))
            continue
        table.append((w, value))
        if best is None or value > best[1]:
            best = (w, value)
    if best is None:
        raise MergeError("scorer failed at every grid point")
    return MergeRatio(best[0]), table
