"""Lower-bound maps and the post-processing that can only lower them."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass
class LowerBoundMap:
    """Per-position cautious estimates.

    ``bounds[:defined_from]`` is NaN (no estimate exists there, e.g. before the
    first full window); every later entry is a probability.
    """

    bounds: np.ndarray
    defined_from: int = 0
    method: str = ""
    config: dict = field(default_factory=dict)
    cut: bool = False
    mono: bool = False

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.bounds.ndim != 1:
            raise ValueError("bounds must be a 1-D vector")
        if not (0 <= self.defined_from <= self.bounds.size):
            raise ValueError(f"defined_from={self.defined_from} out of range")
        if not np.all(np.isnan(self.bounds[: self.defined_from])):
            raise ValueError("entries before defined_from must be undefined (NaN)")
        defined = self.bounds[self.defined_from :]
        if np.any(np.isnan(defined)) or np.any(defined < 0) or np.any(defined > 1):
            raise ValueError("defined entries must be probabilities in [0, 1]")

    def __len__(self) -> int:
        return self.bounds.size

    @property
    def defined(self) -> np.ndarray:
        return self.bounds[self.defined_from :]

    @property
    def postproc(self) -> str:
        return postproc_name(self.cut, self.mono)


def postproc_name(cut: bool, mono: bool) -> str:
    if cut and mono:
        return "cut+mono"
    return "cut" if cut else ("mono" if mono else "none")


def postproc_cut(lbmap: LowerBoundMap, max_value: float) -> LowerBoundMap:
    """Clip every defined entry to ``max_value``."""
    bounds = lbmap.bounds.copy()
    d = lbmap.defined_from
    bounds[d:] = np.minimum(bounds[d:], max_value)
    config = dict(lbmap.config, cut_max=float(max_value))
    return replace(lbmap, bounds=bounds, config=config, cut=True)


def postproc_mono(lbmap: LowerBoundMap) -> LowerBoundMap:
    """Right-to-left running minimum: each entry is clipped to every entry right of it."""
    bounds = lbmap.bounds.copy()
    d = lbmap.defined_from
    bounds[d:] = np.minimum.accumulate(bounds[d:][::-1])[::-1]
    return replace(lbmap, bounds=bounds, mono=True)


def apply_postproc(lbmap: LowerBoundMap, postproc: str, max_value: float) -> LowerBoundMap:
    if postproc not in ("none", "cut", "mono", "cut+mono"):
        raise ValueError(f"unknown post-processing {postproc!r}")
    if "cut" in postproc:
        lbmap = postproc_cut(lbmap, max_value)
    if "mono" in postproc:
        lbmap = postproc_mono(lbmap)
    return lbmap
