"""Synthetic stand-ins for recorded datasets.

VA: a smooth latent trajectory drives both the labels and every view. Each
view is a fixed random linear image of the latent, sampled at its own frame
rate, plus Gaussian noise. Expr: class prototypes plus noise, with a
piecewise-constant class track.

Everything is drawn from the ``synth`` stream of the seed, in a fixed order,
so one SyntheticSpec always maps to byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..align import FeatureSequence
from ..ndcore import ContractError, RngState
from ..objectives import ExprTarget, VaTarget
from .formats import write_features, write_labels_expr, write_labels_va

VISUAL_PERIOD = 0.25


@dataclass
class SyntheticSpec:
    task: str = "va"
    num_sequences: int = 8
    T: int = 256
    view_dims: dict[str, int] = field(default_factory=lambda: {"visual": 16, "audio": 8})
    view_periods: dict[str, float] = field(default_factory=dict)
    latent_dim: int = 4
    noise: float = 0.05
    seed: int = 7
    num_classes: int = 8
    min_segment: int = 4
    max_segment: int = 16

    def __post_init__(self):
        if self.task not in ("va", "expr"):
            raise ContractError(f"task must be 'va' or 'expr', got {self.task!r}")
        for name in ("num_sequences", "T", "latent_dim", "num_classes", "min_segment"):
            if int(getattr(self, name)) < 1:
                raise ContractError(f"{name} must be positive")
        if self.max_segment < self.min_segment:
            raise ContractError("max_segment must be >= min_segment")
        if self.noise < 0:
            raise ContractError("noise scale must be nonnegative")
        if not self.view_dims or any(d < 1 for d in self.view_dims.values()):
            raise ContractError("every view needs a positive dimension")
        if self.task == "expr" and len(self.view_dims) != 1:
            raise ContractError("expr synthesis produces exactly one (backbone) view")

    def period(self, tag: str, index: int) -> float:
        # first view at the label rate, later views progressively faster
        return self.view_periods.get(tag, VISUAL_PERIOD / (index + 1))


def _latent(rng, latent_dim: int, n_waves: int = 3):
    amp = rng.uniform(0.5, 1.0, size=(latent_dim, n_waves))
    freq = rng.uniform(0.02, 0.15, size=(latent_dim, n_waves))
    phase = rng.uniform(0.0, 2 * np.pi, size=(latent_dim, n_waves))

    def z(t):
        waves = amp * np.sin(2 * np.pi * freq * t[:, None, None] + phase)
        return waves.sum(axis=-1) / np.sqrt(n_waves)

    return z


def synth_va(spec: SyntheticSpec, out_dir) -> list[Path]:
    if spec.task != "va":
        raise ContractError("synth_va needs task='va'")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = RngState(spec.seed).stream("synth")
    L = spec.latent_dim
    w_val = rng.normal(size=L) / np.sqrt(L)
    w_aro = rng.normal(size=L) / np.sqrt(L)
    maps = {tag: rng.normal(size=(L, d)) for tag, d in spec.view_dims.items()}
    written = []
    for i in range(spec.num_sequences):
        sid = f"seq{i:03d}"
        z = _latent(rng, L)
        t_label = np.arange(spec.T) * VISUAL_PERIOD
        phi = np.tanh(z(t_label))
        target = VaTarget(np.clip(phi @ w_val, -1, 1), np.clip(phi @ w_aro, -1, 1),
                          np.ones(spec.T, dtype=bool))
        for k, (tag, d) in enumerate(spec.view_dims.items()):
            period = spec.period(tag, k)
            n = int(round(spec.T * VISUAL_PERIOD / period))
            x = z(np.arange(n) * period) @ maps[tag] + spec.noise * rng.normal(size=(n, d))
            path = out_dir / f"{sid}.{tag}.mmf"
            write_features(path, FeatureSequence(x, period, None, tag))
            written.append(path)
        path = out_dir / f"{sid}.va.csv"
        write_labels_va(path, target)
        written.append(path)
    return written


def synth_expr(spec: SyntheticSpec, out_dir) -> list[Path]:
    if spec.task != "expr":
        raise ContractError("synth_expr needs task='expr'")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = RngState(spec.seed).stream("synth")
    (tag, D), = spec.view_dims.items()
    C = spec.num_classes
    prototypes = rng.normal(size=(C, D))
    written = []
    for i in range(spec.num_sequences):
        sid = f"seq{i:03d}"
        labels = np.empty(spec.T, dtype=np.int64)
        pos = 0
        while pos < spec.T:
            length = int(rng.integers(spec.min_segment, spec.max_segment + 1))
            labels[pos:pos + length] = rng.integers(C)
            pos += length
        x = prototypes[labels] + spec.noise * rng.normal(size=(spec.T, D))
        path = out_dir / f"{sid}.{tag}.mmf"
        write_features(path, FeatureSequence(x, spec.period(tag, 0), None, tag))
        written.append(path)
        path = out_dir / f"{sid}.expr.csv"
        write_labels_expr(path, ExprTarget(labels, np.ones(spec.T, dtype=bool), C))
        written.append(path)
    return written


def synthesize(spec: SyntheticSpec, out_dir) -> list[Path]:
    return synth_va(spec, out_dir) if spec.task == "va" else synth_expr(spec, out_dir)
