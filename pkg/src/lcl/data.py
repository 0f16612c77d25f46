"""Datasets: CSV load/save, stratified data-ratio subsampling, and a
synthetic hierarchical-cluster generator whose class geometry gives the
curriculum structure to exploit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .similarity import EmbeddingTable


class DataError(ValueError):
    """Invalid dataset file or request."""


@dataclass(frozen=True)
class Dataset:
    """Dense feature matrix with integer labels and a split tag."""

    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)
    num_classes: int
    split: str  # "train" or "test"

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        if self.split not in ("train", "test"):
            raise DataError(f"unknown split {self.split!r}")
        if feats.shape[0] != labels.shape[0]:
            raise DataError("feature row count does not match label count")
        if labels.size == 0:
            raise DataError("empty dataset")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise DataError(f"label out of range [0, {self.num_classes})")
        if self.split == "train":
            present = np.unique(labels)
            if present.size != self.num_classes:
                missing = sorted(set(range(self.num_classes)) - set(present.tolist()))
                raise DataError(f"training split is missing classes {missing}")

    @property
    def num_examples(self):
        return self.labels.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator settings for the hierarchical-cluster synthetic task."""

    num_superclusters: int
    classes_per_supercluster: int
    dim: int
    train_per_class: int
    test_per_class: int
    intra_spread: float = 1.0
    inter_spread: float = 4.0
    noise_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.num_superclusters, self.classes_per_supercluster,
               self.dim, self.train_per_class, self.test_per_class) < 1:
            raise DataError("all counts must be >= 1")
        if min(self.intra_spread, self.inter_spread, self.noise_sigma) <= 0:
            raise DataError("spreads and noise must be positive")
        if self.inter_spread <= self.intra_spread:
            raise DataError("inter_spread must exceed intra_spread")

    @property
    def num_classes(self):
        return self.num_superclusters * self.classes_per_supercluster


def save_dataset(ds, path):
    """CSV with a `# classes=<C> split=<split>` metadata line and a
    `label,f1,...,fd` header."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# classes={ds.num_classes} split={ds.split}\n")
        fh.write("label," + ",".join(f"f{i + 1}" for i in range(ds.dim)) + "\n")
        for label, row in zip(ds.labels, ds.features):
            fh.write(str(int(label)) + "," + ",".join(repr(float(x)) for x in row) + "\n")


def load_dataset(path):
    """Read a dataset CSV written by save_dataset."""
    meta = {}
    labels, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line.lstrip("#").split():
                    if "=" in item:
                        k, v = item.split("=", 1)
                        meta[k] = v
                continue
            if line.startswith("label,"):
                continue
            parts = line.split(",")
            try:
                labels.append(int(parts[0]))
                rows.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if "classes" not in meta or "split" not in meta:
        raise DataError(f"{path}: missing `# classes=<C> split=<train|test>` metadata")
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(features=np.array(rows), labels=np.array(labels),
                   num_classes=int(meta["classes"]), split=meta["split"])


def subsample(ds, dr, seed):
    """Keep ceil(dr * n_c) examples of every class c, sampled without
    replacement; deterministic per seed; dr = 1 is the identity."""
    if ds.split != "train":
        raise DataError("subsampling is defined for training splits only")
    if not 0.0 < dr <= 1.0:
        raise DataError("dr must lie in (0, 1]")
    if dr == 1.0:
        return ds
    rng = np.random.default_rng(seed)
    keep = []
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        n_keep = math.ceil(dr * idx.size)
        keep.append(np.sort(rng.choice(idx, size=n_keep, replace=False)))
    keep = np.sort(np.concatenate(keep))
    return Dataset(features=ds.features[keep], labels=ds.labels[keep],
                   num_classes=ds.num_classes, split="train")


def generate_synthetic(spec):
    """Sample the hierarchical-cluster task: supercluster centers at scale
    inter_spread, class centers offset at scale intra_spread, examples with
    Gaussian noise. The class centers double as the class embedding vectors,
    so cosine similarity is higher within a supercluster."""
    rng = np.random.default_rng(spec.seed)
    c_total = spec.num_classes
    super_centers = rng.normal(0.0, spec.inter_spread,
                               size=(spec.num_superclusters, spec.dim))
    centers = np.repeat(super_centers, spec.classes_per_supercluster, axis=0) \
        + rng.normal(0.0, spec.intra_spread, size=(c_total, spec.dim))

    def draw_split(per_class, split):
        feats = centers.repeat(per_class, axis=0) \
            + rng.normal(0.0, spec.noise_sigma, size=(c_total * per_class, spec.dim))
        labels = np.repeat(np.arange(c_total), per_class)
        return Dataset(features=feats, labels=labels,
                       num_classes=c_total, split=split)

    train = draw_split(spec.train_per_class, "train")
    test = draw_split(spec.test_per_class, "test")
    names = [f"c{s}_{k}" for s in range(spec.num_superclusters)
             for k in range(spec.classes_per_supercluster)]
    embeddings = EmbeddingTable(class_names=names, vectors=centers)
    return train, test, embeddings
