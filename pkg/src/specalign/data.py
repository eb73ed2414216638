"""Synthetic domain-shift generators, feature-file ingestion, and splits.

Feature CSVs use the schema ``label,f0,...,f{d-1}`` with -1 marking
unlabeled rows. A flat key/value manifest ties a source file, a target
file, and an optional held-out target test file together with the class
count and dimensionality.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError, InsufficientClassError

UNLABELED = -1


@dataclass
class Dataset:
    """Feature rows with per-sample labels (-1 = unlabeled) and stable ids."""

    features: np.ndarray
    labels: np.ndarray
    domain: str
    indices: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.domain not in ("source", "target"):
            raise ValueError(f"domain must be source or target, got {self.domain!r}")
        if len(self.features) != len(self.labels) or len(self.labels) != len(self.indices):
            raise ValueError("features, labels, indices must have equal length")

    def __len__(self):
        return len(self.features)

    @property
    def is_labeled(self) -> bool:
        return bool(np.all(self.labels != UNLABELED))


@dataclass(frozen=True)
class SplitSpec:
    """Transductive: train == test == full set. Inductive: disjoint
    stratified split with ``test_fraction`` held out."""

    mode: str
    test_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("transductive", "inductive"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "inductive" and not 0.0 < self.test_fraction < 1.0:
            raise ValueError("inductive test_fraction must lie in (0, 1)")


def _fresh(features, labels, domain) -> Dataset:
    n = len(features)
    return Dataset(
        features=np.asarray(features, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        domain=domain,
        indices=np.arange(n, dtype=np.int64),
    )


def gen_two_moons(n: int, noise: float, rotation_deg: float, seed: int,
                  domain: str = "source") -> Dataset:
    """Two interleaved half-circles, optionally rotated about the origin.

    n/2 points per moon on the canonical arcs, plus isotropic Gaussian
    noise applied before the rotation. Labels are 0 (outer) and 1 (inner).
    """
    if n % 2 != 0:
        raise ValueError("n must be even (n/2 points per moon)")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    outer = np.column_stack([np.cos(t), np.sin(t)])
    inner = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    pts = np.vstack([outer, inner])
    labels = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    rng = np.random.default_rng(seed)
    if noise > 0:
        pts = pts + rng.normal(scale=noise, size=pts.shape)
    theta = math.radians(rotation_deg)
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    return _fresh(pts @ rot.T, labels, domain)


def gen_blobs_shift(n: int, num_classes: int, d: int, shift, spread: float, seed: int):
    """Gaussian class blobs plus a translated copy as the target domain.

    Class centers sit on a sphere of radius 5 * spread; the target features
    are the source draws translated by ``shift``, so the class-conditional
    structure is preserved (covariate shift only).
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    shift = np.asarray(shift, dtype=np.float64)
    if shift.shape != (d,):
        raise ValueError(f"shift must have shape ({d},), got {shift.shape}")
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(num_classes, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centers = 5.0 * spread * dirs
    base = n // num_classes
    counts = [base + (1 if c < n % num_classes else 0) for c in range(num_classes)]
    feats = []
    labels = []
    for c, cnt in enumerate(counts):
        feats.append(centers[c] + rng.normal(scale=spread, size=(cnt, d)))
        labels.append(np.full(cnt, c, dtype=np.int64))
    x = np.vstack(feats)
    y = np.concatenate(labels)
    source = _fresh(x, y, "source")
    target = _fresh(x + shift, y, "target")
    return source, target


def save_csv_features(path, ds: Dataset):
    """Write the feature CSV schema; floats use shortest round-trip text."""
    d = ds.features.shape[1]
    header = "label," + ",".join(f"f{i}" for i in range(d))
    lines = [header]
    for y, row in zip(ds.labels, ds.features):
        lines.append(str(int(y)) + "," + ",".join(repr(float(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv_features(path, domain: str, num_classes: int | None = None) -> Dataset:
    """Parse a feature CSV; malformed rows raise with their line number."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[0] != "label" or len(header) < 2:
        raise DataFormatError(f"{path}: line 1: header must be 'label,f0,...'")
    d = len(header) - 1
    feats = []
    labels = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != d + 1:
            raise DataFormatError(
                f"{path}: line {lineno}: expected {d + 1} fields, got {len(parts)}"
            )
        try:
            y = int(parts[0])
            row = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
        if y < UNLABELED:
            raise DataFormatError(f"{path}: line {lineno}: label {y} invalid")
        if num_classes is not None and y >= num_classes:
            raise DataFormatError(
                f"{path}: line {lineno}: label {y} >= num_classes {num_classes}"
            )
        if not all(np.isfinite(row)):
            raise DataFormatError(f"{path}: line {lineno}: non-finite feature")
        labels.append(y)
        feats.append(row)
    if not feats:
        raise DataFormatError(f"{path}: no data rows")
    return _fresh(np.array(feats), np.array(labels), domain)


def _stratified_test_counts(labels: np.ndarray, n_test: int):
    """Largest-remainder apportionment of the test quota across label groups."""
    values, counts = np.unique(labels, return_counts=True)
    n = counts.sum()
    quotas = n_test * counts / n
    take = np.floor(quotas).astype(int)
    remainder = n_test - take.sum()
    order = np.argsort(-(quotas - take), kind="stable")
    for i in order[:remainder]:
        take[i] += 1
    return dict(zip(values.tolist(), take.tolist()))


def split(ds: Dataset, spec: SplitSpec):
    """Return (train, test) per the split spec; both reuse the parent's
    sample indices so memory-bank ids stay stable."""
    if spec.mode == "transductive":
        train = Dataset(ds.features.copy(), ds.labels.copy(), ds.domain, ds.indices.copy())
        test = Dataset(ds.features.copy(), ds.labels.copy(), ds.domain, ds.indices.copy())
        return train, test
    n = len(ds)
    if n < 2:
        raise ValueError("inductive split needs at least 2 samples")
    n_test = int(round(n * spec.test_fraction))
    n_test = min(max(n_test, 1), n - 1)
    rng = np.random.default_rng(spec.seed)
    take = _stratified_test_counts(ds.labels, n_test)
    test_mask = np.zeros(n, dtype=bool)
    for value, cnt in take.items():
        members = np.nonzero(ds.labels == value)[0]
        chosen = rng.permutation(members)[:cnt]
        test_mask[chosen] = True
    def _sub(mask):
        return Dataset(
            features=ds.features[mask].copy(),
            labels=ds.labels[mask].copy(),
            domain=ds.domain,
            indices=ds.indices[mask].copy(),
        )
    return _sub(~test_mask), _sub(test_mask)


def ssda_sample(ds: Dataset, shots: int, seed: int) -> np.ndarray:
    """Pick exactly ``shots`` labeled sample ids per class, without
    replacement, deterministically per seed."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if not ds.is_labeled:
        raise ValueError("ssda_sample requires a fully labeled dataset")
    rng = np.random.default_rng(seed)
    picked = []
    for c in np.unique(ds.labels):
        members = np.nonzero(ds.labels == c)[0]
        if len(members) < shots:
            raise InsufficientClassError(
                f"class {c} has {len(members)} samples, need {shots}"
            )
        chosen = rng.permutation(members)[:shots]
        picked.extend(ds.indices[chosen].tolist())
    return np.array(sorted(picked), dtype=np.int64)


# ---------------------------------------------------------------------------
# Manifest: flat key/value text tying dataset files together.

MANIFEST_KEYS = ("name", "num_classes", "dim", "source", "target", "target_test")


def parse_kv_file(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment; blank lines skipped."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}: line {lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def load_manifest(path) -> dict:
    raw = parse_kv_file(path)
    unknown = set(raw) - set(MANIFEST_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown manifest keys {sorted(unknown)}")
    for key in ("name", "num_classes", "dim", "source", "target"):
        if key not in raw:
            raise ConfigError(f"{path}: manifest missing key {key!r}")
    base = os.path.dirname(os.path.abspath(path))
    out = {
        "name": raw["name"],
        "num_classes": int(raw["num_classes"]),
        "dim": int(raw["dim"]),
        "source": os.path.join(base, raw["source"]),
        "target": os.path.join(base, raw["target"]),
    }
    if "target_test" in raw:
        out["target_test"] = os.path.join(base, raw["target_test"])
    return out


def save_manifest(path, name, num_classes, dim, source, target, target_test=None):
    lines = [
        f"name = {name}",
        f"num_classes = {num_classes}",
        f"dim = {dim}",
        f"source = {source}",
        f"target = {target}",
    ]
    if target_test is not None:
        lines.append(f"target_test = {target_test}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
