"""Paired two-view datasets: container, persistence, splits and synthetic generators.

Binary layout (``CCAPAIRS``, all little-endian)::

    offset  size  field
    0       8     magic  b"CCAPAIRS"
    8       4     u32 version (= 1)
    12      4     u32 d_x
    16      4     u32 d_y
    20      8     u64 m
    28      1     u8  has_labels (0 or 1)
    29      ...   m records: d_x f64, d_y f64, then u32 label if has_labels
"""
import csv
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError, FormatError

MAGIC = b"CCAPAIRS"
VERSION = 1
_HEADER = struct.Struct("<8sIIIQB")


@dataclass(frozen=True)
class PairedDataset:
    X: np.ndarray
    Y: np.ndarray
    labels: Optional[np.ndarray] = None
    provenance: str = ""

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        Y = np.ascontiguousarray(self.Y, dtype=np.float64)
        if X.ndim != 2 or Y.ndim != 2:
            raise ContractError("X and Y must be 2-D")
        if X.shape[0] != Y.shape[0]:
            raise ContractError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ContractError("dataset contains NaN or Inf")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (X.shape[0],):
                raise ContractError("labels must have one entry per row")
            object.__setattr__(self, "labels", labels.astype(np.int64))

    def __len__(self):
        return self.X.shape[0]

    @property
    def dx(self):
        return self.X.shape[1]

    @property
    def dy(self):
        return self.Y.shape[1]

    def take(self, idx, provenance=None):
        idx = np.asarray(idx)
        labels = None if self.labels is None else self.labels[idx]
        return PairedDataset(self.X[idx], self.Y[idx], labels,
                             self.provenance if provenance is None else provenance)

    def equals(self, other):
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None and other.labels is not None
            and np.array_equal(self.labels, other.labels))
        return (self.X.tobytes() == other.X.tobytes() and self.Y.tobytes() == other.Y.tobytes()
                and self.X.shape == other.X.shape and self.Y.shape == other.Y.shape and same_labels)


@dataclass(frozen=True)
class SynthSpec:
    """Shared-latent generator settings.

    ``latent_scales`` sets the standard deviation of each latent coordinate
    (all ones when omitted); unequal scales give distinct canonical
    correlations.
    """

    latent: int
    dx: int
    dy: int
    m: int
    mixing: str = "linear"
    noise_x: float = 1.0
    noise_y: float = 1.0
    seed: int = 0
    latent_scales: Optional[tuple] = field(default=None)

    def __post_init__(self):
        if self.latent < 1 or self.latent > min(self.dx, self.dy):
            raise ContractError(f"latent dimension {self.latent} must lie in [1, min(dx, dy)]")
        if self.m < 1:
            raise ContractError("m must be at least 1")
        if self.mixing not in ("linear", "tanh"):
            raise ContractError(f"unknown mixing {self.mixing!r}")
        if self.noise_x < 0 or self.noise_y < 0:
            raise ContractError("noise levels must be non-negative")
        if self.latent_scales is not None and len(self.latent_scales) != self.latent:
            raise ContractError("latent_scales needs one entry per latent dimension")

    def scales(self):
        if self.latent_scales is None:
            return np.ones(self.latent)
        return np.asarray(self.latent_scales, dtype=np.float64)


def _orthonormal_columns(rng, d, q):
    Q, R = np.linalg.qr(rng.standard_normal((d, q)))
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def population_correlations(spec):
    """Canonical correlations of the linear generator, from its exact covariance blocks.

    With orthonormal mixing columns, ``Sxx = P diag(s^2) P' + nx^2 I`` and
    ``Sxy = P diag(s^2) Q'``, so the whitened cross-covariance has singular
    values ``s^2 / sqrt((s^2 + nx^2)(s^2 + ny^2))``.
    """
    s2 = spec.scales() ** 2
    corr = s2 / np.sqrt((s2 + spec.noise_x ** 2) * (s2 + spec.noise_y ** 2))
    return np.sort(corr)[::-1]


def generate(spec):
    """Sample a dataset; returns ``(dataset, population_corr)``.

    ``population_corr`` is ``None`` for tanh mixing (no closed form).
    """
    rng = np.random.default_rng(spec.seed)
    P = _orthonormal_columns(rng, spec.dx, spec.latent)
    Q = _orthonormal_columns(rng, spec.dy, spec.latent)
    z = rng.standard_normal((spec.m, spec.latent)) * spec.scales()
    ex = rng.standard_normal((spec.m, spec.dx))
    ey = rng.standard_normal((spec.m, spec.dy))
    x = z @ P.T
    y = z @ Q.T
    if spec.mixing == "tanh":
        x, y = np.tanh(x), np.tanh(y)
    ds = PairedDataset(x + spec.noise_x * ex, y + spec.noise_y * ey, None, f"synthetic:{spec}")
    pop = population_correlations(spec) if spec.mixing == "linear" else None
    return ds, pop


def _record_dtype(dx, dy, has_labels):
    fields = [("x", "<f8", (dx,)), ("y", "<f8", (dy,))]
    if has_labels:
        fields.append(("label", "<u4"))
    return np.dtype(fields)


def to_bytes(ds):
    has_labels = ds.labels is not None
    if has_labels and (ds.labels.min(initial=0) < 0 or ds.labels.max(initial=0) > 0xFFFFFFFF):
        raise ContractError("labels must fit in an unsigned 32-bit integer")
    rec = np.zeros(len(ds), dtype=_record_dtype(ds.dx, ds.dy, has_labels))
    rec["x"] = ds.X
    rec["y"] = ds.Y
    if has_labels:
        rec["label"] = ds.labels
    header = _HEADER.pack(MAGIC, VERSION, ds.dx, ds.dy, len(ds), int(has_labels))
    return header + rec.tobytes()


def from_bytes(buf, provenance=""):
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header", len(buf))
    magic, version, dx, dy, m, has_labels = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 8)
    if has_labels not in (0, 1):
        raise FormatError(f"bad has_labels flag {has_labels}", 28)
    dtype = _record_dtype(dx, dy, has_labels)
    body = len(buf) - _HEADER.size
    if body < m * dtype.itemsize:
        complete = body // dtype.itemsize
        raise FormatError(f"truncated data: expected {m} records, found {complete}",
                          _HEADER.size + complete * dtype.itemsize)
    if body > m * dtype.itemsize:
        raise FormatError("trailing bytes after last record", _HEADER.size + m * dtype.itemsize)
    rec = np.frombuffer(buf, dtype=dtype, count=m, offset=_HEADER.size)
    labels = rec["label"].astype(np.int64) if has_labels else None
    return PairedDataset(rec["x"].reshape(m, dx).copy(), rec["y"].reshape(m, dy).copy(), labels, provenance)


def save(ds, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(ds))


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read(), provenance=str(path))


def load_csv(path):
    """Read ``x0..x{dx-1},y0..y{dy-1}[,label]`` with a header row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError("empty CSV file", 0)
    header = [h.strip() for h in rows[0]]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    ycols = [i for i, h in enumerate(header) if h.startswith("y")]
    lcols = [i for i, h in enumerate(header) if h == "label"]
    if header[:len(xcols)] != [f"x{i}" for i in range(len(xcols))] or \
            [header[i] for i in ycols] != [f"y{i}" for i in range(len(ycols))] or not xcols or not ycols:
        raise FormatError("CSV header must be x0..,y0..[,label]", 0)
    body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    if body.ndim != 2 or body.shape[0] == 0:
        raise ContractError("CSV file has no data rows")
    labels = body[:, lcols[0]].astype(np.int64) if lcols else None
    return PairedDataset(body[:, xcols], body[:, ycols], labels, str(path))


def split(ds, fractions=(0.8, 0.1, 0.1), seed=0):
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ContractError(f"split fractions must be three positive numbers summing to 1, got {fractions}")
    m = len(ds)
    perm = np.random.default_rng(seed).permutation(m)
    n_train = int(round(fractions[0] * m))
    n_val = int(round(fractions[1] * m))
    n_test = m - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ContractError(f"split of {m} rows leaves an empty part ({n_train}/{n_val}/{n_test})")
    cuts = np.split(perm, [n_train, n_train + n_val])
    names = ("train", "val", "test")
    return tuple(ds.take(c, f"{ds.provenance}|{n}") for c, n in zip(cuts, names))


def subsample(ds, fraction, seed=0):
    if not 0 < fraction <= 1:
        raise ContractError(f"fraction must lie in (0, 1], got {fraction}")
    size = int(round(fraction * len(ds)))
    if size < 1:
        raise ContractError("subsample is empty")
    idx = np.random.default_rng(seed).permutation(len(ds))[:size]
    return ds.take(idx, f"{ds.provenance}|subsample({fraction})")
