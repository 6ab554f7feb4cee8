"""Streaming libsvm-format ingestion.

Lines look like ``<label> <index>:<value> ...`` with 1-based indices; ``#``
starts a comment.  Internally indices are 0-based.  Files ending in ``.gz``
(or starting with the gzip magic bytes) are decompressed on the fly.
"""
from __future__ import annotations

import gzip
import itertools
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np

from .core import DataError, ParseError, Sample, SparseVector

PathLike = Union[str, Path]


@dataclass
class DatasetMeta:
    dim: int
    n_samples: Optional[int] = None
    M_hat: Optional[float] = None
    label_kind: str = "binary"


def parse_libsvm_line(line: str, lineno: Optional[int] = None, dim: Optional[int] = None) -> Optional[Sample]:
    """Parse one line; returns ``None`` for blank or comment-only lines."""
    body = line.split("#", 1)[0]
    tokens = body.split()
    if not tokens:
        return None
    try:
        label = float(tokens[0])
    except ValueError:
        raise ParseError(f"bad label {tokens[0]!r}", lineno, _column(body, 0)) from None
    if not math.isfinite(label):
        raise ParseError(f"non-finite label {tokens[0]!r}", lineno, _column(body, 0))
    n = len(tokens) - 1
    idx = np.empty(n, dtype=np.int64)
    val = np.empty(n, dtype=np.float64)
    for k, tok in enumerate(tokens[1:]):
        i, sep, v = tok.partition(":")
        try:
            if not sep:
                raise ValueError
            j = int(i)
            x = float(v)
        except ValueError:
            raise ParseError(f"malformed feature {tok!r}", lineno, _column(body, k + 1)) from None
        if j < 1:
            raise ParseError(f"feature index must be >= 1, got {j}", lineno, _column(body, k + 1))
        if not math.isfinite(x):
            raise ParseError(f"non-finite value in {tok!r}", lineno, _column(body, k + 1))
        idx[k] = j - 1
        val[k] = x
    try:
        features = SparseVector(idx, val, dim)
    except IndexError as exc:
        raise DataError(f"line {lineno}: {exc}") from None
    return Sample(features, label)


def _column(body: str, k: int) -> int:
    """1-based column of the k-th whitespace-separated token."""
    for n, m in enumerate(re.finditer(r"\S+", body)):
        if n == k:
            return m.start() + 1
    return 1


def format_libsvm_line(sample: Sample) -> str:
    label = sample.label
    head = str(int(label)) if float(label).is_integer() else repr(float(label))
    feats = " ".join(f"{i + 1}:{v!r}" for i, v in sample.features.entries())
    return f"{head} {feats}".rstrip()


def _open_text(path: PathLike):
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if path.suffix == ".gz" or magic == b"\x1f\x8b":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def iter_libsvm(path: PathLike, dim: Optional[int] = None) -> Iterator[Sample]:
    """Yield samples of a libsvm file in file order."""
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = parse_libsvm_line(line, lineno, dim)
            if s is not None:
                yield s


def count_samples(path: PathLike) -> int:
    """Number of non-blank, non-comment lines (no parsing of features)."""
    with _open_text(path) as fh:
        return sum(1 for line in fh if line.split("#", 1)[0].strip())


class CountingIterator:
    """Wraps an iterator and counts the items pulled through it."""

    def __init__(self, it: Iterable):
        self._it = iter(it)
        self.count = 0

    def __iter__(self):
        return self

    def __next__(self):
        item = next(self._it)
        self.count += 1
        return item


def estimate_M(stream: Iterable[Sample], prefix: int = 1000) -> Tuple[float, Iterator[Sample]]:
    """Max squared feature norm over the first ``prefix`` samples.

    Returns the estimate and an iterator that replays the buffered prefix
    followed by the rest of ``stream``, so downstream consumers still see
    every sample exactly once.
    """
    if prefix < 1:
        raise DataError("prefix must be >= 1")
    it = iter(stream)
    head = list(itertools.islice(it, prefix))
    if not head:
        raise DataError("cannot estimate M from an empty stream")
    M = max(s.features.squared_norm() for s in head)
    return M, itertools.chain(head, it)


class LabelNormalizer:
    """Iterates ``stream`` with labels rewritten through ``mapping``.

    ``mapping`` maps raw labels to -1/+1; the key ``"*"`` is a default for
    every other label.  ``mapping=None`` with ``passthrough=True`` leaves
    labels untouched (regression).  Resulting label counts accumulate in
    :attr:`counts` as the stream is consumed.
    """

    def __init__(self, stream: Iterable[Sample], mapping: Optional[Dict] = None, passthrough: bool = False):
        self._it = iter(stream)
        self.passthrough = passthrough
        self.counts: Counter = Counter()
        self._map: Dict[float, float] = {}
        self._default: Optional[float] = None
        if not passthrough:
            for raw, target in (mapping or {}).items():
                target = float(target)
                if target not in (-1.0, 1.0):
                    raise DataError(f"label map target must be -1 or +1, got {target!r}")
                if str(raw).strip() == "*":
                    self._default = target
                else:
                    self._map[float(raw)] = target

    def __iter__(self):
        return self

    def __next__(self) -> Sample:
        s = next(self._it)
        if self.passthrough:
            self.counts[s.label] += 1
            return s
        y = self._map.get(s.label, self._default)
        if y is None:
            raise DataError(f"label {s.label!r} has no mapping")
        self.counts[y] += 1
        return s if y == s.label else Sample(s.features, y)


def normalize_labels(stream: Iterable[Sample], mapping: Optional[Dict] = None,
                     passthrough: bool = False) -> LabelNormalizer:
    return LabelNormalizer(stream, mapping, passthrough)


class LibsvmSource:
    """A libsvm file plus the ingestion settings applied to every pass.

    The first :meth:`open` reads a prefix of ``m_prefix`` samples to fix the
    dimensionality (unless declared) and estimate M, then replays it.
    Later passes re-read the file.  With ``bias`` a constant 1 feature is
    appended at index ``dim`` and the exposed dimension is ``dim + 1``.
    """

    def __init__(self, path: PathLike, dim: Optional[int] = None, bias: bool = False,
                 label_map: Optional[Dict] = None, m_prefix: int = 1000, regression: bool = False):
        self.path = Path(path)
        self.declared_dim = dim
        self.bias = bias
        self.label_map = label_map
        self.m_prefix = m_prefix
        self.regression = regression
        self.meta: Optional[DatasetMeta] = None
        self.label_counts: Counter = Counter()

    @property
    def dim(self) -> int:
        if self.meta is None:
            raise DataError("source not opened yet")
        return self.meta.dim

    def _raw(self) -> Iterator[Sample]:
        return iter_libsvm(self.path)

    def _finish(self, s: Sample, base_dim: int, lineno: int) -> Sample:
        f = s.features
        if f.indices.size and f.indices[-1] >= base_dim:
            raise DataError(f"{self.path}: sample {lineno} has feature index {int(f.indices[-1]) + 1} "
                            f"beyond dim {base_dim}")
        f = f.with_dim(base_dim)
        if self.bias:
            f = f.append(base_dim, 1.0)
        return Sample(f, s.label)

    def open(self) -> Iterator[Sample]:
        raw = self._raw()
        if self.label_map is not None or self.regression:
            raw = normalize_labels(raw, self.label_map, passthrough=self.label_map is None)
        if self.meta is None:
            head = list(itertools.islice(raw, self.m_prefix))
            if not head:
                raise DataError(f"{self.path}: no samples")
            seen = max(s.features.dim for s in head)
            base = self.declared_dim if self.declared_dim is not None else seen
            if seen > base:
                raise DataError(f"{self.path}: feature index {seen} exceeds declared dim {base}")
            head = [self._finish(s, base, k) for k, s in enumerate(head, 1)]
            M, _ = estimate_M(head, len(head))
            kind = "real" if self.regression else "binary"
            self.meta = DatasetMeta(dim=base + (1 if self.bias else 0), M_hat=M, label_kind=kind)
            start = len(head) + 1
            rest = (self._finish(s, base, k) for k, s in enumerate(raw, start))
            stream = itertools.chain(head, rest)
        else:
            base = self.meta.dim - (1 if self.bias else 0)
            stream = (self._finish(s, base, k) for k, s in enumerate(raw, 1))
        return self._count(stream, raw)

    def _count(self, stream, raw) -> Iterator[Sample]:
        n = 0
        for s in stream:
            n += 1
            yield s
        if isinstance(raw, LabelNormalizer):
            self.label_counts = raw.counts
        if self.meta is not None and self.meta.n_samples is None:
            self.meta.n_samples = n

    def load(self) -> List[Sample]:
        return list(self.open())
