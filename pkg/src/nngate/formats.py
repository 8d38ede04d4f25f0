"""Readers and writers for the on-disk formats.

Binary layouts (all integers little-endian, strings are u32-length-prefixed
UTF-8)::

    embeddings   "CGEB" u16 version, u32 dim, u64 count, str name, u32 header crc32
                 then per item: str sample_id, dim x f32
    neighbors    "CGNC" u16 version, u32 k, u64 count, str base, str embedder, u32 header crc32
                 then per query: str sample_id, k x (str neighbor_id, f32 distance)

The header CRC covers every header byte before it. Predictions are CSV,
splits are JSON. Writers refuse to overwrite an existing path unless asked.
"""
from __future__ import annotations

import csv
import io
import json
import struct
import zlib
from itertools import chain
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .model import EmbeddingSet, NeighborCache, PredictionRecord, PredictionSet

EMBEDDING_MAGIC = b"CGEB"
NEIGHBOR_MAGIC = b"CGNC"
FORMAT_VERSION = 1
PREDICTION_HEADER = ["sample_id", "predicted_label", "true_label"]
RESERVED_SPLITS = (
    "train",
    "internal_test_1", "internal_test_2", "internal_test_3",
    "external_test_1", "external_test_2", "external_test_3",
)


class FormatError(ValueError):
    """Malformed input file; the message names the file and offset or line."""


def _lp(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _write_bytes(path, data: bytes, overwrite: bool) -> None:
    with open(path, "wb" if overwrite else "xb") as fh:
        fh.write(data)


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = memoryview(data)
        self.pos = 0
        self.source = source

    def fail(self, msg: str, at: int | None = None) -> FormatError:
        return FormatError(f"{self.source}: {msg} at offset {self.pos if at is None else at}")

    def take(self, n: int) -> memoryview:
        end = self.pos + n
        if end > len(self.data):
            raise self.fail(f"truncated: need {n} bytes, {len(self.data) - self.pos} left")
        out = self.data[self.pos:end]
        self.pos = end
        return out

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        start = self.pos
        n = self.u32()
        raw = self.take(n)
        try:
            return str(raw, "utf-8")
        except UnicodeDecodeError:
            raise self.fail("invalid UTF-8 string", start) from None

    def magic(self, expected: bytes) -> None:
        if bytes(self.take(4)) != expected:
            raise self.fail("bad magic", 0)

    def version(self) -> None:
        start = self.pos
        v = self.u16()
        if v != FORMAT_VERSION:
            raise self.fail(f"unsupported version {v} (expected {FORMAT_VERSION})", start)

    def header_crc(self) -> None:
        expected = zlib.crc32(self.data[:self.pos])
        start = self.pos
        if self.u32() != expected:
            raise self.fail("header checksum mismatch", start)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise self.fail(f"{len(self.data) - self.pos} trailing bytes")


def _load(path) -> tuple[bytes, str]:
    path = Path(path)
    return path.read_bytes(), str(path)


# -- embeddings -------------------------------------------------------------

def encode_embeddings(emb: EmbeddingSet) -> bytes:
    head = EMBEDDING_MAGIC + struct.pack("<HIQ", FORMAT_VERSION, emb.dim, len(emb)) + _lp(emb.name)
    head += struct.pack("<I", zlib.crc32(head))
    vecs = emb.vectors.astype("<f4")
    body = b"".join(_lp(sid) + row.tobytes() for sid, row in zip(emb.ids, vecs))
    return head + body


def decode_embeddings(data: bytes, source: str = "<bytes>") -> EmbeddingSet:
    r = _Reader(data, source)
    r.magic(EMBEDDING_MAGIC)
    r.version()
    dim_at = r.pos
    dim = r.u32()
    count = r.u64()
    name = r.string()
    r.header_crc()
    if dim == 0 and count:
        raise r.fail("dim must be positive", dim_at)
    ids: list[str] = []
    seen: set[str] = set()
    rows: list[np.ndarray] = []
    for _ in range(count):
        at = r.pos
        sid = r.string()
        if sid in seen:
            raise r.fail(f"duplicate id {sid!r}", at)
        seen.add(sid)
        ids.append(sid)
        rows.append(np.frombuffer(r.take(4 * dim), dtype="<f4"))
    r.done()
    vectors = np.vstack(rows).astype(np.float64) if rows else np.zeros((0, dim))
    return EmbeddingSet(name, tuple(ids), vectors)


def write_embeddings(path, emb: EmbeddingSet, overwrite: bool = False) -> None:
    _write_bytes(path, encode_embeddings(emb), overwrite)


def read_embeddings_csv(path, name: str | None = None) -> EmbeddingSet:
    """Ingest ``sample_id,v0,v1,...`` rows; a header row is optional."""
    path = Path(path)
    ids, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                vec = [float(x) for x in row[1:]]
            except ValueError:
                if lineno == 1:
                    continue
                raise FormatError(f"{path}: non-numeric vector component at line {lineno}") from None
            if rows and len(vec) != len(rows[0]):
                raise FormatError(f"{path}: expected {len(rows[0])} components, got {len(vec)} at line {lineno}")
            if row[0] in ids:
                raise FormatError(f"{path}: duplicate id {row[0]!r} at line {lineno}")
            ids.append(row[0])
            rows.append(vec)
    vectors = np.array(rows, dtype=np.float64) if rows else np.zeros((0, 0))
    return EmbeddingSet(name or path.stem, tuple(ids), vectors)


def read_embeddings(path) -> EmbeddingSet:
    """Read a binary embedding file, falling back to CSV for ``.csv`` paths."""
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".csv" and not data.startswith(EMBEDDING_MAGIC):
        return read_embeddings_csv(path)
    return decode_embeddings(data, str(path))


# -- neighbor caches --------------------------------------------------------

def encode_neighbor_cache(cache: NeighborCache) -> bytes:
    head = (
        NEIGHBOR_MAGIC
        + struct.pack("<HIQ", FORMAT_VERSION, cache.k, len(cache))
        + _lp(cache.base_set_name)
        + _lp(cache.embedder_name)
    )
    head += struct.pack("<I", zlib.crc32(head))
    encoded: dict[str, bytes] = {}
    parts = [head]
    for sid, nids, dists in zip(cache.query_ids, cache.neighbor_ids, cache.distances):
        parts.append(_lp(sid))
        raw = dists.astype("<f4").tobytes()
        id_bytes = [encoded.get(n) or encoded.setdefault(n, _lp(n)) for n in nids]
        parts.append(b"".join(chain.from_iterable(
            zip(id_bytes, (raw[i:i + 4] for i in range(0, len(raw), 4)))
        )))
    return b"".join(parts)


def decode_neighbor_cache(data: bytes, source: str = "<bytes>") -> NeighborCache:
    r = _Reader(data, source)
    r.magic(NEIGHBOR_MAGIC)
    r.version()
    k_at = r.pos
    k = r.u32()
    count = r.u64()
    base = r.string()
    embedder = r.string()
    r.header_crc()
    if k == 0:
        raise r.fail("k must be positive", k_at)

    unpack_len = struct.Struct("<I").unpack_from
    unpack_f32 = struct.Struct("<f").unpack_from
    buf = r.data
    size = len(buf)
    names: dict[bytes, str] = {}
    qids: list[str] = []
    seen: set[str] = set()
    nid_rows: list[list[str]] = []
    dist_rows: list[list[float]] = []
    for _ in range(count):
        at = r.pos
        sid = r.string()
        if sid in seen:
            raise r.fail(f"duplicate id {sid!r}", at)
        seen.add(sid)
        pos = r.pos
        nrow: list[str] = []
        drow: list[float] = []
        for _ in range(k):
            if pos + 4 > size:
                r.pos = pos
                raise r.fail("truncated neighbor entry")
            n = unpack_len(buf, pos)[0]
            end = pos + 4 + n
            if end + 4 > size:
                r.pos = pos
                raise r.fail("truncated neighbor entry")
            key = bytes(buf[pos + 4:end])
            name = names.get(key)
            if name is None:
                try:
                    name = names.setdefault(key, key.decode("utf-8"))
                except UnicodeDecodeError:
                    r.pos = pos
                    raise r.fail("invalid UTF-8 string") from None
            d = unpack_f32(buf, end)[0]
            if not 0.0 <= d <= 2.0 or (drow and d < drow[-1]):
                r.pos = end
                raise r.fail(f"distance {d!r} out of order or outside [0, 2]")
            nrow.append(name)
            drow.append(d)
            pos = end + 4
        r.pos = pos
        qids.append(sid)
        nid_rows.append(nrow)
        dist_rows.append(drow)
    r.done()
    nid_arr = np.empty((len(qids), k), dtype=object)
    for i, row in enumerate(nid_rows):
        nid_arr[i, :] = row
    dist = np.array(dist_rows, dtype=np.float64).reshape(len(qids), k)
    return NeighborCache(base, embedder, k, tuple(qids), nid_arr, dist)


def write_neighbor_cache(path, cache: NeighborCache, overwrite: bool = False) -> None:
    _write_bytes(path, encode_neighbor_cache(cache), overwrite)


def read_neighbor_cache(path) -> NeighborCache:
    return decode_neighbor_cache(*_load(path))


# -- predictions ------------------------------------------------------------

def encode_predictions(preds: PredictionSet) -> bytes:
    out = io.StringIO(newline="")
    w = csv.writer(out)
    w.writerow(PREDICTION_HEADER)
    for rec in preds.records:
        w.writerow([rec.sample_id, rec.predicted_label, rec.true_label])
    return out.getvalue().encode("utf-8")


def decode_predictions(data: bytes, source: str = "<bytes>", classifier_name: str = "") -> PredictionSet:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{source}: invalid UTF-8 at offset {exc.start}") from None
    head = ",".join(PREDICTION_HEADER)
    if not (text == head or text.startswith(head + "\n") or text.startswith(head + "\r\n")):
        raise FormatError(f"{source}: header must be {head!r} ending in a newline at line 1")
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    records: list[PredictionRecord] = []
    seen: set[str] = set()
    try:
        header = next(reader, None)
        if header != PREDICTION_HEADER:
            raise FormatError(f"{source}: header must be {','.join(PREDICTION_HEADER)!r} at line 1")
        for row in reader:
            line = reader.line_num
            if len(row) != 3:
                raise FormatError(f"{source}: expected 3 fields, got {len(row)} at line {line}")
            if row[0] in seen:
                raise FormatError(f"{source}: duplicate sample_id {row[0]!r} at line {line}")
            seen.add(row[0])
            records.append(PredictionRecord(*row))
    except csv.Error as exc:
        raise FormatError(f"{source}: {exc} at line {reader.line_num}") from None
    return PredictionSet(classifier_name, tuple(records))


def write_predictions(path, preds: PredictionSet, overwrite: bool = False) -> None:
    _write_bytes(path, encode_predictions(preds), overwrite)


def read_predictions(path, classifier_name: str | None = None) -> PredictionSet:
    path = Path(path)
    return decode_predictions(path.read_bytes(), str(path), classifier_name or path.stem)


# -- splits -----------------------------------------------------------------

def validate_splits(splits: Mapping[str, Iterable[str]], source: str = "<splits>") -> dict[str, list[str]]:
    clean: dict[str, list[str]] = {}
    owner: dict[str, str] = {}
    for name, ids in splits.items():
        if not isinstance(name, str) or not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
            raise FormatError(f"{source}: split {name!r} must map to a list of string ids")
        for sid in ids:
            if sid in owner:
                raise FormatError(f"{source}: sample {sid!r} appears in both {owner[sid]!r} and {name!r}")
            owner[sid] = name
        clean[name] = list(ids)
    return clean


def encode_splits(splits: Mapping[str, list[str]]) -> bytes:
    validate_splits(splits)
    return (json.dumps(splits, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def decode_splits(data: bytes, source: str = "<bytes>") -> dict[str, list[str]]:
    try:
        obj = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise FormatError(f"{source}: invalid UTF-8 at offset {exc.start}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source}: {exc.msg} at line {exc.lineno} (offset {exc.pos})") from None
    if not isinstance(obj, dict):
        raise FormatError(f"{source}: top-level JSON value must be an object at offset 0")
    return validate_splits(obj, source)


def write_splits(path, splits: Mapping[str, list[str]], overwrite: bool = False) -> None:
    _write_bytes(path, encode_splits(splits), overwrite)


def read_splits(path) -> dict[str, list[str]]:
    return decode_splits(*_load(path))


def check_label_disjoint(splits: Mapping[str, list[str]], preds: PredictionSet, names: Iterable[str]) -> list[str]:
    """Labels (by true label) shared between any two of the named splits."""
    label = {r.sample_id: r.true_label for r in preds.records}
    where: dict[str, str] = {}
    clashes: list[str] = []
    for name in names:
        for lab in sorted({label[s] for s in splits.get(name, []) if s in label}):
            if lab in where and where[lab] != name:
                clashes.append(f"label {lab!r} in both {where[lab]!r} and {name!r}")
            where.setdefault(lab, name)
    return clashes


# -- curves -----------------------------------------------------------------

def encode_curve_csv(coverage, accuracy) -> bytes:
    lines = ["coverage,accuracy"]
    lines += [f"{float(c)!r},{float(a)!r}" for c, a in zip(coverage, accuracy)]
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_curve_csv(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    cov, acc = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["coverage", "accuracy"]:
            raise FormatError(f"{path}: header must be 'coverage,accuracy' at line 1")
        for row in reader:
            try:
                c, a = (float(x) for x in row)
            except ValueError:
                raise FormatError(f"{path}: expected two numbers at line {reader.line_num}") from None
            cov.append(c)
            acc.append(a)
    return np.array(cov), np.array(acc)
