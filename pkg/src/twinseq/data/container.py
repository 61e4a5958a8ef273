"""Binary corpus container (``.twsq``) plus its JSON manifest.

Layout, little-endian::

    header   b"TWSQ" | version u32 | feature_dim u32 | n_classes u32
    records  id_len u16 | id utf-8 | N u32 | N*d float32 | N uint32

Records run to end of file.  The manifest sits next to the container
with a ``.json`` suffix and lists split membership, byte offsets, label
priors and any generator metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .features import Corpus, FeatureSequence

MAGIC = b"TWSQ"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_ID_LEN = struct.Struct("<H")
_N = struct.Struct("<I")


class CorpusFormatError(ValueError):
    """The container or manifest is malformed or inconsistent."""


def manifest_path(path) -> Path:
    return Path(path).with_suffix(".json")


def _encode(u: FeatureSequence) -> bytes:
    uid = u.uid.encode("utf-8")
    if len(uid) > 0xFFFF:
        raise CorpusFormatError(f"utterance id too long: {u.uid[:40]}...")
    frames = np.ascontiguousarray(u.frames, dtype="<f4")
    labels = np.ascontiguousarray(u.labels, dtype="<u4")
    return b"".join([_ID_LEN.pack(len(uid)), uid, _N.pack(len(u)), frames.tobytes(), labels.tobytes()])


def write_corpus(corpus: Corpus, path) -> Path:
    """Write the container and its manifest; returns the manifest path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, corpus.feature_dim, corpus.n_classes))
        for split, u in corpus.utterances():
            if u.feature_dim != corpus.feature_dim:
                raise CorpusFormatError(f"{u.uid}: {u.feature_dim} features, corpus has {corpus.feature_dim}")
            blob = _encode(u)
            entries.append({"id": u.uid, "split": split, "offset": fh.tell(), "length": len(blob),
                            "frames": len(u)})
            fh.write(blob)
    manifest = {
        "format": MAGIC.decode(),
        "version": VERSION,
        "name": corpus.name,
        "feature_dim": corpus.feature_dim,
        "n_classes": corpus.n_classes,
        "splits": {s: len(v) for s, v in corpus.splits.items()},
        "utterances": entries,
        "priors": None if corpus.priors is None else [float(p) for p in corpus.priors],
        **corpus.meta,
    }
    mpath = manifest_path(path)
    mpath.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return mpath


def _read_records(buf: bytes, feature_dim: int, start: int):
    pos = start
    while pos < len(buf):
        begin = pos
        try:
            (id_len,) = _ID_LEN.unpack_from(buf, pos)
            pos += _ID_LEN.size
            uid = buf[pos:pos + id_len]
            if len(uid) != id_len:
                raise struct.error("short id")
            pos += id_len
            (n,) = _N.unpack_from(buf, pos)
            pos += _N.size
        except struct.error:
            raise CorpusFormatError(f"truncated record header at byte {begin}") from None
        nbytes = 4 * n * feature_dim + 4 * n
        if pos + nbytes > len(buf):
            raise CorpusFormatError(f"truncated record {uid.decode('utf-8', 'replace')!r} at byte {begin}")
        frames = np.frombuffer(buf, dtype="<f4", count=n * feature_dim, offset=pos).reshape(n, feature_dim)
        pos += 4 * n * feature_dim
        labels = np.frombuffer(buf, dtype="<u4", count=n, offset=pos)
        pos += 4 * n
        yield begin, pos - begin, FeatureSequence(uid.decode("utf-8"), frames.astype(np.float32),
                                                  labels.astype(np.int64))


def read_corpus(path, manifest=None) -> Corpus:
    """Load a container; the manifest defaults to the sibling ``.json`` file."""
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < _HEADER.size:
        raise CorpusFormatError(f"{path}: file too short for a header")
    magic, version, feature_dim, n_classes = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CorpusFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CorpusFormatError(f"{path}: unsupported version {version}")
    records = list(_read_records(buf, feature_dim, _HEADER.size))

    mpath = Path(manifest) if manifest is not None else manifest_path(path)
    meta: dict = {}
    splits: dict[str, list[FeatureSequence]] = {}
    priors = None
    name = path.stem
    if mpath.exists():
        meta = json.loads(mpath.read_text(encoding="utf-8"))
        if meta.get("feature_dim") != feature_dim:
            raise CorpusFormatError(f"manifest says {meta.get('feature_dim')} features, container has {feature_dim}")
        if meta.get("n_classes") != n_classes:
            raise CorpusFormatError(f"manifest says {meta.get('n_classes')} classes, container has {n_classes}")
        entries = meta.get("utterances", [])
        if len(entries) != len(records):
            raise CorpusFormatError(f"manifest lists {len(entries)} utterances, container has {len(records)}")
        ids = [e["id"] for e in entries]
        if len(set(ids)) != len(ids):
            raise CorpusFormatError("duplicate utterance ids in manifest")
        for e, (offset, length, u) in zip(entries, records):
            if e["id"] != u.uid or e["offset"] != offset or e["length"] != length or e["frames"] != len(u):
                raise CorpusFormatError(f"manifest entry {e['id']!r} does not match the container")
            splits.setdefault(e["split"], []).append(u)
        if meta.get("priors") is not None:
            priors = np.asarray(meta["priors"], dtype=np.float64)
            if priors.shape != (n_classes,) or abs(priors.sum() - 1.0) > 1e-9 or (priors < 0).any():
                raise CorpusFormatError("manifest priors are not a distribution over the classes")
        name = meta.get("name", name)
        for key in ("format", "version", "name", "feature_dim", "n_classes", "splits", "utterances", "priors"):
            meta.pop(key, None)
    else:
        splits["all"] = [u for _, _, u in records]
    labels_max = max((int(u.labels.max()) for _, _, u in records), default=-1)
    if labels_max >= n_classes:
        raise CorpusFormatError(f"label {labels_max} out of range for {n_classes} classes")
    return Corpus(name, feature_dim, n_classes, splits, priors, meta)
