"""Binary persistence for hierarchical indexes.

File layout, all integers little-endian:

    magic   4 bytes, b"GDXI"
    u32     header length in bytes
    header  canonical JSON: format_version, config, layer_count,
            chunk_count, payload_len, payload_sha256
    32B     SHA-256 of the header bytes
    payload chunk table, layers, communities (see _encode_payload)

The header digest plus the payload digest recorded inside the header mean
any single corrupted byte is detected at load time. Embeddings and edge
weights are stored as raw float64, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chunking import ChunkKind, DocumentChunk
from .config import BuildConfig
from .graph import CommunityRecord, GraphLayer, HierarchicalIndex

MAGIC = b"GDXI"
FORMAT_VERSION = 1

_KIND_CODES = {ChunkKind.LEAF: 0, ChunkKind.SUMMARY: 1}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}


class IndexStoreError(Exception):
    """Base class for persistence failures."""


class IndexFormatError(IndexStoreError):
    """Not an index file, or structurally malformed."""


class UnsupportedVersionError(IndexStoreError):
    """The file's format_version is not one this code reads."""


class ChecksumMismatchError(IndexStoreError):
    """Stored digest does not match the bytes on disk."""


class TruncatedIndexError(IndexStoreError):
    """The file ends before its declared content does."""


@dataclass
class IndexManifest:
    format_version: int
    config: BuildConfig
    layer_count: int
    chunk_count: int
    checksum: str


class _Writer:
    def __init__(self) -> None:
        self.parts: list[bytes] = []

    def raw(self, data: bytes) -> None:
        self.parts.append(data)

    def u8(self, value: int) -> None:
        self.parts.append(struct.pack("<B", value))

    def u32(self, value: int) -> None:
        self.parts.append(struct.pack("<I", value))

    def u64(self, value: int) -> None:
        self.parts.append(struct.pack("<Q", value))

    def f64(self, value: float) -> None:
        self.parts.append(struct.pack("<d", value))

    def text(self, value: str) -> None:
        encoded = value.encode("utf-8")
        self.u32(len(encoded))
        self.raw(encoded)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IndexFormatError("payload section exceeds stored payload")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def done(self) -> bool:
        return self.pos == len(self.data)


def _encode_payload(index: HierarchicalIndex) -> bytes:
    w = _Writer()
    chunks = [index.chunks[cid] for cid in sorted(index.chunks)]
    w.u32(len(chunks))
    for chunk in chunks:
        w.u64(chunk.id)
        w.u8(_KIND_CODES[chunk.kind])
        w.u32(chunk.layer_index)
        w.u32(chunk.token_count)
        w.u32(len(chunk.source_ids))
        for sid in chunk.source_ids:
            w.u64(sid)
        w.text(chunk.text)
    w.u32(len(index.layers))
    for layer in index.layers:
        arr = np.ascontiguousarray(layer.embeddings, dtype="<f8")
        node_count = len(layer.node_ids)
        dim = arr.shape[1] if arr.ndim == 2 else 0
        if arr.ndim != 2 or arr.shape[0] != node_count:
            raise ValueError(
                f"layer {layer.layer_index}: embeddings do not align with node_ids"
            )
        w.u32(layer.layer_index)
        w.u32(node_count)
        w.u32(dim)
        for nid in layer.node_ids:
            w.u64(nid)
        w.raw(arr.tobytes())
        w.u32(len(layer.edges))
        for u, v, weight in layer.edges:
            w.u32(u)
            w.u32(v)
            w.f64(weight)
    w.u32(len(index.communities))
    for source_layer in sorted(index.communities):
        records = index.communities[source_layer]
        w.u32(source_layer)
        w.u32(len(records))
        for record in records:
            w.u32(record.community_id)
            w.u64(record.summary_chunk_id)
            w.u32(len(record.member_chunk_ids))
            for mid in record.member_chunk_ids:
                w.u64(mid)
    return w.getvalue()


def _decode_payload(data: bytes, config: BuildConfig) -> HierarchicalIndex:
    r = _Reader(data)
    chunks: dict[int, DocumentChunk] = {}
    for _ in range(r.u32()):
        cid = r.u64()
        kind_code = r.u8()
        if kind_code not in _CODE_KINDS:
            raise IndexFormatError(f"unknown chunk kind code {kind_code}")
        layer_index = r.u32()
        token_count = r.u32()
        source_ids = [r.u64() for _ in range(r.u32())]
        text = r.text()
        chunks[cid] = DocumentChunk(
            id=cid,
            text=text,
            token_count=token_count,
            kind=_CODE_KINDS[kind_code],
            layer_index=layer_index,
            source_ids=source_ids,
        )
    layers: list[GraphLayer] = []
    for _ in range(r.u32()):
        layer_index = r.u32()
        node_count = r.u32()
        dim = r.u32()
        node_ids = [r.u64() for _ in range(node_count)]
        raw = r.take(node_count * dim * 8)
        embeddings = (
            np.frombuffer(raw, dtype="<f8").reshape(node_count, dim).copy()
        )
        edges = []
        for _ in range(r.u32()):
            u = r.u32()
            v = r.u32()
            weight = r.f64()
            edges.append((u, v, weight))
        layers.append(GraphLayer(layer_index, node_ids, embeddings, edges))
    communities: dict[int, list[CommunityRecord]] = {}
    for _ in range(r.u32()):
        source_layer = r.u32()
        records = []
        for _ in range(r.u32()):
            community_id = r.u32()
            summary_chunk_id = r.u64()
            members = [r.u64() for _ in range(r.u32())]
            records.append(CommunityRecord(community_id, members, summary_chunk_id))
        communities[source_layer] = records
    if not r.done():
        raise IndexFormatError("payload has trailing bytes")
    return HierarchicalIndex(
        layers=layers, chunks=chunks, communities=communities, config=config
    )


def save_index(index: HierarchicalIndex, path: str | Path) -> IndexManifest:
    """Writes the index to ``path`` and returns its manifest."""
    payload = _encode_payload(index)
    checksum = hashlib.sha256(payload).hexdigest()
    header_obj = {
        "format_version": FORMAT_VERSION,
        "config": index.config.to_dict(),
        "layer_count": len(index.layers),
        "chunk_count": len(index.chunks),
        "payload_len": len(payload),
        "payload_sha256": checksum,
    }
    header = json.dumps(header_obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", len(header)))
        handle.write(header)
        handle.write(hashlib.sha256(header).digest())
        handle.write(payload)
    return IndexManifest(
        format_version=FORMAT_VERSION,
        config=index.config,
        layer_count=len(index.layers),
        chunk_count=len(index.chunks),
        checksum=checksum,
    )


def _read_header(data: bytes) -> tuple[dict, bytes]:
    if len(data) < 4:
        raise TruncatedIndexError("file too short for the magic bytes")
    if data[:4] != MAGIC:
        raise IndexFormatError("not an index file (bad magic)")
    if len(data) < 8:
        raise TruncatedIndexError("file too short for the header length")
    (header_len,) = struct.unpack("<I", data[4:8])
    end = 8 + header_len + 32
    if len(data) < end:
        raise TruncatedIndexError("file ends inside the header")
    header_bytes = data[8 : 8 + header_len]
    stored_digest = data[8 + header_len : end]
    if hashlib.sha256(header_bytes).digest() != stored_digest:
        raise ChecksumMismatchError("header digest mismatch")
    try:
        header = json.loads(header_bytes)
    except ValueError as exc:
        raise IndexFormatError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise IndexFormatError("header must be a JSON object")
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"file format_version {version!r}; this build reads {FORMAT_VERSION}"
        )
    return header, data[end:]


def read_manifest(path: str | Path) -> IndexManifest:
    """Reads and verifies the header without decoding the payload."""
    data = Path(path).read_bytes()
    header, payload = _read_header(data)
    _check_payload(header, payload)
    return IndexManifest(
        format_version=header["format_version"],
        config=BuildConfig.from_dict(header["config"]),
        layer_count=header["layer_count"],
        chunk_count=header["chunk_count"],
        checksum=header["payload_sha256"],
    )


def _check_payload(header: dict, payload: bytes) -> None:
    declared = header.get("payload_len")
    if not isinstance(declared, int):
        raise IndexFormatError("header is missing payload_len")
    if len(payload) < declared:
        raise TruncatedIndexError(
            f"payload is {len(payload)} bytes; header declares {declared}"
        )
    if len(payload) > declared:
        raise IndexFormatError("file has trailing bytes after the payload")
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise ChecksumMismatchError("payload digest mismatch")


def load_index(path: str | Path) -> HierarchicalIndex:
    """Loads an index, verifying format, version and both digests."""
    data = Path(path).read_bytes()
    header, payload = _read_header(data)
    _check_payload(header, payload)
    try:
        config = BuildConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise IndexFormatError(f"bad config in header: {exc}") from exc
    return _decode_payload(payload, config)
