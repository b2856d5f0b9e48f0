"""Key-value backends: a plain dict and a single-file append-only log.

Both implement ``get``/``put``/``delete``/``iterate_prefix`` plus ``sync`` and
``close``. Keys are the 9-byte keys produced by :mod:`ruleweave.codec`.
"""

from __future__ import annotations

import os
from array import array
from pathlib import Path
from typing import Iterator

from . import codec
from .errors import CodecError, StoreError

LOG_NAME = "store.log"
META_NAME = "store.meta"

_OP_PUT = 0x01
_OP_DELETE = 0x02
_KEY_LEN = 9
_WRITE_BUFFER = 1 << 20


class MemoryBackend:
    def __init__(self):
        self.data: dict[bytes, bytes] = {}

    def get(self, key: bytes) -> bytes | None:
        return self.data.get(key)

    def put(self, key: bytes, value: bytes) -> None:
        self.data[key] = value

    def delete(self, key: bytes) -> None:
        self.data.pop(key, None)

    def iterate_prefix(self, prefix: bytes) -> Iterator[tuple[bytes, bytes]]:
        for key in sorted(k for k in self.data if k.startswith(prefix)):
            yield key, self.data[key]

    def sync(self) -> None:
        pass

    def close(self) -> None:
        pass


class LogBackend:
    """Append-only record log with an in-memory offset index.

    Node keys are dense integers, so their index is a flat ``array`` of file
    offsets (-1 = absent) rather than a dict. Meta keys live in ``store.meta``
    (the LEB128 id counter). The log is compacted into key order on close,
    which makes its bytes a deterministic function of the live contents.
    """

    def __init__(self, directory: str | os.PathLike):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.dir / LOG_NAME
        self.meta_path = self.dir / META_NAME
        self._offsets = array("q")
        self._pending: dict[int, bytes | None] = {}
        self._pending_bytes = 0
        self._meta: dict[bytes, bytes] = {}
        if self.meta_path.exists():
            self._meta[codec.meta_key()] = self.meta_path.read_bytes()
        self._fh = open(self.log_path, "a+b")
        self._rebuild_index()
        self._closed = False

    def _rebuild_index(self) -> None:
        self._fh.seek(0)
        data = self._fh.read()
        pos = 0
        while pos < len(data):
            start = pos
            op = data[pos]
            key = data[pos + 1 : pos + 1 + _KEY_LEN]
            if len(key) != _KEY_LEN or op not in (_OP_PUT, _OP_DELETE):
                raise CodecError(f"corrupt log record at offset {start}")
            pos += 1 + _KEY_LEN
            if op == _OP_PUT:
                n, pos = codec.decode_uleb128(data, pos)
                pos += n
                if pos > len(data):
                    raise CodecError(f"truncated log record at offset {start}")
            self._set_offset(codec.key_id(key), start if op == _OP_PUT else -1)

    def _set_offset(self, node_id: int, offset: int) -> None:
        if node_id >= len(self._offsets):
            self._offsets.extend([-1] * (node_id + 1 - len(self._offsets) + 1024))
        self._offsets[node_id] = offset

    def _check(self) -> None:
        if self._closed:
            raise StoreError("backend is closed")

    def get(self, key: bytes) -> bytes | None:
        self._check()
        if key[0] != codec.NODE_TAG:
            return self._meta.get(key)
        node_id = codec.key_id(key)
        if node_id in self._pending:
            return self._pending[node_id]
        if node_id >= len(self._offsets) or self._offsets[node_id] < 0:
            return None
        return self._read_at(self._offsets[node_id])

    def _read_at(self, offset: int) -> bytes:
        fd = self._fh.fileno()
        head = os.pread(fd, 1 + _KEY_LEN + 10, offset)
        n, pos = codec.decode_uleb128(head, 1 + _KEY_LEN)
        value = os.pread(fd, n, offset + pos)
        if len(value) != n:
            raise CodecError(f"truncated log record at offset {offset}")
        return value

    def put(self, key: bytes, value: bytes) -> None:
        self._check()
        if key[0] != codec.NODE_TAG:
            self._meta[key] = value
            return
        self._pending[codec.key_id(key)] = value
        self._pending_bytes += len(value) + 16
        if self._pending_bytes >= _WRITE_BUFFER:
            self._drain()

    def delete(self, key: bytes) -> None:
        self._check()
        if key[0] != codec.NODE_TAG:
            self._meta.pop(key, None)
            return
        self._pending[codec.key_id(key)] = None
        self._pending_bytes += 16

    def _drain(self) -> None:
        if not self._pending:
            return
        self._fh.seek(0, os.SEEK_END)
        offset = self._fh.tell()
        chunk = bytearray()
        for node_id, value in self._pending.items():
            key = codec.node_key(node_id)
            if value is None:
                chunk += bytes((_OP_DELETE,)) + key
                self._set_offset(node_id, -1)
            else:
                record_at = offset + len(chunk)
                chunk += bytes((_OP_PUT,)) + key + codec.encode_uleb128(len(value)) + value
                self._set_offset(node_id, record_at)
        self._fh.write(chunk)
        self._fh.flush()
        self._pending.clear()
        self._pending_bytes = 0

    def iterate_prefix(self, prefix: bytes) -> Iterator[tuple[bytes, bytes]]:
        self._check()
        for key in sorted(k for k in self._meta if k.startswith(prefix)):
            yield key, self._meta[key]
        if prefix and prefix[0] != codec.NODE_TAG:
            return
        self._drain()
        for node_id, offset in enumerate(self._offsets):
            if offset >= 0:
                key = codec.node_key(node_id)
                if key.startswith(prefix):
                    yield key, self._read_at(offset)

    def sync(self) -> None:
        self._check()
        self._drain()
        os.fsync(self._fh.fileno())
        value = self._meta.get(codec.meta_key())
        if value is not None:
            tmp = self.meta_path.with_suffix(".meta.tmp")
            tmp.write_bytes(value)
            os.replace(tmp, self.meta_path)

    def compact(self) -> None:
        """Rewrite the log with one record per live key, in key order."""
        self._drain()
        tmp = self.log_path.with_suffix(".log.tmp")
        new_offsets = array("q", [-1]) * len(self._offsets)
        with open(tmp, "wb") as out:
            buf = bytearray()
            written = 0
            for node_id, offset in enumerate(self._offsets):
                if offset < 0:
                    continue
                value = self._read_at(offset)
                new_offsets[node_id] = written + len(buf)
                buf += bytes((_OP_PUT,)) + codec.node_key(node_id)
                buf += codec.encode_uleb128(len(value)) + value
                if len(buf) >= _WRITE_BUFFER:
                    out.write(buf)
                    written += len(buf)
                    buf.clear()
            out.write(buf)
            out.flush()
            os.fsync(out.fileno())
        self._fh.close()
        os.replace(tmp, self.log_path)
        self._fh = open(self.log_path, "a+b")
        self._offsets = new_offsets

    def close(self) -> None:
        if self._closed:
            return
        self.sync()
        self.compact()
        self._fh.close()
        self._closed = True
