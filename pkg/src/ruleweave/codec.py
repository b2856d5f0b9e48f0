"""Binary encoding of node records and store keys.

Key: one tag byte (0x01 node, 0x00 meta) then the big-endian 8-byte id.
Value: version byte, class name, attributes, relations. Names and strings are
LEB128-length-prefixed UTF-8; Int/Float payloads are little-endian 8 bytes;
relation targets are big-endian 8-byte ids.
"""

from __future__ import annotations

import struct

from .errors import CodecError

VERSION = 0x01
NODE_TAG = 0x01
META_TAG = 0x00

T_BOOL, T_INT, T_FLOAT, T_STRING = 1, 2, 3, 4

_BE_U64 = struct.Struct(">Q")
_LE_I64 = struct.Struct("<q")
_LE_F64 = struct.Struct("<d")


def node_key(node_id: int) -> bytes:
    return bytes((NODE_TAG,)) + _BE_U64.pack(node_id)


def meta_key(slot: int = 0) -> bytes:
    return bytes((META_TAG,)) + _BE_U64.pack(slot)


def key_id(key: bytes) -> int:
    return _BE_U64.unpack_from(key, 1)[0]


def encode_uleb128(n: int) -> bytes:
    if n < 0:
        raise CodecError("LEB128 length must be non-negative")
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_uleb128(buf: bytes, pos: int = 0) -> tuple[int, int]:
    result = shift = 0
    try:
        while True:
            byte = buf[pos]
            pos += 1
            result |= (byte & 0x7F) << shift
            if not byte & 0x80:
                return result, pos
            shift += 7
    except IndexError:
        raise CodecError("truncated LEB128 value") from None


def _put_str(out: bytearray, text: str) -> None:
    raw = text.encode("utf-8")
    out += encode_uleb128(len(raw))
    out += raw


def encode_value(out: bytearray, value) -> None:
    # bool first: bool is a subclass of int
    if type(value) is bool:
        out.append(T_BOOL)
        out.append(1 if value else 0)
    elif type(value) is int:
        out.append(T_INT)
        out += _LE_I64.pack(value)
    elif type(value) is float:
        out.append(T_FLOAT)
        out += _LE_F64.pack(value)
    elif type(value) is str:
        out.append(T_STRING)
        _put_str(out, value)
    else:
        raise CodecError(f"cannot encode value of type {type(value).__name__}")


def encode_record(class_name: str, attributes: dict, relations: dict) -> bytes:
    out = bytearray((VERSION,))
    _put_str(out, class_name)
    out += encode_uleb128(len(attributes))
    for name, value in attributes.items():
        _put_str(out, name)
        encode_value(out, value)
    out += encode_uleb128(len(relations))
    for name, targets in relations.items():
        _put_str(out, name)
        out += encode_uleb128(len(targets))
        for target in targets:
            out += _BE_U64.pack(target)
    return bytes(out)


def _get_str(buf: bytes, pos: int) -> tuple[str, int]:
    n, pos = decode_uleb128(buf, pos)
    end = pos + n
    if end > len(buf):
        raise CodecError("truncated string")
    try:
        return buf[pos:end].decode("utf-8"), end
    except UnicodeDecodeError as exc:
        raise CodecError(f"invalid UTF-8: {exc}") from None


def decode_record(buf: bytes) -> tuple[str, dict, dict]:
    """Inverse of :func:`encode_record`; returns (class_name, attributes, relations)."""
    if not buf or buf[0] != VERSION:
        raise CodecError(f"unsupported record version {buf[:1].hex() or 'empty'}")
    try:
        class_name, pos = _get_str(buf, 1)
        count, pos = decode_uleb128(buf, pos)
        attributes = {}
        for _ in range(count):
            name, pos = _get_str(buf, pos)
            tag = buf[pos]
            pos += 1
            if tag == T_BOOL:
                attributes[name] = buf[pos] != 0
                pos += 1
            elif tag == T_INT:
                attributes[name] = _LE_I64.unpack_from(buf, pos)[0]
                pos += 8
            elif tag == T_FLOAT:
                attributes[name] = _LE_F64.unpack_from(buf, pos)[0]
                pos += 8
            elif tag == T_STRING:
                attributes[name], pos = _get_str(buf, pos)
            else:
                raise CodecError(f"unknown value tag {tag}")
        count, pos = decode_uleb128(buf, pos)
        relations = {}
        for _ in range(count):
            name, pos = _get_str(buf, pos)
            n, pos = decode_uleb128(buf, pos)
            relations[name] = [_BE_U64.unpack_from(buf, pos + 8 * i)[0] for i in range(n)]
            pos += 8 * n
    except (IndexError, struct.error):
        raise CodecError("truncated record") from None
    if pos != len(buf):
        raise CodecError(f"{len(buf) - pos} trailing bytes after record")
    return class_name, attributes, relations
