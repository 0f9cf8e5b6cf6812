"""Encodings, the hash into Z_M, the keyed permutation, and the envelope format.

Wire format of an envelope (all lengths big-endian)::

    u32 len(payload)   payload bytes
    u32 len(pseudonym) pseudonym as enc_M
    u32 len(vno)       vno as enc_M
    u64 sent_at        simulated milliseconds

enc_M is the big-endian encoding zero-padded to ceil(bits(M)/8) bytes.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import ParameterError
from .numtheory import enc_m

BLOCK = 16

TAG_ENO = 0x01
TAG_VNO = 0x02
TAG_CLUSTER_AUTH = 0x03
TAG_CLUSTER_ID = 0x04
TAG_TID = 0x05


def h256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def int_bytes(x: int) -> bytes:
    """Minimal big-endian encoding (at least one byte)."""
    x = int(x)
    return x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")


def enc8(t: int) -> bytes:
    return (int(t) % 2**64).to_bytes(8, "big")


def hash_to_zm(domain_tag: int, parts: list[bytes], M: int) -> int:
    """Deterministic hash of tagged, length-prefixed ``parts`` into [0, M)."""
    if M < 2:
        raise ParameterError("hash range must have at least two elements")
    h = hashlib.sha256(bytes([domain_tag]))
    for part in parts:
        h.update(struct.pack(">I", len(part)))
        h.update(part)
    digest = h.digest()
    need = (M.bit_length() + 7) // 8 + 8
    stream = b""
    i = 0
    while len(stream) < need:
        stream += h256(digest + struct.pack(">I", i))
        i += 1
    return int.from_bytes(stream[:need], "big") % M


def eno_of(t: int, m: bytes, M: int) -> int:
    """Message hash bound to the broadcast secret t."""
    dm = h256(m)
    mixed = bytes(a ^ b for a, b in zip(enc8(t), dm[:8]))
    return hash_to_zm(TAG_ENO, [mixed, dm], M)


def vno_of(t: int, m: bytes, pseudonym: int, M: int) -> int:
    """Verification hash binding t, the message and the pseudonym."""
    return hash_to_zm(TAG_VNO, [enc8(t), h256(m), enc_m(pseudonym, M)], M)


def cluster_auth(rand: int, c_xor_t: int, M: int) -> int:
    """Authenticator h_c that proves possession of the current cluster token."""
    return hash_to_zm(TAG_CLUSTER_AUTH, [int_bytes(rand), int_bytes(c_xor_t)], M)


def cluster_id_of(tid_sum: int, t: int, M: int) -> int:
    return hash_to_zm(TAG_CLUSTER_ID, [int_bytes(int(tid_sum) ^ int(t))], M)


# -- keyed permutation -------------------------------------------------------

def key_from_int(x: int) -> bytes:
    """32-byte key derived from an integer secret such as a cluster token."""
    return h256(b"v2v-key" + int_bytes(x))


def _ecb(key: bytes, decrypt: bool = False):
    c = Cipher(algorithms.AES(key), modes.ECB())
    return c.decryptor() if decrypt else c.encryptor()


def _xor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def _check(key: bytes, block: bytes):
    if len(key) != 32:
        raise ParameterError("PRP key must be 32 bytes")
    if not block or len(block) % BLOCK:
        raise ParameterError("PRP input length must be a positive multiple of 16")


def prp(key: bytes, block: bytes) -> bytes:
    """AES-256 permutation; inputs longer than one block use two CBC passes.

    The forward pass chains left to right, the second pass chains right to
    left, so every output block depends on every input block.
    """
    _check(key, block)
    enc = _ecb(key)
    blocks = [block[i:i + BLOCK] for i in range(0, len(block), BLOCK)]
    if len(blocks) == 1:
        return enc.update(block)
    prev = bytes(BLOCK)
    fwd = []
    for b in blocks:
        prev = enc.update(_xor(b, prev))
        fwd.append(prev)
    prev = bytes(BLOCK)
    out = [b""] * len(fwd)
    for i in range(len(fwd) - 1, -1, -1):
        prev = enc.update(_xor(fwd[i], prev))
        out[i] = prev
    return b"".join(out)


def prp_inv(key: bytes, block: bytes) -> bytes:
    _check(key, block)
    dec = _ecb(key, decrypt=True)
    blocks = [block[i:i + BLOCK] for i in range(0, len(block), BLOCK)]
    if len(blocks) == 1:
        return dec.update(block)
    fwd = [b""] * len(blocks)
    for i in range(len(blocks) - 1, -1, -1):
        nxt = blocks[i + 1] if i + 1 < len(blocks) else bytes(BLOCK)
        fwd[i] = _xor(dec.update(blocks[i]), nxt)
    out = []
    prev = bytes(BLOCK)
    for f in fwd:
        out.append(_xor(dec.update(f), prev))
        prev = f
    return b"".join(out)


def pad16(data: bytes) -> bytes:
    """ISO/IEC 7816-4 padding (0x80 then zeros) to a multiple of 16 bytes."""
    data = data + b"\x80"
    return data + bytes(-len(data) % BLOCK)


def unpad16(data: bytes) -> bytes:
    stripped = data.rstrip(b"\x00")
    if not stripped.endswith(b"\x80"):
        raise ParameterError("bad padding")
    return stripped[:-1]


def int_block(x: int, M: int) -> bytes:
    """enc_M(x) left-padded to a whole number of PRP blocks."""
    raw = enc_m(x, M)
    return bytes(-len(raw) % BLOCK) + raw


# -- broadcast secrets --------------------------------------------------------

@dataclass(frozen=True)
class BroadcastSecrets:
    t: int
    alpha: int
    gamma: int  # milliseconds between increments
    last_update: int = 0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ParameterError("gamma must be positive")


def advance_t(s: BroadcastSecrets, now: int) -> BroadcastSecrets:
    """Apply every whole gamma period elapsed since the last update."""
    if now < s.last_update:
        raise ParameterError("time went backwards")
    steps = (now - s.last_update) // s.gamma
    if steps == 0:
        return s
    return replace(s, t=s.t + s.alpha * steps, last_update=s.last_update + steps * s.gamma)


# -- envelope ----------------------------------------------------------------

@dataclass(frozen=True)
class Envelope:
    payload: bytes
    pseudonym: int
    vno: int
    sent_at: int = 0


def serialize(env: Envelope, M: int) -> bytes:
    out = bytearray()
    for field in (env.payload, enc_m(env.pseudonym, M), enc_m(env.vno, M)):
        out += struct.pack(">I", len(field)) + field
    out += struct.pack(">Q", env.sent_at)
    return bytes(out)


def deserialize(data: bytes, M: int) -> Envelope:
    fields = []
    pos = 0
    try:
        for _ in range(3):
            (n,) = struct.unpack_from(">I", data, pos)
            pos += 4
            if pos + n > len(data):
                raise ParameterError("truncated envelope")
            fields.append(data[pos:pos + n])
            pos += n
        (sent_at,) = struct.unpack_from(">Q", data, pos)
    except struct.error as exc:
        raise ParameterError("truncated envelope") from exc
    if pos + 8 != len(data):
        raise ParameterError("trailing bytes after envelope")
    pseudonym = int.from_bytes(fields[1], "big")
    vno = int.from_bytes(fields[2], "big")
    if pseudonym >= M or vno >= M:
        raise ParameterError("envelope integer out of range")
    return Envelope(bytes(fields[0]), pseudonym, vno, sent_at)
