"""Key generation, encoding, and the HKR correlation tag.

Every key in the system (master key, partial key, key reference) is an
opaque 16-byte identifier, carried on the wire as 32 lowercase hex chars.
Keys are scoped to the node that minted them; global uniqueness is not
required, so collision handling is a local regenerate-and-retry.
"""

from __future__ import annotations

import hashlib
import random
import re
import string
from dataclasses import dataclass
from typing import Callable

from .errors import EncodingError, KeyCollisionError, ParameterError

KEY_BYTES = 16
KEY_HEX_CHARS = KEY_BYTES * 2
DIGEST_HEX_CHARS = 64

MAX_NAME_CHARS = 128
MAX_KEY_RETRIES = 8

_HEX_RE = re.compile(r"^[0-9a-f]+$")
# host:port, bare hostname, or a simulator node id such as "sn-2"
_LOCATION_RE = re.compile(r"^[A-Za-z0-9._-]+(:\d{1,5})?$")


def encode_hex(raw: bytes) -> str:
    """Encode a 16-byte identifier as 32 lowercase hex chars."""
    if len(raw) != KEY_BYTES:
        raise EncodingError(f"expected {KEY_BYTES} bytes, got {len(raw)}")
    return raw.hex()


def decode_hex(text: str) -> bytes:
    """Inverse of :func:`encode_hex`; rejects wrong length or alphabet."""
    if not isinstance(text, str) or len(text) != KEY_HEX_CHARS:
        raise EncodingError(f"expected {KEY_HEX_CHARS} hex chars")
    if not _HEX_RE.match(text):
        raise EncodingError(f"invalid hex identifier: {text!r}")
    return bytes.fromhex(text)


def is_key(text: object) -> bool:
    """True if ``text`` is a well-formed wire key (32 lowercase hex chars)."""
    return isinstance(text, str) and len(text) == KEY_HEX_CHARS and bool(_HEX_RE.match(text))


def gen_key(rng: random.Random) -> bytes:
    """Draw a fresh 16-byte identifier from ``rng``.

    The caller owns collision retry against its own store; see
    :func:`fresh_key`.
    """
    return rng.randbytes(KEY_BYTES)


def fresh_key(rng: random.Random, taken: Callable[[str], bool]) -> str:
    """Generate a hex key that ``taken`` does not already claim.

    Retries up to MAX_KEY_RETRIES times, then fails the surrounding
    choreography. With 128-bit keys the retry path is practically dead
    code; it exists so degenerate random sources fail loudly.
    """
    for _ in range(MAX_KEY_RETRIES):
        key = encode_hex(gen_key(rng))
        if not taken(key):
            return key
    raise KeyCollisionError(f"no fresh key after {MAX_KEY_RETRIES} attempts")


def valid_location(location: str) -> bool:
    return isinstance(location, str) and 0 < len(location) <= 256 and bool(_LOCATION_RE.match(location))


class KeySource(random.Random):
    """Deterministic random source whose position survives restarts.

    Counter-mode SHA-256 over a seed-derived key. The block counter is
    persisted to ``state_path`` after every draw, so a node that crashes
    and replays its store continues the exact key stream instead of
    re-issuing keys it already handed out. Without a ``state_path`` it is
    an ordinary seeded generator (same stream, no durability).
    """

    def __new__(cls, seed_material=b"", state_path=None):
        return super().__new__(cls)

    def __init__(self, seed_material: str | bytes, state_path=None):
        if isinstance(seed_material, str):
            seed_material = seed_material.encode("utf-8")
        self._key = hashlib.sha256(b"pds-keysource:" + seed_material).digest()
        self._block = 0
        self._state_path = state_path
        if state_path is not None:
            try:
                self._block = int(state_path.read_text().strip() or 0)
            except (OSError, ValueError):
                self._block = 0
        super().__init__()

    def randbytes(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out += hashlib.sha256(self._key + self._block.to_bytes(8, "big")).digest()
            self._block += 1
        if self._state_path is not None:
            self._state_path.write_text(str(self._block))
        return bytes(out[:n])

    def getrandbits(self, k: int) -> int:
        nbytes = (k + 7) // 8
        value = int.from_bytes(self.randbytes(nbytes), "big")
        return value >> (nbytes * 8 - k)

    def random(self) -> float:
        return self.getrandbits(53) * 2.0**-53

    def seed(self, *args, **kwargs) -> None:  # state comes from the constructor
        pass

    def getstate(self):
        raise NotImplementedError("position is persisted externally")

    def setstate(self, state) -> None:
        raise NotImplementedError("position is persisted externally")


@dataclass(frozen=True)
class Identity:
    """A data owner or data processor organization.

    ``name`` is the opaque identifier; ``location`` is the address of the
    identity's processing node (host:port or simulator node id).
    """

    name: str
    location: str

    def __post_init__(self):
        if not self.name or len(self.name) > MAX_NAME_CHARS:
            raise ParameterError("identity name must be 1..128 chars")
        if any(c not in string.printable or c in "\t\n\r\x0b\x0c" for c in self.name):
            raise ParameterError("identity name must be printable, no control chars")
        if not valid_location(self.location):
            raise ParameterError(f"identity location does not parse: {self.location!r}")

    def to_wire(self) -> dict:
        return {"name": self.name, "location": self.location}

    @classmethod
    def from_wire(cls, obj: dict) -> "Identity":
        if not isinstance(obj, dict):
            raise EncodingError("identity must be an object")
        try:
            return cls(name=obj["name"], location=obj["location"])
        except (KeyError, TypeError, ParameterError) as exc:
            raise EncodingError(f"bad identity: {exc}") from exc


@dataclass(frozen=True)
class Hkr:
    """Correlation tag carried by chunk traffic.

    Pairs the requesting processing node's location with the SHA-256
    digest of the key reference's raw bytes, so deliveries from many
    storage nodes can be grouped back into one request without exposing
    the key reference itself.
    """

    pn_location: str
    kr_digest: str

    def __post_init__(self):
        if not valid_location(self.pn_location):
            raise ParameterError(f"bad hkr location: {self.pn_location!r}")
        if len(self.kr_digest) != DIGEST_HEX_CHARS or not _HEX_RE.match(self.kr_digest):
            raise ParameterError("hkr digest must be 64 lowercase hex chars")

    def to_wire(self) -> dict:
        return {"pn_location": self.pn_location, "kr_digest": self.kr_digest}

    @classmethod
    def from_wire(cls, obj: dict) -> "Hkr":
        if not isinstance(obj, dict):
            raise EncodingError("hkr must be an object")
        try:
            return cls(pn_location=obj["pn_location"], kr_digest=obj["kr_digest"])
        except (KeyError, TypeError, ParameterError) as exc:
            raise EncodingError(f"bad hkr: {exc}") from exc


def make_hkr(kr: str, pn_location: str) -> Hkr:
    """Build the correlation tag for key reference ``kr`` requested from
    ``pn_location``.

    Pure: equal inputs give byte-identical outputs across processes.
    """
    raw = decode_hex(kr)
    return Hkr(pn_location=pn_location, kr_digest=hashlib.sha256(raw).hexdigest())
