"""Probe request ingestion: pcap reading, IE dissection, vector dataset files.

Each probe request is reduced to a fixed 223-byte (1784-bit) vector::

    byte   0        HT Capabilities length
    bytes  1..26    HT Capabilities payload
    byte   27       Extended Capabilities length
    bytes  28..40   Extended Capabilities payload
    bytes  41..222  vendor specific elements, raw TLVs in frame order

Element id bytes are dropped for HT/Ext Capabilities and kept inside the
vendor region. Short payloads are zero padded, long ones truncated.
"""
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError, DissectionError, IngestError, LabeledFrameError

logger = logging.getLogger(__name__)

VECTOR_BYTES = 223
VECTOR_BITS = VECTOR_BYTES * 8

EID_DS_PARAMS = 3
EID_HT_CAPABILITIES = 45
EID_EXT_CAPABILITIES = 127
EID_VENDOR_SPECIFIC = 221

# (start byte, width in bytes) of each segment
HT_LEN_BYTE = 0
HT_PAYLOAD = (1, 26)
EXT_LEN_BYTE = 27
EXT_PAYLOAD = (28, 13)
VENDOR_REGION = (41, 182)

MGMT_HEADER_LEN = 24
MGMT_TYPE = 0
SUBTYPE_PROBE_REQ = 4

LINKTYPE_IEEE802_11 = 105
LINKTYPE_IEEE802_11_RADIOTAP = 127

_PCAP_MAGICS = {
    b"\xd4\xc3\xb2\xa1": ("<", 1),
    b"\xa1\xb2\xc3\xd4": (">", 1),
    b"\x4d\x3c\xb2\xa1": ("<", 1000),
    b"\xa1\xb2\x3c\x4d": (">", 1000),
}

# radiotap fields before CHANNEL: (alignment, size) for bits 0..3
_RT_FIELDS = ((8, 8), (1, 1), (1, 1), (2, 4))
_RT_FLAG_FCS = 0x10

DATASET_MAGIC = b"PRBVEC\r\n"
DATASET_VERSION = 1
_DATASET_HEADER = struct.Struct("<8sHHI")  # magic, version, reserved, record count
assert _DATASET_HEADER.size == 16


@dataclass(frozen=True)
class Frame:
    payload: bytes
    timestamp_us: int
    channel: int
    device_label: str


@dataclass
class RawCapture:
    frames: list = field(default_factory=list)

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True)
class ProbeVector:
    """Canonical 223-byte probe request vector, bits MSB first within a byte."""

    data: bytes
    device_label: str
    channel: int = 0
    source_frame_index: int = 0

    def __post_init__(self):
        if len(self.data) != VECTOR_BYTES:
            raise ValueError(f"probe vector must be {VECTOR_BYTES} bytes, got {len(self.data)}")

    @property
    def bits(self):
        return np.unpackbits(np.frombuffer(self.data, dtype=np.uint8))

    def same_content(self, other):
        return (self.data, self.device_label, self.channel) == (
            other.data, other.device_label, other.channel)


def frame_type(frame):
    fc = frame[0]
    return (fc >> 2) & 0x3, (fc >> 4) & 0xF


def is_probe_request(frame):
    return len(frame) >= MGMT_HEADER_LEN and frame_type(frame) == (MGMT_TYPE, SUBTYPE_PROBE_REQ)


def source_address(frame):
    return ":".join(f"{b:02x}" for b in frame[10:16])


def iter_elements(body, base_offset=0):
    """Yield ``(element_id, payload, offset)`` for each TLV in a tagged section."""
    pos = 0
    n = len(body)
    while pos < n:
        if n - pos < 2:
            raise DissectionError(
                f"truncated element header at offset {base_offset + pos}",
                offset=base_offset + pos)
        eid, length = body[pos], body[pos + 1]
        end = pos + 2 + length
        if end > n:
            raise DissectionError(
                f"element {eid} at offset {base_offset + pos} declares length {length} "
                f"but only {n - pos - 2} bytes remain",
                element_id=eid, offset=base_offset + pos)
        yield eid, body[pos + 2:end], base_offset + pos
        pos = end


def _place(buf, start, width, payload, what):
    if len(payload) > width:
        logger.warning("%s payload of %d bytes truncated to %d", what, len(payload), width)
        payload = payload[:width]
    buf[start:start + len(payload)] = payload


def dissect(frame, device_label="", channel=0, source_frame_index=0):
    """Map a probe request frame (802.11 header onwards, no FCS) to a ProbeVector."""
    frame = bytes(frame)
    if len(frame) < MGMT_HEADER_LEN:
        raise DissectionError(f"frame of {len(frame)} bytes is shorter than the management header")
    buf = bytearray(VECTOR_BYTES)
    seen_ht = seen_ext = False
    vendor = bytearray()
    for eid, payload, offset in iter_elements(frame[MGMT_HEADER_LEN:], MGMT_HEADER_LEN):
        if eid == EID_HT_CAPABILITIES:
            if seen_ht:
                logger.warning("duplicate HT Capabilities element at offset %d ignored", offset)
                continue
            seen_ht = True
            buf[HT_LEN_BYTE] = len(payload)
            _place(buf, *HT_PAYLOAD, payload, "HT Capabilities")
        elif eid == EID_EXT_CAPABILITIES:
            if seen_ext:
                logger.warning("duplicate Extended Capabilities element at offset %d ignored", offset)
                continue
            seen_ext = True
            buf[EXT_LEN_BYTE] = len(payload)
            _place(buf, *EXT_PAYLOAD, payload, "Extended Capabilities")
        elif eid == EID_VENDOR_SPECIFIC:
            vendor += bytes((eid, len(payload))) + payload
    if vendor:
        _place(buf, *VENDOR_REGION, vendor, "vendor specific region")
    return ProbeVector(bytes(buf), device_label, channel, source_frame_index)


def ds_channel(frame):
    """Channel from the DS Parameter Set element, 0 when absent or unparsable."""
    try:
        for eid, payload, _ in iter_elements(frame[MGMT_HEADER_LEN:]):
            if eid == EID_DS_PARAMS and len(payload) == 1:
                return payload[0]
    except DissectionError:
        pass
    return 0


def parse_radiotap(packet):
    """Return ``(header_length, has_fcs, channel)`` for a radiotap-framed packet."""
    if len(packet) < 8:
        raise IngestError("packet too short for a radiotap header")
    _, _, length = struct.unpack_from("<BBH", packet, 0)
    if length < 8 or length > len(packet):
        raise IngestError(f"bad radiotap header length {length}")
    presents = []
    pos = 4
    while True:
        (word,) = struct.unpack_from("<I", packet, pos)
        presents.append(word)
        pos += 4
        if not word & 0x80000000 or pos + 4 > length:
            break
    present = presents[0]
    flags = 0
    channel = 0
    for bit, (align, size) in enumerate(_RT_FIELDS):
        if not present & (1 << bit):
            continue
        pos = (pos + align - 1) // align * align
        if pos + size > length:
            break
        if bit == 1:
            flags = packet[pos]
        elif bit == 3:
            freq = struct.unpack_from("<H", packet, pos)[0]
            channel = freq_to_channel(freq)
        pos += size
    return length, bool(flags & _RT_FLAG_FCS), channel


def freq_to_channel(freq):
    if freq == 2484:
        return 14
    if 2412 <= freq < 2484:
        return (freq - 2407) // 5
    if 5000 <= freq < 5900:
        return (freq - 5000) // 5
    return 0


def read_pcap(path):
    """Yield ``(linktype, timestamp_us, packet_bytes)`` from a classic pcap file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IngestError(f"cannot read capture {path}: {exc}") from exc
    if len(raw) < 24:
        raise IngestError(f"{path}: too short to be a pcap file")
    try:
        endian, ts_div = _PCAP_MAGICS[raw[:4]]
    except KeyError:
        raise IngestError(f"{path}: not a classic pcap file (magic {raw[:4].hex()})") from None
    linktype = struct.unpack_from(endian + "I", raw, 20)[0] & 0x0FFFFFFF
    rec = struct.Struct(endian + "IIII")
    pos = 24
    while pos < len(raw):
        if pos + rec.size > len(raw):
            raise IngestError(f"{path}: truncated record header at byte {pos}")
        ts_sec, ts_frac, incl_len, _ = rec.unpack_from(raw, pos)
        pos += rec.size
        if pos + incl_len > len(raw):
            raise IngestError(f"{path}: truncated packet at byte {pos}")
        yield linktype, ts_sec * 1_000_000 + ts_frac // ts_div, raw[pos:pos + incl_len]
        pos += incl_len


def write_pcap(path, packets, linktype=LINKTYPE_IEEE802_11):
    """Write packets (bytes or ``(timestamp_us, bytes)``) as a little-endian classic pcap."""
    out = bytearray(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, linktype))
    for i, pkt in enumerate(packets):
        ts, data = pkt if isinstance(pkt, tuple) else (i, pkt)
        out += struct.pack("<IIII", ts // 1_000_000, ts % 1_000_000, len(data), len(data))
        out += data
    Path(path).write_bytes(bytes(out))


def _resolve_label(label_map, path, frame):
    if label_map is None:
        return None
    if isinstance(label_map, str):
        return label_map
    if callable(label_map):
        return label_map(path, frame)
    p = Path(path)
    for key in (str(path), p.name, p.stem):
        if key in label_map:
            return label_map[key]
    return label_map.get(source_address(frame))


def load_capture(path, label_map, channel=None):
    """Read the probe requests of a pcap file, in capture order.

    ``label_map`` is a single label for the whole file, a dict keyed by file
    path / name / stem or by lowercase source MAC, or a callable
    ``(path, frame) -> label``. ``channel`` overrides the per-frame channel
    otherwise taken from radiotap or the DS Parameter Set element.
    """
    frames = []
    unlabeled = []
    for linktype, ts, packet in read_pcap(path):
        has_fcs = False
        rt_channel = 0
        if linktype == LINKTYPE_IEEE802_11_RADIOTAP:
            hdr_len, has_fcs, rt_channel = parse_radiotap(packet)
            packet = packet[hdr_len:]
        elif linktype != LINKTYPE_IEEE802_11:
            raise IngestError(f"{path}: unsupported link type {linktype}")
        if has_fcs:
            packet = packet[:-4]
        if not is_probe_request(packet):
            continue
        label = _resolve_label(label_map, path, packet)
        if label is None:
            unlabeled.append(len(frames))
        ch = channel if channel is not None else (rt_channel or ds_channel(packet))
        frames.append(Frame(bytes(packet), ts, ch, label))
    if unlabeled:
        shown = ", ".join(map(str, unlabeled[:20]))
        more = "" if len(unlabeled) <= 20 else f" (+{len(unlabeled) - 20} more)"
        raise LabeledFrameError(unlabeled[0], f"{path}: no device label for frames {shown}{more}")
    return RawCapture(frames)


def export_vectors(capture):
    vectors = []
    for i, fr in enumerate(capture.frames):
        try:
            vectors.append(dissect(fr.payload, fr.device_label, fr.channel, i))
        except DissectionError as exc:
            exc.frame_index = i
            exc.args = (f"frame {i}: {exc.args[0]}",)
            raise
    return vectors


def save_dataset(path, vectors):
    out = bytearray(_DATASET_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, 0, len(vectors)))
    for v in vectors:
        label = v.device_label.encode("utf-8")
        if len(label) > 0xFFFF:
            raise DatasetFormatError(f"device label too long ({len(label)} bytes)")
        if not 0 <= v.channel <= 0xFF:
            raise DatasetFormatError(f"channel {v.channel} does not fit in one byte")
        out += struct.pack("<H", len(label)) + label + bytes((v.channel,)) + v.data
    Path(path).write_bytes(bytes(out))


def load_dataset(path):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IngestError(f"cannot read dataset {path}: {exc}") from exc
    if len(raw) < _DATASET_HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    magic, version, _, count = _DATASET_HEADER.unpack_from(raw, 0)
    if magic != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: not a probe vector dataset")
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"{path}: dataset version {version}, expected {DATASET_VERSION}")
    pos = _DATASET_HEADER.size
    vectors = []
    try:
        for i in range(count):
            (n,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            label = raw[pos:pos + n].decode("utf-8")
            pos += n
            channel = raw[pos]
            data = raw[pos + 1:pos + 1 + VECTOR_BYTES]
            if len(data) != VECTOR_BYTES:
                raise DatasetFormatError(f"{path}: record {i} truncated")
            pos += 1 + VECTOR_BYTES
            vectors.append(ProbeVector(data, label, channel, i))
    except (struct.error, IndexError, UnicodeDecodeError) as exc:
        raise DatasetFormatError(f"{path}: corrupt record: {exc}") from exc
    if pos != len(raw):
        raise DatasetFormatError(f"{path}: {len(raw) - pos} trailing bytes")
    return vectors


def vectors_to_matrix(vectors):
    """Stack vectors into an ``(n, 1784)`` uint8 bit matrix."""
    if not vectors:
        return np.zeros((0, VECTOR_BITS), dtype=np.uint8)
    packed = np.frombuffer(b"".join(v.data for v in vectors), dtype=np.uint8)
    return np.unpackbits(packed.reshape(len(vectors), VECTOR_BYTES), axis=1)
