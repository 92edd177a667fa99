import struct

import numpy as np
import pytest

from probeprint.ingest import ProbeVector, dissect

BROADCAST = b"\xff" * 6


def mgmt_header(subtype, src=b"\x02\x00\x00\x00\x00\x01", seq=0):
    # frame control byte 0: version 0 (bits 0-1), type (bits 2-3), subtype (bits 4-7)
    fc0 = (subtype << 4) | (0 << 2)
    return bytes((fc0, 0)) + b"\x00\x00" + BROADCAST + src + BROADCAST + struct.pack("<H", seq << 4)


def tlv(eid, payload):
    return bytes((eid, len(payload))) + bytes(payload)


def probe_request(*elements, src=b"\x02\x00\x00\x00\x00\x01"):
    return mgmt_header(4, src) + b"".join(elements)


def beacon():
    fixed = b"\x00" * 8 + b"\x64\x00" + b"\x01\x04"
    return mgmt_header(8) + fixed + tlv(0, b"net")


def radiotap(frame, freq=2437, fcs=False):
    # present: flags (bit 1) + channel (bit 3)
    present = (1 << 1) | (1 << 3)
    flags = 0x10 if fcs else 0
    body = bytes((flags,)) + b"\x00" + struct.pack("<HH", freq, 0x00A0)
    hdr = struct.pack("<BBHI", 0, 0, 8 + len(body), present) + body
    return hdr + frame + (b"\xde\xad\xbe\xef" if fcs else b"")


def pcap_bytes(packets, linktype=105):
    out = struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, linktype)
    for i, pkt in enumerate(packets):
        out += struct.pack("<IIII", 1_700_000_000 + i, 0, len(pkt), len(pkt)) + pkt
    return out


HT_PAYLOAD = bytes([0x2D, 0x01]) + bytes(range(3, 27))
EXT_PAYLOAD = bytes([0x04, 0x00, 0x08, 0x84, 0x00, 0x00, 0x00, 0x40])


def device_frames(rng, n_frames, n_vendor=2):
    """Probe requests of one synthetic device: fixed IEs, a jittery sequence-ish vendor byte."""
    ht = bytes(rng.integers(0, 256, 26, dtype=np.uint8))
    ext = bytes(rng.integers(0, 256, int(rng.integers(4, 11)), dtype=np.uint8))
    vendors = [bytes((0x00, 0x50, 0xF2)) + bytes(rng.integers(0, 256, int(rng.integers(3, 12)),
                                                            dtype=np.uint8))
               for _ in range(n_vendor)]
    frames = []
    for _ in range(n_frames):
        v = [bytearray(x) for x in vendors]
        if rng.random() < 0.3:
            v[-1][-1] = int(rng.integers(0, 256))
        frames.append(probe_request(tlv(1, b"\x02\x04\x0b\x16"), tlv(45, ht), tlv(127, ext),
                                    *(tlv(221, bytes(x)) for x in v)))
    return frames


def synthetic_vectors(n_devices=8, per_device=12, seed=0):
    rng = np.random.default_rng(seed)
    vectors = []
    for d in range(n_devices):
        for fr in device_frames(rng, per_device):
            vectors.append(dissect(fr, f"dev{d:02d}", 6, len(vectors)))
    return vectors


def random_vectors(rng, labels, density=0.5):
    out = []
    for i, label in enumerate(labels):
        bits = (rng.random(1784) < density).astype(np.uint8)
        out.append(ProbeVector(np.packbits(bits).tobytes(), label, 1, i))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus():
    return synthetic_vectors()


# acceptance reporting: one line per criterion at the end of the run
_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, text): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    cid, text = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        prev = _ACCEPTANCE.get(cid, (None, text))[0]
        if prev in (None, "PASS") or status == "FAIL":
            _ACCEPTANCE[cid] = (status, text)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE):
        status, text = _ACCEPTANCE[cid]
        terminalreporter.write_line(f"[{status}] {cid}: {text}")
