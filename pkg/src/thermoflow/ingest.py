"""Classic pcap reading and writing.

Only the header facts the flow features need are decoded: Ethernet (one
optional 802.1Q tag), IPv4, and TCP or UDP. Everything else is skipped and
counted. Payload bytes are never returned to callers.
"""

from __future__ import annotations

import socket
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

from .errors import CorruptLength, Truncated, UnknownMagic

MAGIC_MICRO = 0xA1B2C3D4
MAGIC_NANO = 0xA1B23C4D
LINKTYPE_ETHERNET = 1

ETH_LEN = 14
VLAN_LEN = 4
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_VLAN = 0x8100
PROTO_TCP = 6
PROTO_UDP = 17

_NATIVE = "<" if sys.byteorder == "little" else ">"
_SWAPPED = ">" if _NATIVE == "<" else "<"


@dataclass(frozen=True)
class PcapHeader:
    magic: int
    version_major: int
    version_minor: int
    snaplen: int
    link_type: int
    ts_resolution: str  # "micro" | "nano"
    byte_order: str  # "same" | "swapped", relative to this machine

    @property
    def endian(self) -> str:
        return _NATIVE if self.byte_order == "same" else _SWAPPED


@dataclass(frozen=True, slots=True)
class PacketRecord:
    timestamp: float
    frame_len: int
    payload_len: int
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    tcp_flags: int = 0
    tcp_window: int = 0
    is_tcp: bool = True


@dataclass
class ParseCounters:
    """Bookkeeping for one capture: ``yielded + skipped == records``."""

    records: int = 0
    yielded: int = 0
    skipped: int = 0
    skip_reasons: dict = field(default_factory=dict)

    def skip(self, reason: str) -> None:
        self.skipped += 1
        self.skip_reasons[reason] = self.skip_reasons.get(reason, 0) + 1


def parse_pcap_header(block: bytes) -> PcapHeader:
    if len(block) < 24:
        raise Truncated(f"pcap global header needs 24 bytes, got {len(block)}")
    block = bytes(block[:24])
    for order, endian in (("same", _NATIVE), ("swapped", _SWAPPED)):
        (magic,) = struct.unpack(endian + "I", block[:4])
        if magic in (MAGIC_MICRO, MAGIC_NANO):
            break
    else:
        raise UnknownMagic(f"not a pcap file (magic bytes {block[:4].hex()})")
    vmaj, vmin, _tz, _sigfigs, snaplen, link = struct.unpack(endian + "HHiIII", block[4:24])
    if snaplen == 0:
        raise CorruptLength("snaplen must be positive")
    raw_magic = struct.unpack(">I", block[:4])[0]
    return PcapHeader(
        magic=raw_magic,
        version_major=vmaj,
        version_minor=vmin,
        snaplen=snaplen,
        link_type=link,
        ts_resolution="nano" if magic == MAGIC_NANO else "micro",
        byte_order=order,
    )


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = stream.read(n)
    if buf is None:
        buf = b""
    if len(buf) != n:
        raise Truncated(f"expected {n} bytes, stream ended after {len(buf)}")
    return buf


def decode_frame(frame: bytes, orig_len: int, ts: float) -> PacketRecord | str:
    """Decode one Ethernet frame; returns a skip reason string on failure.

    Every offset is checked against ``len(frame)`` (the captured length), so
    lying inner length fields can never cause a read past the record.
    """
    cap = len(frame)
    if cap < ETH_LEN:
        return "short-link"
    off = 12
    (ethertype,) = struct.unpack_from("!H", frame, off)
    off = ETH_LEN
    if ethertype == ETHERTYPE_VLAN:
        if cap < off + VLAN_LEN:
            return "short-link"
        (ethertype,) = struct.unpack_from("!H", frame, off + 2)
        off += VLAN_LEN
    if ethertype != ETHERTYPE_IPV4:
        return "not-ipv4"
    if cap < off + 20:
        return "short-ip"
    ver_ihl = frame[off]
    if ver_ihl >> 4 != 4:
        return "not-ipv4"
    ihl = (ver_ihl & 0x0F) * 4
    if ihl < 20 or cap < off + ihl:
        return "short-ip"
    total_len, frag = struct.unpack_from("!H2xH", frame, off + 2)
    if frag & 0x1FFF:
        return "fragment"
    proto = frame[off + 9]
    src_ip = socket.inet_ntoa(frame[off + 12 : off + 16])
    dst_ip = socket.inet_ntoa(frame[off + 16 : off + 20])
    l4 = off + ihl
    if proto == PROTO_TCP:
        if cap < l4 + 20:
            return "short-transport"
        sport, dport, doff_byte, flags, window = struct.unpack_from("!HH8xBBH", frame, l4)
        thl = (doff_byte >> 4) * 4
        if thl < 20:
            return "short-transport"
        is_tcp = True
    elif proto == PROTO_UDP:
        if cap < l4 + 8:
            return "short-transport"
        sport, dport = struct.unpack_from("!HH", frame, l4)
        thl, flags, window, is_tcp = 8, 0, 0, False
    else:
        return "not-tcp-udp"
    headers = off + ihl + thl
    # IP total length excludes Ethernet trailer padding; take the smaller claim
    payload = min(orig_len - headers, total_len - ihl - thl)
    payload = max(0, payload)
    return PacketRecord(
        timestamp=ts,
        frame_len=orig_len,
        payload_len=payload,
        src_ip=src_ip,
        dst_ip=dst_ip,
        src_port=sport,
        dst_port=dport,
        tcp_flags=flags,
        tcp_window=window,
        is_tcp=is_tcp,
    )


def next_packet(
    stream: BinaryIO, header: PcapHeader, counters: ParseCounters | None = None
) -> PacketRecord | None:
    """Return the next decodable packet, or ``None`` at end of stream."""
    if counters is None:
        counters = ParseCounters()
    rec_fmt = header.endian + "IIII"
    divisor = 1e9 if header.ts_resolution == "nano" else 1e6
    while True:
        head = stream.read(16)
        if not head:
            return None
        if len(head) != 16:
            raise Truncated("record header cut short")
        sec, frac, incl, orig = struct.unpack(rec_fmt, head)
        if incl > header.snaplen:
            raise CorruptLength(f"captured length {incl} exceeds snaplen {header.snaplen}")
        frame = _read_exact(stream, incl)
        counters.records += 1
        if header.link_type != LINKTYPE_ETHERNET:
            counters.skip("link-type")
            continue
        rec = decode_frame(frame, max(orig, incl), sec + frac / divisor)
        if isinstance(rec, str):
            counters.skip(rec)
            continue
        counters.yielded += 1
        return rec


class PcapReader:
    """Iterate the packets of a pcap stream; counters are filled as it goes."""

    def __init__(self, stream: BinaryIO):
        self.stream = stream
        self.header = parse_pcap_header(_read_exact(stream, 24))
        self.counters = ParseCounters()

    def __iter__(self) -> Iterator[PacketRecord]:
        while (pkt := next_packet(self.stream, self.header, self.counters)) is not None:
            yield pkt


def read_pcap(path: str | Path) -> tuple[list[PacketRecord], ParseCounters]:
    with open(path, "rb") as fh:
        reader = PcapReader(fh)
        packets = list(reader)
    return packets, reader.counters


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\0"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


_MAC_A = bytes.fromhex("020000000001")
_MAC_B = bytes.fromhex("020000000002")


def build_frame(rec: PacketRecord) -> bytes:
    """Synthesize an Ethernet/IPv4/TCP-or-UDP frame carrying ``rec``'s facts.

    The payload is zero-filled; the frame is exactly ``rec.frame_len`` bytes.
    """
    thl = 20 if rec.is_tcp else 8
    headers = ETH_LEN + 20 + thl
    if rec.frame_len < headers + rec.payload_len:
        raise ValueError(
            f"frame_len {rec.frame_len} cannot hold {headers} header bytes + {rec.payload_len} payload"
        )
    eth = _MAC_A + _MAC_B + struct.pack("!H", ETHERTYPE_IPV4)
    total_len = 20 + thl + rec.payload_len
    ip = struct.pack(
        "!BBHHHBBH4s4s",
        0x45, 0, total_len, 0, 0x4000, 64,
        PROTO_TCP if rec.is_tcp else PROTO_UDP, 0,
        socket.inet_aton(rec.src_ip), socket.inet_aton(rec.dst_ip),
    )
    ip = ip[:10] + struct.pack("!H", _checksum(ip)) + ip[12:]
    if rec.is_tcp:
        l4 = struct.pack(
            "!HHIIBBHHH", rec.src_port, rec.dst_port, 0, 0, 5 << 4,
            rec.tcp_flags, rec.tcp_window, 0, 0,
        )
    else:
        l4 = struct.pack("!HHHH", rec.src_port, rec.dst_port, 8 + rec.payload_len, 0)
    frame = eth + ip + l4
    return frame + bytes(rec.frame_len - len(frame))


def split_timestamp(ts: float) -> tuple[int, int]:
    sec = int(ts // 1)
    usec = int(round((ts - sec) * 1e6))
    if usec >= 1_000_000:
        sec, usec = sec + 1, usec - 1_000_000
    return sec, usec


def write_pcap(records: Iterable[PacketRecord], sink: BinaryIO, snaplen: int = 65535) -> int:
    """Write a little-endian microsecond pcap; returns bytes written."""
    records = list(records)
    if not records:
        raise ValueError("write_pcap needs at least one record")
    snaplen = max(snaplen, max(r.frame_len for r in records))
    written = sink.write(struct.pack("<IHHiIII", MAGIC_MICRO, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET))
    for rec in records:
        frame = build_frame(rec)
        sec, usec = split_timestamp(rec.timestamp)
        written += sink.write(struct.pack("<IIII", sec, usec, len(frame), len(frame)))
        written += sink.write(frame)
    return written


def save_pcap(records: Iterable[PacketRecord], path: str | Path) -> int:
    with open(path, "wb") as fh:
        return write_pcap(records, fh)
