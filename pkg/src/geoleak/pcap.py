"""Minimal libpcap reader/writer for Ethernet + IPv4 + TCP/UDP captures.

No stream reassembly: each frame yields at most one transport payload.
"""
from __future__ import annotations

import ipaddress
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

from .errors import IngestError

log = logging.getLogger(__name__)

LINKTYPE_ETHERNET = 1
ETH_IPV4 = 0x0800
ETH_VLAN = 0x8100
PROTO_TCP = 6
PROTO_UDP = 17


@dataclass(frozen=True)
class Frame:
    index: int
    ts_ms: int
    src: str  # "ip:port"
    dst: str
    transport: str
    payload: bytes


def read_pcap(path) -> tuple[list[Frame], list[str]]:
    """Decode every IPv4 TCP/UDP frame carrying a non-empty payload.

    Returns the frames and a list of warnings. A corrupt global header raises
    IngestError; a truncated trailing record stops reading with a warning.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestError(f"cannot read capture {path}: {exc}") from exc
    if len(data) < 24:
        raise IngestError(f"{path}: truncated pcap global header")
    magic = data[:4]
    if magic == b"\xd4\xc3\xb2\xa1":
        endian = "<"
    elif magic == b"\xa1\xb2\xc3\xd4":
        endian = ">"
    else:
        raise IngestError(f"{path}: not a libpcap file (magic {magic.hex()})")
    _, _, _, _, _, linktype = struct.unpack(endian + "HHiIII", data[4:24])
    if linktype != LINKTYPE_ETHERNET:
        raise IngestError(f"{path}: unsupported link type {linktype}")

    frames: list[Frame] = []
    warnings: list[str] = []
    rec = struct.Struct(endian + "IIII")
    off = 24
    index = 0
    while off < len(data):
        if off + 16 > len(data):
            warnings.append(f"truncated record header at byte {off}; stopping")
            break
        sec, usec, incl, _orig = rec.unpack_from(data, off)
        off += 16
        if off + incl > len(data):
            warnings.append(f"truncated packet {index} at byte {off}; stopping")
            break
        frame = _decode(data[off:off + incl], index, sec * 1000 + usec // 1000)
        if frame is not None:
            frames.append(frame)
        off += incl
        index += 1
    for w in warnings:
        log.warning("%s: %s", path, w)
    return frames, warnings


def _decode(buf: bytes, index: int, ts_ms: int) -> Frame | None:
    if len(buf) < 14:
        return None
    ethertype = struct.unpack_from("!H", buf, 12)[0]
    off = 14
    if ethertype == ETH_VLAN and len(buf) >= 18:
        ethertype = struct.unpack_from("!H", buf, 16)[0]
        off = 18
    if ethertype != ETH_IPV4 or len(buf) < off + 20:
        return None
    ver_ihl, _, total_len, _, frag, _, proto = struct.unpack_from("!BBHHHBB", buf, off)
    ihl = (ver_ihl & 0x0F) * 4
    if ver_ihl >> 4 != 4 or ihl < 20:
        return None
    if frag & 0x1FFF:
        return None  # non-first fragment has no transport header
    src_ip = ipaddress.IPv4Address(buf[off + 12:off + 16])
    dst_ip = ipaddress.IPv4Address(buf[off + 16:off + 20])
    ip_end = min(len(buf), off + total_len) if total_len else len(buf)
    l4 = off + ihl
    if proto == PROTO_TCP:
        if ip_end < l4 + 20:
            return None
        sport, dport = struct.unpack_from("!HH", buf, l4)
        data_off = (buf[l4 + 12] >> 4) * 4
        payload = buf[l4 + data_off:ip_end]
        transport = "tcp"
    elif proto == PROTO_UDP:
        if ip_end < l4 + 8:
            return None
        sport, dport = struct.unpack_from("!HH", buf, l4)
        payload = buf[l4 + 8:ip_end]
        transport = "udp"
    else:
        return None
    if not payload:
        return None
    return Frame(index, ts_ms, f"{src_ip}:{sport}", f"{dst_ip}:{dport}", transport, bytes(payload))


def _checksum(b: bytes) -> int:
    if len(b) % 2:
        b += b"\0"
    s = sum(struct.unpack(f"!{len(b) // 2}H", b))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return ~s & 0xFFFF


def build_frame(src: str, dst: str, transport: str, payload: bytes, tcp_flags: int = 0x18) -> bytes:
    """Ethernet/IPv4/TCP-or-UDP frame for ``ip:port`` endpoints."""
    sip, sport = src.rsplit(":", 1)
    dip, dport = dst.rsplit(":", 1)
    if transport == "tcp":
        l4 = struct.pack("!HHIIBBHHH", int(sport), int(dport), 1, 0, 5 << 4, tcp_flags, 65535, 0, 0)
        proto = PROTO_TCP
    elif transport == "udp":
        l4 = struct.pack("!HHHH", int(sport), int(dport), 8 + len(payload), 0)
        proto = PROTO_UDP
    else:
        raise ValueError(f"unsupported transport {transport!r}")
    body = l4 + payload
    hdr = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(body), 0, 0x4000, 64, proto, 0,
                      ipaddress.IPv4Address(sip).packed, ipaddress.IPv4Address(dip).packed)
    hdr = hdr[:10] + struct.pack("!H", _checksum(hdr)) + hdr[12:]
    eth = b"\x02\x00\x00\x00\x00\x02" + b"\x02\x00\x00\x00\x00\x01" + struct.pack("!H", ETH_IPV4)
    return eth + hdr + body


def write_pcap(path, frames) -> None:
    """Write ``(ts_ms, frame_bytes)`` pairs as a little-endian microsecond pcap."""
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, LINKTYPE_ETHERNET))
        for ts_ms, raw in frames:
            fh.write(struct.pack("<IIII", ts_ms // 1000, (ts_ms % 1000) * 1000, len(raw), len(raw)))
            fh.write(raw)
