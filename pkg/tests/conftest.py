import numpy as np
import pytest

from thermoflow.ingest import PacketRecord


def make_packet(ts=0.0, frame_len=54, payload_len=0, src="10.0.0.1", dst="203.0.113.9", sport=40000, dport=443,
                flags=0x18, window=29200, tcp=True):
    return PacketRecord(ts, frame_len, payload_len, src, dst, sport, dport, flags if tcp else 0, window if tcp else 0, tcp)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record(num: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[num] = (name, bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
