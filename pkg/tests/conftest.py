import os
from pathlib import Path

import pytest

from usecomply.corpus import load_corpus, load_provision

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures" / "ccpa_optin"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def corpus():
    return {item.use_case.id: item for item in load_corpus(FIXTURES / "manifest.json")}


@pytest.fixture(scope="session")
def opt_in():
    return load_provision(FIXTURES / "provisions" / "ccpa-7028a.json")


def _block_remote_connections() -> None:
    import ipaddress
    import socket

    original = socket.socket.connect

    def guarded(sock, address):
        host = address[0] if isinstance(address, tuple) else None
        if host is not None:
            try:
                local = ipaddress.ip_address(host).is_loopback
            except ValueError:
                local = host == "localhost"
            if not local:
                raise OSError(f"network access blocked in offline test run: {address!r}")
        return original(sock, address)

    socket.socket.connect = guarded


if os.environ.get("USECOMPLY_OFFLINE"):
    _block_remote_connections()


def pytest_terminal_summary(terminalreporter):
    # acceptance tests attach their verdict line with record_property("acceptance", ...)
    lines = [
        value
        for reports in terminalreporter.stats.values()
        for report in reports
        if getattr(report, "when", None) == "call"
        for name, value in getattr(report, "user_properties", ())
        if name == "acceptance"
    ]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
