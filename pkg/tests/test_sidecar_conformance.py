"""Conformance checks between the core and the extraction sidecar.

The sidecar touches the core only through its external interfaces: the
binary trace container and the line-delimited JSON oracle protocol. The
fixture files under tests/fixtures/ were recorded once from the sidecar
CLI; the oracle tests spawn the sidecar server (building it on first use).
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from attnguard.errors import OracleError
from attnguard.ftt import frobenius_dispersion
from attnguard.oracle import WireOracle
from attnguard.trace import AttentionTrace, RawTrace, average_over_time, read_trace

FIXTURES = Path(__file__).parent / "fixtures"
SIDECAR = Path(__file__).parent.parent / "sidecar"
SIDECAR_CLI = SIDECAR / "dist" / "src" / "cli.js"


def sidecar_cli() -> Path:
    if not SIDECAR_CLI.exists():
        built = subprocess.run(
            ["npm", "run", "build"], cwd=SIDECAR, capture_output=True, text=True
        )
        if built.returncode != 0:
            pytest.fail(f"sidecar build failed:\n{built.stdout}\n{built.stderr}")
    return SIDECAR_CLI


def test_raw_fixture_decodes_with_invariants():
    trace = read_trace(FIXTURES / "sidecar_raw.t2it")
    assert isinstance(trace, RawTrace)
    assert trace.steps == 3
    assert trace.maps.shape == (3, trace.length, trace.width, trace.width)
    assert trace.normalized
    assert np.all(trace.maps >= 0)
    # per-location sums across tokens are 1 at every recorded step
    sums = trace.maps.sum(axis=1)
    assert np.allclose(sums, 1.0, atol=1e-4)
    # provenance metadata survives without confusing the decoder
    assert trace.tokens[1] == "photo"

    averaged = average_over_time(trace)
    assert isinstance(averaged, AttentionTrace)
    assert averaged.normalized
    assert frobenius_dispersion(averaged) > 0


def test_time_averaged_fixture_decodes_with_invariants():
    trace = read_trace(FIXTURES / "sidecar_averaged.t2it")
    assert isinstance(trace, AttentionTrace)
    assert trace.normalized
    assert np.allclose(trace.maps.sum(axis=0), 1.0, atol=1e-4)
    # time-averaging in either component agrees to float32 precision
    raw = read_trace(FIXTURES / "sidecar_raw.t2it")
    assert np.allclose(trace.maps, average_over_time(raw).maps, atol=1e-6)


def test_wire_oracle_against_stub_server():
    """Id-echo and error-recovery behavior against a minimal stub."""
    stub = (
        "import json,sys\n"
        "for line in sys.stdin:\n"
        "    req = json.loads(line)\n"
        "    if req['op'] == 'generate':\n"
        "        out = {'id': req['id'], 'image': 'h:' + ' '.join(req['tokens'])}\n"
        "    elif req['op'] == 'similarity':\n"
        "        out = {'id': req['id'], 'score': 1.0 if req['a'] == req['b'] else 0.5}\n"
        "    else:\n"
        "        out = {'id': req['id'], 'error': 'unknown op'}\n"
        "    print(json.dumps(out), flush=True)\n"
    )
    oracle = WireOracle.from_subprocess([sys.executable, "-c", stub])
    try:
        h = oracle.generate(["a", "cat"])
        assert h == "h:a cat"
        assert oracle.similarity(h, h) == 1.0
        assert oracle.similarity(h, "h:other") == 0.5
    finally:
        oracle.close()


def test_wire_oracle_against_sidecar_server():
    oracle = WireOracle.from_subprocess(["node", str(sidecar_cli()), "serve-oracle"])
    try:
        h1 = oracle.generate(["a", "photo", "of", "a", "cat"])
        h2 = oracle.generate(["a", "photo", "of", "a", "cat"])
        assert h1 == h2
        assert abs(oracle.similarity(h1, h2) - 1.0) < 1e-6
        far = oracle.generate(["quarterly", "earnings", "report"])
        s = oracle.similarity(h1, far)
        assert 0.0 <= s < 1.0
        # protocol errors surface as OracleError, not crashes
        with pytest.raises(OracleError, match="unknown image handle"):
            oracle.similarity("img:00000000", "img:ffffffff")
        # and the server keeps serving afterwards
        assert oracle.similarity(h1, h2) > 0.99
    finally:
        oracle.close()


def test_sidecar_server_recovers_from_malformed_lines():
    proc = subprocess.Popen(
        ["node", str(sidecar_cli()), "serve-oracle"],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
    )
    try:
        proc.stdin.write(b"{this is not json\n")
        proc.stdin.flush()
        resp = json.loads(proc.stdout.readline())
        assert resp["id"] is None and "error" in resp

        proc.stdin.write(b'{"id": 5, "op": "generate", "tokens": ["a"]}\n')
        proc.stdin.flush()
        resp = json.loads(proc.stdout.readline())
        assert resp["id"] == 5 and "image" in resp
        assert proc.poll() is None
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)


def test_sidecar_extraction_end_to_end(tmp_path):
    prompts = tmp_path / "prompts.txt"
    prompts.write_text("a cat on a mat\nsunset over the harbor\n")
    out = tmp_path / "traces"
    result = subprocess.run(
        ["node", str(sidecar_cli()), "extract", "--prompts", str(prompts),
         "--out", str(out), "--steps", "2", "--width", "8"],
        capture_output=True, text=True, check=True,
    )
    lines = [json.loads(line) for line in result.stdout.splitlines()]
    assert len(lines) == 2
    for record in lines:
        trace = read_trace(record["path"])
        assert isinstance(trace, RawTrace)
        assert trace.length == record["L"]
        assert np.allclose(trace.maps.sum(axis=1), 1.0, atol=1e-4)
