#!/usr/bin/env python3
"""Drives the bacflow binary end to end: analyze, export-gexf, check, score,
analyze --update, then the console API over HTTP."""

import json
import socket
import subprocess
import sys
import tempfile
import time
import urllib.error
import urllib.request
from pathlib import Path

BACFLOW, MAKE_FIXTURES, VALIDATOR = (Path(a) for a in sys.argv[1:4])
failures = []


def expect(cond, what):
    print(("ok    " if cond else "FAIL  ") + what)
    if not cond:
        failures.append(what)


def run(*args, ok=True):
    p = subprocess.run([str(BACFLOW), *map(str, args), "-c", str(conf)], capture_output=True, text=True)
    if ok and p.returncode != 0:
        print(p.stderr, file=sys.stderr)
    return p


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def http(method, path, body=None, headers=None):
    req = urllib.request.Request(base + path, method=method, data=body, headers=headers or {})
    try:
        with urllib.request.urlopen(req, timeout=5) as r:
            return r.status, json.loads(r.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    day, cluster = subprocess.run([str(MAKE_FIXTURES), str(d)], check=True, capture_output=True,
                                  text=True).stdout.split()
    conf = d / "bacflow.conf"
    conf.write_text(
        f"baseline = {d / 'baseline.json'}\n"
        f"flow_csv = {d / 'flows.csv'}\n"
        f"anomaly_log = {d / 'anomalies.ndjson'}\n"
        f"cov_dir = {d / 'cov'}\n"
        f"sensor_meta = {d / 'cov' / 'sensors.meta'}\n"
        f"scores_dir = {d / 'scores'}\n")

    p = run("analyze", d / "week.pcap")
    expect(p.returncode == 0 and (d / "baseline.json").exists(), "analyze writes the baseline")
    rows = (d / "flows.csv").read_text().splitlines()
    expect(len(rows) == 6, f"flow CSV has a header and 5 flows ({len(rows) - 1})")
    expect("generation 0" in p.stderr, "first analyze is generation 0")

    p = run("analyze", d / "missing.pcap", ok=False)
    expect(p.returncode != 0, "analyze on a missing capture exits non-zero")

    p = run("export-gexf", "-o", d / "graph.gexf")
    v = subprocess.run([sys.executable, str(VALIDATOR), "--weights-sum-to-one", str(d / "graph.gexf")])
    expect(p.returncode == 0 and v.returncode == 0, "export-gexf output validates")
    again = run("export-gexf", d / "week.pcap").stdout
    expect(again == (d / "graph.gexf").read_text(), "export from capture equals export from baseline")

    p = run("check", d / "day.pcap", "--log")
    recs = [json.loads(l) for l in p.stdout.splitlines() if l]
    expect(p.returncode == 0 and len(recs) == 12, f"check reports 12 records ({len(recs)})")
    expect(all(r["verdict"] == "unknown-flow" for r in recs), "every record is unknown-flow")
    expect([r["id"] for r in recs] == list(range(1, 13)), "anomaly ids run 1..12")

    p = run("score", day)
    tree = json.loads((d / "scores" / f"{day}.json").read_text())
    c = next(c for c in tree["clusters"] if c["type"] == cluster)
    weights = [h["W"] for h in c["hours"]]
    expect(p.returncode == 0 and len(weights) == 24, "score writes a 24-hour cluster")
    expect(weights.index(max(weights)) >= 12, "stuck light peaks in the afternoon fault")

    p = run("analyze", "--update", d / "day.pcap")
    expect(p.returncode == 0 and "generation 1" in p.stderr, "analyze --update starts generation 1")

    port = free_port()
    base = f"http://127.0.0.1:{port}"
    srv = subprocess.Popen([str(BACFLOW), "serve", "-c", str(conf), "--listen", f"127.0.0.1:{port}"])
    try:
        for _ in range(100):
            try:
                socket.create_connection(("127.0.0.1", port), timeout=0.2).close()
                break
            except OSError:
                time.sleep(0.05)
        status, flows = http("GET", "/api/flows")
        expect(status == 200 and len(flows["flows"]) == 6, "GET /api/flows")
        status, graph = http("GET", "/api/graph?layer=both")
        expect(status == 200 and len(graph["edges"]) == 6, "GET /api/graph")
        status, t = http("GET", f"/api/tree/{day}")
        expect(status == 200 and t == tree, "GET /api/tree/<day> serves the scored file")
        status, _ = http("GET", "/api/tree/1999-01-01")
        expect(status == 404, "unknown day is 404")
        status, delta = http("GET", "/api/delta")
        expect(status == 200 and len(delta["new_nodes"]) == 1 and len(delta["new_edges"]) == 1,
               "delta lists the new device and edge")
        body = json.dumps({"generation": delta["generation"], "nodes": [n["address"] for n in delta["new_nodes"]],
                           "edges": [{"source": e["source"], "target": e["target"]} for e in delta["new_edges"]]})
        status, _ = http("POST", "/api/delta/confirm", body.encode(), {"X-Operator-Id": "e2e"})
        expect(status == 200, "confirm accepted")
        status, delta = http("GET", "/api/delta")
        expect(not delta["new_nodes"] and not delta["new_edges"], "delta empty after confirm")
        status, an = http("GET", "/api/anomalies?since=10")
        expect(status == 200 and [a["id"] for a in an["anomalies"]] == [11, 12], "anomalies since id")
        status, ack = http("POST", "/api/anomalies/11/ack", b"", {"X-Operator-Id": "e2e"})
        expect(status == 200 and ack["ack"]["operator"] == "e2e", "ack records the operator")
        status, an = http("GET", "/api/anomalies?since=10")
        expect([a["acknowledged"] for a in an["anomalies"]] == [True, False], "ack visible in listing")
    finally:
        srv.terminate()
        srv.wait(timeout=5)

print(f"{len(failures)} failures")
sys.exit(1 if failures else 0)
