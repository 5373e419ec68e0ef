#!/usr/bin/env python3
"""Scriptable stand-in for an embedding adapter, speaking the stdio protocol.

Text payloads of the form "vec:1,0,0" are answered with that vector verbatim;
anything else gets a deterministic hash vector.
"""
import argparse
import base64
import hashlib
import json
import math
import os
import select
import sys
import time


def hash_vector(data: bytes, dim: int):
    out = []
    counter = 0
    while len(out) < dim:
        digest = hashlib.sha256(data + counter.to_bytes(4, "big")).digest()
        out.extend(b / 127.5 - 1.0 for b in digest)
        counter += 1
    out = out[:dim]
    n = math.sqrt(sum(x * x for x in out)) or 1.0
    return [x / n for x in out]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dim", type=int, default=4)
    ap.add_argument("--unnormalized", action="store_true")
    ap.add_argument("--reverse", action="store_true", help="answer buffered requests in reverse order")
    ap.add_argument("--error-on")
    ap.add_argument("--bad-dim-on")
    ap.add_argument("--crash-on")
    ap.add_argument("--hang-on")
    ap.add_argument("--garbage-on")
    ap.add_argument("--bad-hello", action="store_true")
    ap.add_argument("--slow", type=float, default=0.0, help="seconds to sleep per response")
    args = ap.parse_args()

    out = sys.stdout
    if args.bad_hello:
        out.write("hello there\n")
        out.flush()
        time.sleep(5)
        return
    out.write(json.dumps({"hello": {"dim": args.dim, "normalized": not args.unnormalized}}) + "\n")
    out.flush()

    def answer(req):
        rid = req["id"]
        if req["kind"] == "text":
            payload = req["payload"]
            if payload == args.crash_on:
                sys.exit(3)
            if payload == args.hang_on:
                time.sleep(3600)
            if payload == args.garbage_on:
                return "this is not json"
            if payload == args.error_on:
                return json.dumps({"id": rid, "error": "refused " + payload})
            if payload.startswith("vec:"):
                vec = [float(x) for x in payload[4:].split(",")]
            else:
                vec = hash_vector(payload.encode(), args.dim)
            if payload == args.bad_dim_on:
                vec = vec + [0.0]
        else:
            vec = hash_vector(base64.b64decode(req["payload_b64"]), args.dim)
        if args.slow:
            time.sleep(args.slow)
        return json.dumps({"id": rid, "vector": vec})

    held = []
    buf = b""
    while True:
        while b"\n" in buf:
            line, buf = buf.split(b"\n", 1)
            req = json.loads(line)
            if args.reverse:
                held.append(req)
            else:
                out.write(answer(req) + "\n")
                out.flush()
        if held:
            ready, _, _ = select.select([0], [], [], 0.05)
            if not ready:
                for req in reversed(held):
                    out.write(answer(req) + "\n")
                out.flush()
                held = []
                continue
        chunk = os.read(0, 65536)
        if not chunk:
            break
        buf += chunk

if __name__ == "__main__":
    main()
