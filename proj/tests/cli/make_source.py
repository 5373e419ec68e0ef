#!/usr/bin/env python3
"""Writes a small JSONL knowledge source with generated PNG images."""
import json
import os
import struct
import sys
import zlib


def png(seed):
    def chunk(kind, data):
        body = kind + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body))

    raw = b"\x00" + bytes((seed * 37 + i) % 256 for i in range(6))
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", struct.pack(">IIBBBBB", 2, 1, 8, 2, 0, 0, 0))
            + chunk(b"tEXt", b"seed\x00" + str(seed).encode()) + chunk(b"IDAT", zlib.compress(raw))
            + chunk(b"IEND", b""))


def main(out):
    os.makedirs(os.path.join(out, "img"), exist_ok=True)
    n = 12
    with open(os.path.join(out, "nodes.jsonl"), "w") as f:
        for i in range(n):
            images = []
            for j in range(2):
                name = f"img/{i}_{j}.png"
                with open(os.path.join(out, name), "wb") as im:
                    im.write(png(i * 10 + j))
                images.append(name)
            rec = {
                "schema": 1,
                "id": f"bn:{i:02d}",
                "source_ids": [f"wn:{i}"],
                "glosses": [{"lang": "en", "text": f"concept number {i}"},
                            {"lang": "de", "text": f"Begriff Nummer {i}"}],
                "images": images,
                "relations": [{"label": "is_a", "target": f"bn:{(i + 1) % n:02d}"},
                              {"label": "has_color", "target": f"bn:{(i + 2) % n:02d}"},
                              {"label": "depicts", "target": f"bn:{(i + 3) % n:02d}"}],
            }
            f.write(json.dumps(rec) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
