"""Regenerates validation-cases.json: the 30-case vector set shared by the
server test suite and the studio's client-side validator tests.

Run from this directory: python3 make_vectors.py
"""

import base64
import json

MODEL = {"id": "vectors", "image_size": 16, "n_s": 3, "n_c": 2, "n_z": 8}
SIZE = MODEL["image_size"]
N = SIZE * SIZE


def seg(fill_rows=(), height=SIZE, width=SIZE, n_s=MODEL["n_s"], raw=None, b64=None):
    if b64 is None:
        if raw is None:
            data = bytearray(N)
            for r, klass in fill_rows:
                for c in range(width):
                    data[r * width + c] = klass
            raw = bytes(data)
        b64 = base64.b64encode(raw).decode()
    return {"data_b64": b64, "height": height, "width": width, "n_s": n_s}


def case(name, verdict, **req):
    req.setdefault("attributes", [1, 0])
    if "segmentation" not in req:
        req["segmentation"] = seg()
    if "seed" not in req and "z" not in req:
        req["seed"] = 0
    return {"name": name, "verdict": verdict, "request": req}


cases = [
    # ---- accepted ----
    case("background only, seeded", "accept"),
    case("all classes painted", "accept",
         segmentation=seg(fill_rows=[(2, 1), (5, 2)]), seed=7),
    case("explicit latent vector", "accept", z=[0.25] * MODEL["n_z"],
         segmentation=seg(fill_rows=[(1, 1)])),
    case("attributes 01", "accept", attributes=[0, 1]),
    case("attributes 11", "accept", attributes=[1, 1]),
    case("attributes 00", "accept", attributes=[0, 0]),
    case("large seed", "accept", seed=2**31 - 1,
         segmentation=seg(fill_rows=[(9, 2)])),
    case("full foreground map", "accept",
         segmentation=seg(fill_rows=[(r, 1) for r in range(SIZE)])),
    # ---- rejected: segmentation geometry ----
    case("wrong height field", "reject",
         segmentation=seg(height=8, raw=bytes(8 * SIZE))),
    case("wrong width field", "reject",
         segmentation=seg(width=8, raw=bytes(8 * SIZE))),
    case("half-size map", "reject",
         segmentation=seg(height=8, width=8, raw=bytes(64))),
    case("negative height", "reject",
         segmentation=seg(height=-16)),
    case("zero width", "reject",
         segmentation=seg(width=0, raw=b"")),
    # ---- rejected: class/channel declarations ----
    case("n_s too small", "reject", segmentation=seg(n_s=2)),
    case("n_s too large", "reject", segmentation=seg(n_s=5)),
    case("class index == n_s", "reject",
         segmentation=seg(raw=bytes([3] * N))),
    case("class index 255", "reject",
         segmentation=seg(raw=bytes([0] * (N - 1) + [255]))),
    # ---- rejected: payload encoding ----
    case("not base64", "reject", segmentation=seg(b64="!!!not-base64!!!")),
    case("truncated payload", "reject",
         segmentation=seg(raw=bytes(N - 16))),
    case("overlong payload", "reject",
         segmentation=seg(raw=bytes(N + 16))),
    case("odd byte count", "reject", segmentation=seg(raw=bytes(100))),
    # ---- rejected: attributes ----
    case("attribute arity 1", "reject", attributes=[1]),
    case("attribute arity 3", "reject", attributes=[1, 0, 1]),
    case("attribute value 2", "reject", attributes=[2, 0]),
    case("attribute fractional", "reject", attributes=[0.5, 0]),
    case("attributes empty", "reject", attributes=[]),
    # ---- rejected: latent ----
    case("z too short", "reject", z=[0.0] * 7),
    case("z too long", "reject", z=[0.0] * 9),
    # the literal 1e400 parses to infinity in both python and javascript
    case("z non-finite", "reject", z=["__INF__"] * MODEL["n_z"]),
    case("fractional seed", "reject", seed=3.5),
]

assert len(cases) == 30, len(cases)
payload = {"model": MODEL, "cases": cases}
text = json.dumps(payload, indent=2).replace('"__INF__"', "1e400")
with open("validation-cases.json", "w") as fh:
    fh.write(text)
print(f"wrote {len(cases)} cases")
