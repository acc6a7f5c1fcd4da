"""The server's verdict on every case in the vector set shared with the
studio client. The client-side validator is held to the same verdicts by
the frontend test suite against the same file."""

import json
import os

import pytest
from fastapi.testclient import TestClient

from segsynth.networks import ArchConfig
from segsynth.server import Registry, create_app
from segsynth.training import TrainConfig, build_bundle

VECTORS_PATH = os.path.join(
    os.path.dirname(__file__), "..", "frontend", "shared", "validation-cases.json"
)


@pytest.fixture(scope="module")
def vectors():
    with open(VECTORS_PATH) as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def client(vectors):
    spec = vectors["model"]
    arch = ArchConfig(
        image_size=spec["image_size"],
        n_s=spec["n_s"],
        n_c=spec["n_c"],
        n_z=spec["n_z"],
        base_channels=4,
    )
    registry = Registry()
    registry.add(spec["id"], build_bundle(
        TrainConfig(arch=arch, m=4, epochs=1, seed=0), with_optimizers=False
    ))
    return TestClient(create_app(registry))


def test_has_thirty_cases(vectors):
    assert len(vectors["cases"]) == 30


def test_server_verdicts_match(client, vectors):
    model_id = vectors["model"]["id"]
    failures = []
    for case in vectors["cases"]:
        req = dict(case["request"])
        req["model_id"] = model_id
        resp = client.post(
            "/generate",
            content=json.dumps(req),  # allow_nan keeps the non-finite case intact
            headers={"Content-Type": "application/json"},
        )
        verdict = "accept" if resp.status_code == 200 else "reject"
        if verdict != case["verdict"]:
            failures.append((case["name"], resp.status_code, case["verdict"]))
    assert not failures, failures
