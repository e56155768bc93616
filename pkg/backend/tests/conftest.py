from __future__ import annotations

import json
import socket
import threading
import time

import pytest
import uvicorn

from defpipe_backend.config import BackendConfig
from defpipe_backend.modeling import make_tiny_checkpoints
from defpipe_backend.server import create_app


@pytest.fixture(scope="session")
def tiny_checkpoints(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny-models")
    scorer_dir, generator_dir = make_tiny_checkpoints(root, seed=11)
    return scorer_dir, generator_dir


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="session")
def server_url(tiny_checkpoints):
    """A live uvicorn server over the tiny checkpoints, for contract tests."""
    scorer_dir, generator_dir = tiny_checkpoints
    config = BackendConfig(scorer_path=str(scorer_dir), generator_path=str(generator_dir))
    app = create_app(config)
    port = _free_port()
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 30
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("backend server did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
