#!/usr/bin/env python3
"""Disposable annotation service for the UI end-to-end test.

Builds a throwaway store from the shared fixture corpus, runs scripted
extraction for two pseudo-models, registers one annotator, creates a small
batch, then prints {"port", "token"} as one JSON line and serves until
killed.
"""

import json
import socket
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO / "tests"))

from conftest import EXTRACTION_MODELS, write_extraction_fixtures  # noqa: E402

from revtraits import corpus, reports  # noqa: E402
from revtraits.annotation import create_app, create_batch, issue_token  # noqa: E402
from revtraits.gateway import ChatGateway, make_provider, scripted_config  # noqa: E402
from revtraits.store import Store  # noqa: E402


def main() -> None:
    tmp = Path(tempfile.mkdtemp(prefix="revtraits-ui-e2e-"))
    store = Store(tmp / "store.db")
    with open(REPO / "tests" / "data" / "fixture_corpus.jsonl", encoding="utf-8") as fh:
        corpus.ingest(store, fh)
    fixtures = tmp / "fixtures"
    write_extraction_fixtures(fixtures, store)
    pids = sorted(corpus.filter_eligible(store))[:2]
    for model in EXTRACTION_MODELS:
        config = scripted_config(fixtures)
        gateway = ChatGateway(make_provider(config), config, cache=store)
        reports.run_extraction(store, gateway, model, ["bigfive", "subfive"], pids)

    token = issue_token(store, "ui-annotator", "UI Annotator")
    create_batch(store, pids, ["Openness", "IQC"], list(EXTRACTION_MODELS),
                 overlap_fraction=0.0, seed=1)

    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    print(json.dumps({"port": port, "token": token}), flush=True)

    import uvicorn

    uvicorn.run(create_app(store, "e2e-admin-token"), host="127.0.0.1", port=port,
                log_level="error")


if __name__ == "__main__":
    main()
