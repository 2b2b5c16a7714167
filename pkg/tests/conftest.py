import hashlib
import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from citeframe.corpus import CitationInstance, save_instances
from citeframe.llm_backend import BackendConfig

LABEL_LINE_RE = re.compile(r"^- ([A-Za-z]+): ", re.MULTILINE)

SOFT_INTENT_LABELS = ["Contextualize", "SignalGap", "HighlightLimitation",
                      "JustifyDesignChoice", "Use", "Modify", "EvaluateAgainst"]


def canned_completion(prompt: str) -> str:
    """Deterministic fake LLM: picks a label from the prompt's inventory by
    hashing the prompt, and returns a rationale plus a LABEL line."""
    labels = LABEL_LINE_RE.findall(prompt)
    assert labels, "prompt carries no label inventory"
    idx = int(hashlib.sha256(prompt.encode("utf-8")).hexdigest(), 16) % len(labels)
    return f"The context matches {labels[idx]} best.\nLABEL: {labels[idx]}"


@pytest.fixture
def mock_transport():
    calls = []

    def transport(config, prompt):
        calls.append(prompt)
        return canned_completion(prompt)

    transport.calls = calls
    return transport


@pytest.fixture
def backend_config(tmp_path):
    return BackendConfig(
        endpoint_url="http://localhost:0/unused",
        model_name="mock-model",
        cache_dir=str(tmp_path / "cache"),
        temperature=0.7,
        max_retries=1,
        max_parallel=4,
    )


@pytest.fixture
def mock_server():
    """Local OpenAI-style chat-completions endpoint with canned responses."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length))
            text = canned_completion(body["messages"][0]["content"])
            payload = json.dumps(
                {"choices": [{"message": {"content": text}}]}
            ).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


def make_instances(n=10, schema="soft-intent", labels=None):
    labels = labels or SOFT_INTENT_LABELS
    out = []
    for i in range(n):
        out.append(CitationInstance(
            id=f"i{i}",
            context=f"We build on the parser of [cited work] (instance {i}).",
            source_doc_id=f"D{i // 3}",
            citing_title=f"Citing paper {i}",
            cited_title="Cited paper",
            section="Introduction" if i % 2 == 0 else None,
            domain="Computer Science" if i % 2 == 0 else "Psychology",
            gold={schema: labels[i % len(labels)]},
        ))
    return out


@pytest.fixture
def corpus10():
    return make_instances(10)


@pytest.fixture
def corpus10_file(tmp_path, corpus10):
    path = tmp_path / "corpus.jsonl"
    save_instances(corpus10, path)
    return path
