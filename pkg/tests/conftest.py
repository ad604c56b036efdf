from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from ragbench.manifest import Context, Document, MetaData, Prompt, QaRecord


def make_doc(doc_id: str, text: str) -> Document:
    return Document(id=doc_id, text=text)


def make_record(record_id: str, question: str, answers=("x",), gold=("d1",)) -> QaRecord:
    return QaRecord(id=record_id, question=question, answers=tuple(answers), gold_doc_ids=tuple(gold))


def make_prompt(prompt_id: str, user: str, system: str = "sys") -> Prompt:
    return Prompt(id=prompt_id, system_message=system, user_message=user, context=Context(), meta=MetaData())


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return str(path)


def write_dataset(tmp_path, records, docs):
    """Write QA + corpus JSONL files and return their paths."""
    qa = write_jsonl(tmp_path / "qa.jsonl", records)
    corpus = write_jsonl(tmp_path / "corpus.jsonl", docs)
    return qa, corpus


class MockOpenAiServer:
    """Local OpenAI-compatible endpoint with scriptable behavior.

    Tracks total requests and the maximum number of simultaneously open
    requests. ``chat_hook`` may return an (status, body_dict) pair to
    override the default echo response.
    """

    def __init__(self):
        self.requests: list[dict] = []
        self.max_concurrent = 0
        self.chat_hook = None
        self.embed_hook = None
        self.delay = 0.0
        self._active = 0
        self._lock = threading.Lock()

        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                # Concurrency is counted over the pre-response phase only: a
                # client request is outstanding until the response is sent,
                # so decrementing before the write avoids counting handler
                # teardown as overlap.
                with server._lock:
                    server._active += 1
                    server.max_concurrent = max(server.max_concurrent, server._active)
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    body = json.loads(self.rfile.read(length) or b"{}")
                    record = {
                        "path": self.path,
                        "body": body,
                        "auth": self.headers.get("Authorization"),
                    }
                    with server._lock:
                        server.requests.append(record)
                    if server.delay:
                        import time

                        time.sleep(server.delay)
                    status, payload = server._respond(self.path, body)
                    raw = json.dumps(payload).encode("utf-8")
                finally:
                    with server._lock:
                        server._active -= 1
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def _respond(self, path: str, body: dict):
        if path.endswith("/chat/completions"):
            if self.chat_hook is not None:
                hooked = self.chat_hook(body)
                if hooked is not None:
                    return hooked
            user = next(
                (m["content"] for m in body.get("messages", []) if m.get("role") == "user"),
                "",
            )
            return 200, {"choices": [{"message": {"role": "assistant", "content": user}}]}
        if path.endswith("/embeddings"):
            if self.embed_hook is not None:
                hooked = self.embed_hook(body)
                if hooked is not None:
                    return hooked
            data = [
                {"index": i, "embedding": [1.0, 0.0, 0.0]}
                for i, _ in enumerate(body.get("input", []))
            ]
            return 200, {"data": data}
        return 404, {"error": "unknown path"}

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}/v1"

    def shutdown(self):
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def mock_server():
    server = MockOpenAiServer()
    yield server
    server.shutdown()
