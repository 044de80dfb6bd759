import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from orchestra.query import QueryItem
from orchestra.similarity import Answer, AnswerKind


class MockChatServer:
    """Local chat-completion endpoint with scripted faults.

    ``reply`` maps a request body to reply text. ``faults`` is a list of
    HTTP status codes returned, in order, before normal service.
    """

    def __init__(self, reply=None):
        self.reply = reply or (lambda body: "Answer: (A)\nReason: mock")
        self.faults = []
        self.requests = []
        self.lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                with server.lock:
                    server.requests.append({"path": self.path, "body": body, "headers": dict(self.headers)})
                    status = server.faults.pop(0) if server.faults else 200
                if status != 200:
                    self.send_response(status)
                    self.end_headers()
                    self.wfile.write(b'{"error": "injected"}')
                    return
                text = server.reply(body)
                payload = json.dumps({"choices": [{"message": {"role": "assistant", "content": text}}]}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def base_url(self):
        host, port = self.httpd.server_address
        return f"http://{host}:{port}/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def chat_server():
    with MockChatServer() as srv:
        yield srv


def make_choice(qid="q1", truth="B", category=None, text="Which object is closer to the camera?"):
    return QueryItem(
        query_id=qid,
        text=text,
        answer_kind=AnswerKind.CHOICE,
        category_hint=category,
        options=("chair", "table", "lamp", "sofa"),
        ground_truth=Answer(AnswerKind.CHOICE, truth) if truth else None,
    )


@pytest.fixture
def choice_query():
    return make_choice()
