"""Chat-completion clients: an HTTP client for the common chat JSON schema
and deterministic stubs for offline runs and tests."""

from __future__ import annotations

from typing import Callable, Protocol

from .errors import ExternalServiceError


class ChatClient(Protocol):
    def complete(self, system_prompt: str, user_prompt: str) -> str: ...


class StubChatClient:
    """Deterministic stand-in; replies via a callable or a fixed string.

    Records every (system, user) prompt pair for assertions.
    """

    def __init__(self, reply: str | Callable[[str, str], str] = ""):
        self._reply = reply
        self.calls: list[tuple[str, str]] = []

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        self.calls.append((system_prompt, user_prompt))
        if callable(self._reply):
            return self._reply(system_prompt, user_prompt)
        return self._reply


class HttpChatClient:
    """Client for a remote chat-completions endpoint.

    Request: POST {"model": ..., "messages": [{role, content}, ...]};
    response: {"choices": [{"message": {"content": ...}}]}.
    """

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 timeout: float = 60.0, session=None):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        messages = []
        if system_prompt:
            messages.append({"role": "system", "content": system_prompt})
        messages.append({"role": "user", "content": user_prompt})
        try:
            resp = self._session.post(
                self.endpoint,
                json={"model": self.model, "messages": messages},
                headers=headers,
                timeout=self.timeout,
            )
        except Exception as exc:
            raise ExternalServiceError(f"chat request failed: {exc}") from exc
        if getattr(resp, "status_code", 200) >= 400:
            raise ExternalServiceError(f"chat endpoint returned {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except Exception as exc:
            raise ExternalServiceError(f"malformed chat response: {exc}") from exc
