"""JSON-over-HTTP plumbing shared by the summary and embedding clients."""

from __future__ import annotations

import time
from typing import Callable, Protocol

from .errors import ProviderNetworkError


class Transport(Protocol):
    def __call__(self, url: str, body: dict, headers: dict, timeout: float) -> tuple[int, str]: ...


def httpx_transport(url: str, body: dict, headers: dict, timeout: float) -> tuple[int, str]:
    import httpx

    response = httpx.post(url, json=body, headers=headers, timeout=timeout)
    return response.status_code, response.text


class ForbiddenTransport:
    """Fails on any call; used to prove a run never touches the network."""

    def __init__(self):
        self.calls = 0

    def __call__(self, url, body, headers, timeout):
        self.calls += 1
        raise AssertionError(f"network access attempted: POST {url}")


class RecordingTransport:
    """Replays scripted responses and records every request."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests: list[dict] = []

    def __call__(self, url, body, headers, timeout):
        self.requests.append({"url": url, "body": body, "headers": dict(headers)})
        if not self.responses:
            raise ConnectionError("no scripted response left")
        item = self.responses.pop(0)
        if isinstance(item, BaseException):
            raise item
        return item


def post_json_with_retry(
    transport: Transport,
    url: str,
    body: dict,
    headers: dict,
    *,
    timeout: float = 60.0,
    attempts: int = 3,
    base_delay: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[str, list[dict]]:
    """POST ``body`` until a 2xx arrives; back off base_delay * 2**k between tries.

    Returns the response text and the attempt log. Raises
    :class:`ProviderNetworkError` carrying the log once attempts run out.
    """
    log: list[dict] = []
    for attempt in range(1, attempts + 1):
        try:
            status, text = transport(url, body, headers, timeout)
        except AssertionError:
            raise
        except Exception as exc:
            log.append({"attempt": attempt, "error": f"{type(exc).__name__}: {exc}"})
        else:
            if 200 <= status < 300:
                log.append({"attempt": attempt, "status": status})
                return text, log
            log.append({"attempt": attempt, "status": status, "error": text[:200]})
        if attempt < attempts:
            sleep(base_delay * 2 ** (attempt - 1))
    raise ProviderNetworkError(f"POST {url} failed after {attempts} attempts", log)
