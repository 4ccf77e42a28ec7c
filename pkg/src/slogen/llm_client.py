"""Client for single-shot completion endpoints (``{model, prompt, stream: false}``)."""
import json
import logging
import re
import threading
from typing import Any, Dict, Optional

import requests

from src.config import Config
from src.errors import LlmUnavailable

logger = logging.getLogger(__name__)

_FENCED_BLOCK = re.compile(r"```(?:json)?[ \t]*\n(.*?)```", re.DOTALL)


class LlmClient:
    """POSTs prompts to a local LLM server and returns the completion text."""

    def __init__(
        self,
        endpoint: str = Config.LLM_ENDPOINT,
        model: str = Config.LLM_MODEL,
        timeout: float = Config.LLM_TIMEOUT_S,
        session: Optional[requests.Session] = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.session = session or requests.Session()
        self._locks: Dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def conversation_lock(self, key: str) -> threading.Lock:
        """One in-flight repair conversation per key (an SLO id)."""
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def complete(self, prompt: str) -> str:
        body = {"model": self.model, "prompt": prompt, "stream": False}
        try:
            response = self.session.post(self.endpoint, json=body, timeout=self.timeout)
            response.raise_for_status()
            data = response.json()
        except (requests.RequestException, ValueError) as e:
            logger.warning(f"LLM endpoint {self.endpoint} unavailable: {str(e)}")
            raise LlmUnavailable(f"LLM endpoint {self.endpoint} unavailable: {e}") from e
        if not isinstance(data, dict) or not isinstance(data.get("response"), str):
            raise LlmUnavailable(f"LLM endpoint {self.endpoint} returned no 'response' text")
        logger.debug(f"LLM completion of {len(data['response'])} chars from {self.model}")
        return data["response"]


def extract_object(text: str) -> Dict[str, Any]:
    """
    Parse the first fenced block of a completion as a JSON object.

    Prose around the block is ignored.

    Raises:
        ValueError: No fenced block, invalid JSON or not an object
    """
    match = _FENCED_BLOCK.search(text)
    if match is None:
        raise ValueError("answer holds no fenced ```json block")
    try:
        obj = json.loads(match.group(1))
    except json.JSONDecodeError as e:
        raise ValueError(f"fenced block is not valid JSON: {e.msg} at line {e.lineno}") from e
    if not isinstance(obj, dict):
        raise ValueError("fenced block must hold a JSON object")
    return obj
