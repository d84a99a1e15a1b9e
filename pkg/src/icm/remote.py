"""HTTP client for a remote label log-probability backend.

Protocol: one POST per query to ``{base_url}/v1/label_logprobs`` with a
JSON body

    {"model": "<model name>", "prompt": "<rendered context + claim>",
     "candidates": ["True", "False"], "temperature": 0}

and a JSON response

    {"logprobs": {"True": -0.23, "False": -1.58}}

carrying one raw log-probability per candidate. Raw values are
renormalized over the supplied candidates, so backends with different
vocabularies are comparable. The bearer token is read from the
environment variable named in the config and never logged.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass

import requests

from .data import Example, LabelSpace
from .predictor import ContextWindow, CountingPredictor, Prediction, render_prompt

ENDPOINT_PATH = "/v1/label_logprobs"


class BackendError(RuntimeError):
    """Base class for remote-backend failures."""


class BackendAuthError(BackendError):
    """Authentication rejected; never retried."""


class BackendProtocolError(BackendError):
    """The backend answered with a malformed or incomplete body."""


class BackendUnavailableError(BackendError):
    """Transport failure or server error that persisted past all retries."""


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    model_name: str
    auth_token_env_name: str = "ICM_BACKEND_TOKEN"
    request_timeout: float = 60.0
    max_retries: int = 3
    retry_base_delay: float = 1.0
    max_in_flight: int = 4

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


def _renormalize(raw: dict[str, float], labels: tuple[str, ...]) -> dict[str, float]:
    values = [raw[label] for label in labels]
    peak = max(values)
    log_total = peak + math.log(sum(math.exp(v - peak) for v in values))
    return {label: raw[label] - log_total for label in labels}


def remote_label_logprobs(
    config: BackendConfig,
    prompt_text: str,
    label_tokens: tuple[str, ...],
    session: requests.Session | None = None,
) -> dict[str, float]:
    """Query the backend once (with retries) and return renormalized
    per-label log-probabilities.

    Transport failures and 5xx responses are retried with exponential
    backoff up to ``max_retries``; authentication failures (401/403) are
    surfaced immediately.
    """
    session = session or requests.Session()
    token = os.environ.get(config.auth_token_env_name)
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    body = {
        "model": config.model_name,
        "prompt": prompt_text,
        "candidates": list(label_tokens),
        "temperature": 0,
    }
    url = config.base_url.rstrip("/") + ENDPOINT_PATH
    last_error: Exception | None = None
    for attempt in range(config.max_retries + 1):
        if attempt > 0:
            time.sleep(config.retry_base_delay * (2 ** (attempt - 1)))
        try:
            response = session.post(url, json=body, headers=headers, timeout=config.request_timeout)
        except requests.RequestException as exc:
            last_error = exc
            continue
        if response.status_code in (401, 403):
            raise BackendAuthError(f"backend rejected credentials (HTTP {response.status_code})")
        if response.status_code >= 500:
            last_error = BackendUnavailableError(f"backend error HTTP {response.status_code}")
            continue
        if response.status_code != 200:
            raise BackendProtocolError(f"unexpected HTTP {response.status_code}: {response.text[:200]}")
        try:
            payload = response.json()
            raw = payload["logprobs"]
            parsed = {label: float(raw[label]) for label in label_tokens}
        except (ValueError, KeyError, TypeError) as exc:
            raise BackendProtocolError(f"malformed backend response: {exc}") from exc
        return _renormalize(parsed, label_tokens)
    raise BackendUnavailableError(
        f"backend unreachable after {config.max_retries + 1} attempts: {last_error}"
    )


class RemotePredictor(CountingPredictor):
    """Predictor backed by a remote inference service.

    Queries are issued at zero sampling temperature and read one
    log-probability per label token. Thread-safe up to
    ``config.max_in_flight`` concurrent callers.
    """

    def __init__(self, config: BackendConfig, label_space: LabelSpace | None = None):
        super().__init__(label_space)
        self.config = config
        self.name = f"remote:{config.model_name}@{config.base_url}"
        self._session = requests.Session()

    @property
    def max_in_flight(self) -> int:
        return self.config.max_in_flight

    def label_distribution(self, context: ContextWindow, target: Example) -> Prediction:
        prompt = render_prompt(context, target)
        log_probs = remote_label_logprobs(
            self.config, prompt, self.label_space.labels, session=self._session
        )
        self._tick()
        return Prediction(log_probs=log_probs)
