# lm_api/completion_client.py
"""
Client for OpenAI-style completion endpoints
---------------------------------------------

Candidate pools come from a one-token completion request with top-k logprobs:

  POST {base_url}/completions
  {"model": ..., "prompt": ..., "max_tokens": 1, "temperature": ...,
   "logprobs": k, "frequency_penalty": 0, "presence_penalty": 0}

and token scores from an echo request that returns the prompt's own
token_logprobs. The auth token is read from the environment variable named by
ProviderConfig.api_key_env and is never logged.

Surfaces are kept with their leading whitespace (" the") and joined without
separators, which is close to how byte-level BPE vocabularies print tokens.
Token ids are assigned per client instance on first sight of a surface.
"""

from __future__ import annotations

import logging
import os
import re
import threading
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from errors import RemoteError
from lm_api.base import (
    CandidatePool,
    ProviderConfig,
    Token,
    gumbel_top_k,
    noise_source,
)

logger = logging.getLogger(__name__)

EOS_SURFACES = ("<|endoftext|>", "</s>")
SURFACE_PATTERN = re.compile(r"\s*[\w']+|\s*[^\w\s]")
RETRY_STATUSES = (429, 500, 502, 503, 504)


class _Vocabulary:
    """Thread-safe surface -> id registry."""

    def __init__(self) -> None:
        self._ids: Dict[str, int] = {}
        self._lock = threading.Lock()

    def token(self, surface: str) -> Token:
        with self._lock:
            tok_id = self._ids.setdefault(surface, len(self._ids))
        return Token(tok_id, surface)


class CompletionClient:

    def __init__(self, config: ProviderConfig, session: Optional[requests.Session] = None) -> None:
        self.config = config
        self.endpoint = config.base_url.rstrip("/") + "/completions"
        self._vocab = _Vocabulary()
        self._eos = self._vocab.token(EOS_SURFACES[0])
        self._slots = threading.BoundedSemaphore(max(1, config.max_concurrency))

        self.session = session or requests.Session()
        retry = Retry(
            total=config.max_retries,
            backoff_factor=config.backoff_factor,
            status_forcelist=RETRY_STATUSES,
            allowed_methods=frozenset({"POST"}),
            raise_on_status=False,
        )
        self.session.mount("https://", HTTPAdapter(max_retries=retry))
        self.session.mount("http://", HTTPAdapter(max_retries=retry))

    # ---------------------------------------------------------------
    # Low-level request
    # ---------------------------------------------------------------
    def _headers(self) -> Dict[str, str]:
        headers = {
            "Content-Type": "application/json",
            "Accept": "application/json",
            "User-Agent": self.config.user_agent,
        }
        api_key = os.environ.get(self.config.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def _post(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        logger.debug("POST %s model=%s", self.endpoint, payload.get("model"))

        with self._slots:
            try:
                resp = self.session.post(
                    self.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.config.timeout,
                )
            except requests.RequestException as e:
                logger.error("Completion request to %s failed: %s", self.endpoint, type(e).__name__)
                raise RemoteError(f"Request to {self.endpoint} failed: {type(e).__name__}") from e

        if resp.status_code in (401, 403):
            raise RemoteError(
                f"Authentication failed ({resp.status_code}); check ${self.config.api_key_env}",
                status_code=resp.status_code,
            )
        try:
            resp.raise_for_status()
        except requests.HTTPError as e:
            logger.error("Completion endpoint returned %d", resp.status_code)
            raise RemoteError(
                f"Completion endpoint returned {resp.status_code}", status_code=resp.status_code
            ) from e

        try:
            return resp.json()
        except ValueError as e:
            raise RemoteError("Completion endpoint returned invalid JSON") from e

    @staticmethod
    def _logprobs_block(data: Dict[str, Any]) -> Dict[str, Any]:
        try:
            block = data["choices"][0]["logprobs"]
        except (KeyError, IndexError, TypeError) as e:
            raise RemoteError("Response carries no logprobs") from e
        if not block:
            raise RemoteError("Response carries no logprobs")
        return block

    # ---------------------------------------------------------------
    # Provider interface
    # ---------------------------------------------------------------
    @property
    def eos_token(self) -> Token:
        return self._eos

    def next_pool(
        self,
        prefix: Sequence[Token],
        config: Optional[ProviderConfig] = None,
        exclude_eos: bool = False,
    ) -> CandidatePool:
        cfg = config or self.config
        payload = {
            "model": cfg.model,
            "prompt": self.detokenize(prefix),
            "max_tokens": 1,
            "temperature": cfg.temperature,
            "logprobs": cfg.top_k,
            "frequency_penalty": 0,
            "presence_penalty": 0,
            "seed": cfg.seed,
        }
        block = self._logprobs_block(self._post(payload))

        try:
            top: Dict[str, float] = block["top_logprobs"][0] or {}
        except (KeyError, IndexError, TypeError) as e:
            raise RemoteError("Response carries no top_logprobs") from e

        entries = [(self._vocab.token(s), float(lp)) for s, lp in top.items()]
        if exclude_eos:
            entries = [(t, lp) for t, lp in entries if t.surface not in EOS_SURFACES]
        entries.sort(key=lambda e: (-e[1], e[0].id))

        if cfg.temperature > 0 and entries:
            rng = noise_source(cfg.seed, prefix)
            order = gumbel_top_k(np.array([lp for _, lp in entries]), len(entries), cfg.temperature, rng)
            entries = [entries[i] for i in order]

        return CandidatePool(position=len(prefix), entries=tuple(entries[: cfg.top_k]), depth=cfg.top_k)

    def score_token(
        self,
        prefix: Sequence[Token],
        actual: Token,
        config: Optional[ProviderConfig] = None,
    ) -> float:
        cfg = config or self.config
        prefix_text = self.detokenize(prefix)
        payload = {
            "model": cfg.model,
            "prompt": prefix_text + actual.surface,
            "max_tokens": 0,
            "echo": True,
            "temperature": 0,
            "logprobs": cfg.top_k,
        }
        block = self._logprobs_block(self._post(payload))

        offsets = block.get("text_offset") or []
        logprobs = block.get("token_logprobs") or []

        # the API tokenizes differently; sum every piece that starts inside actual
        total = 0.0
        found = False
        for offset, lp in zip(offsets, logprobs):
            if offset >= len(prefix_text):
                if lp is None:
                    return cfg.logprob_floor
                total += float(lp)
                found = True
        return total if found else cfg.logprob_floor

    def tokenize(self, text: str) -> List[Token]:
        return [self._vocab.token(s) for s in SURFACE_PATTERN.findall(text)]

    def detokenize(self, tokens: Sequence[Token]) -> str:
        return "".join(t.surface for t in tokens)
