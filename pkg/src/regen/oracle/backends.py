"""Oracle backends: a remote chat endpoint and a transcript replayer."""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import httpx

from .errors import OracleError, OracleTransportError, TranscriptMiss
from .templates import render_prompt


def _canonical(value):
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    return value


@dataclass(frozen=True)
class OracleRequest:
    template_id: str
    vars_json: str  # canonical JSON of the substitution map, keeps the request hashable

    @classmethod
    def make(cls, template_id: str, variables: dict) -> "OracleRequest":
        return cls(template_id, json.dumps(_canonical(variables), sort_keys=True, ensure_ascii=False))

    @property
    def vars(self) -> dict:
        return json.loads(self.vars_json)

    def prompt(self) -> str:
        return render_prompt(self.template_id, self.vars)

    def prompt_hash(self) -> str:
        return prompt_hash(self.prompt())


@dataclass(frozen=True)
class OracleResponse:
    request: OracleRequest
    text: str


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class Transcript:
    """Ordered records of ``{template_id, vars, response}`` keyed by prompt hash.

    ``user_causes`` carries causes a user supplied alongside the session
    (event text -> candidate causes); they are part of the replayed inputs.
    """

    def __init__(self, records: list[dict] | None = None, user_causes: dict | None = None):
        self.records: list[dict] = []
        self.user_causes: dict[str, list[str]] = {k: list(v) for k, v in (user_causes or {}).items()}
        self._index: dict[str, str] = {}
        for rec in records or []:
            self.add(rec["template_id"], rec["vars"], rec["response"])

    def add(self, template_id: str, variables: dict, response: str) -> None:
        req = OracleRequest.make(template_id, variables)
        key = req.prompt_hash()
        if key in self._index:
            if self._index[key] != response:
                raise OracleError(f"transcript has conflicting responses for template '{template_id}' ({key})")
            return
        self._index[key] = response
        self.records.append({"template_id": template_id, "vars": req.vars, "response": response})

    def lookup(self, request: OracleRequest) -> str:
        key = request.prompt_hash()
        try:
            return self._index[key]
        except KeyError:
            raise TranscriptMiss(request.template_id, key) from None

    def __len__(self) -> int:
        return len(self.records)

    def to_json(self) -> str:
        doc: dict = {"records": self.records}
        if self.user_causes:
            doc["user_causes"] = self.user_causes
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        doc = json.loads(text)
        return cls(doc["records"], doc.get("user_causes"))


def bundled_transcripts() -> list[str]:
    return sorted(
        f.name[: -len(".transcript.json")]
        for f in resources.files("regen.data.transcripts").iterdir()
        if f.name.endswith(".transcript.json")
    )


def load_transcript(path: str | Path) -> Transcript:
    """Load a transcript file, or a bundled one by name (e.g. ``abrupt_stop``)."""
    name = str(path)
    for suffix in (".transcript.json", ".transcript"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    p = Path(path)
    if not p.exists() and name in bundled_transcripts():
        return Transcript.from_json(
            resources.files("regen.data.transcripts").joinpath(f"{name}.transcript.json").read_text()
        )
    try:
        return Transcript.from_json(p.read_text())
    except OSError as exc:
        raise OracleError(f"cannot read transcript {path}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise OracleError(f"malformed transcript {path}: {exc}") from exc


@dataclass
class OracleHandle:
    backend: str  # "remote" | "scripted"
    endpoint: Optional[str] = None
    transcript_path: Optional[str] = None
    temperature: float = 0.0
    top_p: float = 0.0
    model: Optional[str] = None
    api_key: Optional[str] = field(default=None, repr=False)
    transport: Optional[httpx.BaseTransport] = field(default=None, repr=False)
    attempts: int = 3
    backoff: float = 0.5
    sleep: Callable[[float], None] = field(default=time.sleep, repr=False)
    timeout: float = 120.0
    recorder: Optional[Transcript] = field(default=None, repr=False, compare=False)
    _transcript: Optional[Transcript] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.backend not in ("remote", "scripted"):
            raise ValueError(f"unknown oracle backend {self.backend!r}")
        if self.backend == "scripted" and not self.transcript_path and self._transcript is None:
            raise ValueError("scripted oracle needs a transcript_path")
        if self.backend == "remote" and not self.endpoint:
            raise ValueError("remote oracle needs an endpoint")

    @classmethod
    def scripted(cls, transcript: str | Path | Transcript, **kw) -> "OracleHandle":
        if isinstance(transcript, Transcript):
            return cls("scripted", transcript_path="<memory>", _transcript=transcript, **kw)
        return cls("scripted", transcript_path=str(transcript), **kw)

    @classmethod
    def remote_from_env(cls, env=None, **kw) -> "OracleHandle":
        env = os.environ if env is None else env
        url = env.get("REGEN_ORACLE_URL")
        if not url:
            raise OracleError("REGEN_ORACLE_URL is not set")
        return cls("remote", endpoint=url, model=env.get("REGEN_ORACLE_MODEL"),
                   api_key=env.get("REGEN_ORACLE_KEY"), **kw)

    @classmethod
    def from_spec(cls, spec: str, **kw) -> "OracleHandle":
        """Parse ``scripted:NAME_OR_PATH`` or ``remote``."""
        if spec == "remote":
            return cls.remote_from_env(**kw)
        if spec.startswith("scripted:"):
            return cls.scripted(spec[len("scripted:"):], **kw)
        raise ValueError(f"oracle spec must be 'scripted:PATH' or 'remote', got {spec!r}")

    def transcript(self) -> Transcript:
        if self._transcript is None:
            self._transcript = load_transcript(self.transcript_path)
        return self._transcript


def _remote_call(handle: OracleHandle, prompt: str) -> str:
    body = {
        "messages": [{"role": "user", "content": prompt}],
        "temperature": handle.temperature,
        "top_p": handle.top_p,
    }
    if handle.model:
        body["model"] = handle.model
    headers = {"Authorization": f"Bearer {handle.api_key}"} if handle.api_key else {}
    last_exc: Exception | None = None
    with httpx.Client(transport=handle.transport, timeout=handle.timeout) as client:
        for attempt in range(handle.attempts):
            try:
                resp = client.post(handle.endpoint, json=body, headers=headers)
                if resp.status_code >= 500:
                    raise httpx.HTTPStatusError(f"server error {resp.status_code}", request=resp.request, response=resp)
                resp.raise_for_status()
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except httpx.HTTPStatusError as exc:
                if exc.response.status_code < 500:
                    raise OracleTransportError(f"oracle endpoint rejected request: {exc.response.status_code}") from exc
                last_exc = exc
            except httpx.TransportError as exc:
                last_exc = exc
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise OracleTransportError(f"unexpected oracle response shape: {exc}") from exc
            if attempt + 1 < handle.attempts:
                handle.sleep(handle.backoff * (2 ** attempt))
    raise OracleTransportError(f"oracle unreachable after {handle.attempts} attempts: {last_exc}")


def query(handle: OracleHandle, request: OracleRequest) -> OracleResponse:
    if handle.backend == "scripted":
        return OracleResponse(request, handle.transcript().lookup(request))
    return OracleResponse(request, _remote_call(handle, request.prompt()))


def ask(handle: OracleHandle, template_id: str, variables: dict) -> str:
    """Render and query one exchange, recording it when the handle has a recorder."""
    request = OracleRequest.make(template_id, variables)
    text = query(handle, request).text
    if handle.recorder is not None:
        handle.recorder.add(template_id, request.vars, text)
    return text
