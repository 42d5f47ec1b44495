from .backends import (
    OracleHandle,
    OracleRequest,
    OracleResponse,
    Transcript,
    ask,
    bundled_transcripts,
    load_transcript,
    prompt_hash,
    query,
)
from .errors import AnswerParseError, OracleError, OracleTransportError, TemplateError, TranscriptMiss
from .parsing import SCHEMAS, answer_block, format_answer, parse_answer
from .templates import TEMPLATES, render_prompt, template_variables

__all__ = [
    "AnswerParseError", "OracleError", "OracleHandle", "OracleRequest", "OracleResponse",
    "OracleTransportError", "SCHEMAS", "TEMPLATES", "TemplateError", "Transcript", "TranscriptMiss",
    "answer_block", "ask", "bundled_transcripts", "format_answer", "load_transcript", "parse_answer",
    "prompt_hash", "query", "render_prompt", "template_variables",
]
