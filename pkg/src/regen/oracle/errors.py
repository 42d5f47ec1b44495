class OracleError(RuntimeError):
    """Base class for every failure talking to, or understanding, the oracle."""


class TemplateError(OracleError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class OracleTransportError(OracleError):
    pass


class TranscriptMiss(OracleError):
    def __init__(self, template_id: str, prompt_hash: str):
        super().__init__(f"no transcript record for template '{template_id}' (prompt sha256 {prompt_hash})")
        self.template_id = template_id
        self.prompt_hash = prompt_hash


class AnswerParseError(OracleError):
    pass
