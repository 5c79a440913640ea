"""Survey instrument definitions and response validation."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import yaml

ANSWER_TYPES = ("likert5", "choice", "boolean", "number", "text")


class SurveyDefinitionError(ValueError):
    pass


@dataclass(frozen=True)
class Question:
    id: str
    prompt: str
    type: str
    options: tuple = ()
    min: float | None = None
    max: float | None = None

    def accepts(self, value) -> bool:
        if self.type == "likert5":
            return type(value) is int and 1 <= value <= 5
        if self.type == "choice":
            return value in self.options
        if self.type == "boolean":
            return isinstance(value, bool)
        if self.type == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return False
            return (self.min is None or value >= self.min) and (self.max is None or value <= self.max)
        return isinstance(value, str)


@dataclass(frozen=True)
class SurveyDefinition:
    id: str
    questions: tuple[Question, ...] = field(default_factory=tuple)

    def validate_responses(self, responses: dict) -> None:
        ids = {q.id for q in self.questions}
        extra = set(responses) - ids
        if extra:
            raise SurveyDefinitionError(f"unknown question ids: {sorted(extra)}")
        for q in self.questions:
            if q.id not in responses:
                raise SurveyDefinitionError(f"missing answer for {q.id}")
            if not q.accepts(responses[q.id]):
                raise SurveyDefinitionError(f"invalid {q.type} answer for {q.id}: {responses[q.id]!r}")

    def sample_responses(self, rng) -> dict:
        """Scripted participant answers (``rng`` is a ``random.Random``)."""
        out = {}
        for q in self.questions:
            if q.type == "likert5":
                out[q.id] = rng.randint(1, 5)
            elif q.type == "choice":
                out[q.id] = rng.choice(q.options)
            elif q.type == "boolean":
                out[q.id] = rng.random() < 0.5
            elif q.type == "number":
                lo = q.min if q.min is not None else 0
                hi = q.max if q.max is not None else 100
                out[q.id] = rng.randint(int(lo), int(hi))
            else:
                out[q.id] = "ok"
        return out


def parse_survey(doc: dict) -> SurveyDefinition:
    if not isinstance(doc, dict) or "id" not in doc or not isinstance(doc.get("questions"), list):
        raise SurveyDefinitionError("survey document needs an id and a list of questions")
    questions = []
    seen = set()
    for i, q in enumerate(doc["questions"]):
        try:
            qid, prompt, qtype = q["id"], q["prompt"], q["type"]
        except (KeyError, TypeError):
            raise SurveyDefinitionError(f"questions[{i}] needs id, prompt and type") from None
        if qtype not in ANSWER_TYPES:
            raise SurveyDefinitionError(f"questions[{i}].type must be one of {ANSWER_TYPES}")
        if qid in seen:
            raise SurveyDefinitionError(f"duplicate question id {qid!r}")
        if qtype == "choice" and not q.get("options"):
            raise SurveyDefinitionError(f"questions[{i}] is a choice question without options")
        seen.add(qid)
        questions.append(Question(qid, prompt, qtype, tuple(q.get("options", ())), q.get("min"), q.get("max")))
    return SurveyDefinition(str(doc["id"]), tuple(questions))


def load_survey(path=None) -> SurveyDefinition:
    if path is None:
        text = resources.files("motionpi.ema").joinpath("default_survey.yaml").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_survey(yaml.safe_load(text))
