"""EMA survey scheduling and lifecycle."""
from .scheduler import (
    SURVEY_EXPIRY_S, Clock, CollectionWindow, Complete, Decline, EmaScheduler, EventKind, EventRecord,
    SurveyError, SurveyInstance, SurveyKind, SurveyStatus, local_date, local_time_iso, plan_random_surveys,
)
from .survey import Question, SurveyDefinition, SurveyDefinitionError, load_survey, parse_survey

__all__ = [
    "SURVEY_EXPIRY_S", "Clock", "CollectionWindow", "Complete", "Decline", "EmaScheduler", "EventKind",
    "EventRecord", "SurveyError", "SurveyInstance", "SurveyKind", "SurveyStatus", "local_date",
    "local_time_iso", "plan_random_surveys", "Question", "SurveyDefinition", "SurveyDefinitionError",
    "load_survey", "parse_survey",
]
