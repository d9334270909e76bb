from .port import (
    AuditLog,
    CallableBackend,
    ChatBackend,
    ChatRequest,
    RemoteBackend,
    RoutingBackend,
    ScriptedBackend,
    complete,
)
from .prompts import PromptTemplate, judge_parts, load_template, render
from .replies import (
    AgentReply,
    AnalysisReport,
    JudgeScores,
    ScorerReply,
    SeekerReply,
    extract_json_object,
    parse_agent_reply,
    parse_analysis_report,
    parse_judge_reply,
    parse_scorer_reply,
    parse_seeker_reply,
    parse_skill_reply,
)

__all__ = [
    "AgentReply",
    "AnalysisReport",
    "AuditLog",
    "CallableBackend",
    "ChatBackend",
    "ChatRequest",
    "JudgeScores",
    "PromptTemplate",
    "RemoteBackend",
    "RoutingBackend",
    "ScorerReply",
    "ScriptedBackend",
    "SeekerReply",
    "complete",
    "extract_json_object",
    "judge_parts",
    "load_template",
    "parse_agent_reply",
    "parse_analysis_report",
    "parse_judge_reply",
    "parse_scorer_reply",
    "parse_seeker_reply",
    "parse_skill_reply",
    "render",
]
