from .requests import (
    ConflictError,
    EvaluationRequest,
    ForbiddenError,
    LifecycleError,
    NotFoundError,
    PlatformError,
    RequestState,
    TRANSITIONS,
    ValidationError,
)
from .platform import (
    LeaderboardEntry,
    MODE_ROLES,
    Platform,
    default_executor_registry,
    verify_leaderboard_chain,
)
from .api import create_app
