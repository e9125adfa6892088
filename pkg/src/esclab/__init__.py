"""esclab: a multi-agent wargame harness for escalation-control experiments.

Eight nation agents pick escalation-scored actions over a 14-day loop; the
experiment layer sweeps sampling temperature and prompt variants across
replicated runs and reports the resulting escalation statistics.
"""

from .agents import (
    AgentPolicy,
    AgentTurn,
    LlmPolicy,
    ParseFailure,
    ReplayPolicy,
    ScriptedPolicy,
    decide_with_retry,
    parse_agent_response,
)
from .client import (
    ChatMessage,
    ChatRequest,
    ChatResponse,
    LiveTransport,
    MockTransport,
    RecordingTransport,
    ReplayTransport,
    RequestBudget,
    complete,
)
from .errors import EsclabError
from .experiments import ExperimentPlan, load_plan, run_experiment, run_seed
from .orchestrator import (
    LlmUpdater,
    SimulationRun,
    TemplateUpdater,
    Treatment,
    run_simulation,
)
from .prompts import PromptBundle, PromptVariant, build_prompts
from .report import ReportBundle, build_report
from .scenario import (
    ChosenAction,
    DailyRecord,
    NationProfile,
    Scenario,
    WorldState,
    advance_day,
    initial_world,
    load_scenario,
)
from .scoring import (
    Aggregator,
    CategoryCounts,
    ScoreSeries,
    category_frequencies,
    daily_score,
    run_score,
)
from .stats import (
    DailySeriesStats,
    SummaryStats,
    ci95_per_day,
    percent_reduction,
    significance_test,
    summarize,
)
from .taxonomy import (
    ActionCategory,
    ActionSpec,
    ActionTaxonomy,
    load_taxonomy,
    lookup_action,
)

__version__ = "0.1.0"
