//! Dialogue routing: opaque scene handles, tool annotations, planner
//! backends and the per-turn reasoning loop.

pub mod planner;
pub mod prompt;
pub mod registry;
pub mod session;

pub use planner::{ChatMessage, Planner, RemotePlanner, Role, Rule, ScriptedPlanner, DEFAULT_RULES};
pub use prompt::{build_system_prompt, parse_action, split_args, validate_handles, PlannerAction, ToolSpec};
pub use registry::{is_handle, Binding, SceneLock, SceneRegistry};
pub use session::{
    format_turn, redact, run_turn, ArtifactKind, ArtifactRef, ChatSession, Execution, Executor, Reply, SceneExecutor,
    ToolCall, DEFAULT_BUDGET,
};
