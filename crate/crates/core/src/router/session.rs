//! Chat sessions and the reasoning loop that turns planner output into
//! tool calls.

use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::editor::{apply_edit, builtin_tools, EditRequest, Outcome};
use crate::error::{Error, Result};
use crate::router::planner::{ChatMessage, Planner, Role};
use crate::router::prompt::{build_system_prompt, handle_pattern, parse_action, split_args, validate_handles, PlannerAction, ToolSpec};
use crate::router::registry::SceneRegistry;
use crate::scene::SceneDir;

pub const DEFAULT_BUDGET: usize = 6;
pub const REDACTED: &str = "[unknown scene]";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    /// An edit: new textures plus re-rendered views.
    Edit,
    /// A standalone image such as an edge map.
    Image,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub kind: ArtifactKind,
    /// Handle the tool ran against; the id lives in that scene directory.
    pub scene: String,
    pub id: String,
    /// Fresh handle bound to an edit.
    pub handle: Option<String>,
    pub views: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub role: Role,
    pub text: String,
    pub handles: Vec<String>,
    pub edits: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChatSession {
    pub id: String,
    history: Vec<HistoryEntry>,
    budget: usize,
    /// Handle requests refer to by default; follows each new edit.
    pub scene: Option<String>,
}

impl ChatSession {
    pub fn new(id: impl Into<String>, scene: Option<String>) -> Self {
        Self {
            id: id.into(),
            history: Vec::new(),
            budget: DEFAULT_BUDGET,
            scene,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::Config("step budget must be positive".into()));
        }
        self.budget = budget;
        Ok(self)
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: String,
    pub input: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub text: String,
    pub artifacts: Vec<ArtifactRef>,
    /// Tool calls that passed validation and were dispatched.
    pub calls: Vec<ToolCall>,
}

/// Result of a dispatched tool call.
#[derive(Clone, Debug, PartialEq)]
pub struct Execution {
    /// Handle or id named in the observation.
    pub produced: String,
    pub summary: String,
    pub artifact: Option<ArtifactRef>,
    pub new_scene: Option<String>,
}

/// Runs validated tool calls; `args[0]` is always a registered handle.
pub trait Executor {
    fn registry(&self) -> &SceneRegistry;
    fn tools(&self) -> &[ToolSpec];
    fn execute(&self, tool: &str, args: &[String]) -> Result<Execution>;
}

/// Dispatches to the atlas editor, registering a fresh handle per edit.
pub struct SceneExecutor {
    registry: Arc<SceneRegistry>,
    tools: Vec<ToolSpec>,
    rng: Mutex<ChaCha8Rng>,
}

impl SceneExecutor {
    pub fn new(registry: Arc<SceneRegistry>, seed: u64) -> Self {
        Self {
            registry,
            tools: builtin_tools().iter().map(ToolSpec::from_def).collect(),
            rng: Mutex::new({
                // a separate stream from the registry's handle generator
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(1);
                r
            }),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Executor for SceneExecutor {
    fn registry(&self) -> &SceneRegistry {
        &self.registry
    }

    fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    fn execute(&self, tool: &str, args: &[String]) -> Result<Execution> {
        let handle = args.first().ok_or_else(|| Error::tool(tool, "missing scene argument"))?;
        let binding = self.registry.resolve(handle)?;
        let _lock = self.registry.try_lock(handle)?;
        let scene = SceneDir::open(&binding.scene)?;
        let mut request = EditRequest::new(tool, &[]);
        request.args = args[1..].to_vec();
        request.parent = binding.edit.clone();
        let outcome = apply_edit(&scene, &request, &mut *self.rng.lock().unwrap())?;
        Ok(match outcome {
            Outcome::Edit { id, region } => {
                let new = self.registry.register_edit(handle, &id)?;
                Execution {
                    produced: new.clone(),
                    summary: format!(
                        "edit {id} of {handle} changed the {} texture and re-rendered {} views",
                        region.name(),
                        scene.manifest().views
                    ),
                    artifact: Some(ArtifactRef {
                        kind: ArtifactKind::Edit,
                        scene: handle.clone(),
                        id,
                        handle: Some(new.clone()),
                        views: scene.manifest().views,
                    }),
                    new_scene: Some(new),
                }
            }
            Outcome::Artifact { id, .. } => Execution {
                produced: id.clone(),
                summary: format!("image {id} computed from {handle}"),
                artifact: Some(ArtifactRef {
                    kind: ArtifactKind::Image,
                    scene: handle.clone(),
                    id,
                    handle: None,
                    views: 0,
                }),
                new_scene: None,
            },
            Outcome::Text(t) => Execution {
                produced: handle.clone(),
                summary: one_line(&t),
                artifact: None,
                new_scene: None,
            },
        })
    }
}

/// Replaces every `.scn` token the registry did not issue.
pub fn redact(text: &str, registry: &SceneRegistry) -> String {
    handle_pattern()
        .replace_all(text, |c: &regex::Captures| {
            if registry.contains(&c[0]) {
                c[0].to_string()
            } else {
                REDACTED.to_string()
            }
        })
        .into_owned()
}

fn planner_context(session: &ChatSession, user: &str) -> Vec<ChatMessage> {
    let mut msgs: Vec<ChatMessage> = session
        .history
        .iter()
        .map(|h| ChatMessage {
            role: h.role,
            content: h.text.clone(),
        })
        .collect();
    msgs.push(ChatMessage::user(match &session.scene {
        Some(s) => format!("{user}\n\nCurrent scene: {s}"),
        None => user.to_string(),
    }));
    msgs
}

/// One user turn: plan, validate, dispatch and observe until the planner
/// answers or the step budget runs out. Appends exactly one user and one
/// assistant entry to the history.
pub fn run_turn(session: &mut ChatSession, user: &str, planner: &mut dyn Planner, exec: &dyn Executor) -> Reply {
    let registry = exec.registry();
    let mut reply = Reply {
        text: String::new(),
        artifacts: Vec::new(),
        calls: Vec::new(),
    };
    let user_entry = HistoryEntry {
        role: Role::User,
        text: user.to_string(),
        handles: session.scene.iter().cloned().collect(),
        edits: Vec::new(),
    };

    let text = match build_system_prompt(exec.tools()) {
        Err(e) => format!("The assistant is not configured: {e}"),
        Ok(system) => {
            let mut work = planner_context(session, user);
            let mut retried = false;
            let mut steps = 0;
            loop {
                if steps == session.budget {
                    break format!(
                        "I stopped after {} steps without finishing; {} result(s) were produced so far.",
                        session.budget,
                        reply.artifacts.len()
                    );
                }
                steps += 1;
                let out = match planner.complete(&system, &work) {
                    Ok(o) => o,
                    Err(e) => break format!("The planner could not be reached ({e}). Please try again."),
                };
                let action = match parse_action(&out) {
                    Ok(a) => a,
                    Err(_) if !retried => {
                        retried = true;
                        work.push(ChatMessage::assistant(out));
                        work.push(ChatMessage::user(
                            "Observation: that reply did not follow the format; answer with Action and Action Input lines, or a Final Answer line.",
                        ));
                        continue;
                    }
                    Err(e) => break format!("I could not understand the planner's reply ({e})."),
                };
                let (tool, input) = match action {
                    PlannerAction::FinalAnswer(t) => break t,
                    PlannerAction::ToolCall { tool, input } => (tool, input),
                };
                work.push(ChatMessage::assistant(out));
                let observation = match exec.tools().iter().find(|t| t.name == tool) {
                    None => {
                        let names: Vec<&str> = exec.tools().iter().map(|t| t.name.as_str()).collect();
                        format!("Observation: there is no tool named `{tool}`; available tools are {}.", names.join(", "))
                    }
                    Some(spec) => match validate_handles(spec, &input, registry) {
                        Err(violation) => violation,
                        Ok(()) => {
                            reply.calls.push(ToolCall {
                                tool: tool.clone(),
                                input: input.clone(),
                            });
                            match exec.execute(&tool, &split_args(&input)) {
                                Ok(x) => {
                                    if let Some(s) = &x.new_scene {
                                        session.scene = Some(s.clone());
                                    }
                                    reply.artifacts.extend(x.artifact);
                                    format!("Observation: {tool} produced {}; {}", x.produced, x.summary)
                                }
                                Err(e) => format!("Observation: {tool} failed; {}", one_line(&e.to_string())),
                            }
                        }
                    },
                };
                work.push(ChatMessage::user(observation));
            }
        }
    };

    reply.text = redact(&text, registry);
    session.history.push(user_entry);
    session.history.push(HistoryEntry {
        role: Role::Assistant,
        text: reply.text.clone(),
        handles: reply.artifacts.iter().filter_map(|a| a.handle.clone()).collect(),
        edits: reply.artifacts.iter().map(|a| a.id.clone()).collect(),
    });
    reply
}

/// Plain-text rendering used by the CLI and the golden fixtures.
pub fn format_turn(user: &str, reply: &Reply) -> String {
    let mut s = format!("User: {user}\nAssistant: {}\n", reply.text);
    for c in &reply.calls {
        s.push_str(&format!("  call: {}({})\n", c.tool, c.input));
    }
    for a in &reply.artifacts {
        match a.kind {
            ArtifactKind::Edit => s.push_str(&format!(
                "  edit: {} -> {} ({} views)\n",
                a.id,
                a.handle.as_deref().unwrap_or("-"),
                a.views
            )),
            ArtifactKind::Image => s.push_str(&format!("  image: artifacts/{}.png\n", a.id)),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::planner::ScriptedPlanner;
    use std::cell::RefCell;
    use std::path::Path;

    struct Mock {
        reg: SceneRegistry,
        tools: Vec<ToolSpec>,
        ran: RefCell<Vec<(String, Vec<String>)>>,
    }

    impl Mock {
        fn new() -> (Self, String) {
            let reg = SceneRegistry::in_memory(5);
            let h = reg.register(Path::new("/scene")).unwrap();
            let m = Self {
                reg,
                tools: builtin_tools().iter().map(ToolSpec::from_def).collect(),
                ran: RefCell::new(Vec::new()),
            };
            (m, h)
        }
    }

    impl Executor for Mock {
        fn registry(&self) -> &SceneRegistry {
            &self.reg
        }
        fn tools(&self) -> &[ToolSpec] {
            &self.tools
        }
        fn execute(&self, tool: &str, args: &[String]) -> Result<Execution> {
            assert!(self.reg.contains(&args[0]));
            self.ran.borrow_mut().push((tool.to_string(), args.to_vec()));
            let id = format!("{:04}-aaaaaa", self.ran.borrow().len());
            let new = self.reg.register_edit(&args[0], &id)?;
            Ok(Execution {
                produced: new.clone(),
                summary: "ok".into(),
                artifact: Some(ArtifactRef {
                    kind: ArtifactKind::Edit,
                    scene: args[0].clone(),
                    id,
                    handle: Some(new.clone()),
                    views: 3,
                }),
                new_scene: Some(new),
            })
        }
    }

    struct Canned(Vec<String>);
    impl Planner for Canned {
        fn complete(&mut self, _: &str, _: &[ChatMessage]) -> Result<String> {
            Ok(if self.0.is_empty() { "Final Answer: done".into() } else { self.0.remove(0) })
        }
    }

    #[test]
    fn grayscale_request_makes_one_call_and_one_edit() {
        let (m, h) = Mock::new();
        let mut s = ChatSession::new("s", Some(h.clone()));
        let r = run_turn(&mut s, "make it grayscale", &mut ScriptedPlanner::builtin(), &m);
        assert_eq!(r.calls, vec![ToolCall { tool: "grayscale_stylize".into(), input: h.clone() }]);
        assert_eq!(r.artifacts.len(), 1);
        assert_eq!(s.history().len(), 2);
        assert_ne!(s.scene.as_deref(), Some(h.as_str()));
        assert!(r.text.contains(s.scene.as_deref().unwrap()));
    }

    #[test]
    fn greeting_needs_no_tools() {
        let (m, h) = Mock::new();
        let mut s = ChatSession::new("s", Some(h));
        let r = run_turn(&mut s, "hello", &mut ScriptedPlanner::builtin(), &m);
        assert!(r.calls.is_empty() && r.artifacts.is_empty());
        assert_eq!(s.history().len(), 2);
    }

    #[test]
    fn fabricated_handles_never_execute_or_leak() {
        let (m, h) = Mock::new();
        let mut s = ChatSession::new("s", Some(h.clone()));
        let mut p = Canned(vec![
            "Action: remove_foreground\nAction Input: zz99zz99.scn".into(),
            "Final Answer: see zz99zz99.scn and {h}".replace("{h}", &h),
        ]);
        let r = run_turn(&mut s, "remove", &mut p, &m);
        assert!(m.ran.borrow().is_empty());
        assert!(!r.text.contains("zz99zz99.scn") && r.text.contains(REDACTED) && r.text.contains(&h));
    }

    #[test]
    fn budget_and_parse_failures_terminate() {
        let (m, h) = Mock::new();
        let mut s = ChatSession::new("s", Some(h.clone())).with_budget(3).unwrap();
        let call = format!("Action: identity\nAction Input: {h}");
        let r = run_turn(&mut s, "x", &mut Canned(vec![call.clone(); 10]), &m);
        assert_eq!(r.calls.len(), 3);
        assert!(r.text.contains("stopped after 3 steps"));
        let r = run_turn(&mut s, "x", &mut Canned(vec!["hm".into(), "still prose".into()]), &m);
        assert!(r.text.contains("could not understand") && r.calls.is_empty());
        let r = run_turn(&mut s, "x", &mut Canned(vec!["hm".into(), "Final Answer: ok".into()]), &m);
        assert_eq!(r.text, "ok");
        assert_eq!(s.history().len(), 6);
        assert!(ChatSession::new("t", None).with_budget(0).is_err());
    }

    #[test]
    fn transport_errors_become_replies() {
        struct Down;
        impl Planner for Down {
            fn complete(&mut self, _: &str, _: &[ChatMessage]) -> Result<String> {
                Err(Error::Transport("HTTP 503".into()))
            }
        }
        let (m, h) = Mock::new();
        let mut s = ChatSession::new("s", Some(h));
        let r = run_turn(&mut s, "x", &mut Down, &m);
        assert!(r.text.contains("could not be reached"));
        assert_eq!(s.history().len(), 2);
    }

    #[test]
    fn wrong_arity_is_an_observation() {
        let (m, h) = Mock::new();
        let mut s = ChatSession::new("s", Some(h.clone()));
        let r = run_turn(&mut s, "x", &mut Canned(vec![format!("Action: hue_rotate\nAction Input: {h}")]), &m);
        assert!(r.calls.is_empty() && m.ran.borrow().is_empty());
    }
}
