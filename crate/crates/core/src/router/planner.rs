//! Planner backends: a rule table for tests and a chat-completions client.

use std::path::Path;
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::router::prompt::handle_tokens;
use crate::router::registry::is_handle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Produces the next planner message given the system prompt and the
/// working context (history, current request, observations so far).
pub trait Planner: Send {
    fn complete(&mut self, system: &str, messages: &[ChatMessage]) -> Result<String>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    /// Lowercased substring matched against the user's message.
    pub needle: String,
    pub tool: String,
    /// Argument template; `{scene}` becomes the most recent handle.
    pub args: String,
}

/// Deterministic keyword planner. Rules file lines look like
/// `match "gray" -> grayscale_stylize({scene})`; `#` starts a comment.
#[derive(Clone, Debug, Default)]
pub struct ScriptedPlanner {
    pub rules: Vec<Rule>,
}

impl ScriptedPlanner {
    pub fn parse(text: &str) -> Result<Self> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| Regex::new(r#"^match\s+"([^"]+)"\s*->\s*([A-Za-z_][A-Za-z0-9_]*)\((.*)\)$"#).unwrap());
        let mut rules = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let c = re
                .captures(line)
                .ok_or_else(|| Error::Parse(format!("rules line {}: expected `match \"<text>\" -> tool(args)`", n + 1)))?;
            rules.push(Rule {
                needle: c[1].to_lowercase(),
                tool: c[2].to_string(),
                args: c[3].trim().to_string(),
            });
        }
        Ok(Self { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// A small default table covering the built-in tools.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_RULES).expect("default rules parse")
    }
}

pub const DEFAULT_RULES: &str = r#"# substring (case-insensitive) -> tool call
match "gray" -> grayscale_stylize({scene})
match "black and white" -> grayscale_stylize({scene})
match "hue" -> hue_rotate({scene}, 90)
match "brighter" -> brightness({scene}, 0.2)
match "darker" -> brightness({scene}, -0.2)
match "edge" -> sobel_edge_map({scene})
match "remove" -> remove_foreground({scene})
match "extract" -> extract_foreground({scene})
match "replace" -> replace_foreground({scene}, texture.png)
match "describe" -> describe_scene({scene})
match "what" -> describe_scene({scene})
match "how many" -> describe_scene({scene})
"#;

fn latest_handle(messages: &[ChatMessage]) -> Option<&str> {
    messages
        .iter()
        .rev()
        .find_map(|m| handle_tokens(&m.content).into_iter().rev().find(|t| is_handle(t)))
}

impl Planner for ScriptedPlanner {
    fn complete(&mut self, _system: &str, messages: &[ChatMessage]) -> Result<String> {
        let Some(last) = messages.last() else {
            return Ok("Final Answer: How can I help with your scene?".into());
        };
        if let Some(obs) = last.content.strip_prefix("Observation: ") {
            return Ok(format!("Thought: the tool has answered.\nFinal Answer: {obs}"));
        }
        let text = last.content.to_lowercase();
        let Some(rule) = self.rules.iter().find(|r| text.contains(&r.needle)) else {
            return Ok("Thought: no tool is needed.\nFinal Answer: Hello! Tell me how you would like to edit the scene.".into());
        };
        let scene = latest_handle(messages).unwrap_or("{scene}");
        Ok(format!(
            "Thought: the request matches `{}`.\nAction: {}\nAction Input: {}",
            rule.needle,
            rule.tool,
            rule.args.replace("{scene}", scene)
        ))
    }
}

pub const ENV_URL: &str = "SCENE_ATLAS_PLANNER_URL";
pub const ENV_MODEL: &str = "SCENE_ATLAS_PLANNER_MODEL";
pub const ENV_KEY: &str = "SCENE_ATLAS_PLANNER_KEY";
const DEFAULT_URL: &str = "https://api.openai.com/v1";
const DEFAULT_MODEL: &str = "gpt-3.5-turbo";

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    temperature: f32,
    messages: Vec<ChatMessage>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

/// Chat-completions client: POST `<base>/chat/completions` with
/// `{model, temperature: 0, messages}`; reads `choices[0].message.content`.
pub struct RemotePlanner {
    base_url: String,
    model: String,
    key: String,
    client: reqwest::blocking::Client,
    retries: usize,
    backoff: Duration,
}

impl RemotePlanner {
    pub fn new(base_url: &str, model: &str, key: &str) -> Result<Self> {
        if key.is_empty() {
            return Err(Error::Config("remote planner needs an API key".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            key: key.to_string(),
            client,
            retries: 2,
            backoff: Duration::from_millis(250),
        })
    }

    pub fn from_env() -> Result<Self> {
        let key = std::env::var(ENV_KEY).map_err(|_| Error::Config(format!("{ENV_KEY} is not set")))?;
        let url = std::env::var(ENV_URL).unwrap_or_else(|_| DEFAULT_URL.into());
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.into());
        Self::new(&url, &model, &key)
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, body: &CompletionRequest) -> std::result::Result<String, (bool, String)> {
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.key)
            .json(body)
            .send()
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err((status.is_server_error(), format!("HTTP {status}")));
        }
        let parsed: CompletionResponse = resp.json().map_err(|e| (false, format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or((false, "response has no choices".into()))
    }
}

impl Planner for RemotePlanner {
    fn complete(&mut self, system: &str, messages: &[ChatMessage]) -> Result<String> {
        let mut all = vec![ChatMessage {
            role: Role::System,
            content: system.to_string(),
        }];
        all.extend_from_slice(messages);
        let body = CompletionRequest {
            model: &self.model,
            temperature: 0.0,
            messages: all,
        };
        let mut last = String::new();
        for i in 0..=self.retries {
            if i > 0 {
                std::thread::sleep(self.backoff * (1 << (i - 1)));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((retry, msg)) => {
                    log::warn!("planner request failed (attempt {}): {msg}", i + 1);
                    last = msg;
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(Error::Transport(last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_parse_and_fire() {
        let mut p = ScriptedPlanner::parse("# c\n\nmatch \"grayscale\" -> grayscale_stylize({scene})\nmatch \"gray\" -> grayscale_stylize({scene})").unwrap();
        assert_eq!(p.rules.len(), 2);
        let out = p
            .complete("", &[ChatMessage::user("make it gray\n\nCurrent scene: ab12cd34.scn")])
            .unwrap();
        assert!(out.ends_with("Action: grayscale_stylize\nAction Input: ab12cd34.scn"), "{out}");
        let hi = p.complete("", &[ChatMessage::user("hello")]).unwrap();
        assert!(hi.contains("Final Answer:") && !hi.contains("Action:"));
        let fin = p
            .complete("", &[ChatMessage::user("gray"), ChatMessage::user("Observation: x produced y; z")])
            .unwrap();
        assert!(fin.ends_with("Final Answer: x produced y; z"));
        assert!(matches!(ScriptedPlanner::parse("gray -> x()"), Err(Error::Parse(_))));
    }

    #[test]
    fn builtin_rules_parse() {
        assert!(ScriptedPlanner::builtin().rules.len() >= 9);
    }

    #[test]
    fn remote_requires_a_key() {
        assert!(matches!(RemotePlanner::new("http://x", "m", ""), Err(Error::Config(_))));
    }
}
