//! Tool annotations, the system prompt and the action grammar.

use std::sync::OnceLock;

use regex::Regex;

use crate::editor::ToolDef;
use crate::error::{Error, Result};
use crate::router::registry::SceneRegistry;

/// Handle used in tool input examples.
pub const EXAMPLE_HANDLE: &str = "ab12cd34.scn";

const PREAMBLE: &str = "\
You are a scene editing assistant. You cannot look at scenes yourself; \
instead you call tools that inspect or edit them. Every scene is referred \
to by a file name of the form xxxxxxxx.scn whose letters carry no meaning. \
Be exact with these names: only use a name that appeared earlier in the \
conversation, never invent one, and when a tool produces a new scene, use \
the name from the most recent observation from then on. Trust tool \
observations over your own guesses about what a scene contains. You may \
call several tools one after another.";

const GRAMMAR: &str = "\
To call a tool, answer with exactly these lines:
Thought: <why a tool is needed>
Action: <tool name>
Action Input: <comma-separated arguments>
You will then receive a line `Observation: ...` with the result.
When no further tool is needed, answer with:
Final Answer: <reply to the user>";

/// One tool as presented to the planner.
#[derive(Clone, Debug, PartialEq)]
pub struct ToolSpec {
    pub name: String,
    pub usage: String,
    /// `(name, description)` in argument order, scene handle first.
    pub params: Vec<(String, String)>,
    pub example: String,
}

impl ToolSpec {
    pub fn from_def(def: &ToolDef) -> Self {
        let mut params = vec![("scene".to_string(), "name of the scene file, e.g. ab12cd34.scn".to_string())];
        params.extend(def.params.iter().map(|(n, d)| (n.to_string(), d.to_string())));
        let example = if def.example_args.is_empty() {
            EXAMPLE_HANDLE.to_string()
        } else {
            format!("{EXAMPLE_HANDLE}, {}", def.example_args)
        };
        Self {
            name: def.name.to_string(),
            usage: def.usage.to_string(),
            params,
            example,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.usage.is_empty() || self.params.is_empty() || self.example.is_empty() {
            return Err(Error::Config(format!("tool `{}` has an empty annotation field", self.name)));
        }
        Ok(())
    }
}

pub fn build_system_prompt(tools: &[ToolSpec]) -> Result<String> {
    if tools.is_empty() {
        return Err(Error::Config("no tools registered".into()));
    }
    let mut out = String::new();
    out.push_str(PREAMBLE);
    out.push_str("\n\nTOOLS:\n");
    for t in tools {
        t.validate()?;
        let params: Vec<String> = t.params.iter().map(|(n, d)| format!("{n} ({d})")).collect();
        out.push_str(&format!(
            "\n> {}\n  When to use: {}\n  Parameters: {}\n  Input example: {}\n",
            t.name,
            t.usage,
            params.join("; "),
            t.example
        ));
    }
    out.push('\n');
    out.push_str(GRAMMAR);
    out.push('\n');
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlannerAction {
    ToolCall { tool: String, input: String },
    FinalAnswer(String),
}

/// Reads the first `Action:`/`Action Input:` pair or `Final Answer:`
/// block, whichever comes first; surrounding prose is ignored.
pub fn parse_action(text: &str) -> Result<PlannerAction> {
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let l = line.trim_start();
        if let Some(rest) = l.strip_prefix("Final Answer:") {
            let mut answer = rest.trim().to_string();
            for more in &lines[i + 1..] {
                answer.push('\n');
                answer.push_str(more);
            }
            return Ok(PlannerAction::FinalAnswer(answer.trim().to_string()));
        }
        if let Some(rest) = l.strip_prefix("Action:") {
            let tool = rest.trim().to_string();
            if tool.is_empty() {
                return Err(Error::Parse("empty tool name after `Action:`".into()));
            }
            let input = lines[i + 1..]
                .iter()
                .map(|l| l.trim_start())
                .find_map(|l| l.strip_prefix("Action Input:"))
                .map(|s| s.trim().to_string())
                .unwrap_or_default();
            return Ok(PlannerAction::ToolCall { tool, input });
        }
    }
    Err(Error::Parse("no `Action:` or `Final Answer:` line in planner output".into()))
}

/// Matches any token that ends in `.scn`, whatever its shape.
pub fn handle_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z0-9_\-./\\]*\.scn\b").unwrap())
}

pub fn handle_tokens(text: &str) -> Vec<&str> {
    handle_pattern()
        .find_iter(text)
        .map(|m| m.as_str())
        .collect()
}

/// Splits an argument string on commas, trimming each part.
pub fn split_args(input: &str) -> Vec<String> {
    if input.trim().is_empty() {
        return Vec::new();
    }
    input.split(',').map(|s| s.trim().to_string()).collect()
}

/// Checks a tool call's handles against the registry. A violation is an
/// observation for the planner, never an error.
pub fn validate_handles(spec: &ToolSpec, input: &str, registry: &SceneRegistry) -> std::result::Result<(), String> {
    if let Some(_bad) = handle_tokens(input).into_iter().find(|t| !registry.contains(t)) {
        return Err("Observation: the scene file named in the input does not exist. Use a scene name that appeared in this conversation.".into());
    }
    let args = split_args(input);
    if spec.params.first().is_some_and(|p| p.0 == "scene") && !args.first().is_some_and(|a| registry.contains(a)) {
        return Err(format!(
            "Observation: {} needs parameter `scene` to be a scene file name as its first argument.",
            spec.name
        ));
    }
    if args.len() != spec.params.len() {
        let names: Vec<&str> = spec.params.iter().map(|p| p.0.as_str()).collect();
        return Err(format!(
            "Observation: {} takes {} argument(s) ({}), got {}.",
            spec.name,
            names.len(),
            names.join(", "),
            args.len()
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::editor::builtin_tools;
    use std::path::Path;

    fn specs() -> Vec<ToolSpec> {
        builtin_tools().iter().map(ToolSpec::from_def).collect()
    }

    #[test]
    fn prompt_lists_each_tool_once_and_is_deterministic() {
        let one = vec![specs()[2].clone()];
        let p = build_system_prompt(&one).unwrap();
        for needle in [&one[0].name, &one[0].usage, &one[0].example] {
            assert_eq!(p.matches(needle.as_str()).count(), 1, "{needle}");
        }
        assert_eq!(p.matches("degrees (").count(), 1);
        assert_eq!(build_system_prompt(&specs()).unwrap(), build_system_prompt(&specs()).unwrap());
        assert!(matches!(build_system_prompt(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn parses_the_grammar() {
        let a = parse_action("Thought: need removal\nAction: remove_foreground\nAction Input: ab12cd34.scn").unwrap();
        assert_eq!(
            a,
            PlannerAction::ToolCall {
                tool: "remove_foreground".into(),
                input: "ab12cd34.scn".into()
            }
        );
        assert_eq!(
            parse_action("Final Answer: Done, here is the result.").unwrap(),
            PlannerAction::FinalAnswer("Done, here is the result.".into())
        );
        let noisy = parse_action("Sure!\n  Action: hue_rotate\n  Action Input:  ab12cd34.scn, 30 \nthanks").unwrap();
        assert_eq!(
            noisy,
            PlannerAction::ToolCall {
                tool: "hue_rotate".into(),
                input: "ab12cd34.scn, 30".into()
            }
        );
        assert!(matches!(parse_action("I think maybe…"), Err(Error::Parse(_))));
    }

    #[test]
    fn handle_validation() {
        let reg = SceneRegistry::in_memory(4);
        let h = reg.register(Path::new("/s")).unwrap();
        let hue = specs().into_iter().find(|s| s.name == "hue_rotate").unwrap();
        assert!(validate_handles(&hue, &format!("{h}, 30"), &reg).is_ok());
        let v = validate_handles(&hue, "zz99zz99.scn, 30", &reg).unwrap_err();
        assert!(v.contains("does not exist") && !v.contains("zz99"));
        let v = validate_handles(&hue, "30", &reg).unwrap_err();
        assert!(v.contains("scene"));
        assert!(validate_handles(&hue, &format!("{h}"), &reg).is_err());
    }

    #[test]
    fn finds_handle_shaped_tokens() {
        assert_eq!(handle_tokens("a ab12cd34.scn, ../x/Y.scn!"), vec!["ab12cd34.scn", "../x/Y.scn"]);
        assert!(handle_tokens("scenes are nice").is_empty());
    }
}
