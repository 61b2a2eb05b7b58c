//! Prompt templates and their deterministic expansion into [`PromptSpec`]s.
//!
//! Two prompting strategies exist: the *direct* method asks an open-ended
//! question about the object, while the *difference* method first stages the
//! compared states and then asks explicitly about their differences. The
//! default registry ships both flavors for temporal and spatial scenarios,
//! plus templates that inject computed [`Difference`] records into the text.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diff::Difference;
use crate::error::{Error, Result};
use crate::feature::{RawRef, StateRecord};
use crate::scalar::Real;

/// The two prompting strategies under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Difference,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Difference => "difference",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Method::Direct),
            "difference" => Ok(Method::Difference),
            other => Err(Error::Config {
                detail: format!("unknown method `{other}` (expected direct|difference)"),
            }),
        }
    }
}

/// Who speaks a prompt turn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

/// One turn of a template before expansion. `text` may contain `{{name}}`
/// placeholders resolved against the [`TemplateContext`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnTemplate {
    pub role: Role,
    pub text: String,
}

impl TurnTemplate {
    pub fn user(text: impl Into<String>) -> Self {
        TurnTemplate {
            role: Role::User,
            text: text.into(),
        }
    }
}

/// A named prompt template bound to one method.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub id: String,
    pub method: Method,
    pub turns: Vec<TurnTemplate>,
}

impl Template {
    pub fn new(id: impl Into<String>, method: Method, turns: Vec<TurnTemplate>) -> Self {
        Template {
            id: id.into(),
            method,
            turns,
        }
    }

    fn check(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::Config {
                detail: "template id must be non-empty".into(),
            });
        }
        if self.turns.is_empty() {
            return Err(Error::Config {
                detail: format!("template `{}` has no turns", self.id),
            });
        }
        Ok(())
    }
}

/// One expanded turn, carrying any attached raw payloads (images or other
/// opaque observations) forwarded untouched to the backend.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTurn {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<RawRef>,
}

/// A fully expanded prompt, ready for a backend.
///
/// Invariant (checked by [`TemplateRegistry::build_prompt`]): a
/// difference-method spec contains at least one turn that asks about
/// differences or embeds a serialized [`Difference`]; a direct-method spec
/// contains neither.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub method: Method,
    pub template_id: String,
    pub turns: Vec<PromptTurn>,
}

impl PromptSpec {
    /// Concatenated text of all turns — used for logging and script keys.
    pub fn joined_text(&self) -> String {
        let texts: Vec<&str> = self.turns.iter().map(|t| t.text.as_str()).collect();
        texts.join("\n")
    }
}

/// Values a template can draw on: the states being compared, computed
/// differences, an object name, free-form variables, and extra attachments.
#[derive(Clone, Debug)]
pub struct TemplateContext<S: Real> {
    pub states: Vec<StateRecord<S>>,
    pub diffs: Vec<Difference<S>>,
    pub object: Option<String>,
    pub vars: BTreeMap<String, String>,
    pub attachments: Vec<RawRef>,
}

impl<S: Real> Default for TemplateContext<S> {
    fn default() -> Self {
        TemplateContext {
            states: Vec::new(),
            diffs: Vec::new(),
            object: None,
            vars: BTreeMap::new(),
            attachments: Vec::new(),
        }
    }
}

impl<S: Real> TemplateContext<S> {
    fn lookup(&self, name: &str) -> Result<String> {
        match name {
            "object" => self.object.clone().ok_or(Error::MissingContext {
                what: "object".into(),
            }),
            "differences" => {
                if self.diffs.is_empty() {
                    return Err(Error::MissingContext {
                        what: "differences".into(),
                    });
                }
                let lines: Result<Vec<String>> = self
                    .diffs
                    .iter()
                    .map(|d| {
                        serde_json::to_string(d).map_err(|e| Error::Config {
                            detail: format!("could not serialize difference: {e}"),
                        })
                    })
                    .collect();
                Ok(lines?.join("\n"))
            }
            "states" => {
                if self.states.is_empty() {
                    return Err(Error::MissingContext {
                        what: "states".into(),
                    });
                }
                let lines: Result<Vec<String>> = self
                    .states
                    .iter()
                    .map(|s| {
                        serde_json::to_string(s).map_err(|e| Error::Config {
                            detail: format!("could not serialize state: {e}"),
                        })
                    })
                    .collect();
                Ok(lines?.join("\n"))
            }
            other => self
                .vars
                .get(other)
                .cloned()
                .ok_or_else(|| Error::MissingContext { what: other.into() }),
        }
    }
}

/// Expands `{{name}}` placeholders; unknown names are an error, never
/// silently left in place.
fn expand<S: Real>(text: &str, ctx: &TemplateContext<S>) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let tail = &rest[start + 2..];
        let end = tail.find("}}").ok_or_else(|| Error::Config {
            detail: format!("unclosed placeholder in template text: `{text}`"),
        })?;
        let name = tail[..end].trim();
        out.push_str(&ctx.lookup(name)?);
        rest = &tail[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Markers that make a turn "difference text": the word itself, or the
/// leading field of a serialized [`Difference`].
fn mentions_differences(text: &str) -> bool {
    text.to_lowercase().contains("difference") || text.contains("from_id")
}

/// Named templates, defaults included; later registrations replace earlier
/// ones with the same id so a config file can override any default.
#[derive(Clone, Debug)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, Template>,
}

impl TemplateRegistry {
    /// An empty registry; most callers want [`TemplateRegistry::with_defaults`].
    pub fn new() -> Self {
        TemplateRegistry {
            templates: BTreeMap::new(),
        }
    }

    /// The built-in templates for both scenario flavors, plus templates that
    /// inject computed differences.
    pub fn with_defaults() -> Self {
        let mut reg = TemplateRegistry::new();
        let defaults = [
            Template::new(
                "temporal.direct",
                Method::Direct,
                vec![
                    TurnTemplate::user(
                        "The above are two pictures. Please do not reply now; \
                         reply when required later. Is this OK?",
                    ),
                    TurnTemplate::user("How do you think of this picture?"),
                ],
            ),
            Template::new(
                "temporal.difference",
                Method::Difference,
                vec![
                    TurnTemplate::user(
                        "The above are two pictures. Please do not reply now; \
                         reply when required later. Is this OK?",
                    ),
                    TurnTemplate::user(
                        "These two images depict events that occurred sequentially. \
                         What is the difference between the two pictures?",
                    ),
                ],
            ),
            Template::new(
                "spatial.direct",
                Method::Direct,
                vec![
                    TurnTemplate::user(
                        "Please do not reply now and reply only when required later. \
                         Is this OK?",
                    ),
                    TurnTemplate::user("How do you think of this picture?"),
                ],
            ),
            Template::new(
                "spatial.difference",
                Method::Difference,
                vec![
                    TurnTemplate::user(
                        "Please do not reply now and reply only when required later. \
                         Is this OK?",
                    ),
                    TurnTemplate::user(
                        "Is there some difference in the carriages? \
                         If yes, why is there a difference?",
                    ),
                ],
            ),
            Template::new(
                "difference.report",
                Method::Difference,
                vec![TurnTemplate::user(
                    "The following differences were measured for {{object}}:\n\
                     {{differences}}\n\
                     Explain what changed and recommend an action.",
                )],
            ),
            Template::new(
                "difference.adaptive_n",
                Method::Difference,
                vec![TurnTemplate::user(
                    "The following differences were measured for {{object}}:\n\
                     {{differences}}\n\
                     How many of these differences matter for deciding what to do \
                     next? Reply with that number on the first line, then explain.",
                )],
            ),
            Template::new(
                "spatial.partition_summary",
                Method::Direct,
                vec![TurnTemplate::user(
                    "Please examine {{object}} and summarize each of its regions \
                     as one clause of the form `<region name> <attribute> <value>;` \
                     with a numeric value, and nothing else.",
                )],
            ),
        ];
        for template in defaults {
            reg.register(template).expect("default templates are valid");
        }
        reg
    }

    /// Adds or replaces a template.
    pub fn register(&mut self, template: Template) -> Result<()> {
        template.check()?;
        self.templates.insert(template.id.clone(), template);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&Template> {
        self.templates.get(id).ok_or_else(|| Error::UnknownTemplate {
            id: id.to_string(),
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Expands `template_id` against the context into a [`PromptSpec`].
    ///
    /// A pure function of its inputs: identical `(method, context,
    /// template_id)` yield byte-identical specs. The difference method
    /// requires at least one [`Difference`] or two states in the context;
    /// the expanded spec is checked against the method-isolation invariant
    /// (difference prompts must talk about differences, direct prompts must
    /// not).
    pub fn build_prompt<S: Real>(
        &self,
        method: Method,
        ctx: &TemplateContext<S>,
        template_id: &str,
    ) -> Result<PromptSpec> {
        let template = self.get(template_id)?;
        if template.method != method {
            return Err(Error::UnknownTemplate {
                id: format!("{template_id} (registered for {}, asked for {method})", template.method),
            });
        }
        if method == Method::Difference && ctx.diffs.is_empty() && ctx.states.len() < 2 {
            return Err(Error::MissingContext {
                what: "difference method needs at least one difference or two states".into(),
            });
        }

        let mut turns = Vec::with_capacity(template.turns.len());
        for (i, turn) in template.turns.iter().enumerate() {
            let text = expand(&turn.text, ctx)?;
            // States ride along as attachments on the opening turn, after any
            // context-level attachments.
            let attachments = if i == 0 {
                let mut refs = ctx.attachments.clone();
                refs.extend(ctx.states.iter().filter_map(|s| s.raw_ref().cloned()));
                refs
            } else {
                Vec::new()
            };
            turns.push(PromptTurn {
                role: turn.role,
                text,
                attachments,
            });
        }

        let spec = PromptSpec {
            method,
            template_id: template_id.to_string(),
            turns,
        };
        let talks_differences = spec.turns.iter().any(|t| mentions_differences(&t.text));
        match method {
            Method::Difference if !talks_differences => Err(Error::Config {
                detail: format!(
                    "template `{template_id}` expands to a difference prompt \
                     that never mentions differences"
                ),
            }),
            Method::Direct if talks_differences => Err(Error::Config {
                detail: format!(
                    "template `{template_id}` expands to a direct prompt \
                     that mentions differences"
                ),
            }),
            _ => Ok(spec),
        }
    }
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        TemplateRegistry::with_defaults()
    }
}
