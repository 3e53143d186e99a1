//! Reasoning actions and ordered action templates.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Separator used in the canonical string form of a template.
pub const TEMPLATE_SEPARATOR: char = '\u{2192}';

/// One atomic reasoning move the policy model can be asked to perform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    /// a1: extract what the image shows.
    VisualParsing,
    /// a2: restate the givens and the goal.
    SystemAnalysis,
    /// a3: advance the solution by exactly one step.
    OneStepThought,
    /// a4: reason to completion and commit to an answer.
    ChainOfThought,
    /// a5: split the problem into subproblems and solve them.
    DivideAndConquer,
    /// a6: re-examine the work so far for mistakes.
    SelfReflection,
}

/// All six actions in canonical order a1..a6.
pub const ALL_ACTIONS: [Action; 6] = [
    Action::VisualParsing,
    Action::SystemAnalysis,
    Action::OneStepThought,
    Action::ChainOfThought,
    Action::DivideAndConquer,
    Action::SelfReflection,
];

impl Action {
    /// Stable identifier used in templates, card files, and mock scripts.
    pub fn short_name(self) -> &'static str {
        match self {
            Action::VisualParsing => "a1",
            Action::SystemAnalysis => "a2",
            Action::OneStepThought => "a3",
            Action::ChainOfThought => "a4",
            Action::DivideAndConquer => "a5",
            Action::SelfReflection => "a6",
        }
    }

    /// Human-readable name used in prompts and reports.
    pub fn long_name(self) -> &'static str {
        match self {
            Action::VisualParsing => "Visual Parsing",
            Action::SystemAnalysis => "System Analysis",
            Action::OneStepThought => "One-Step Thought",
            Action::ChainOfThought => "Chain-of-Thought",
            Action::DivideAndConquer => "Divide and Conquer",
            Action::SelfReflection => "Self-Reflection",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionParseError {
    #[error("unknown action token: {0:?}")]
    UnknownToken(String),
}

impl FromStr for Action {
    type Err = ActionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a1" => Ok(Action::VisualParsing),
            "a2" => Ok(Action::SystemAnalysis),
            "a3" => Ok(Action::OneStepThought),
            "a4" => Ok(Action::ChainOfThought),
            "a5" => Ok(Action::DivideAndConquer),
            "a6" => Ok(Action::SelfReflection),
            other => Err(ActionParseError::UnknownToken(other.to_string())),
        }
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.short_name())
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Ordered, non-empty sequence of actions distilled from or replayed as a
/// reasoning trajectory. Repeats are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionTemplate {
    actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("action template must contain at least one action")]
    Empty,
    #[error(transparent)]
    Parse(#[from] ActionParseError),
}

impl ActionTemplate {
    pub fn new(actions: Vec<Action>) -> Result<Self, TemplateError> {
        if actions.is_empty() {
            return Err(TemplateError::Empty);
        }
        Ok(ActionTemplate { actions })
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Canonical string form, short names joined by U+2192, e.g. "a1→a2→a4".
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (i, action) in self.actions.iter().enumerate() {
            if i > 0 {
                out.push(TEMPLATE_SEPARATOR);
            }
            out.push_str(action.short_name());
        }
        out
    }
}

impl fmt::Display for ActionTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for ActionTemplate {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(TemplateError::Empty);
        }
        let actions = s
            .split(TEMPLATE_SEPARATOR)
            .map(|tok| tok.parse::<Action>())
            .collect::<Result<Vec<_>, _>>()?;
        ActionTemplate::new(actions)
    }
}

impl Serialize for ActionTemplate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.actions.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ActionTemplate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let actions = Vec::<Action>::deserialize(deserializer)?;
        ActionTemplate::new(actions).map_err(D::Error::custom)
    }
}
