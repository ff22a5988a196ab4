//! Few-shot chain-of-thought prompt sets and prompt rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SymbolicTemplate, Variation};

/// Final-answer marker shared by every prompt set.
pub const ANSWER_MARKER: &str = "####";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkedExample {
    pub question: String,
    pub answer: String,
}

/// An instruction header plus worked examples, rendered as
/// `label question` / `label answer` blocks separated by blank lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSet {
    pub id: String,
    pub header: String,
    pub question_label: String,
    pub answer_label: String,
    pub examples: Vec<WorkedExample>,
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("no prompt set `{0}`")]
    Missing(String),
    #[error("invalid prompt set: {0}")]
    Parse(String),
}

impl PromptSet {
    pub fn parse(source: &str) -> Result<Self, PromptError> {
        toml::from_str(source).map_err(|e| PromptError::Parse(e.message().to_string()))
    }

    pub fn render_question(&self, question: &str) -> String {
        let mut out = String::new();
        out.push_str(&self.header);
        out.push_str("\n\n");
        for ex in &self.examples {
            out.push_str(&format!(
                "{} {}\n{} {}\n\n",
                self.question_label, ex.question, self.answer_label, ex.answer
            ));
        }
        out.push_str(&format!("{} {}\n{}", self.question_label, question, self.answer_label));
        out
    }
}

/// Prompt sets keyed by id.
#[derive(Debug, Clone, Default)]
pub struct PromptLibrary {
    sets: BTreeMap<String, PromptSet>,
}

impl PromptLibrary {
    /// The three bundled five-shot sets: `gsm_symbolic`, `finchain`, `engtrace`.
    pub fn bundled() -> Self {
        let mut lib = Self::default();
        for src in [
            include_str!("../../prompts/gsm_symbolic.toml"),
            include_str!("../../prompts/finchain.toml"),
            include_str!("../../prompts/engtrace.toml"),
        ] {
            lib.insert(PromptSet::parse(src).expect("bundled prompt sets parse"));
        }
        lib
    }

    pub fn insert(&mut self, set: PromptSet) {
        self.sets.insert(set.id.clone(), set);
    }

    pub fn get(&self, id: &str) -> Result<&PromptSet, PromptError> {
        self.sets.get(id).ok_or_else(|| PromptError::Missing(id.to_string()))
    }
}

/// Full model input for a variation: header, worked examples, then the
/// rendered problem awaiting an answer.
pub fn render_prompt(t: &SymbolicTemplate, v: &Variation, prompts: &PromptLibrary) -> Result<String, PromptError> {
    Ok(prompts.get(&t.cot_prompt_id)?.render_question(&v.rendered_problem))
}
