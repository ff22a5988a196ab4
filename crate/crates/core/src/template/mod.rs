//! Symbolic problem templates: schema, validation, sampling, neighbor
//! enumeration and rendering of logic-preserving variations.
//!
//! A template document (TOML) looks like:
//!
//! ```toml
//! id = "peel_saute"
//! problem = "{name} can peel {n1} {food} a minute ..."
//! conditions = ["divides(total, n1)"]
//! answer = "total / n1 + total / n2 * t"
//! reasoning = "... <<total / n1>> minutes ..."
//! grading = "exact_integer"
//! cot_prompt_id = "gsm_symbolic"
//!
//! [[slots]]
//! name = "n1"
//! kind = "integer"
//! domain = { lo = 4, hi = 15, step = 1 }
//! ```
//!
//! `{slot}` renders the slot's surface text, `<<expr>>` in the reasoning
//! renders the exact value of an arithmetic expression, `{{`/`}}` and
//! `<<<`-free text are literal.

pub mod expr;
pub mod rational;
mod sample;
mod schema;
mod text;
pub mod prompt;

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

pub use expr::{EvalError, Expr, ExprError};
pub use sample::{enumerate_neighbors, sample_variation, sample_with_budget, DEFAULT_PER_SLOT_CAP, DEFAULT_REJECTION_BUDGET};
pub use schema::parse_template;
pub use text::Segment;
pub use prompt::{render_prompt, PromptError, PromptLibrary, PromptSet};

use rational::{format_fixed, format_number};

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("schema violation in field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("undeclared slot `{slot}` referenced in {location}")]
    UndeclaredSlot { slot: String, location: String },
    #[error("slot `{slot}` has an empty domain")]
    EmptyDomain { slot: String },
    #[error("duplicate slot `{0}`")]
    DuplicateSlot(String),
    #[error("invalid value for slot `{slot}`: {message}")]
    BadValue { slot: String, message: String },
    #[error("slot `{slot}` is text-valued and cannot appear in {location}")]
    TextSlotInExpression { slot: String, location: String },
    #[error("in {field}: {source}")]
    Expr {
        field: String,
        #[source]
        source: ExprError,
    },
    #[error("{field} cannot be evaluated for assignment {assignment}: {source}")]
    Evaluation {
        field: String,
        assignment: String,
        #[source]
        source: EvalError,
    },
    #[error("reasoning trace ends in {trace} but the answer is {answer} for assignment {assignment}")]
    LogicMismatch {
        trace: String,
        answer: String,
        assignment: String,
    },
    #[error("rejection budget of {budget} draws exhausted for template `{template}` (over-constrained?)")]
    RejectionBudget { template: String, budget: usize },
    #[error("unresolved marker `{0}`")]
    UnresolvedMarker(String),
    #[error("template `{template}` has no reasoning template")]
    MissingReasoning { template: String },
    #[error("variation belongs to template `{found}`, expected `{expected}`")]
    WrongTemplate { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Text,
    Integer,
    Decimal,
    Fraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradingMode {
    ExactInteger,
    RelativeTolerance,
}

/// One allowed substitution: the surface text placed in the problem and, for
/// numeric slots, its exact value.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainValue {
    pub text: String,
    pub value: Option<BigRational>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    List(Vec<DomainValue>),
    Range {
        lo: BigRational,
        hi: BigRational,
        step: BigRational,
        /// Fixed number of rendered decimals; `None` renders exactly.
        decimals: Option<u32>,
        len: usize,
    },
}

impl Domain {
    pub fn len(&self) -> usize {
        match self {
            Domain::List(values) => values.len(),
            Domain::Range { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value at position `index`; panics when out of range.
    pub fn get(&self, index: usize) -> DomainValue {
        match self {
            Domain::List(values) => values[index].clone(),
            Domain::Range { lo, step, decimals, len, .. } => {
                assert!(index < *len, "domain index {index} out of range {len}");
                let value = lo + step * BigRational::from_integer(index.into());
                let text = match decimals {
                    Some(d) => format_fixed(&value, *d),
                    None => format_number(&value),
                };
                DomainValue {
                    text,
                    value: Some(value),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotSpec {
    pub name: String,
    pub kind: SlotKind,
    pub domain: Domain,
}

#[derive(Debug, Clone)]
pub struct Condition {
    pub source: String,
    pub expr: Expr,
}

#[derive(Debug, Clone)]
pub struct SymbolicTemplate {
    pub id: String,
    pub problem_text: String,
    pub slots: Vec<SlotSpec>,
    pub conditions: Vec<Condition>,
    pub answer_source: String,
    pub answer_expr: Expr,
    pub reasoning_template: Option<String>,
    pub grading: GradingMode,
    pub cot_prompt_id: String,
    problem_segments: Vec<Segment>,
    reasoning_segments: Vec<Segment>,
}

/// The value chosen for one slot of a variation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotValue {
    pub index: usize,
    pub text: String,
    #[serde(with = "rational::serde_canonical_opt", default, skip_serializing_if = "Option::is_none")]
    pub value: Option<BigRational>,
}

/// One fully assigned, condition-satisfying instance of a template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variation {
    pub template_id: String,
    pub assignment: BTreeMap<String, SlotValue>,
    pub rendered_problem: String,
    #[serde(with = "rational::serde_canonical")]
    pub ground_truth: BigRational,
    pub canonical_key: String,
}

impl Variation {
    pub fn ground_truth_f64(&self) -> f64 {
        rational::to_f64(&self.ground_truth)
    }
}

/// Why a candidate index vector does not yield a variation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Rejection {
    Condition,
    Evaluation(String, EvalError),
}

impl SymbolicTemplate {
    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Product of domain sizes: an upper bound on the number of variations.
    pub fn space_size_bound(&self) -> f64 {
        self.slots.iter().map(|s| s.domain.len() as f64).product()
    }

    pub fn canonical_key(&self, indices: &[usize]) -> String {
        let parts: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
        format!("{}#{}", self.id, parts.join("."))
    }

    /// Domain indices of `v`, in slot declaration order.
    pub fn indices_of(&self, v: &Variation) -> Result<Vec<usize>, TemplateError> {
        if v.template_id != self.id {
            return Err(TemplateError::WrongTemplate {
                expected: self.id.clone(),
                found: v.template_id.clone(),
            });
        }
        self.slots
            .iter()
            .map(|s| {
                v.assignment
                    .get(&s.name)
                    .map(|sv| sv.index)
                    .ok_or_else(|| TemplateError::UnresolvedMarker(s.name.clone()))
            })
            .collect()
    }

    pub(crate) fn numeric_env(&self, indices: &[usize]) -> BTreeMap<String, BigRational> {
        self.slots
            .iter()
            .zip(indices)
            .filter_map(|(s, &i)| s.domain.get(i).value.map(|v| (s.name.clone(), v)))
            .collect()
    }

    fn describe(&self, indices: &[usize]) -> String {
        let parts: Vec<String> = self
            .slots
            .iter()
            .zip(indices)
            .map(|(s, &i)| format!("{}={}", s.name, s.domain.get(i).text))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }

    /// Checks conditions and evaluates the answer for one index vector.
    pub(crate) fn try_build(&self, indices: &[usize]) -> Result<Variation, Rejection> {
        let env = self.numeric_env(indices);
        for c in &self.conditions {
            match c.expr.eval_bool(&env) {
                Ok(true) => {}
                Ok(false) => return Err(Rejection::Condition),
                Err(e) => return Err(Rejection::Evaluation(format!("condition `{}`", c.source), e)),
            }
        }
        let ground_truth = self
            .answer_expr
            .eval_number(&env)
            .map_err(|e| Rejection::Evaluation("answer".into(), e))?;
        let assignment: BTreeMap<String, SlotValue> = self
            .slots
            .iter()
            .zip(indices)
            .map(|(s, &index)| {
                let dv = s.domain.get(index);
                (
                    s.name.clone(),
                    SlotValue {
                        index,
                        text: dv.text,
                        value: dv.value,
                    },
                )
            })
            .collect();
        let rendered_problem = text::render(&self.problem_segments, &assignment, &env)
            .expect("problem markers are validated at parse time");
        Ok(Variation {
            template_id: self.id.clone(),
            canonical_key: self.canonical_key(indices),
            assignment,
            rendered_problem,
            ground_truth,
        })
    }

    /// Builds the variation for `indices`, or `None` when a condition fails.
    pub fn instantiate(&self, indices: &[usize]) -> Result<Option<Variation>, TemplateError> {
        match self.try_build(indices) {
            Ok(v) => Ok(Some(v)),
            Err(Rejection::Condition) => Ok(None),
            Err(Rejection::Evaluation(field, source)) => Err(TemplateError::Evaluation {
                field,
                assignment: self.describe(indices),
                source,
            }),
        }
    }

    /// Every valid variation, in lexicographic index order. Only sensible for
    /// small templates.
    pub fn enumerate_all(&self) -> Vec<Variation> {
        let mut out = Vec::new();
        let mut idx = vec![0usize; self.slots.len()];
        if self.slots.iter().any(|s| s.domain.is_empty()) {
            return out;
        }
        loop {
            if let Ok(v) = self.try_build(&idx) {
                out.push(v);
            }
            let mut k = self.slots.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.slots[k].domain.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Ground-truth reasoning trace with slot markers substituted and every
    /// `<<expr>>` evaluated exactly.
    pub fn render_ground_truth_reasoning(&self, v: &Variation) -> Result<String, TemplateError> {
        if self.reasoning_template.is_none() {
            return Err(TemplateError::MissingReasoning {
                template: self.id.clone(),
            });
        }
        let env: BTreeMap<String, BigRational> = v
            .assignment
            .iter()
            .filter_map(|(k, sv)| sv.value.clone().map(|val| (k.clone(), val)))
            .collect();
        text::render(&self.reasoning_segments, &v.assignment, &env)
    }

    /// Value of the last `<<expr>>` in the reasoning trace, if any.
    pub(crate) fn final_reasoning_value(
        &self,
        env: &BTreeMap<String, BigRational>,
    ) -> Option<Result<BigRational, EvalError>> {
        self.reasoning_segments.iter().rev().find_map(|seg| match seg {
            Segment::Calc { expr, .. } => Some(expr.eval_number(env)),
            _ => None,
        })
    }

    /// Intermediate values of every `<<expr>>` in order.
    pub fn reasoning_steps(&self, v: &Variation) -> Result<Vec<BigRational>, TemplateError> {
        let env = self.numeric_env(&self.indices_of(v)?);
        self.reasoning_segments
            .iter()
            .filter_map(|seg| match seg {
                Segment::Calc { expr, source } => Some(expr.eval_number(&env).map_err(|e| {
                    TemplateError::Evaluation {
                        field: format!("reasoning `<<{source}>>`"),
                        assignment: v.canonical_key.clone(),
                        source: e,
                    }
                })),
                _ => None,
            })
            .collect()
    }
}

/// Renders the final answer line appended to ground-truth traces.
pub fn format_answer(value: &BigRational) -> String {
    format_number(value)
}

/// Sources of the bundled example templates, keyed by file stem.
pub const BUNDLED_TEMPLATES: [(&str, &str); 3] = [
    ("alphabet", include_str!("../../templates/alphabet.toml")),
    ("peel_saute", include_str!("../../templates/peel_saute.toml")),
    ("tax_outflow", include_str!("../../templates/tax_outflow.toml")),
];

pub fn bundled_template(id: &str) -> Option<SymbolicTemplate> {
    BUNDLED_TEMPLATES
        .iter()
        .find(|(name, _)| *name == id)
        .map(|(_, src)| parse_template(src).expect("bundled templates are valid"))
}
