use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::expr::Expr;
use super::rational::parse_rational;
use super::text::{parse_segments, Segment};
use super::{
    Condition, Domain, DomainValue, GradingMode, Rejection, SlotKind, SlotSpec, SymbolicTemplate, TemplateError,
};

/// Range domains larger than this are rejected as a schema error.
const MAX_RANGE_LEN: u64 = 1 << 32;
/// Draws used to spot-check evaluation totality and logic preservation.
const VALIDATION_DRAWS: usize = 1000;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateDoc {
    id: String,
    problem: String,
    slots: Vec<SlotDoc>,
    #[serde(default)]
    conditions: Vec<String>,
    answer: String,
    #[serde(default)]
    reasoning: Option<String>,
    grading: GradingMode,
    cot_prompt_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotDoc {
    name: String,
    kind: SlotKind,
    domain: DomainDoc,
    #[serde(default)]
    decimals: Option<u32>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DomainDoc {
    List(Vec<ValueDoc>),
    Range { lo: NumDoc, hi: NumDoc, step: NumDoc },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ValueDoc {
    Int(i64),
    Float(f64),
    Str(String),
    Pair { text: String, value: NumDoc },
}

#[derive(Deserialize, Clone)]
#[serde(untagged)]
enum NumDoc {
    Int(i64),
    Float(f64),
    Str(String),
}

impl NumDoc {
    fn text(&self) -> String {
        match self {
            NumDoc::Int(i) => i.to_string(),
            NumDoc::Float(f) => f.to_string(),
            NumDoc::Str(s) => s.clone(),
        }
    }

    fn to_rational(&self, slot: &str) -> Result<BigRational, TemplateError> {
        let text = self.text();
        parse_rational(&text).ok_or_else(|| TemplateError::BadValue {
            slot: slot.to_string(),
            message: format!("`{text}` is not a number"),
        })
    }
}

/// Parses and validates one template document.
pub fn parse_template(source: &str) -> Result<SymbolicTemplate, TemplateError> {
    let doc: TemplateDoc = toml::from_str(source).map_err(|e| TemplateError::Schema {
        field: schema_field(&e),
        message: e.message().to_string(),
    })?;
    build(doc)
}

fn schema_field(e: &toml::de::Error) -> String {
    // toml reports missing keys as "missing field `x`"; surface that name.
    let msg = e.message();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    "document".to_string()
}

fn build(doc: TemplateDoc) -> Result<SymbolicTemplate, TemplateError> {
    if doc.id.trim().is_empty() {
        return Err(TemplateError::Schema {
            field: "id".into(),
            message: "must not be empty".into(),
        });
    }
    if doc.id.contains('#') {
        return Err(TemplateError::Schema {
            field: "id".into(),
            message: "must not contain `#`".into(),
        });
    }
    let mut seen = BTreeSet::new();
    let mut slots = Vec::with_capacity(doc.slots.len());
    for s in doc.slots {
        if !seen.insert(s.name.clone()) {
            return Err(TemplateError::DuplicateSlot(s.name));
        }
        if s.name.is_empty() || !s.name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(TemplateError::Schema {
                field: "slots.name".into(),
                message: format!("`{}` is not a valid identifier", s.name),
            });
        }
        slots.push(build_slot(s)?);
    }

    let problem_segments = parse_segments(&doc.problem, "problem", false)?;
    let reasoning_segments = match &doc.reasoning {
        Some(r) => parse_segments(r, "reasoning", true)?,
        None => Vec::new(),
    };
    let numeric: BTreeSet<&str> = slots
        .iter()
        .filter(|s| s.kind != SlotKind::Text)
        .map(|s| s.name.as_str())
        .collect();
    let check_idents = |idents: BTreeSet<String>, location: &str| -> Result<(), TemplateError> {
        for id in idents {
            if !seen.contains(&id) {
                return Err(TemplateError::UndeclaredSlot {
                    slot: id,
                    location: location.to_string(),
                });
            }
            if !numeric.contains(id.as_str()) {
                return Err(TemplateError::TextSlotInExpression {
                    slot: id,
                    location: location.to_string(),
                });
            }
        }
        Ok(())
    };

    for (segs, location) in [(&problem_segments, "problem"), (&reasoning_segments, "reasoning")] {
        for seg in segs {
            match seg {
                Segment::Slot(name) if !seen.contains(name) => {
                    return Err(TemplateError::UndeclaredSlot {
                        slot: name.clone(),
                        location: location.to_string(),
                    })
                }
                Segment::Calc { expr, source } => check_idents(expr.identifiers(), &format!("reasoning `<<{source}>>`"))?,
                _ => {}
            }
        }
    }

    let mut conditions = Vec::with_capacity(doc.conditions.len());
    for (i, src) in doc.conditions.iter().enumerate() {
        let expr = Expr::parse_condition(src).map_err(|e| TemplateError::Expr {
            field: format!("conditions[{i}]"),
            source: e,
        })?;
        check_idents(expr.identifiers(), &format!("conditions[{i}]"))?;
        conditions.push(Condition {
            source: src.clone(),
            expr,
        });
    }
    let answer_expr = Expr::parse_numeric(&doc.answer).map_err(|e| TemplateError::Expr {
        field: "answer".into(),
        source: e,
    })?;
    check_idents(answer_expr.identifiers(), "answer")?;

    let template = SymbolicTemplate {
        id: doc.id,
        problem_text: doc.problem,
        slots,
        conditions,
        answer_source: doc.answer,
        answer_expr,
        reasoning_template: doc.reasoning,
        grading: doc.grading,
        cot_prompt_id: doc.cot_prompt_id,
        problem_segments,
        reasoning_segments,
    };
    spot_check(&template)?;
    Ok(template)
}

fn build_slot(s: SlotDoc) -> Result<SlotSpec, TemplateError> {
    let name = s.name;
    let bad = |message: String| TemplateError::BadValue {
        slot: name.clone(),
        message,
    };
    let domain = match s.domain {
        DomainDoc::List(values) => {
            if values.is_empty() {
                return Err(TemplateError::EmptyDomain { slot: name });
            }
            let mut out = Vec::with_capacity(values.len());
            for v in values {
                let dv = match (s.kind, v) {
                    (SlotKind::Text, ValueDoc::Str(text)) => DomainValue { text, value: None },
                    (SlotKind::Text, _) => return Err(bad("text slots take plain string values".into())),
                    (_, ValueDoc::Int(i)) => DomainValue {
                        text: i.to_string(),
                        value: Some(BigRational::from_integer(i.into())),
                    },
                    (_, ValueDoc::Float(f)) => {
                        let num = NumDoc::Float(f);
                        DomainValue {
                            text: num.text(),
                            value: Some(num.to_rational(&name)?),
                        }
                    }
                    (_, ValueDoc::Str(text)) => {
                        let value = NumDoc::Str(text.clone()).to_rational(&name)?;
                        DomainValue {
                            text,
                            value: Some(value),
                        }
                    }
                    (_, ValueDoc::Pair { text, value }) => DomainValue {
                        text,
                        value: Some(value.to_rational(&name)?),
                    },
                };
                if s.kind == SlotKind::Integer && !dv.value.as_ref().is_some_and(|v| v.is_integer()) {
                    return Err(bad(format!("`{}` is not an integer", dv.text)));
                }
                out.push(dv);
            }
            Domain::List(out)
        }
        DomainDoc::Range { lo, hi, step } => {
            if s.kind == SlotKind::Text {
                return Err(bad("text slots cannot use a range domain".into()));
            }
            let lo = lo.to_rational(&name)?;
            let hi = hi.to_rational(&name)?;
            let step = step.to_rational(&name)?;
            if !step.is_positive() {
                return Err(TemplateError::Schema {
                    field: format!("slots.{name}.domain.step"),
                    message: "step must be positive".into(),
                });
            }
            if lo > hi {
                return Err(TemplateError::EmptyDomain { slot: name });
            }
            if s.kind == SlotKind::Integer && !(lo.is_integer() && step.is_integer()) {
                return Err(bad("integer ranges need integer lo and step".into()));
            }
            let count: BigInt = ((&hi - &lo) / &step).floor().to_integer() + 1;
            let len = count
                .to_u64()
                .filter(|&n| n <= MAX_RANGE_LEN)
                .ok_or_else(|| TemplateError::Schema {
                    field: format!("slots.{name}.domain"),
                    message: "range domain is too large".into(),
                })?;
            debug_assert!(!count.is_zero());
            Domain::Range {
                lo,
                hi,
                step,
                decimals: s.decimals,
                len: len as usize,
            }
        }
    };
    Ok(SlotSpec {
        name,
        kind: s.kind,
        domain,
    })
}

/// Seeded draws checking that conditions and the answer evaluate without
/// error and that the reasoning trace ends in the answer.
fn spot_check(t: &SymbolicTemplate) -> Result<(), TemplateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut idx = vec![0usize; t.slots.len()];
    for _ in 0..VALIDATION_DRAWS {
        for (i, s) in t.slots.iter().enumerate() {
            idx[i] = rng.random_range(0..s.domain.len());
        }
        match t.try_build(&idx) {
            Ok(v) => {
                let env = t.numeric_env(&idx);
                if let Some(last) = t.final_reasoning_value(&env) {
                    let last = last.map_err(|e| TemplateError::Evaluation {
                        field: "reasoning".into(),
                        assignment: t.describe(&idx),
                        source: e,
                    })?;
                    if last != v.ground_truth {
                        return Err(TemplateError::LogicMismatch {
                            trace: super::format_answer(&last),
                            answer: super::format_answer(&v.ground_truth),
                            assignment: t.describe(&idx),
                        });
                    }
                }
            }
            Err(Rejection::Condition) => {}
            Err(Rejection::Evaluation(field, source)) => {
                return Err(TemplateError::Evaluation {
                    field,
                    assignment: t.describe(&idx),
                    source,
                })
            }
        }
    }
    Ok(())
}
