//! Marker syntax for problem and reasoning text.

use std::collections::BTreeMap;

use num_rational::BigRational;

use super::expr::Expr;
use super::rational::format_number;
use super::{SlotValue, TemplateError};

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Lit(String),
    /// `{name}`: the slot's surface text.
    Slot(String),
    /// `<<expr>>`: the exact value of an arithmetic expression.
    Calc { source: String, expr: Expr },
}

pub(crate) fn parse_segments(src: &str, field: &str, allow_calc: bool) -> Result<Vec<Segment>, TemplateError> {
    let mut segs = Vec::new();
    let mut lit = String::new();
    let mut rest = src;
    let schema = |message: String| TemplateError::Schema {
        field: field.to_string(),
        message,
    };
    while let Some(c) = rest.chars().next() {
        if rest.starts_with("{{") {
            lit.push('{');
            rest = &rest[2..];
        } else if rest.starts_with("}}") {
            lit.push('}');
            rest = &rest[2..];
        } else if c == '{' {
            let end = rest
                .find('}')
                .ok_or_else(|| schema(format!("unterminated slot marker near `{}`", preview(rest))))?;
            let name = rest[1..end].trim();
            if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return Err(schema(format!("malformed slot marker `{}`", &rest[..=end])));
            }
            if !lit.is_empty() {
                segs.push(Segment::Lit(std::mem::take(&mut lit)));
            }
            segs.push(Segment::Slot(name.to_string()));
            rest = &rest[end + 1..];
        } else if c == '}' {
            return Err(schema(format!("unmatched `}}` near `{}`", preview(rest))));
        } else if allow_calc && rest.starts_with("<<") {
            let end = rest[2..]
                .find(">>")
                .ok_or_else(|| schema(format!("unterminated `<<` near `{}`", preview(rest))))?;
            let source = rest[2..2 + end].trim().to_string();
            let expr = Expr::parse_numeric(&source).map_err(|e| TemplateError::Expr {
                field: field.to_string(),
                source: e,
            })?;
            if !lit.is_empty() {
                segs.push(Segment::Lit(std::mem::take(&mut lit)));
            }
            segs.push(Segment::Calc { source, expr });
            rest = &rest[2 + end + 2..];
        } else {
            lit.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    if !lit.is_empty() {
        segs.push(Segment::Lit(lit));
    }
    Ok(segs)
}

fn preview(s: &str) -> String {
    s.chars().take(24).collect()
}

pub(crate) fn render(
    segs: &[Segment],
    assignment: &BTreeMap<String, SlotValue>,
    env: &BTreeMap<String, BigRational>,
) -> Result<String, TemplateError> {
    let mut out = String::new();
    for seg in segs {
        match seg {
            Segment::Lit(s) => out.push_str(s),
            Segment::Slot(name) => {
                let sv = assignment
                    .get(name)
                    .ok_or_else(|| TemplateError::UnresolvedMarker(format!("{{{name}}}")))?;
                out.push_str(&sv.text);
            }
            Segment::Calc { source, expr } => {
                let value = expr.eval_number(env).map_err(|e| match e {
                    super::EvalError::Unbound(_) => TemplateError::UnresolvedMarker(format!("<<{source}>>")),
                    other => TemplateError::Evaluation {
                        field: format!("reasoning `<<{source}>>`"),
                        assignment: String::new(),
                        source: other,
                    },
                })?;
                out.push_str(&format_number(&value));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_markers_and_escapes() {
        let segs = parse_segments("{a} has {{b}} <<a * 2>> x", "reasoning", true).unwrap();
        assert_eq!(segs.len(), 4);
        assert_eq!(segs[0], Segment::Slot("a".into()));
        assert_eq!(segs[1], Segment::Lit(" has {b} ".into()));
        assert!(matches!(&segs[2], Segment::Calc { source, .. } if source == "a * 2"));
    }

    #[test]
    fn calc_markers_are_literal_in_problem_text() {
        let segs = parse_segments("<<a>>", "problem", false).unwrap();
        assert_eq!(segs, vec![Segment::Lit("<<a>>".into())]);
    }

    #[test]
    fn rejects_malformed_markers() {
        assert!(parse_segments("{a", "problem", false).is_err());
        assert!(parse_segments("a}", "problem", false).is_err());
        assert!(parse_segments("{a b}", "problem", false).is_err());
        assert!(parse_segments("<<a +>>", "reasoning", true).is_err());
    }
}
