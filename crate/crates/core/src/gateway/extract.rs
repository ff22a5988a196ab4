use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::template::GradingMode;

pub const ABS_TOLERANCE: f64 = 1e-6;
pub const REL_TOLERANCE: f64 = 1e-2;

static NUMERAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"[-+]?(?:(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?").unwrap()
});

/// The last numeric literal in `text`.
///
/// Accepts a sign, comma thousands separators, a decimal point and an
/// exponent. A sign directly after a letter, digit or `)` is read as an
/// operator (`21-15` yields 15). Non-finite values count as absent.
pub fn extract_answer(text: &str) -> Option<f64> {
    let m = NUMERAL.find_iter(text).last()?;
    let mut s = m.as_str();
    if s.starts_with(['-', '+']) {
        let prev = text[..m.start()].chars().next_back();
        if prev.is_some_and(|c| c.is_alphanumeric() || c == ')') {
            s = &s[1..];
        }
    }
    let v: f64 = s.replace(',', "").parse().ok()?;
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedOutcome {
    pub extracted_answer: Option<f64>,
    pub correct: bool,
    pub ground_truth: f64,
    pub grading_mode: GradingMode,
}

/// `|answer - truth| <= 1e-6 + 1e-2 * |truth|`.
pub fn within_tolerance(answer: f64, truth: f64) -> bool {
    (answer - truth).abs() <= ABS_TOLERANCE + REL_TOLERANCE * truth.abs()
}

pub fn grade(answer: Option<f64>, truth: f64, mode: GradingMode) -> GradedOutcome {
    let correct = match (answer, mode) {
        (None, _) => false,
        (Some(a), GradingMode::ExactInteger) => a.fract() == 0.0 && a == truth,
        (Some(a), GradingMode::RelativeTolerance) => within_tolerance(a, truth),
    };
    GradedOutcome {
        extracted_answer: answer,
        correct,
        ground_truth: truth,
        grading_mode: mode,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extracts_last_numeral() {
        assert_eq!(extract_answer("...total is 164 + 164 = 328.\n#### 328"), Some(328.0));
        assert_eq!(extract_answer("no numbers here"), None);
        assert_eq!(extract_answer("#### 1.000e-06"), Some(1.0e-6));
        assert_eq!(extract_answer("#### 1,234,567.5"), Some(1_234_567.5));
        assert_eq!(extract_answer("so x = -3"), Some(-3.0));
        assert_eq!(extract_answer("21-15"), Some(15.0));
        assert_eq!(extract_answer("(2)-4"), Some(4.0));
        assert_eq!(extract_answer("list 1,2,3"), Some(3.0));
        assert_eq!(extract_answer("about .5"), Some(0.5));
        assert_eq!(extract_answer("#### 1e999"), None);
        assert_eq!(extract_answer("$210000."), Some(210000.0));
    }

    #[test]
    fn grading_rules() {
        assert!(grade(Some(328.0), 328.0, GradingMode::ExactInteger).correct);
        assert!(!grade(Some(328.5), 328.5, GradingMode::ExactInteger).correct);
        assert!(!grade(Some(327.0), 328.0, GradingMode::ExactInteger).correct);
        // 1 <= 1e-6 + 1e-2 * 100
        assert!(grade(Some(101.0), 100.0, GradingMode::RelativeTolerance).correct);
        assert!(!grade(Some(101.01), 100.0, GradingMode::RelativeTolerance).correct);
        assert!(grade(Some(5e-7), 0.0, GradingMode::RelativeTolerance).correct);
        for mode in [GradingMode::ExactInteger, GradingMode::RelativeTolerance] {
            let g = grade(None, 42.0, mode);
            assert!(!g.correct);
            assert_eq!(g.extracted_answer, None);
        }
    }

    proptest! {
        #[test]
        fn extraction_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let text = String::from_utf8_lossy(&bytes);
            if let Some(v) = extract_answer(&text) {
                prop_assert!(v.is_finite());
            }
        }

        #[test]
        fn extraction_of_printed_numbers(v in -1e9f64..1e9) {
            let text = format!("so the answer is #### {v}");
            prop_assert_eq!(extract_answer(&text), Some(v));
        }

        #[test]
        fn tolerance_is_monotone(truth in -1e6f64..1e6, d1 in -1e4f64..1e4, shrink in 0.0f64..=1.0) {
            let a1 = truth + d1;
            let a2 = truth + d1 * shrink;
            if grade(Some(a1), truth, GradingMode::RelativeTolerance).correct {
                prop_assert!(grade(Some(a2), truth, GradingMode::RelativeTolerance).correct);
            }
        }
    }
}
