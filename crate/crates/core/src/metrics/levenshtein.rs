//! Token-level normalized edit distance with a math-aware tokenizer.

use unicode_normalization::UnicodeNormalization;

use super::MetricsError;

/// NFKC, lowercase, and ASCII spellings of common math symbols.
pub fn preprocess(text: &str) -> String {
    text.nfkc()
        .collect::<String>()
        .to_lowercase()
        .chars()
        .map(|c| match c {
            '×' => '*',
            '÷' => '/',
            '−' | '–' | '—' => '-',
            c => c,
        })
        .collect()
}

/// Splits into letter runs, numbers (digits, optional fraction, optional
/// exponent) and single symbols. Whitespace is dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        } else if c.is_alphabetic() {
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
        } else if c.is_ascii_digit() {
            let digits = |i: &mut usize| {
                while *i < chars.len() && chars[*i].is_ascii_digit() {
                    *i += 1;
                }
            };
            digits(&mut i);
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                digits(&mut i);
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    digits(&mut i);
                }
            }
        } else {
            i += 1;
        }
        out.push(chars[start..i].iter().collect());
    }
    out
}

/// Unit-cost insert/delete/substitute distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=a.len()).collect();
    let mut cur = vec![0; a.len() + 1];
    for (j, bj) in b.iter().enumerate() {
        cur[0] = j + 1;
        for (i, ai) in a.iter().enumerate() {
            let sub = prev[i] + usize::from(ai != bj);
            cur[i + 1] = sub.min(prev[i + 1] + 1).min(cur[i] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[a.len()]
}

/// Edit distance divided by the longer length; 0 when both are empty.
pub fn normalized_distance<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let n = a.len().max(b.len());
    if n == 0 {
        0.0
    } else {
        edit_distance(a, b) as f64 / n as f64
    }
}

pub fn text_tokens(text: &str) -> Vec<String> {
    tokenize(&preprocess(text))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdFamily {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Lower median for even counts.
    pub median: f64,
}

pub fn pool(mut distances: Vec<f64>) -> Result<LdFamily, MetricsError> {
    if distances.is_empty() {
        return Err(MetricsError::EmptyReferences);
    }
    distances.sort_by(f64::total_cmp);
    let n = distances.len();
    Ok(LdFamily {
        min: distances[0],
        max: distances[n - 1],
        mean: distances.iter().sum::<f64>() / n as f64,
        median: distances[(n - 1) / 2],
    })
}

/// Normalized distances from `response` to each reference, pooled.
pub fn levenshtein_family<S: AsRef<str>>(response: &str, references: &[S]) -> Result<LdFamily, MetricsError> {
    let u = text_tokens(response);
    pool(
        references
            .iter()
            .map(|r| normalized_distance(&u, &text_tokens(r.as_ref())))
            .collect(),
    )
}

/// Like [`levenshtein_family`] with references already tokenized.
pub fn levenshtein_family_tokens(response: &str, references: &[Vec<String>]) -> Result<LdFamily, MetricsError> {
    let u = text_tokens(response);
    pool(references.iter().map(|r| normalized_distance(&u, r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        text_tokens(s)
    }

    #[test]
    fn tokenizer_classes() {
        assert_eq!(toks("32 × 5 = 160"), ["32", "*", "5", "=", "160"]);
        assert_eq!(toks("#### 1.000e-06."), ["#", "#", "#", "#", "1.000e-06", "."]);
        assert_eq!(toks("Let's  go\n3.5x"), ["let", "'", "s", "go", "3.5", "x"]);
        assert_eq!(toks("8÷2 − 1"), ["8", "/", "2", "-", "1"]);
        assert_eq!(toks("ＡＢＣ"), ["abc"]);
        assert_eq!(toks("2e"), ["2", "e"]);
    }

    #[test]
    fn distance_examples() {
        let u = ["a", "b", "c"];
        assert_eq!(normalized_distance(&u, &["a", "x", "c"]), 1.0 / 3.0);
        assert_eq!(normalized_distance(&u, &u), 0.0);
        assert_eq!(normalized_distance(&u, &["x", "y", "z"]), 1.0);
        assert_eq!(normalized_distance::<&str>(&[], &[]), 0.0);
        assert_eq!(edit_distance(&["a"], &[]), 1);
        let fam = levenshtein_family("a b c", &["a b c", "x y z"]).unwrap();
        assert_eq!(fam.min, 0.0);
        assert_eq!(fam.max, 1.0);
        assert_eq!(fam.median, 0.0);
        assert!(levenshtein_family::<&str>("a", &[]).is_err());
    }

    proptest! {
        #[test]
        fn pooled_values_are_ordered(resp in "[abc ]{0,12}", refs in proptest::collection::vec("[abc ]{0,12}", 1..8)) {
            let f = levenshtein_family(&resp, &refs).unwrap();
            for v in [f.min, f.max, f.mean, f.median] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(f.min <= f.median && f.median <= f.max);
            prop_assert!(f.min <= f.mean && f.mean <= f.max);
        }

        #[test]
        fn single_reference_pools_to_one_value(resp in "[ab1 ]{0,10}", r in "[ab1 ]{0,10}") {
            let f = levenshtein_family(&resp, &[r]).unwrap();
            prop_assert!(f.min == f.max && f.max == f.mean && f.mean == f.median);
        }
    }
}
