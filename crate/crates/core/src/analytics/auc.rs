use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, TemplateGroup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateAuc {
    pub auc: f64,
    pub n0: usize,
    pub n1: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroAuc {
    /// Absent when every template lacks one of the two outcomes.
    pub auc_micro: Option<f64>,
    pub reason: Option<String>,
    pub per_template: BTreeMap<String, TemplateAuc>,
    /// Templates with `n0 * n1 = 0`.
    pub excluded: Vec<String>,
}

/// Twice the number of (incorrect, correct) pairs where the incorrect one
/// scores higher, counting ties once.
fn half_wins(group: &TemplateGroup) -> u128 {
    let mut correct: Vec<f64> = group.records.iter().filter(|r| r.1).map(|r| r.0).collect();
    correct.sort_by(f64::total_cmp);
    group
        .records
        .iter()
        .filter(|r| !r.1)
        .map(|&(f, _)| {
            let below = correct.partition_point(|&x| x < f) as u128;
            let not_above = correct.partition_point(|&x| x <= f) as u128;
            2 * below + (not_above - below)
        })
        .sum()
}

/// Per-template AUC (the chance an incorrect variation outscores a correct
/// one, ties counted half) and the micro average weighted by `n0 * n1`.
pub fn micro_auc(groups: &[TemplateGroup]) -> Result<MicroAuc, AnalyticsError> {
    let mut per_template = BTreeMap::new();
    let mut excluded = Vec::new();
    let (mut num, mut pairs) = (0u128, 0u128);
    for g in groups {
        g.check_finite()?;
        let (n0, n1) = (g.n0(), g.n1());
        if n0 == 0 || n1 == 0 {
            excluded.push(g.template_id.clone());
            continue;
        }
        let hw = half_wins(g);
        let p = (n0 * n1) as u128;
        per_template.insert(
            g.template_id.clone(),
            TemplateAuc {
                auc: hw as f64 / (2 * p) as f64,
                n0,
                n1,
            },
        );
        num += hw;
        pairs += p;
    }
    let (auc_micro, reason) = if pairs == 0 {
        (None, Some("no template has both correct and incorrect records".to_string()))
    } else {
        (Some(num as f64 / (2 * pairs) as f64), None)
    };
    Ok(MicroAuc {
        auc_micro,
        reason,
        per_template,
        excluded,
    })
}
