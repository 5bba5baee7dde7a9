use crate::error::{Error, Result};

/// Mann–Whitney AUC: `P(case > control) + ½·P(case = control)` over all
/// case/control pairs; `cases[i]` marks `scores[i]` as a case.
pub fn auc(scores: &[f64], cases: &[bool]) -> Result<f64> {
    if scores.len() != cases.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} group flags",
            scores.len(),
            cases.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let pos: Vec<f64> = scores
        .iter()
        .zip(cases)
        .filter(|(_, c)| **c)
        .map(|(s, _)| *s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(cases)
        .filter(|(_, c)| !**c)
        .map(|(s, _)| *s)
        .collect();
    if pos.is_empty() {
        return Err(Error::EmptyGroup("cases"));
    }
    if neg.is_empty() {
        return Err(Error::EmptyGroup("controls"));
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}
