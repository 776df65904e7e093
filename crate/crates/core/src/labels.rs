//! Three-way conclusion labels, CI-based gold labelling and answer parsing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ResearchQuestion;

/// Conclusion of one study with respect to a two-arm research question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConclusionLabel {
    FavoursLeft,
    FavoursRight,
    NoDifference,
}

impl ConclusionLabel {
    pub const ALL: [ConclusionLabel; 3] = [
        ConclusionLabel::FavoursLeft,
        ConclusionLabel::FavoursRight,
        ConclusionLabel::NoDifference,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConclusionLabel::FavoursLeft => "favours_left",
            ConclusionLabel::FavoursRight => "favours_right",
            ConclusionLabel::NoDifference => "no_difference",
        }
    }

    /// Swaps the two favour labels; `NoDifference` is its own mirror.
    pub fn mirrored(self) -> Self {
        match self {
            ConclusionLabel::FavoursLeft => ConclusionLabel::FavoursRight,
            ConclusionLabel::FavoursRight => ConclusionLabel::FavoursLeft,
            ConclusionLabel::NoDifference => ConclusionLabel::NoDifference,
        }
    }
}

impl fmt::Display for ConclusionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A model prediction: one of the three labels or an answer that maps to none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    FavoursLeft,
    FavoursRight,
    NoDifference,
    Unparsed,
}

impl Prediction {
    pub fn label(self) -> Option<ConclusionLabel> {
        match self {
            Prediction::FavoursLeft => Some(ConclusionLabel::FavoursLeft),
            Prediction::FavoursRight => Some(ConclusionLabel::FavoursRight),
            Prediction::NoDifference => Some(ConclusionLabel::NoDifference),
            Prediction::Unparsed => None,
        }
    }
}

impl From<ConclusionLabel> for Prediction {
    fn from(label: ConclusionLabel) -> Self {
        match label {
            ConclusionLabel::FavoursLeft => Prediction::FavoursLeft,
            ConclusionLabel::FavoursRight => Prediction::FavoursRight,
            ConclusionLabel::NoDifference => Prediction::NoDifference,
        }
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.label() {
            Some(label) => label.fmt(f),
            None => f.write_str("unparsed"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    /// Odds/risk/hazard ratios; null effect at 1.
    Ratio,
    /// Mean differences; null effect at 0.
    MeanDifference,
}

impl EffectKind {
    pub fn threshold(self) -> f64 {
        match self {
            EffectKind::Ratio => 1.0,
            EffectKind::MeanDifference => 0.0,
        }
    }
}

impl FromStr for EffectKind {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ratio" => Ok(EffectKind::Ratio),
            "mean_difference" | "md" => Ok(EffectKind::MeanDifference),
            other => Err(LabelError::UnknownEffectKind(other.to_string())),
        }
    }
}

/// A per-study point estimate with its 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub effect_kind: EffectKind,
    /// Swaps the left/right mapping for outcomes with inverted polarity.
    #[serde(default)]
    pub direction_flipped: bool,
}

impl EffectEstimate {
    pub fn new(point: f64, ci_low: f64, ci_high: f64, effect_kind: EffectKind) -> Self {
        Self {
            point,
            ci_low,
            ci_high,
            effect_kind,
            direction_flipped: false,
        }
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        if !(self.point.is_finite() && self.ci_low.is_finite() && self.ci_high.is_finite()) {
            return Err(LabelError::NonFinite);
        }
        if self.ci_low > self.ci_high {
            return Err(LabelError::InvertedInterval {
                low: self.ci_low,
                high: self.ci_high,
            });
        }
        if self.point < self.ci_low || self.point > self.ci_high {
            return Err(LabelError::PointOutsideInterval {
                point: self.point,
                low: self.ci_low,
                high: self.ci_high,
            });
        }
        if self.effect_kind == EffectKind::Ratio && self.ci_low <= 0.0 {
            return Err(LabelError::NonPositiveRatio(self.ci_low));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("confidence interval bounds must be finite")]
    NonFinite,
    #[error("ci_low {low} exceeds ci_high {high}")]
    InvertedInterval { low: f64, high: f64 },
    #[error("point estimate {point} lies outside [{low}, {high}]")]
    PointOutsideInterval { point: f64, low: f64, high: f64 },
    #[error("ratio estimates must be strictly positive, got ci_low {0}")]
    NonPositiveRatio(f64),
    #[error("unknown effect kind {0:?} (expected ratio or mean_difference)")]
    UnknownEffectKind(String),
}

/// Derives a study conclusion from where its CI sits relative to the null
/// effect. An interval touching the threshold counts as no difference.
pub fn label_from_ci(est: &EffectEstimate) -> Result<ConclusionLabel, LabelError> {
    est.validate()?;
    let tau = est.effect_kind.threshold();
    let (below, above) = match est.effect_kind {
        EffectKind::Ratio => (ConclusionLabel::FavoursLeft, ConclusionLabel::FavoursRight),
        EffectKind::MeanDifference => (ConclusionLabel::FavoursRight, ConclusionLabel::FavoursLeft),
    };
    let label = if est.ci_high < tau {
        below
    } else if est.ci_low > tau {
        above
    } else {
        ConclusionLabel::NoDifference
    };
    Ok(if est.direction_flipped {
        label.mirrored()
    } else {
        label
    })
}

const ANSWER_PREFIX: &str = "answer:";
const NO_DIFFERENCE: &str = "no difference";

fn normalise(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Maps free model output onto the conclusion set.
///
/// The last line starting with `ANSWER:` is compared against the two arm
/// names and "no difference": an exact match wins, then a unique containment.
/// Without an `ANSWER:` line the whole text goes through the containment rule.
pub fn parse_model_answer(text: &str, q: &ResearchQuestion) -> Prediction {
    let answer_line = text.lines().rev().find_map(|line| {
        let trimmed = line.trim_start();
        let head = trimmed.get(..ANSWER_PREFIX.len())?;
        head.eq_ignore_ascii_case(ANSWER_PREFIX)
            .then(|| &trimmed[ANSWER_PREFIX.len()..])
    });
    let candidates = [
        (normalise(&q.left_intervention), Prediction::FavoursLeft),
        (normalise(&q.right_intervention), Prediction::FavoursRight),
        (NO_DIFFERENCE.to_string(), Prediction::NoDifference),
    ];

    let haystack = match answer_line {
        Some(rest) => {
            let rest = normalise(rest);
            let rest = rest.trim_end_matches(['.', '!', ';', ',']).trim();
            if let Some((_, p)) = candidates.iter().find(|(c, _)| !c.is_empty() && c == rest) {
                return *p;
            }
            rest.to_string()
        }
        None => normalise(text),
    };

    let mut hits = candidates
        .iter()
        .filter(|(c, _)| !c.is_empty() && haystack.contains(c.as_str()));
    match (hits.next(), hits.next()) {
        (Some((_, p)), None) => *p,
        _ => Prediction::Unparsed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio(lo: f64, hi: f64) -> EffectEstimate {
        EffectEstimate::new((lo + hi) / 2.0, lo, hi, EffectKind::Ratio)
    }

    fn question(left: &str, right: &str) -> ResearchQuestion {
        ResearchQuestion {
            id: "q".into(),
            text: "Does it work?".into(),
            left_intervention: left.into(),
            right_intervention: right.into(),
            outcome: None,
        }
    }

    #[test]
    fn worked_intervals() {
        assert_eq!(label_from_ci(&ratio(0.2, 0.8)), Ok(ConclusionLabel::FavoursLeft));
        assert_eq!(label_from_ci(&ratio(1.2, 1.8)), Ok(ConclusionLabel::FavoursRight));
        assert_eq!(label_from_ci(&ratio(0.8, 1.2)), Ok(ConclusionLabel::NoDifference));
        assert_eq!(label_from_ci(&ratio(1.0, 1.5)), Ok(ConclusionLabel::NoDifference));
        let md = EffectEstimate::new(0.6, 0.3, 0.9, EffectKind::MeanDifference);
        assert_eq!(label_from_ci(&md), Ok(ConclusionLabel::FavoursLeft));
        let md = EffectEstimate::new(-0.6, -0.9, -0.3, EffectKind::MeanDifference);
        assert_eq!(label_from_ci(&md), Ok(ConclusionLabel::FavoursRight));
    }

    #[test]
    fn invalid_estimates() {
        let bad = EffectEstimate::new(0.5, -0.1, 0.8, EffectKind::Ratio);
        assert_eq!(label_from_ci(&bad), Err(LabelError::NonPositiveRatio(-0.1)));
        let bad = EffectEstimate::new(1.0, 1.2, 0.8, EffectKind::Ratio);
        assert!(matches!(label_from_ci(&bad), Err(LabelError::InvertedInterval { .. })));
        let bad = EffectEstimate::new(2.0, 0.8, 1.2, EffectKind::Ratio);
        assert!(matches!(label_from_ci(&bad), Err(LabelError::PointOutsideInterval { .. })));
    }

    #[test]
    fn flipped_direction_mirrors() {
        let mut est = ratio(0.2, 0.8);
        est.direction_flipped = true;
        assert_eq!(label_from_ci(&est), Ok(ConclusionLabel::FavoursRight));
    }

    #[test]
    fn parses_answer_lines() {
        let q = question("stem cell transplantation", "placebo");
        assert_eq!(
            parse_model_answer("Reasoning...\nANSWER: stem cell transplantation", &q),
            Prediction::FavoursLeft
        );
        assert_eq!(parse_model_answer("ANSWER: no difference", &q), Prediction::NoDifference);
        assert_eq!(parse_model_answer("The evidence is mixed.", &q), Prediction::Unparsed);
        assert_eq!(parse_model_answer("answer:   PLACEBO.", &q), Prediction::FavoursRight);
        // last ANSWER line wins
        assert_eq!(
            parse_model_answer("ANSWER: placebo\nANSWER: no difference", &q),
            Prediction::NoDifference
        );
        // unique containment
        assert_eq!(
            parse_model_answer("ANSWER: favours placebo overall", &q),
            Prediction::FavoursRight
        );
        // ambiguous containment
        assert_eq!(
            parse_model_answer("ANSWER: placebo or stem cell transplantation", &q),
            Prediction::Unparsed
        );
    }

    #[test]
    fn exact_match_beats_containment() {
        let q = question("drug a", "drug a plus b");
        assert_eq!(parse_model_answer("ANSWER: drug A plus B", &q), Prediction::FavoursRight);
        assert_eq!(parse_model_answer("ANSWER: drug a", &q), Prediction::FavoursLeft);
    }
}
