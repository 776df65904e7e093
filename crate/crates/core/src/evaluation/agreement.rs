//! Inter-annotator agreement statistics.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::embedding::{cosine, EmbeddingVector};

/// Mean of the change indicators.
pub fn proportion_changed(flags: &[bool]) -> Result<f64, EvalError> {
    if flags.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.chars().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Fleiss' κ over an items × categories count table. Returns 1.0 when the
/// expected agreement is 1 (all ratings fall in one category).
pub fn fleiss_kappa(table: &[Vec<usize>], n_raters: usize) -> Result<f64, EvalError> {
    if table.len() < 2 {
        return Err(EvalError::Invalid("Fleiss kappa needs at least two items".into()));
    }
    if n_raters < 2 {
        return Err(EvalError::Invalid("Fleiss kappa needs at least two raters".into()));
    }
    let n_cat = table[0].len();
    for (row, counts) in table.iter().enumerate() {
        let sum: usize = counts.iter().sum();
        if sum != n_raters || counts.len() != n_cat {
            return Err(EvalError::RowSum {
                row,
                sum,
                expected: n_raters,
            });
        }
    }
    let n = n_raters as f64;
    let items = table.len() as f64;
    let p_bar = table
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| (c * c) as f64).sum();
            (sq - n) / (n * (n - 1.0))
        })
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..n_cat)
        .map(|j| {
            let pj = table.iter().map(|row| row[j] as f64).sum::<f64>() / (items * n);
            pj * pj
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Mean over annotator pairs of the mean per-item cosine similarity.
/// `embeddings[a][t]` is annotator `a`'s vector for item `t`.
pub fn pairwise_cosine_agreement(embeddings: &[Vec<EmbeddingVector>]) -> Result<f64, EvalError> {
    if embeddings.len() < 2 {
        return Err(EvalError::Invalid("pairwise agreement needs at least two annotators".into()));
    }
    let items = embeddings[0].len();
    if items == 0 {
        return Err(EvalError::Empty);
    }
    for (annotator, e) in embeddings.iter().enumerate() {
        if e.len() != items {
            return Err(EvalError::ItemCount {
                annotator,
                got: e.len(),
                expected: items,
            });
        }
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            let s: f64 = (0..items)
                .map(|t| cosine(embeddings[i][t].values(), embeddings[j][t].values()))
                .sum();
            total += s / items as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    /// Mean proportion of items changed, averaged over annotators.
    pub phi: f64,
    /// Mean character edit distance to the original item.
    pub mean_levenshtein: f64,
    /// κ on the changed / unchanged labels.
    pub fleiss_kappa: f64,
    pub mean_pairwise_cosine: f64,
}

/// Aggregates agreement for re-annotations of `original` items.
/// `revisions[a][t]` is annotator `a`'s version of item `t`, and
/// `embeddings` is indexed the same way.
pub fn agreement_stats(
    original: &[String],
    revisions: &[Vec<String>],
    embeddings: &[Vec<EmbeddingVector>],
) -> Result<AgreementStats, EvalError> {
    if revisions.is_empty() || original.is_empty() {
        return Err(EvalError::Empty);
    }
    for (annotator, r) in revisions.iter().enumerate() {
        if r.len() != original.len() {
            return Err(EvalError::ItemCount {
                annotator,
                got: r.len(),
                expected: original.len(),
            });
        }
    }
    let mut phi = 0.0;
    let mut lev = 0.0;
    for r in revisions {
        let flags: Vec<bool> = r.iter().zip(original).map(|(a, o)| a != o).collect();
        phi += proportion_changed(&flags)?;
        lev += r.iter().zip(original).map(|(a, o)| levenshtein(a, o) as f64).sum::<f64>() / original.len() as f64;
    }
    let table: Vec<Vec<usize>> = (0..original.len())
        .map(|t| {
            let changed = revisions.iter().filter(|r| r[t] != original[t]).count();
            vec![changed, revisions.len() - changed]
        })
        .collect();
    Ok(AgreementStats {
        phi: phi / revisions.len() as f64,
        mean_levenshtein: lev / revisions.len() as f64,
        fleiss_kappa: fleiss_kappa(&table, revisions.len())?,
        mean_pairwise_cosine: pairwise_cosine_agreement(embeddings)?,
    })
}
