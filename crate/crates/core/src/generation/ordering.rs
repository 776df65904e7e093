//! Cluster ordering strategies for the final answer prompt.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrderingKind {
    #[default]
    Ascending,
    Descending,
    Random,
    PingpongDescTop,
    PingpongDescBottom,
}

impl OrderingKind {
    pub const ALL: [OrderingKind; 5] = [
        OrderingKind::Ascending,
        OrderingKind::Descending,
        OrderingKind::Random,
        OrderingKind::PingpongDescTop,
        OrderingKind::PingpongDescBottom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OrderingKind::Ascending => "ascending",
            OrderingKind::Descending => "descending",
            OrderingKind::Random => "random",
            OrderingKind::PingpongDescTop => "pingpong_desc_top",
            OrderingKind::PingpongDescBottom => "pingpong_desc_bottom",
        }
    }

    /// Row label used in ordering-ablation tables.
    pub fn display_name(self) -> &'static str {
        match self {
            OrderingKind::Ascending => "Ascending",
            OrderingKind::Descending => "Descending",
            OrderingKind::Random => "Random",
            OrderingKind::PingpongDescTop => "Ping-pong Descending Top-to-bottom",
            OrderingKind::PingpongDescBottom => "Ping-pong Descending Bottom-to-top",
        }
    }
}

impl fmt::Display for OrderingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OrderingKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown ordering {s:?}; expected one of {}",
                    OrderingKind::ALL.map(|k| k.as_str()).join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OrderingStrategy {
    pub kind: OrderingKind,
    /// Shuffle seed, used by `random` only.
    pub seed: u64,
}

impl OrderingStrategy {
    pub fn new(kind: OrderingKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

/// Indices of `sims` sorted by descending similarity (stable on ties).
fn descending_indices(sims: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sims.len()).collect();
    idx.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
    idx
}

/// Reorders `(item, similarity)` pairs; the output is always a permutation.
///
/// Ping-pong top-to-bottom takes the descending list d1..dn and emits the
/// odd ranks in order followed by the even ranks mirrored: d1, d3, …, d4, d2.
/// Bottom-to-top is its reverse.
pub fn order_clusters<T: Clone>(items: &[(T, f64)], strategy: OrderingStrategy) -> Vec<(T, f64)> {
    let sims: Vec<f64> = items.iter().map(|(_, s)| *s).collect();
    let desc = descending_indices(&sims);
    let order: Vec<usize> = match strategy.kind {
        OrderingKind::Descending => desc,
        OrderingKind::Ascending => desc.into_iter().rev().collect(),
        OrderingKind::Random => {
            let mut idx: Vec<usize> = (0..items.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(strategy.seed));
            idx
        }
        OrderingKind::PingpongDescTop | OrderingKind::PingpongDescBottom => {
            let odd = desc.iter().step_by(2).copied();
            let even: Vec<usize> = desc.iter().skip(1).step_by(2).copied().collect();
            let mut top: Vec<usize> = odd.chain(even.into_iter().rev()).collect();
            if strategy.kind == OrderingKind::PingpongDescBottom {
                top.reverse();
            }
            top
        }
    };
    order.into_iter().map(|i| items[i].clone()).collect()
}
