use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::SectionTitle;

/// Why a ranking is shorter than requested or built from a fallback.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankingFlag {
    /// None of the article's categories survived pruning.
    NoSurvivingCategory,
    /// The document had no in-vocabulary tokens; a uniform mixture was used.
    UniformMixture,
}

/// An ordered list of recommended sections, best first.
///
/// Entries are sorted by descending score with ties broken by ascending title,
/// and no title appears twice.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    pub method: String,
    pub entries: Vec<(SectionTitle, f64)>,
    pub flag: Option<RankingFlag>,
}

/// Descending score, then ascending title.
pub fn rank_order(a: &(SectionTitle, f64), b: &(SectionTitle, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

impl Ranking {
    pub fn empty(method: impl Into<String>) -> Self {
        Ranking {
            method: method.into(),
            entries: Vec::new(),
            flag: None,
        }
    }

    /// Ranks `scores`, dropping `exclude`d titles, and keeps the top `k`.
    pub fn from_scores(
        method: impl Into<String>,
        scores: BTreeMap<SectionTitle, f64>,
        exclude: &BTreeSet<&SectionTitle>,
        k: usize,
    ) -> Self {
        let mut entries: Vec<(SectionTitle, f64)> = scores
            .into_iter()
            .filter(|(t, _)| !exclude.contains(t))
            .collect();
        top_k(&mut entries, k);
        Ranking {
            method: method.into(),
            entries,
            flag: None,
        }
    }

    pub fn with_flag(mut self, flag: RankingFlag) -> Self {
        self.flag = Some(flag);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn titles(&self) -> impl Iterator<Item = &SectionTitle> {
        self.entries.iter().map(|(t, _)| t)
    }
}

/// Sorts `entries` by [`rank_order`] and truncates to `k`.
pub fn top_k(entries: &mut Vec<(SectionTitle, f64)>, k: usize) {
    if entries.len() > k && k > 0 {
        entries.select_nth_unstable_by(k - 1, rank_order);
        entries.truncate(k);
    }
    if k == 0 {
        entries.clear();
    }
    entries.sort_by(rank_order);
}
