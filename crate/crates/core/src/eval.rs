//! Offline evaluation: precision@k and recall@k with feasibility bounds,
//! a seeded random baseline, report output and annotation-task export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Article, ArticleId, SectionTitle};
use crate::error::{Error, Result};
use crate::persist::{self, Header};
use crate::ranking::Ranking;

pub const RANDOM_METHOD: &str = "random";
pub const MAX_ANNOTATION_RECOMMENDATIONS: usize = 10;

/// Per-k values, index `k − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrAtK {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

/// Precision divides by k even when the ranking is shorter than k; recall
/// divides by the truth size. `None` when the truth set is empty.
pub fn pr_at_k(ranking: &Ranking, truth: &BTreeSet<SectionTitle>, k_max: usize) -> Option<PrAtK> {
    if truth.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut precision = Vec::with_capacity(k_max);
    let mut recall = Vec::with_capacity(k_max);
    let mut titles = ranking.titles();
    for k in 1..=k_max {
        if titles.next().is_some_and(|t| truth.contains(t)) {
            hits += 1;
        }
        precision.push(hits as f64 / k as f64);
        recall.push(hits as f64 / truth.len() as f64);
    }
    Some(PrAtK { precision, recall })
}

/// Best achievable (precision, recall) per k for an article with `n` true
/// sections: min(1, n/k) and min(1, k/n).
pub fn upper_bounds(n: usize, k_max: usize) -> PrAtK {
    let n = n as f64;
    PrAtK {
        precision: (1..=k_max).map(|k| (n / k as f64).min(1.0)).collect(),
        recall: (1..=k_max).map(|k| (k as f64 / n).min(1.0)).collect(),
    }
}

/// An article to reconstruct and the sections counted as correct.
#[derive(Clone, Debug)]
pub struct EvalCase<'a> {
    pub article: &'a Article,
    pub truth: BTreeSet<SectionTitle>,
}

impl<'a> EvalCase<'a> {
    /// Reconstruction case: the truth is all of the article's sections.
    pub fn reconstruct(article: &'a Article) -> Self {
        EvalCase {
            article,
            truth: article.distinct_sections().into_iter().cloned().collect(),
        }
    }
}

pub trait Recommender: Sync {
    fn name(&self) -> String;
    fn recommend(&self, case: &EvalCase<'_>, k: usize) -> Ranking;
}

/// Wraps a closure as a [`Recommender`].
pub struct FnRecommender<F> {
    pub name: String,
    pub f: F,
}

impl<F> FnRecommender<F>
where
    F: Fn(&EvalCase<'_>, usize) -> Ranking + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnRecommender { name: name.into(), f }
    }
}

impl<F> Recommender for FnRecommender<F>
where
    F: Fn(&EvalCase<'_>, usize) -> Ranking + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn recommend(&self, case: &EvalCase<'_>, k: usize) -> Ranking {
        (self.f)(case, k)
    }
}

/// Uniform sample of k distinct sections from a fixed vocabulary, seeded per
/// article so results do not depend on evaluation order.
#[derive(Clone, Debug)]
pub struct RandomRecommender {
    pub vocabulary: Vec<SectionTitle>,
    pub seed: u64,
}

impl RandomRecommender {
    pub fn new(vocabulary: impl IntoIterator<Item = SectionTitle>, seed: u64) -> Self {
        let vocabulary: BTreeSet<SectionTitle> = vocabulary.into_iter().collect();
        RandomRecommender {
            vocabulary: vocabulary.into_iter().collect(),
            seed,
        }
    }
}

impl Recommender for RandomRecommender {
    fn name(&self) -> String {
        RANDOM_METHOD.to_string()
    }

    fn recommend(&self, case: &EvalCase<'_>, k: usize) -> Ranking {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ case.article.id.0);
        let k = k.min(self.vocabulary.len());
        let picks = rand::seq::index::sample(&mut rng, self.vocabulary.len(), k);
        Ranking {
            method: RANDOM_METHOD.to_string(),
            entries: picks
                .iter()
                .enumerate()
                .map(|(i, j)| (self.vocabulary[j].clone(), (k - i) as f64))
                .collect(),
            flag: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArticleResult {
    pub article: ArticleId,
    pub values: PrAtK,
    pub bounds: PrAtK,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub k_max: usize,
    /// Macro averages over evaluated articles, index `k − 1`.
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub precision_bound: Vec<f64>,
    pub recall_bound: Vec<f64>,
    pub evaluated: usize,
    pub skipped: usize,
    pub fingerprint: Option<String>,
    pub per_article: Vec<ArticleResult>,
}

impl EvalReport {
    pub fn precision_at(&self, k: usize) -> f64 {
        self.precision[k - 1]
    }

    pub fn recall_at(&self, k: usize) -> f64 {
        self.recall[k - 1]
    }
}

fn macro_average<'a>(rows: impl Iterator<Item = &'a [f64]>, k_max: usize, n: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k_max];
    for row in rows {
        for (s, x) in sums.iter_mut().zip(row) {
            *s += x;
        }
    }
    sums.into_iter().map(|s| s / n as f64).collect()
}

/// Scores `recommender` on every case at k = 1..=k_max; cases with empty truth
/// are skipped and counted.
pub fn evaluate_method(recommender: &dyn Recommender, cases: &[EvalCase<'_>], k_max: usize) -> Result<EvalReport> {
    let per_article: Vec<ArticleResult> = cases
        .par_iter()
        .filter_map(|case| {
            let ranking = recommender.recommend(case, k_max);
            let values = pr_at_k(&ranking, &case.truth, k_max)?;
            Some(ArticleResult {
                article: case.article.id,
                values,
                bounds: upper_bounds(case.truth.len(), k_max),
            })
        })
        .collect();
    let skipped = cases.len() - per_article.len();
    if per_article.is_empty() {
        return Err(Error::NoEvaluableArticles { skipped });
    }
    let n = per_article.len();
    Ok(EvalReport {
        method: recommender.name(),
        k_max,
        precision: macro_average(per_article.iter().map(|r| r.values.precision.as_slice()), k_max, n),
        recall: macro_average(per_article.iter().map(|r| r.values.recall.as_slice()), k_max, n),
        precision_bound: macro_average(per_article.iter().map(|r| r.bounds.precision.as_slice()), k_max, n),
        recall_bound: macro_average(per_article.iter().map(|r| r.bounds.recall.as_slice()), k_max, n),
        evaluated: n,
        skipped,
        fingerprint: None,
        per_article,
    })
}

pub const REPORT_COLUMNS: [&str; 6] = ["method", "k", "precision", "recall", "p_bound", "r_bound"];

fn report_rows(reports: &[EvalReport]) -> impl Iterator<Item = [String; 6]> + '_ {
    reports.iter().flat_map(|r| {
        (0..r.k_max).map(move |i| {
            [
                r.method.clone(),
                (i + 1).to_string(),
                r.precision[i].to_string(),
                r.recall[i].to_string(),
                r.precision_bound[i].to_string(),
                r.recall_bound[i].to_string(),
            ]
        })
    })
}

/// Machine-readable rows, tab-separated, one per method and k.
pub fn write_report_tsv(path: &Path, reports: &[EvalReport], header: &Header) -> Result<()> {
    write_report(path, reports, header, "\t")
}

/// Same rows as comma-separated values for plotting.
pub fn write_report_csv(path: &Path, reports: &[EvalReport], header: &Header) -> Result<()> {
    write_report(path, reports, header, ",")
}

fn write_report(path: &Path, reports: &[EvalReport], header: &Header, sep: &str) -> Result<()> {
    let mut header = header.clone();
    for r in reports {
        header.set(format!("evaluated.{}", r.method), r.evaluated);
        header.set(format!("skipped.{}", r.method), r.skipped);
    }
    persist::write_file(path, |w| {
        header.write_to(w)?;
        writeln!(w, "{}", REPORT_COLUMNS.join(sep))?;
        for row in report_rows(reports) {
            writeln!(w, "{}", row.join(sep))?;
        }
        Ok(())
    })
}

/// Human-readable table of precision/recall at the given cutoffs.
pub fn render_table(reports: &[EvalReport], ks: &[usize]) -> String {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>5}", "method", "n");
    for k in ks {
        let _ = write!(out, "  {:>7}  {:>7}", format!("P@{k}"), format!("R@{k}"));
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<width$}  {:>5}", r.method, r.evaluated);
        for &k in ks.iter().filter(|&&k| k >= 1 && k <= r.k_max) {
            let _ = write!(out, "  {:>7.4}  {:>7.4}", r.precision_at(k), r.recall_at(k));
        }
        out.push('\n');
    }
    out
}

/// One `article_id<TAB>rank<TAB>section` row per recommendation, ranks from 1.
pub fn export_annotation_tasks(path: &Path, recommendations: &[(ArticleId, Ranking)], header: &Header) -> Result<()> {
    for (article, ranking) in recommendations {
        if ranking.len() > MAX_ANNOTATION_RECOMMENDATIONS {
            return Err(Error::TooManyRecommendations {
                article: *article,
                count: ranking.len(),
                max: MAX_ANNOTATION_RECOMMENDATIONS,
            });
        }
    }
    persist::write_file(path, |w| {
        header.write_to(w)?;
        for (article, ranking) in recommendations {
            for (rank, title) in ranking.titles().enumerate() {
                writeln!(w, "{article}\t{}\t{title}", rank + 1)?;
            }
        }
        Ok(())
    })
}

/// Parses an exported task file back into per-article section lists.
pub fn read_annotation_tasks(path: &Path) -> Result<BTreeMap<ArticleId, Vec<SectionTitle>>> {
    let text = persist::read_text(path)?;
    let mut tasks: BTreeMap<ArticleId, Vec<SectionTitle>> = BTreeMap::new();
    for (line, raw) in &text.lines {
        let bad = || text.parse_error(*line, "expected `article_id<TAB>rank<TAB>section`");
        let f = persist::split_fields(raw, 3).ok_or_else(bad)?;
        let article = ArticleId(f[0].parse().map_err(|_| bad())?);
        let rank: usize = f[1].parse().map_err(|_| bad())?;
        let list = tasks.entry(article).or_default();
        if rank != list.len() + 1 {
            return Err(text.parse_error(*line, format!("rank {rank} out of sequence")));
        }
        list.push(SectionTitle::new(f[2]).map_err(|_| bad())?);
    }
    Ok(tasks)
}
