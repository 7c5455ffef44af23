//! Learned merging of per-category rankings, weighted by category size and
//! purity.
//!
//! Every (article, category, section) candidate is described by the section's
//! score in that category times each of 17 category features, plus the
//! reciprocal rank. A ridge regression predicts whether the section belongs to
//! the article; an article's merged score for a section is the sum of the
//! predictions over the categories proposing it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catgraph::PrunedGraph;
use crate::corpus::{Article, CategoryId, SectionTitle};
use crate::counts::ScoreTable;
use crate::error::{Error, Result};
use crate::factorize::FactorModel;
use crate::persist::{self, Header};
use crate::ranking::{Ranking, RankingFlag};

/// Category features per candidate: 15 monomials, log size, exp gini.
pub const FEATURE_COUNT: usize = 17;
/// Regression inputs: every category feature times the section score, plus 1/rank.
pub const CANDIDATE_FEATURES: usize = FEATURE_COUNT + 1;
pub const MIN_VALIDATION_ARTICLES: usize = 50;

/// Exponents (a, b) of sᵃ·gᵇ, by total degree then descending a.
pub fn monomials() -> Vec<(u32, u32)> {
    (0..=4u32)
        .flat_map(|d| (0..=d).rev().map(move |a| (a, d - a)))
        .collect()
}

pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = monomials()
        .into_iter()
        .map(|(a, b)| match (a, b) {
            (0, 0) => "1".to_string(),
            (a, 0) => format!("s^{a}"),
            (0, b) => format!("g^{b}"),
            (a, b) => format!("s^{a}*g^{b}"),
        })
        .collect();
    names.push("ln(1+size)".into());
    names.push("exp(g)".into());
    names
}

pub fn candidate_feature_names() -> Vec<String> {
    let mut names: Vec<String> = feature_names().into_iter().map(|f| format!("p*{f}")).collect();
    names.push("1/rank".into());
    names
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CategoryMeta {
    pub category: CategoryId,
    /// Closure article count.
    pub size: usize,
    pub gini: f64,
}

/// Metadata of every surviving category.
pub fn metas_from_pruned(pruned: &PrunedGraph) -> BTreeMap<CategoryId, CategoryMeta> {
    pruned
        .nodes
        .iter()
        .map(|(&c, s)| {
            (
                c,
                CategoryMeta {
                    category: c,
                    size: s.closure_size,
                    gini: s.purity,
                },
            )
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

/// Features of a category; size is divided by `max_size` and clamped to [0, 1],
/// gini clamped to [0, 1].
pub fn featurize(meta: &CategoryMeta, max_size: usize) -> FeatureVector {
    let s = if max_size == 0 {
        0.0
    } else {
        (meta.size as f64 / max_size as f64).clamp(0.0, 1.0)
    };
    let g = if meta.gini.is_finite() { meta.gini.clamp(0.0, 1.0) } else { 0.0 };
    let mut f: Vec<f64> = monomials()
        .into_iter()
        .map(|(a, b)| s.powi(a as i32) * g.powi(b as i32))
        .collect();
    f.push((meta.size as f64).ln_1p());
    f.push(g.exp());
    FeatureVector(f)
}

fn candidate_features(category: &FeatureVector, score: f64, rank: usize) -> [f64; CANDIDATE_FEATURES] {
    let mut x = [0.0; CANDIDATE_FEATURES];
    for (slot, f) in x.iter_mut().zip(&category.0) {
        *slot = score * f;
    }
    x[FEATURE_COUNT] = 1.0 / rank as f64;
    x
}

/// A source of per-category section rankings (best first).
pub trait CategoryRanker {
    fn name(&self) -> &str;
    fn ranking(&self, c: CategoryId) -> Option<&[(SectionTitle, f64)]>;
}

impl CategoryRanker for ScoreTable {
    fn name(&self) -> &str {
        crate::counts::METHOD
    }

    fn ranking(&self, c: CategoryId) -> Option<&[(SectionTitle, f64)]> {
        self.get(c).map(|s| s.sections.as_slice())
    }
}

/// Precomputed per-category rankings, e.g. from a category factor model.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryLists {
    pub name: String,
    pub lists: BTreeMap<CategoryId, Vec<(SectionTitle, f64)>>,
}

impl CategoryLists {
    /// Top `depth` predicted sections of every row of a category model.
    pub fn from_factor_model(model: &FactorModel, depth: usize) -> Result<Self> {
        let lists = model
            .row_labels
            .iter()
            .map(|&label| {
                let mut scores = model.row_scores(label)?;
                scores.truncate(depth);
                Ok((CategoryId(label), scores))
            })
            .collect::<Result<_>>()?;
        Ok(CategoryLists {
            name: model.mode.method().to_string(),
            lists,
        })
    }
}

impl CategoryRanker for CategoryLists {
    fn name(&self) -> &str {
        &self.name
    }

    fn ranking(&self, c: CategoryId) -> Option<&[(SectionTitle, f64)]> {
        self.lists.get(&c).map(Vec::as_slice)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeModel {
    /// Indices into [`candidate_feature_names`].
    pub selected: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub max_size: usize,
    pub lambda: f64,
    pub k_opt: usize,
    pub depth: usize,
    pub seed: u64,
    /// Holdout precision@k_opt of the selected features.
    pub validation_score: f64,
    /// Holdout precision@k_opt of the unweighted sum.
    pub baseline_score: f64,
}

impl MergeModel {
    /// Unit weight on the section score alone: merging reduces to the
    /// unweighted sum.
    pub fn identity(max_size: usize) -> Self {
        MergeModel {
            selected: vec![0],
            coefficients: vec![1.0],
            max_size,
            lambda: 0.0,
            k_opt: 0,
            depth: 0,
            seed: 0,
            validation_score: 0.0,
            baseline_score: 0.0,
        }
    }

    fn predict(&self, x: &[f64; CANDIDATE_FEATURES]) -> f64 {
        self.selected.iter().zip(&self.coefficients).map(|(&j, c)| c * x[j]).sum()
    }

    /// Effective multiplier on a section score coming from `meta`, ignoring
    /// the rank term.
    pub fn category_weight(&self, meta: &CategoryMeta) -> f64 {
        let f = featurize(meta, self.max_size);
        self.selected
            .iter()
            .zip(&self.coefficients)
            .filter(|(&j, _)| j < FEATURE_COUNT)
            .map(|(&j, c)| c * f.0[j])
            .sum()
    }

    /// `feature_name<TAB>coefficient` lines for the selected features.
    pub fn write(&self, path: &Path, header: &Header) -> Result<()> {
        let names = candidate_feature_names();
        let header = header
            .clone()
            .with("max_size", self.max_size)
            .with("lambda", self.lambda)
            .with("k_opt", self.k_opt)
            .with("depth", self.depth)
            .with("seed", self.seed)
            .with("validation_score", self.validation_score)
            .with("baseline_score", self.baseline_score);
        persist::write_file(path, |w| {
            header.write_to(w)?;
            for (&j, c) in self.selected.iter().zip(&self.coefficients) {
                writeln!(w, "{}\t{c}", names[j])?;
            }
            Ok(())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = persist::read_text(path)?;
        let names = candidate_feature_names();
        let mut selected = Vec::new();
        let mut coefficients = Vec::new();
        for (line, raw) in &text.lines {
            let bad = || text.parse_error(*line, "expected `feature_name<TAB>coefficient`");
            let f = persist::split_fields(raw, 2).ok_or_else(bad)?;
            let j = names
                .iter()
                .position(|n| n == f[0])
                .ok_or_else(|| text.parse_error(*line, format!("unknown feature {:?}", f[0])))?;
            selected.push(j);
            coefficients.push(f[1].parse::<f64>().map_err(|_| bad())?);
        }
        Ok(MergeModel {
            selected,
            coefficients,
            max_size: text.require_parsed("max_size")?,
            lambda: text.require_parsed("lambda")?,
            k_opt: text.require_parsed("k_opt")?,
            depth: text.require_parsed("depth")?,
            seed: text.require_parsed("seed")?,
            validation_score: text.require_parsed("validation_score")?,
            baseline_score: text.require_parsed("baseline_score")?,
        })
    }
}

/// Sums model predictions per section over the given categories (taken in
/// ascending id order) and keeps the top `k`. Candidates carry their 1-based
/// rank within their category.
pub fn merge_rankings(
    per_category: &[(CategoryMeta, &[(SectionTitle, f64)])],
    model: &MergeModel,
    method: &str,
    exclude: &BTreeSet<&SectionTitle>,
    k: usize,
) -> Ranking {
    let mut ordered: Vec<&(CategoryMeta, &[(SectionTitle, f64)])> = per_category.iter().collect();
    ordered.sort_by_key(|(m, _)| m.category);
    let mut merged: BTreeMap<SectionTitle, f64> = BTreeMap::new();
    for (meta, list) in ordered {
        let f = featurize(meta, model.max_size);
        for (rank, (title, score)) in list.iter().enumerate() {
            let x = candidate_features(&f, *score, rank + 1);
            *merged.entry(title.clone()).or_default() += model.predict(&x);
        }
    }
    Ranking::from_scores(method, merged, exclude, k)
}

/// Merged recommendation for an article from its resolved `categories`.
#[allow(clippy::too_many_arguments)]
pub fn recommend_merged(
    source: &dyn CategoryRanker,
    metas: &BTreeMap<CategoryId, CategoryMeta>,
    model: &MergeModel,
    categories: &[CategoryId],
    article: &Article,
    k: usize,
    exclude_existing: bool,
) -> Ranking {
    let method = format!("{}+l2r", source.name());
    let inputs: Vec<(CategoryMeta, &[(SectionTitle, f64)])> = categories
        .iter()
        .filter_map(|c| Some((*metas.get(c)?, source.ranking(*c)?)))
        .collect();
    if categories.is_empty() {
        return Ranking::empty(method).with_flag(RankingFlag::NoSurvivingCategory);
    }
    let existing = if exclude_existing {
        article.distinct_sections()
    } else {
        BTreeSet::new()
    };
    merge_rankings(&inputs, model, &method, &existing, k)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    /// Cutoff of the precision that feature selection maximizes.
    pub k_opt: usize,
    /// Candidates taken from the top of each category's ranking.
    pub depth: usize,
    /// Share of validation articles used for fitting during selection.
    pub fit_fraction: f64,
    pub lambdas: Vec<f64>,
    pub max_features: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            k_opt: 10,
            depth: 100,
            fit_fraction: 0.7,
            lambdas: vec![1e-4, 1e-2, 1.0],
            max_features: 6,
            seed: 0,
        }
    }
}

/// Candidates of one article.
struct Group {
    rows: Vec<([f64; CANDIDATE_FEATURES], usize)>,
    labels: Vec<f64>,
    titles: Vec<SectionTitle>,
}

impl Group {
    /// Precision@k of the ranking obtained by summing per-candidate `score`.
    fn precision(&self, k: usize, score: impl Fn(&[f64; CANDIDATE_FEATURES]) -> f64) -> f64 {
        let mut merged: BTreeMap<usize, (f64, bool)> = BTreeMap::new();
        for ((x, title), &y) in self.rows.iter().zip(&self.labels) {
            let e = merged.entry(*title).or_insert((0.0, y > 0.5));
            e.0 += score(x);
        }
        let mut entries: Vec<(SectionTitle, f64)> = merged
            .iter()
            .map(|(&t, &(s, _))| (self.titles[t].clone(), s))
            .collect();
        crate::ranking::top_k(&mut entries, k);
        let hits = entries
            .iter()
            .filter(|(t, _)| {
                let idx = self.titles.binary_search(t).expect("title is a candidate");
                merged[&idx].1
            })
            .count();
        hits as f64 / k as f64
    }
}

fn build_group(
    article: &Article,
    categories: &[CategoryId],
    source: &dyn CategoryRanker,
    metas: &BTreeMap<CategoryId, CategoryMeta>,
    max_size: usize,
    depth: usize,
) -> Option<Group> {
    let truth = article.distinct_sections();
    let mut raw = Vec::new();
    for c in categories {
        let (Some(meta), Some(list)) = (metas.get(c), source.ranking(*c)) else {
            continue;
        };
        let f = featurize(meta, max_size);
        for (rank, (title, score)) in list.iter().take(depth).enumerate() {
            raw.push((candidate_features(&f, *score, rank + 1), title, truth.contains(title)));
        }
    }
    if raw.is_empty() {
        return None;
    }
    let titles: Vec<SectionTitle> = raw
        .iter()
        .map(|(_, t, _)| (*t).clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let rows = raw
        .iter()
        .map(|(x, t, _)| (*x, titles.binary_search(t).expect("collected above")))
        .collect();
    let labels = raw.iter().map(|(_, _, y)| if *y { 1.0 } else { 0.0 }).collect();
    Some(Group { rows, labels, titles })
}

fn fit_ridge(groups: &[&Group], selected: &[usize], lambda: f64) -> Option<Vec<f64>> {
    let d = selected.len();
    let mut a = DMatrix::<f64>::identity(d, d) * lambda;
    let mut b = DVector::<f64>::zeros(d);
    for g in groups {
        for ((x, _), &y) in g.rows.iter().zip(&g.labels) {
            let v = DVector::from_iterator(d, selected.iter().map(|&j| x[j]));
            a.ger(1.0, &v, &v, 1.0);
            b.axpy(y, &v, 1.0);
        }
    }
    let solution = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => a.lu().solve(&b)?,
    };
    let coefficients: Vec<f64> = solution.iter().copied().collect();
    coefficients.iter().all(|c| c.is_finite()).then_some(coefficients)
}

fn mean_precision(groups: &[&Group], k: usize, selected: &[usize], coefficients: &[f64]) -> f64 {
    if groups.is_empty() {
        return 0.0;
    }
    let total: f64 = groups
        .iter()
        .map(|g| g.precision(k, |x| selected.iter().zip(coefficients).map(|(&j, c)| c * x[j]).sum()))
        .sum();
    total / groups.len() as f64
}

/// Greedy forward selection over candidate features, starting from the section
/// score alone and accepting a feature only when it strictly improves holdout
/// precision@k_opt; the chosen features are then refit on all validation
/// articles. When the refit model does worse than the unweighted sum on the
/// validation set, the unweighted sum is kept.
pub fn train_merge_model<'a>(
    validation: impl IntoIterator<Item = &'a Article>,
    resolve: impl Fn(&Article) -> Vec<CategoryId>,
    source: &dyn CategoryRanker,
    metas: &BTreeMap<CategoryId, CategoryMeta>,
    params: &TrainParams,
) -> Result<MergeModel> {
    if params.k_opt == 0 || params.depth == 0 || params.lambdas.is_empty() {
        return Err(Error::InvalidParameter("k_opt, depth and lambdas must be non-empty".into()));
    }
    if !(params.fit_fraction > 0.0 && params.fit_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fit fraction {} must lie strictly between 0 and 1",
            params.fit_fraction
        )));
    }
    let max_size = metas.values().map(|m| m.size).max().unwrap_or(0);
    let groups: Vec<Group> = validation
        .into_iter()
        .filter(|a| a.has_sections())
        .filter_map(|a| build_group(a, &resolve(a), source, metas, max_size, params.depth))
        .collect();
    if groups.len() < MIN_VALIDATION_ARTICLES {
        return Err(Error::ValidationTooSmall {
            got: groups.len(),
            need: MIN_VALIDATION_ARTICLES,
        });
    }

    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));
    let n_fit = ((groups.len() as f64 * params.fit_fraction).round() as usize).clamp(1, groups.len() - 1);
    let fit: Vec<&Group> = order[..n_fit].iter().map(|&i| &groups[i]).collect();
    let holdout: Vec<&Group> = order[n_fit..].iter().map(|&i| &groups[i]).collect();
    let all: Vec<&Group> = groups.iter().collect();
    let k = params.k_opt;

    let baseline_score = mean_precision(&holdout, k, &[0], &[1.0]);
    let mut selected = vec![0usize];
    let mut best_lambda = params.lambdas[0];
    let mut best_score = baseline_score;
    for &lambda in &params.lambdas {
        if let Some(c) = fit_ridge(&fit, &selected, lambda) {
            let score = mean_precision(&holdout, k, &selected, &c);
            if score > best_score {
                best_score = score;
                best_lambda = lambda;
            }
        }
    }
    while selected.len() < params.max_features {
        let mut round_best: Option<(f64, usize, f64)> = None;
        for j in (0..CANDIDATE_FEATURES).filter(|j| !selected.contains(j)) {
            let mut trial = selected.clone();
            trial.push(j);
            for &lambda in &params.lambdas {
                let Some(c) = fit_ridge(&fit, &trial, lambda) else {
                    continue;
                };
                let score = mean_precision(&holdout, k, &trial, &c);
                if round_best.is_none_or(|(s, _, _)| score > s) {
                    round_best = Some((score, j, lambda));
                }
            }
        }
        match round_best {
            Some((score, j, lambda)) if score > best_score => {
                log::debug!("l2r: added {} (holdout precision {score})", candidate_feature_names()[j]);
                selected.push(j);
                best_score = score;
                best_lambda = lambda;
            }
            _ => break,
        }
    }

    let mut model = MergeModel {
        selected: selected.clone(),
        coefficients: vec![1.0],
        max_size,
        lambda: best_lambda,
        k_opt: k,
        depth: params.depth,
        seed: params.seed,
        validation_score: best_score,
        baseline_score,
    };
    if selected.len() > 1 {
        if let Some(c) = fit_ridge(&all, &selected, best_lambda) {
            let refit = mean_precision(&all, k, &selected, &c);
            let unweighted = mean_precision(&all, k, &[0], &[1.0]);
            if refit >= unweighted {
                model.coefficients = c;
            } else {
                log::info!("l2r: refit model ({refit}) below unweighted sum ({unweighted}); keeping the sum");
                model.selected = vec![0];
            }
        } else {
            model.selected = vec![0];
        }
    }
    let check = direction_check(&model, metas);
    if !(check.size_non_increasing && check.gini_non_decreasing) {
        log::warn!("l2r: learned category weights do not follow the expected direction: {check:?}");
    }
    Ok(model)
}

/// Whether the learned category weight decreases with size and increases with
/// purity, probed on a grid around the observed categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DirectionCheck {
    pub size_non_increasing: bool,
    pub gini_non_decreasing: bool,
}

pub fn direction_check(model: &MergeModel, metas: &BTreeMap<CategoryId, CategoryMeta>) -> DirectionCheck {
    let max_size = model.max_size.max(1);
    let ginis: Vec<f64> = if metas.is_empty() {
        vec![0.97, 0.98]
    } else {
        let lo = metas.values().map(|m| m.gini).fold(f64::INFINITY, f64::min);
        let hi = metas.values().map(|m| m.gini).fold(f64::NEG_INFINITY, f64::max);
        (0..=10).map(|i| lo + (hi - lo) * i as f64 / 10.0).collect()
    };
    let sizes: Vec<usize> = (0..=10).map(|i| 1 + (max_size - 1) * i / 10).collect();
    let weight = |size: usize, gini: f64| {
        model.category_weight(&CategoryMeta {
            category: CategoryId(0),
            size,
            gini,
        })
    };
    let tol = 1e-12;
    let size_non_increasing = ginis
        .iter()
        .all(|&g| sizes.windows(2).all(|w| weight(w[1], g) <= weight(w[0], g) + tol));
    let gini_non_decreasing = sizes
        .iter()
        .all(|&s| ginis.windows(2).all(|w| weight(s, w[1]) + tol >= weight(s, w[0])));
    DirectionCheck {
        size_non_increasing,
        gini_non_decreasing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::{article, title};
    use crate::counts::{self, CategoryScores};
    use crate::ranking::rank_order;
    use proptest::prelude::*;

    fn meta(c: u64, size: usize, gini: f64) -> CategoryMeta {
        CategoryMeta {
            category: CategoryId(c),
            size,
            gini,
        }
    }

    #[test]
    fn feature_layout() {
        assert_eq!(monomials().len(), 15);
        assert_eq!(feature_names().len(), FEATURE_COUNT);
        assert_eq!(&feature_names()[..6], &["1", "s^1", "g^1", "s^2", "s^1*g^1", "g^2"]);
        assert_eq!(candidate_feature_names().len(), CANDIDATE_FEATURES);
    }

    #[test]
    fn zero_case_features() {
        let f = featurize(&meta(1, 0, 0.0), 100).0;
        assert_eq!(f.len(), 17);
        assert_eq!(f[0], 1.0);
        assert!(f[1..15].iter().all(|&x| x == 0.0));
        assert_eq!(f[15], 0.0);
        assert_eq!(f[16], 1.0);
    }

    #[test]
    fn unit_case_features() {
        let f = featurize(&meta(1, 50, 1.0), 50).0;
        assert!(f[..15].iter().all(|&x| x == 1.0));
        assert_eq!(f[16], 1.0f64.exp());
        // oversized inputs are clamped
        assert_eq!(featurize(&meta(1, 500, 3.0), 50).0[..15], f[..15]);
    }

    fn table(rows: &[(u64, &[(&str, f64)])]) -> ScoreTable {
        ScoreTable {
            categories: rows
                .iter()
                .map(|(id, secs)| {
                    let mut sections: Vec<(SectionTitle, f64)> = secs.iter().map(|(s, p)| (title(s), *p)).collect();
                    sections.sort_by(rank_order);
                    (CategoryId(*id), CategoryScores { members: 3, sections })
                })
                .collect(),
        }
    }

    #[test]
    fn identity_model_equals_unweighted_sum() {
        let t = table(&[
            (1, &[("A", 0.3), ("B", 0.7), ("C", 0.1)]),
            (2, &[("A", 0.45), ("D", 0.9)]),
            (3, &[("B", 0.05)]),
        ]);
        let metas: BTreeMap<CategoryId, CategoryMeta> =
            [(CategoryId(1), meta(1, 10, 0.97)), (CategoryId(2), meta(2, 3, 0.98)), (CategoryId(3), meta(3, 7, 0.99))].into();
        let target = article(9, &["C"], &[1, 2, 3]);
        let cats = [CategoryId(1), CategoryId(2), CategoryId(3)];
        for exclude in [false, true] {
            let merged = recommend_merged(&t, &metas, &MergeModel::identity(10), &cats, &target, 10, exclude);
            let plain = counts::recommend_for_article(&t, &cats, &target, 10, exclude);
            assert_eq!(merged.entries, plain.entries);
        }
    }

    #[test]
    fn disjoint_categories_interleave_by_score() {
        let a: Vec<(SectionTitle, f64)> = vec![(title("A"), 0.9), (title("B"), 0.3)];
        let b: Vec<(SectionTitle, f64)> = vec![(title("C"), 0.6), (title("D"), 0.1)];
        let inputs = [(meta(1, 5, 0.97), a.as_slice()), (meta(2, 5, 0.97), b.as_slice())];
        let r = merge_rankings(&inputs, &MergeModel::identity(5), "m", &BTreeSet::new(), 10);
        assert_eq!(r.titles().map(|t| t.as_str()).collect::<Vec<_>>(), vec!["A", "C", "B", "D"]);
        assert!(merge_rankings(&[], &MergeModel::identity(5), "m", &BTreeSet::new(), 10).is_empty());
    }

    #[test]
    fn missing_categories_are_flagged() {
        let t = table(&[]);
        let r = recommend_merged(&t, &BTreeMap::new(), &MergeModel::identity(1), &[], &article(1, &[], &[]), 5, true);
        assert_eq!(r.flag, Some(RankingFlag::NoSurvivingCategory));
    }

    #[test]
    fn small_validation_set_is_refused() {
        let t = table(&[(1, &[("A", 1.0)])]);
        let metas = BTreeMap::from([(CategoryId(1), meta(1, 3, 0.98))]);
        let arts: Vec<Article> = (0..10).map(|i| article(i, &["A"], &[1])).collect();
        let err = train_merge_model(&arts, |a| a.categories.iter().copied().collect(), &t, &metas, &TrainParams::default());
        assert!(matches!(err, Err(Error::ValidationTooSmall { got: 10, need: 50 })));
    }

    #[test]
    fn all_positive_candidates_keep_the_unweighted_sum() {
        let t = table(&[(1, &[("A", 1.0), ("B", 0.5)]), (2, &[("A", 0.8), ("C", 0.4)])]);
        let metas = BTreeMap::from([(CategoryId(1), meta(1, 30, 0.97)), (CategoryId(2), meta(2, 5, 0.99))]);
        let arts: Vec<Article> = (0..60).map(|i| article(i, &["A", "B", "C"], &[1, 2])).collect();
        let model = train_merge_model(&arts, |a| a.categories.iter().copied().collect(), &t, &metas, &TrainParams::default()).unwrap();
        assert_eq!(model.selected, vec![0]);
        assert_eq!(model.coefficients, vec![1.0]);
    }

    /// Category 1 is large and mixed, categories 2 and 3 are small and pure;
    /// the small categories' top sections are the true ones.
    fn planted() -> (ScoreTable, BTreeMap<CategoryId, CategoryMeta>, Vec<Article>) {
        let t = table(&[
            (1, &[("Noise1", 0.9), ("Noise2", 0.85), ("Noise3", 0.8), ("Shared", 0.2)]),
            (2, &[("Good2a", 0.5), ("Good2b", 0.45), ("Shared", 0.3)]),
            (3, &[("Good3a", 0.5), ("Good3b", 0.45), ("Shared", 0.3)]),
        ]);
        let metas = BTreeMap::from([
            (CategoryId(1), meta(1, 1000, 0.970)),
            (CategoryId(2), meta(2, 20, 0.995)),
            (CategoryId(3), meta(3, 25, 0.990)),
        ]);
        let arts: Vec<Article> = (0..120)
            .map(|i| {
                if i % 2 == 0 {
                    article(i, &["Good2a", "Good2b", "Shared"], &[1, 2])
                } else {
                    article(i, &["Good3a", "Good3b", "Shared"], &[1, 3])
                }
            })
            .collect();
        (t, metas, arts)
    }

    #[test]
    fn learned_merge_beats_sum_on_planted_signal() {
        let (t, metas, arts) = planted();
        let params = TrainParams { k_opt: 2, ..TrainParams::default() };
        let resolve = |a: &Article| a.categories.iter().copied().collect::<Vec<_>>();
        let model = train_merge_model(&arts, resolve, &t, &metas, &params).unwrap();
        assert!(model.validation_score >= model.baseline_score);
        let precision = |r: &Ranking, a: &Article| {
            let truth = a.distinct_sections();
            r.titles().filter(|t| truth.contains(t)).count() as f64 / 2.0
        };
        let (mut learned, mut plain) = (0.0, 0.0);
        for a in &arts {
            let cats = resolve(a);
            learned += precision(&recommend_merged(&t, &metas, &model, &cats, a, 2, false), a);
            plain += precision(&counts::recommend_for_article(&t, &cats, a, 2, false), a);
        }
        assert!(learned > plain, "learned {learned} vs plain {plain}");
        let check = direction_check(&model, &metas);
        assert!(check.size_non_increasing, "{model:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let (t, metas, arts) = planted();
        let params = TrainParams { k_opt: 2, seed: 4, ..TrainParams::default() };
        let resolve = |a: &Article| a.categories.iter().copied().collect::<Vec<_>>();
        let a = train_merge_model(&arts, resolve, &t, &metas, &params).unwrap();
        let b = train_merge_model(&arts, resolve, &t, &metas, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_round_trips() {
        let (t, metas, arts) = planted();
        let params = TrainParams { k_opt: 2, ..TrainParams::default() };
        let model = train_merge_model(&arts, |a| a.categories.iter().copied().collect(), &t, &metas, &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l2r.model");
        model.write(&path, &Header::new("l2r")).unwrap();
        assert_eq!(MergeModel::read(&path).unwrap(), model);
    }

    #[test]
    fn direction_check_on_hand_made_models() {
        let metas = BTreeMap::from([(CategoryId(1), meta(1, 10, 0.97)), (CategoryId(2), meta(2, 100, 0.99))]);
        let good = MergeModel {
            selected: vec![0, 1, 2],
            coefficients: vec![1.0, -0.5, 2.0],
            ..MergeModel::identity(100)
        };
        assert_eq!(
            direction_check(&good, &metas),
            DirectionCheck { size_non_increasing: true, gini_non_decreasing: true }
        );
        let bad = MergeModel {
            selected: vec![0, 1],
            coefficients: vec![1.0, 0.5],
            ..MergeModel::identity(100)
        };
        assert!(!direction_check(&bad, &metas).size_non_increasing);
    }

    proptest! {
        #[test]
        fn features_are_finite(size in 0usize..10_000_000, gini in -1.0f64..2.0, max in 0usize..10_000_000) {
            let f = featurize(&meta(1, size, gini), max);
            prop_assert!(f.0.iter().all(|x| x.is_finite()));
        }

        #[test]
        fn merge_ignores_category_order(
            lists in proptest::collection::vec(proptest::collection::btree_map("[a-d]", 0.0f64..1.0, 1..4), 1..4),
            coefs in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let lists: Vec<Vec<(SectionTitle, f64)>> = lists
                .into_iter()
                .map(|m| {
                    let mut v: Vec<(SectionTitle, f64)> = m.into_iter().map(|(t, p)| (title(&t), p)).collect();
                    v.sort_by(rank_order);
                    v
                })
                .collect();
            let inputs: Vec<(CategoryMeta, &[(SectionTitle, f64)])> = lists
                .iter()
                .enumerate()
                .map(|(i, l)| (meta(i as u64, 5 + i * 7, 0.97 + i as f64 / 100.0), l.as_slice()))
                .collect();
            let model = MergeModel { selected: vec![0, 2, 17], coefficients: coefs, ..MergeModel::identity(30) };
            let mut reversed = inputs.clone();
            reversed.reverse();
            prop_assert_eq!(
                merge_rankings(&inputs, &model, "m", &BTreeSet::new(), 5),
                merge_rankings(&reversed, &model, "m", &BTreeSet::new(), 5)
            );
        }
    }
}
