//! Matrix factorization recommenders: explicit-feedback ALS over the
//! article×section matrix and confidence-weighted implicit ALS over the
//! category×section matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{ArticleId, Corpus, SectionTitle, SplitAssignment, SplitPart};
use crate::counts::ScoreTable;
use crate::error::{Error, Result};
use crate::persist::{self, Header};
use crate::ranking::{rank_order, Ranking};

pub const ARTICLE_METHOD: &str = "cf-article";
pub const CATEGORY_METHOD: &str = "cf-category";
pub const DEFAULT_TOP_N: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixMode {
    /// Rows are articles; present sections are observed ones, absent cells unobserved.
    Explicit,
    /// Rows are categories; every cell is observed with confidence weighting.
    Implicit,
}

impl MatrixMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixMode::Explicit => "explicit",
            MatrixMode::Implicit => "implicit",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "explicit" => Some(MatrixMode::Explicit),
            "implicit" => Some(MatrixMode::Implicit),
            _ => None,
        }
    }

    pub fn method(self) -> &'static str {
        match self {
            MatrixMode::Explicit => ARTICLE_METHOD,
            MatrixMode::Implicit => CATEGORY_METHOD,
        }
    }
}

/// Sparse row-major matrix. Row labels are article or category ids in
/// ascending order; column labels are section titles in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingsMatrix {
    pub mode: MatrixMode,
    pub row_labels: Vec<u64>,
    pub col_labels: Vec<SectionTitle>,
    /// Per row, (column, value) sorted by column.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl RatingsMatrix {
    /// Builds a matrix from labelled rows; columns are the union of titles.
    pub fn from_rows(mode: MatrixMode, rows: BTreeMap<u64, BTreeMap<SectionTitle, f64>>) -> Self {
        let col_labels: Vec<SectionTitle> = rows
            .values()
            .flat_map(|r| r.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&SectionTitle, usize> =
            col_labels.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let mut row_labels = Vec::with_capacity(rows.len());
        let mut entries = Vec::with_capacity(rows.len());
        for (label, r) in &rows {
            row_labels.push(*label);
            entries.push(r.iter().map(|(t, &v)| (index[t], v)).collect());
        }
        RatingsMatrix {
            mode,
            row_labels,
            col_labels,
            rows: entries,
        }
    }

    pub fn row_count(&self) -> usize {
        self.row_labels.len()
    }

    pub fn col_count(&self) -> usize {
        self.col_labels.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row_index(&self, label: u64) -> Option<usize> {
        self.row_labels.binary_search(&label).ok()
    }

    fn transpose(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.col_count()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                cols[j].push((i, v));
            }
        }
        cols
    }
}

/// Sections removed from test rows of the article matrix.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Holdout {
    pub held_out: BTreeMap<ArticleId, BTreeSet<SectionTitle>>,
}

impl Holdout {
    pub fn write(&self, path: &Path, header: &Header) -> Result<()> {
        persist::write_file(path, |w| {
            header.write_to(w)?;
            for (a, secs) in &self.held_out {
                for s in secs {
                    writeln!(w, "{a}\t{s}")?;
                }
            }
            Ok(())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = persist::read_text(path)?;
        let mut held_out: BTreeMap<ArticleId, BTreeSet<SectionTitle>> = BTreeMap::new();
        for (line, raw) in &text.lines {
            let bad = || text.parse_error(*line, "expected `article_id<TAB>section`");
            let f = persist::split_fields(raw, 2).ok_or_else(bad)?;
            let a = ArticleId(f[0].parse().map_err(|_| bad())?);
            held_out
                .entry(a)
                .or_default()
                .insert(SectionTitle::new(f[1]).map_err(|_| bad())?);
        }
        Ok(Holdout { held_out })
    }
}

/// Number of sections held out of a row with `n` distinct sections.
pub fn held_out_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).floor() as usize).clamp(1, n - 1)
}

/// Article×section binary matrix. Training and validation articles keep all
/// sections; test articles with at least `min_sections` distinct sections keep
/// a seeded random subset of `n − held_out_count(n, fraction)`; other test
/// articles and articles without sections are left out.
pub fn build_article_matrix(
    corpus: &Corpus,
    split: &SplitAssignment,
    holdout_fraction: f64,
    min_sections: usize,
    seed: u64,
) -> Result<(RatingsMatrix, Holdout)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "holdout fraction {holdout_fraction} must lie strictly between 0 and 1"
        )));
    }
    let min_sections = min_sections.max(2);
    let mut rows = BTreeMap::new();
    let mut holdout = Holdout::default();
    for article in &corpus.articles {
        let sections: Vec<SectionTitle> = article.distinct_sections().into_iter().cloned().collect();
        if sections.is_empty() {
            continue;
        }
        let kept = match split.part_of(article.id) {
            Some(SplitPart::Test) => {
                if sections.len() < min_sections {
                    continue;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ article.id.0.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut shuffled = sections;
                shuffled.shuffle(&mut rng);
                let held = held_out_count(shuffled.len(), holdout_fraction);
                let kept = shuffled.split_off(held);
                holdout.held_out.insert(article.id, shuffled.into_iter().collect());
                kept
            }
            Some(_) => sections,
            None => continue,
        };
        rows.insert(article.id.0, kept.into_iter().map(|s| (s, 1.0)).collect());
    }
    Ok((RatingsMatrix::from_rows(MatrixMode::Explicit, rows), holdout))
}

/// Category×section matrix: the `top_n` sections of each category by
/// P(S|C), rows normalized to sum to one.
pub fn build_category_matrix(table: &ScoreTable, top_n: usize) -> RatingsMatrix {
    let rows = table
        .categories
        .iter()
        .filter(|(_, s)| !s.sections.is_empty() && top_n > 0)
        .map(|(c, s)| {
            let top = &s.sections[..s.sections.len().min(top_n)];
            let total: f64 = top.iter().map(|(_, p)| p).sum();
            (c.0, top.iter().map(|(t, p)| (t.clone(), p / total)).collect())
        })
        .collect();
    RatingsMatrix::from_rows(MatrixMode::Implicit, rows)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlsParams {
    pub k: usize,
    pub lambda: f64,
    /// Confidence weight; implicit mode only.
    pub alpha: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for AlsParams {
    fn default() -> Self {
        AlsParams {
            k: 32,
            lambda: 0.1,
            alpha: 40.0,
            iters: 15,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorModel {
    pub mode: MatrixMode,
    pub row_labels: Vec<u64>,
    pub col_labels: Vec<SectionTitle>,
    pub k: usize,
    /// Row-major, rows × k.
    pub u: Vec<f64>,
    /// Row-major, cols × k.
    pub v: Vec<f64>,
    pub params: AlsParams,
    pub loss_trace: Vec<f64>,
}

fn check_shape(matrix: &RatingsMatrix, params: &AlsParams, expected: MatrixMode) -> Result<()> {
    if matrix.mode != expected {
        return Err(Error::WrongMatrixMode {
            expected: expected.as_str(),
            found: matrix.mode.as_str(),
        });
    }
    let (rows, cols) = (matrix.row_count(), matrix.col_count());
    if params.k == 0 || params.k > rows.min(cols) {
        return Err(Error::RankTooLarge {
            k: params.k,
            rows,
            cols,
        });
    }
    if params.lambda < 0.0 || !params.lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda {} must be non-negative", params.lambda)));
    }
    Ok(())
}

fn random_factors(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = 1.0 / (k as f64).sqrt();
    (0..n * k).map(|_| rng.random::<f64>() * scale).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `a x = b` for symmetric positive definite `a`; NaNs on failure.
fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Vec<f64> {
    let k = b.len();
    match a.cholesky() {
        Some(ch) => ch.solve(&b).iter().copied().collect(),
        None => vec![f64::NAN; k],
    }
}

/// One exact ridge half-step over observed entries: each row of `out`
/// minimizes Σ_obs (m − x·f)² + λ‖x‖² given fixed factors `fixed`.
fn explicit_half_step(lines: &[Vec<(usize, f64)>], fixed: &[f64], k: usize, lambda: f64) -> Vec<f64> {
    lines
        .par_iter()
        .map(|line| {
            if line.is_empty() {
                return vec![0.0; k];
            }
            let mut a = DMatrix::<f64>::identity(k, k) * lambda;
            let mut b = DVector::<f64>::zeros(k);
            for &(j, m) in line {
                let f = DVector::from_column_slice(&fixed[j * k..(j + 1) * k]);
                a.ger(1.0, &f, &f, 1.0);
                b.axpy(m, &f, 1.0);
            }
            solve_spd(a, b)
        })
        .collect::<Vec<_>>()
        .concat()
}

fn gram(factors: &[f64], k: usize) -> DMatrix<f64> {
    let mut g = DMatrix::<f64>::zeros(k, k);
    for f in factors.chunks_exact(k) {
        let f = DVector::from_column_slice(f);
        g.ger(1.0, &f, &f, 1.0);
    }
    g
}

/// Confidence-weighted half-step: each row solves
/// (FᵀF + Fᵀ(Cᵢ − I)F + λI) x = Fᵀ Cᵢ pᵢ.
fn implicit_half_step(lines: &[Vec<(usize, f64)>], fixed: &[f64], k: usize, lambda: f64, alpha: f64) -> Vec<f64> {
    let base = gram(fixed, k) + DMatrix::<f64>::identity(k, k) * lambda;
    lines
        .par_iter()
        .map(|line| {
            let mut a = base.clone();
            let mut b = DVector::<f64>::zeros(k);
            for &(j, r) in line {
                if r <= 0.0 {
                    continue;
                }
                let c = 1.0 + alpha * r;
                let f = DVector::from_column_slice(&fixed[j * k..(j + 1) * k]);
                a.ger(c - 1.0, &f, &f, 1.0);
                b.axpy(c, &f, 1.0);
            }
            solve_spd(a, b)
        })
        .collect::<Vec<_>>()
        .concat()
}

fn squared_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn explicit_loss(matrix: &RatingsMatrix, u: &[f64], v: &[f64], k: usize, lambda: f64) -> f64 {
    let fit: f64 = matrix
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .map(|&(j, m)| {
                    let e = m - dot(&u[i * k..(i + 1) * k], &v[j * k..(j + 1) * k]);
                    e * e
                })
                .sum::<f64>()
        })
        .sum();
    fit + lambda * (squared_norm(u) + squared_norm(v))
}

/// Σ_all cᵢⱼ (pᵢⱼ − uᵢ·vⱼ)² + λ(‖U‖² + ‖V‖²), using
/// Σ_all (uᵢ·vⱼ)² = Σᵢ uᵢᵀ (VᵀV) uᵢ for the unit-confidence part.
fn implicit_loss(matrix: &RatingsMatrix, u: &[f64], v: &[f64], k: usize, lambda: f64, alpha: f64) -> f64 {
    let g = gram(v, k);
    let mut loss = 0.0;
    for (i, row) in matrix.rows.iter().enumerate() {
        let ui = DVector::from_column_slice(&u[i * k..(i + 1) * k]);
        loss += ui.dot(&(&g * &ui));
        for &(j, r) in row {
            if r <= 0.0 {
                continue;
            }
            let x = dot(&u[i * k..(i + 1) * k], &v[j * k..(j + 1) * k]);
            let c = 1.0 + alpha * r;
            loss += c * (1.0 - x) * (1.0 - x) - x * x;
        }
    }
    loss + lambda * (squared_norm(u) + squared_norm(v))
}

fn record_loss(trace: &mut Vec<f64>, loss: f64) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: trace.len() });
    }
    trace.push(loss);
    Ok(())
}

/// Alternating least squares over observed entries only.
pub fn als_explicit(matrix: &RatingsMatrix, params: &AlsParams) -> Result<FactorModel> {
    check_shape(matrix, params, MatrixMode::Explicit)?;
    let k = params.k;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut v = random_factors(matrix.col_count(), k, &mut rng);
    let mut u = vec![0.0; matrix.row_count() * k];
    let columns = matrix.transpose();
    let mut loss_trace = Vec::with_capacity(params.iters);
    for _ in 0..params.iters {
        u = explicit_half_step(&matrix.rows, &v, k, params.lambda);
        v = explicit_half_step(&columns, &u, k, params.lambda);
        record_loss(&mut loss_trace, explicit_loss(matrix, &u, &v, k, params.lambda))?;
    }
    Ok(FactorModel {
        mode: MatrixMode::Explicit,
        row_labels: matrix.row_labels.clone(),
        col_labels: matrix.col_labels.clone(),
        k,
        u,
        v,
        params: *params,
        loss_trace,
    })
}

/// Confidence-weighted ALS: preference 1 where the rating is positive,
/// confidence 1 + α·rating, every cell observed.
pub fn als_implicit(matrix: &RatingsMatrix, params: &AlsParams) -> Result<FactorModel> {
    check_shape(matrix, params, MatrixMode::Implicit)?;
    if params.alpha < 0.0 || !params.alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha {} must be non-negative", params.alpha)));
    }
    let k = params.k;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut v = random_factors(matrix.col_count(), k, &mut rng);
    let mut u = vec![0.0; matrix.row_count() * k];
    let columns = matrix.transpose();
    let mut loss_trace = Vec::with_capacity(params.iters);
    for _ in 0..params.iters {
        u = implicit_half_step(&matrix.rows, &v, k, params.lambda, params.alpha);
        v = implicit_half_step(&columns, &u, k, params.lambda, params.alpha);
        record_loss(
            &mut loss_trace,
            implicit_loss(matrix, &u, &v, k, params.lambda, params.alpha),
        )?;
    }
    Ok(FactorModel {
        mode: MatrixMode::Implicit,
        row_labels: matrix.row_labels.clone(),
        col_labels: matrix.col_labels.clone(),
        k,
        u,
        v,
        params: *params,
        loss_trace,
    })
}

impl FactorModel {
    pub fn row_index(&self, label: u64) -> Option<usize> {
        self.row_labels.binary_search(&label).ok()
    }

    pub fn row_factors(&self, i: usize) -> &[f64] {
        &self.u[i * self.k..(i + 1) * self.k]
    }

    pub fn col_factors(&self, j: usize) -> &[f64] {
        &self.v[j * self.k..(j + 1) * self.k]
    }

    pub fn predict(&self, i: usize, j: usize) -> f64 {
        dot(self.row_factors(i), self.col_factors(j))
    }

    /// Predicted scores for every column of row `label`, best first.
    pub fn row_scores(&self, label: u64) -> Result<Vec<(SectionTitle, f64)>> {
        let i = self.row_index(label).ok_or_else(|| Error::UnknownRow(label.to_string()))?;
        let mut scores: Vec<(SectionTitle, f64)> = self
            .col_labels
            .iter()
            .enumerate()
            .map(|(j, t)| (t.clone(), self.predict(i, j)))
            .collect();
        scores.sort_by(rank_order);
        Ok(scores)
    }

    pub fn rmse(&self, matrix: &RatingsMatrix) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, row) in matrix.rows.iter().enumerate() {
            for &(j, m) in row {
                let e = m - self.predict(i, j);
                sum += e * e;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    }

    /// Writes `meta.txt`, `row_factors.tsv` and `col_factors.tsv` into `dir`.
    pub fn write(&self, dir: &Path, header: &Header) -> Result<()> {
        let trace: Vec<String> = self.loss_trace.iter().map(f64::to_string).collect();
        let meta = header
            .clone()
            .with("mode", self.mode.as_str())
            .with("k", self.k)
            .with("lambda", self.params.lambda)
            .with("alpha", self.params.alpha)
            .with("iters", self.params.iters)
            .with("seed", self.params.seed)
            .with("loss_trace", trace.join(","));
        persist::write_file(&dir.join("meta.txt"), |w| meta.write_to(w))?;
        let write_table = |name: &str, labels: Vec<String>, values: &[f64]| {
            persist::write_file(&dir.join(name), |w| {
                header.write_to(w)?;
                for (label, row) in labels.iter().zip(values.chunks_exact(self.k)) {
                    write!(w, "{label}")?;
                    for x in row {
                        write!(w, "\t{x}")?;
                    }
                    writeln!(w)?;
                }
                Ok(())
            })
        };
        write_table(
            "row_factors.tsv",
            self.row_labels.iter().map(u64::to_string).collect(),
            &self.u,
        )?;
        write_table(
            "col_factors.tsv",
            self.col_labels.iter().map(|t| t.to_string()).collect(),
            &self.v,
        )
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta = persist::read_text(&dir.join("meta.txt"))?;
        let mode_raw = meta.require("mode")?;
        let mode = MatrixMode::parse(mode_raw)
            .ok_or_else(|| meta.parse_error(0, format!("unknown mode {mode_raw:?}")))?;
        let k: usize = meta.require_parsed("k")?;
        let params = AlsParams {
            k,
            lambda: meta.require_parsed("lambda")?,
            alpha: meta.require_parsed("alpha")?,
            iters: meta.require_parsed("iters")?,
            seed: meta.require_parsed("seed")?,
        };
        let trace_raw = meta.require("loss_trace")?;
        let loss_trace = if trace_raw.is_empty() {
            Vec::new()
        } else {
            trace_raw
                .split(',')
                .map(|x| x.parse::<f64>().map_err(|_| meta.parse_error(0, "bad loss trace")))
                .collect::<Result<Vec<_>>>()?
        };

        let read_table = |name: &str| -> Result<(Vec<String>, Vec<f64>)> {
            let text = persist::read_text(&dir.join(name))?;
            let mut labels = Vec::new();
            let mut values = Vec::new();
            for (line, raw) in &text.lines {
                let bad = || text.parse_error(*line, format!("expected a label and {k} factors"));
                let f = persist::split_fields(raw, k + 1).ok_or_else(bad)?;
                labels.push(f[0].to_string());
                for x in &f[1..] {
                    values.push(x.parse::<f64>().map_err(|_| bad())?);
                }
            }
            Ok((labels, values))
        };
        let (rows, u) = read_table("row_factors.tsv")?;
        let (cols, v) = read_table("col_factors.tsv")?;
        let row_labels = rows
            .iter()
            .map(|r| r.parse::<u64>().map_err(|_| Error::UnknownRow(r.clone())))
            .collect::<Result<Vec<_>>>()?;
        let col_labels = cols
            .iter()
            .map(|c| SectionTitle::new(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(FactorModel {
            mode,
            row_labels,
            col_labels,
            k,
            u,
            v,
            params,
            loss_trace,
        })
    }
}

/// Ranks row `label`'s predicted scores, dropping `exclusions`.
pub fn recommend_from_model(
    model: &FactorModel,
    label: u64,
    k: usize,
    exclusions: &BTreeSet<&SectionTitle>,
) -> Result<Ranking> {
    let scores = model.row_scores(label)?;
    let entries: Vec<(SectionTitle, f64)> = scores
        .into_iter()
        .filter(|(t, _)| !exclusions.contains(t))
        .take(k)
        .collect();
    Ok(Ranking {
        method: model.mode.method().to_string(),
        entries,
        flag: None,
    })
}
