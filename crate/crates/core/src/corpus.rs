//! Article corpus: loading, title normalization, filtering, splitting and
//! summary statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catgraph::CategoryFile;
use crate::error::{Error, Result};
use crate::persist::{self, Header};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArticleId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u64);

impl fmt::Display for ArticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A whitespace-normalized section title. Equality is exact and case-sensitive.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct SectionTitle(String);

impl SectionTitle {
    pub fn new(raw: &str) -> Result<Self> {
        normalize_title(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SectionTitle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for SectionTitle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        normalize_title(&raw).map_err(serde::de::Error::custom)
    }
}

/// Strips surrounding whitespace and collapses internal whitespace runs to a
/// single space. Case is preserved.
pub fn normalize_title(raw: &str) -> Result<SectionTitle> {
    let normalized = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if normalized.is_empty() {
        return Err(Error::InvalidTitle(raw.to_string()));
    }
    Ok(SectionTitle(normalized))
}

/// The generic, content-independent titles removed before training.
pub const DEFAULT_BLACKLIST: [&str; 14] = [
    "References",
    "External links",
    "See also",
    "Notes",
    "Further reading",
    "Bibliography",
    "Sources",
    "Footnotes",
    "Notes and references",
    "References and notes",
    "External sources",
    "Links",
    "References and sources",
    "External Links",
];

pub fn default_blacklist() -> BTreeSet<SectionTitle> {
    DEFAULT_BLACKLIST
        .iter()
        .map(|t| SectionTitle(t.to_string()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: ArticleId,
    pub title: String,
    #[serde(default)]
    pub tokens: Vec<String>,
    #[serde(default)]
    pub sections: Vec<SectionTitle>,
    #[serde(default)]
    pub categories: BTreeSet<CategoryId>,
    #[serde(default)]
    pub is_stub: bool,
    #[serde(rename = "quality", default, skip_serializing_if = "Option::is_none")]
    pub quality_class: Option<String>,
}

impl Article {
    pub fn distinct_sections(&self) -> BTreeSet<&SectionTitle> {
        self.sections.iter().collect()
    }

    pub fn has_sections(&self) -> bool {
        !self.sections.is_empty()
    }
}

/// Same shape as [`Article`] but with raw, unvalidated section strings.
#[derive(Deserialize)]
struct RawArticle {
    id: ArticleId,
    title: String,
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    sections: Vec<String>,
    #[serde(default)]
    categories: Vec<CategoryId>,
    #[serde(default)]
    is_stub: bool,
    #[serde(default)]
    quality: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    /// Sorted by ascending id.
    pub articles: Vec<Article>,
    pub blacklist: BTreeSet<SectionTitle>,
    pub provenance: String,
}

impl Corpus {
    pub fn new(mut articles: Vec<Article>, provenance: impl Into<String>) -> Result<Self> {
        articles.sort_by_key(|a| a.id);
        if let Some(w) = articles.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateArticle(w[0].id));
        }
        Ok(Corpus {
            articles,
            blacklist: BTreeSet::new(),
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn get(&self, id: ArticleId) -> Option<&Article> {
        self.articles
            .binary_search_by_key(&id, |a| a.id)
            .ok()
            .map(|i| &self.articles[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = ArticleId> + '_ {
        self.articles.iter().map(|a| a.id)
    }

    /// Articles whose ids are in `ids`, in ascending id order.
    pub fn subset<'a>(&'a self, ids: &'a BTreeSet<ArticleId>) -> impl Iterator<Item = &'a Article> {
        self.articles.iter().filter(move |a| ids.contains(&a.id))
    }

    /// Number of articles containing each title, counting an article once per title.
    pub fn title_document_frequency(&self) -> BTreeMap<&SectionTitle, usize> {
        let mut freq = BTreeMap::new();
        for article in &self.articles {
            for title in article.distinct_sections() {
                *freq.entry(title).or_insert(0) += 1;
            }
        }
        freq
    }

    /// Writes one JSON article per line after the header.
    pub fn write_jsonl(&self, path: &Path, header: &Header) -> Result<()> {
        persist::write_file(path, |w| {
            header.write_to(w)?;
            for article in &self.articles {
                serde_json::to_writer(&mut *w, article)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })
    }
}

/// Counters collected while loading; nothing here is fatal on its own.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub lines: usize,
    pub malformed_lines: usize,
    /// Memberships pointing at ids absent from the category file.
    pub dropped_categories: usize,
    /// Raw section strings that were empty after normalization.
    pub dropped_titles: usize,
    pub first_problem: Option<String>,
}

impl LoadReport {
    fn malformed(&mut self, what: String) {
        self.malformed_lines += 1;
        self.first_problem.get_or_insert(what);
    }

    fn check_budget(&self, path: &Path) -> Result<()> {
        // More than 1% malformed lines is fatal.
        if self.malformed_lines * 100 > self.lines {
            return Err(Error::TooManyMalformed {
                path: path.to_path_buf(),
                bad: self.malformed_lines,
                total: self.lines,
                first: self.first_problem.clone().unwrap_or_default(),
            });
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub categories: CategoryFile,
    pub report: LoadReport,
}

pub fn load_corpus(articles_path: &Path, categories_path: &Path) -> Result<LoadedCorpus> {
    let categories = CategoryFile::read(categories_path)?;
    let (corpus, report) = load_articles(articles_path, |c| categories.contains(c))?;
    if report.malformed_lines + report.dropped_categories > 0 {
        log::warn!(
            "{}: {} malformed lines, {} unknown category memberships dropped",
            articles_path.display(),
            report.malformed_lines,
            report.dropped_categories
        );
    }
    Ok(LoadedCorpus {
        corpus,
        categories,
        report,
    })
}

/// Loads an articles file, keeping only memberships accepted by `known_category`.
pub fn load_articles(
    path: &Path,
    known_category: impl Fn(CategoryId) -> bool,
) -> Result<(Corpus, LoadReport)> {
    let reader = persist::open_reader(path)?;
    let mut report = LoadReport::default();
    let mut articles = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        report.lines += 1;
        let raw: RawArticle = match serde_json::from_str(&line) {
            Ok(raw) => raw,
            Err(e) => {
                report.malformed(format!("line {}: {e}", idx + 1));
                continue;
            }
        };
        articles.push(convert_raw(raw, &known_category, &mut report));
    }
    report.check_budget(path)?;
    let corpus = Corpus::new(articles, format!("loaded from {}", path.display()))?;
    Ok((corpus, report))
}

fn convert_raw(
    raw: RawArticle,
    known_category: &impl Fn(CategoryId) -> bool,
    report: &mut LoadReport,
) -> Article {
    let mut sections = Vec::with_capacity(raw.sections.len());
    for s in &raw.sections {
        match normalize_title(s) {
            Ok(t) => sections.push(t),
            Err(_) => report.dropped_titles += 1,
        }
    }
    let mut categories = BTreeSet::new();
    for c in raw.categories {
        if known_category(c) {
            categories.insert(c);
        } else {
            report.dropped_categories += 1;
        }
    }
    Article {
        id: raw.id,
        title: raw.title,
        tokens: raw.tokens,
        sections,
        categories,
        is_stub: raw.is_stub,
        quality_class: raw.quality,
    }
}

pub fn read_blacklist(path: &Path) -> Result<BTreeSet<SectionTitle>> {
    let text = persist::read_text(path)?;
    Ok(text
        .lines
        .iter()
        .filter_map(|(_, l)| normalize_title(l).ok())
        .collect())
}

/// Removes stubs, then blacklisted titles, then titles held by exactly one
/// article. The result is a fixed point: filtering it again changes nothing.
pub fn filter_corpus(
    corpus: &Corpus,
    blacklist: &BTreeSet<SectionTitle>,
    drop_stubs: bool,
    drop_unique: bool,
) -> Corpus {
    let mut articles: Vec<Article> = corpus
        .articles
        .iter()
        .filter(|a| !(drop_stubs && a.is_stub))
        .cloned()
        .collect();
    for article in &mut articles {
        article.sections.retain(|s| !blacklist.contains(s));
    }
    if drop_unique {
        let mut freq: BTreeMap<SectionTitle, usize> = BTreeMap::new();
        for article in &articles {
            for title in article.distinct_sections() {
                *freq.entry(title.clone()).or_insert(0) += 1;
            }
        }
        for article in &mut articles {
            article.sections.retain(|s| freq[s] > 1);
        }
    }
    Corpus {
        articles,
        blacklist: blacklist.clone(),
        provenance: format!(
            "{}; filtered (blacklist {}, drop_stubs {drop_stubs}, drop_unique {drop_unique})",
            corpus.provenance,
            blacklist.len()
        ),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SplitPart {
    Train,
    Test,
    Validation,
}

impl SplitPart {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Test => "test",
            SplitPart::Validation => "validation",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: BTreeSet<ArticleId>,
    pub test: BTreeSet<ArticleId>,
    pub validation: BTreeSet<ArticleId>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn part_of(&self, id: ArticleId) -> Option<SplitPart> {
        if self.train.contains(&id) {
            Some(SplitPart::Train)
        } else if self.test.contains(&id) {
            Some(SplitPart::Test)
        } else if self.validation.contains(&id) {
            Some(SplitPart::Validation)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len() + self.validation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write(&self, path: &Path, header: &Header) -> Result<()> {
        let mut rows: Vec<(ArticleId, SplitPart)> = Vec::with_capacity(self.len());
        for (ids, part) in [
            (&self.train, SplitPart::Train),
            (&self.test, SplitPart::Test),
            (&self.validation, SplitPart::Validation),
        ] {
            rows.extend(ids.iter().map(|&id| (id, part)));
        }
        rows.sort();
        let header = header.clone().with("seed", self.seed);
        persist::write_file(path, |w| {
            header.write_to(w)?;
            for (id, part) in rows {
                writeln!(w, "{id}\t{}", part.as_str())?;
            }
            Ok(())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = persist::read_text(path)?;
        let mut split = SplitAssignment {
            seed: text.require_parsed("seed")?,
            ..Default::default()
        };
        for (line, raw) in &text.lines {
            let bad = || text.parse_error(*line, format!("expected `article_id<TAB>part`, got {raw:?}"));
            let fields = persist::split_fields(raw, 2).ok_or_else(bad)?;
            let id = ArticleId(fields[0].parse().map_err(|_| bad())?);
            let set = match fields[1] {
                "train" => &mut split.train,
                "test" => &mut split.test,
                "validation" => &mut split.validation,
                _ => return Err(bad()),
            };
            set.insert(id);
        }
        Ok(split)
    }
}

pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.80, 0.15, 0.05];

/// Seeded shuffle of the corpus ids into train/test/validation parts.
pub fn split_corpus(corpus: &Corpus, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::InvalidRatios(ratios));
    }
    let mut ids: Vec<ArticleId> = corpus.ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n = ids.len();
    let n_train = ((n as f64) * ratios[0]).round() as usize;
    let n_test = (((n as f64) * ratios[1]).round() as usize).min(n - n_train);
    Ok(SplitAssignment {
        train: ids[..n_train].iter().copied().collect(),
        test: ids[n_train..n_train + n_test].iter().copied().collect(),
        validation: ids[n_train + n_test..].iter().copied().collect(),
        seed,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusStats {
    pub article_count: usize,
    /// Number of sections -> number of articles with that many sections.
    pub sections_per_article_histogram: BTreeMap<usize, usize>,
    pub mean_sections: f64,
    pub stub_fraction: f64,
    pub unique_title_count: usize,
}

impl CorpusStats {
    pub fn write(&self, path: &Path, header: &Header) -> Result<()> {
        persist::write_file(path, |w| {
            header.write_to(w)?;
            writeln!(w, "articles\t{}", self.article_count)?;
            writeln!(w, "mean_sections\t{}", self.mean_sections)?;
            writeln!(w, "stub_fraction\t{}", self.stub_fraction)?;
            writeln!(w, "unique_titles\t{}", self.unique_title_count)?;
            for (count, freq) in &self.sections_per_article_histogram {
                writeln!(w, "histogram\t{count}\t{freq}")?;
            }
            Ok(())
        })
    }
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let n = corpus.len();
    if n == 0 {
        return CorpusStats::default();
    }
    let mut histogram = BTreeMap::new();
    let mut total = 0usize;
    let mut stubs = 0usize;
    let mut titles = BTreeSet::new();
    for article in &corpus.articles {
        *histogram.entry(article.sections.len()).or_insert(0) += 1;
        total += article.sections.len();
        stubs += usize::from(article.is_stub);
        titles.extend(article.sections.iter());
    }
    CorpusStats {
        article_count: n,
        sections_per_article_histogram: histogram,
        mean_sections: total as f64 / n as f64,
        stub_fraction: stubs as f64 / n as f64,
        unique_title_count: titles.len(),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn title(s: &str) -> SectionTitle {
        SectionTitle::new(s).unwrap()
    }

    pub(crate) fn article(id: u64, sections: &[&str], categories: &[u64]) -> Article {
        Article {
            id: ArticleId(id),
            title: format!("Article {id}"),
            tokens: Vec::new(),
            sections: sections.iter().map(|s| title(s)).collect(),
            categories: categories.iter().map(|&c| CategoryId(c)).collect(),
            is_stub: false,
            quality_class: None,
        }
    }

    #[test]
    fn normalize_trims_and_collapses() {
        assert_eq!(normalize_title("  History ").unwrap().as_str(), "History");
        assert_eq!(normalize_title("Early   life").unwrap().as_str(), "Early life");
        assert_eq!(normalize_title("Early\t\nlife").unwrap().as_str(), "Early life");
    }

    #[test]
    fn normalize_preserves_case() {
        let lower = normalize_title("history").unwrap();
        assert_eq!(lower.as_str(), "history");
        assert_ne!(lower, normalize_title("History").unwrap());
    }

    #[test]
    fn normalize_rejects_blank() {
        assert!(matches!(normalize_title(" \t "), Err(Error::InvalidTitle(_))));
    }

    #[test]
    fn default_blacklist_has_fourteen_titles() {
        let bl = default_blacklist();
        assert_eq!(bl.len(), 14);
        assert!(bl.contains(&title("References")));
        assert!(bl.contains(&title("External Links")));
        assert!(bl.contains(&title("External links")));
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const CATS: &str = "# categories\n1\tRoot\n2\tTowns\n# edges\n2\t1\n";

    fn jsonl(id: u64, cats: &str) -> String {
        format!(
            r#"{{"id":{id},"title":"A{id}","tokens":["x"],"sections":[" History "],"categories":{cats},"is_stub":false}}"#
        )
    }

    #[test]
    fn loads_three_article_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let body = [jsonl(3, "[2]"), jsonl(1, "[1]"), jsonl(2, "[1,2]")].join("\n");
        let a = write(dir.path(), "a.jsonl", &body);
        let c = write(dir.path(), "c.tsv", CATS);
        let loaded = load_corpus(&a, &c).unwrap();
        let ids: Vec<u64> = loaded.corpus.ids().map(|i| i.0).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert_eq!(loaded.report, LoadReport { lines: 3, ..Default::default() });
        assert_eq!(loaded.corpus.articles[0].sections, vec![title("History")]);
    }

    #[test]
    fn unknown_category_is_dropped_with_warning_count() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.jsonl", &jsonl(1, "[2, 99]"));
        let c = write(dir.path(), "c.tsv", CATS);
        let loaded = load_corpus(&a, &c).unwrap();
        assert_eq!(loaded.report.dropped_categories, 1);
        let cats: Vec<u64> = loaded.corpus.articles[0].categories.iter().map(|c| c.0).collect();
        assert_eq!(cats, vec![2]);
    }

    #[test]
    fn duplicate_id_is_an_error_naming_the_id() {
        let dir = tempfile::tempdir().unwrap();
        let body = [jsonl(7, "[1]"), jsonl(7, "[1]")].join("\n");
        let a = write(dir.path(), "a.jsonl", &body);
        let c = write(dir.path(), "c.tsv", CATS);
        let err = load_corpus(&a, &c).unwrap_err();
        assert!(matches!(err, Error::DuplicateArticle(ArticleId(7))));
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn malformed_lines_are_tolerated_up_to_one_percent() {
        let dir = tempfile::tempdir().unwrap();
        let mut lines: Vec<String> = (1..=199).map(|i| jsonl(i, "[1]")).collect();
        lines.push("{not json".to_string());
        let a = write(dir.path(), "a.jsonl", &lines.join("\n"));
        let c = write(dir.path(), "c.tsv", CATS);
        let loaded = load_corpus(&a, &c).unwrap();
        assert_eq!(loaded.report.malformed_lines, 1);
        assert_eq!(loaded.corpus.len(), 199);

        lines.push("also broken".to_string());
        lines.push("still broken".to_string());
        let a = write(dir.path(), "b.jsonl", &lines.join("\n"));
        assert!(matches!(load_corpus(&a, &c), Err(Error::TooManyMalformed { bad: 3, .. })));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.tsv", CATS);
        assert!(matches!(
            load_corpus(&dir.path().join("nope.jsonl"), &c),
            Err(Error::Io { .. })
        ));
    }

    fn corpus(articles: Vec<Article>) -> Corpus {
        Corpus::new(articles, "test").unwrap()
    }

    #[test]
    fn filter_removes_blacklisted_titles() {
        let c = corpus(vec![
            article(1, &["History", "References"], &[]),
            article(2, &["History", "References", "See also"], &[]),
        ]);
        let f = filter_corpus(&c, &default_blacklist(), true, true);
        for a in &f.articles {
            assert!(!a.sections.contains(&title("References")));
            assert!(!a.sections.contains(&title("See also")));
        }
        assert_eq!(f.articles[0].sections, vec![title("History")]);
    }

    #[test]
    fn filter_removes_titles_used_once() {
        let c = corpus(vec![
            article(1, &["History", "Monuments, images and cost"], &[]),
            article(2, &["History"], &[]),
        ]);
        let f = filter_corpus(&c, &BTreeSet::new(), false, true);
        assert_eq!(f.articles[0].sections, vec![title("History")]);
    }

    #[test]
    fn repeated_title_within_one_article_still_counts_once() {
        let c = corpus(vec![article(1, &["Gallery", "Gallery"], &[]), article(2, &[], &[])]);
        let f = filter_corpus(&c, &BTreeSet::new(), false, true);
        assert!(f.articles[0].sections.is_empty());
        // zero-section articles are retained
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn filter_drops_stubs() {
        let mut stub = article(2, &["History"], &[]);
        stub.is_stub = true;
        let c = corpus(vec![article(1, &["History"], &[]), stub]);
        let f = filter_corpus(&c, &BTreeSet::new(), true, false);
        assert_eq!(f.ids().collect::<Vec<_>>(), vec![ArticleId(1)]);
    }

    #[test]
    fn filter_without_options_is_identity() {
        let c = corpus(vec![
            article(1, &["A", "B", "A"], &[1]),
            article(2, &["References"], &[2]),
        ]);
        let f = filter_corpus(&c, &BTreeSet::new(), false, false);
        assert_eq!(f.articles, c.articles);
    }

    #[test]
    fn split_sizes_follow_ratios() {
        let c = corpus((1..=100).map(|i| article(i, &[], &[])).collect());
        let s = split_corpus(&c, DEFAULT_SPLIT_RATIOS, 42).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.validation.len()), (80, 15, 5));
        assert_eq!(s, split_corpus(&c, DEFAULT_SPLIT_RATIOS, 42).unwrap());
        assert_ne!(s, split_corpus(&c, DEFAULT_SPLIT_RATIOS, 43).unwrap());
    }

    #[test]
    fn split_rejects_ratios_not_summing_to_one() {
        let c = corpus(vec![article(1, &[], &[])]);
        assert!(matches!(
            split_corpus(&c, [0.5, 0.5, 0.1], 1),
            Err(Error::InvalidRatios(_))
        ));
    }

    #[test]
    fn split_round_trips_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus((1..=20).map(|i| article(i, &[], &[])).collect());
        let s = split_corpus(&c, DEFAULT_SPLIT_RATIOS, 9).unwrap();
        let path = dir.path().join("split.tsv");
        s.write(&path, &Header::new("split")).unwrap();
        assert_eq!(SplitAssignment::read(&path).unwrap(), s);
    }

    #[test]
    fn stats_count_sections_per_article() {
        let c = corpus(vec![
            article(1, &[], &[]),
            article(2, &["A"], &[]),
            article(3, &["B"], &[]),
            article(4, &["A", "B"], &[]),
        ]);
        let s = corpus_stats(&c);
        assert_eq!(
            s.sections_per_article_histogram,
            BTreeMap::from([(0, 1), (1, 2), (2, 1)])
        );
        assert_eq!(s.mean_sections, 1.0);
        assert_eq!(s.unique_title_count, 2);
        assert_eq!(s.stub_fraction, 0.0);
    }

    #[test]
    fn stats_of_empty_corpus_are_zero() {
        assert_eq!(corpus_stats(&Corpus::default()), CorpusStats::default());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = article(5, &["History"], &[1]);
        a.quality_class = Some("GA".into());
        a.tokens = vec!["town".into()];
        let c = corpus(vec![a, article(6, &[], &[])]);
        let path = dir.path().join("c.jsonl");
        c.write_jsonl(&path, &Header::new("corpus")).unwrap();
        let (back, report) = load_articles(&path, |_| true).unwrap();
        assert_eq!(back.articles, c.articles);
        assert_eq!(report.malformed_lines, 0);
    }
}
