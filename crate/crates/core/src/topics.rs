//! Topic-model recommender: collapsed Gibbs LDA over article tokens, per-topic
//! section tables, and mixture-weighted section ranking.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Article, SectionTitle};
use crate::error::{Error, Result};
use crate::persist::{self, Header};
use crate::ranking::{Ranking, RankingFlag};

pub const METHOD: &str = "topics";

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopicParams {
    pub topics: usize,
    /// Document–topic prior; `None` means 50 / topics.
    pub alpha: Option<f64>,
    /// Topic–word prior.
    pub beta: f64,
    pub train_iters: usize,
    pub infer_iters: usize,
    pub seed: u64,
    pub stop_words: Vec<String>,
}

impl Default for TopicParams {
    fn default() -> Self {
        TopicParams {
            topics: 20,
            alpha: None,
            beta: 0.01,
            train_iters: 500,
            infer_iters: 100,
            seed: 0,
            stop_words: Vec::new(),
        }
    }
}

impl TopicParams {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopicModel {
    pub params: TopicParams,
    /// Sorted vocabulary.
    pub vocab: Vec<String>,
    /// Topic–word assignment counts, topics × vocab, row-major.
    pub topic_word: Vec<u32>,
    pub topic_totals: Vec<u64>,
    /// Mixture of each training document at the end of sampling; not persisted.
    pub training_mixtures: Vec<Vec<f64>>,
}

/// A document's topic mixture and whether it fell back to uniform.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub theta: Vec<f64>,
    pub uniform_fallback: bool,
}

fn categorical(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        target -= w;
        if target < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

fn mixture_from_counts(counts: &[u32], alpha: f64) -> Vec<f64> {
    let n: u32 = counts.iter().sum();
    let denom = n as f64 + counts.len() as f64 * alpha;
    let mut theta: Vec<f64> = counts.iter().map(|&c| (c as f64 + alpha) / denom).collect();
    normalize(&mut theta);
    theta
}

fn normalize(x: &mut [f64]) {
    let total: f64 = x.iter().sum();
    for v in x.iter_mut() {
        *v /= total;
    }
}

/// Collapsed Gibbs sampling over `documents` (token lists).
pub fn train_topic_model(documents: &[&[String]], params: &TopicParams) -> Result<TopicModel> {
    let k = params.topics;
    if k == 0 {
        return Err(Error::InvalidParameter("topic count must be at least 1".into()));
    }
    if !(params.beta > 0.0) || !(params.alpha() > 0.0) {
        return Err(Error::InvalidParameter("topic priors must be positive".into()));
    }
    let stop: BTreeSet<&str> = params.stop_words.iter().map(String::as_str).collect();
    let vocab: Vec<String> = documents
        .iter()
        .flat_map(|d| d.iter())
        .filter(|t| !stop.contains(t.as_str()))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let v = vocab.len();
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let docs: Vec<Vec<usize>> = documents
        .iter()
        .map(|d| d.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
        .collect();

    let (alpha, beta) = (params.alpha(), params.beta);
    let vbeta = v as f64 * beta;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut topic_word = vec![0u32; k * v];
    let mut topic_totals = vec![0u64; k];
    let mut doc_topic = vec![vec![0u32; k]; docs.len()];
    let mut assignments: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, doc) in docs.iter().enumerate() {
        let z: Vec<usize> = doc.iter().map(|_| rng.random_range(0..k)).collect();
        for (&w, &t) in doc.iter().zip(&z) {
            topic_word[t * v + w] += 1;
            topic_totals[t] += 1;
            doc_topic[d][t] += 1;
        }
        assignments.push(z);
    }

    let mut weights = vec![0.0; k];
    for _ in 0..params.train_iters {
        for (d, doc) in docs.iter().enumerate() {
            for (pos, &w) in doc.iter().enumerate() {
                let old = assignments[d][pos];
                topic_word[old * v + w] -= 1;
                topic_totals[old] -= 1;
                doc_topic[d][old] -= 1;
                for t in 0..k {
                    weights[t] = (doc_topic[d][t] as f64 + alpha) * (topic_word[t * v + w] as f64 + beta)
                        / (topic_totals[t] as f64 + vbeta);
                }
                let new = categorical(&weights, &mut rng);
                topic_word[new * v + w] += 1;
                topic_totals[new] += 1;
                doc_topic[d][new] += 1;
                assignments[d][pos] = new;
            }
        }
    }
    let training_mixtures = doc_topic.iter().map(|c| mixture_from_counts(c, alpha)).collect();
    Ok(TopicModel {
        params: params.clone(),
        vocab,
        topic_word,
        topic_totals,
        training_mixtures,
    })
}

impl TopicModel {
    pub fn topics(&self) -> usize {
        self.params.topics
    }

    /// Smoothed P(word | topic).
    fn phi(&self, topic: usize, word: usize) -> f64 {
        let v = self.vocab.len();
        (self.topic_word[topic * v + word] as f64 + self.params.beta)
            / (self.topic_totals[topic] as f64 + v as f64 * self.params.beta)
    }

    /// Gibbs inference with the topic–word table held fixed; reseeded from the
    /// model seed on every call, so the same document always gets the same
    /// mixture. The mixture is averaged over the second half of the sweeps.
    pub fn infer_mixture(&self, tokens: &[String]) -> Mixture {
        let k = self.topics();
        let words: Vec<usize> = tokens
            .iter()
            .filter_map(|t| self.vocab.binary_search(t).ok())
            .collect();
        if words.is_empty() {
            return Mixture {
                theta: vec![1.0 / k as f64; k],
                uniform_fallback: true,
            };
        }
        let alpha = self.params.alpha();
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        let phi: Vec<Vec<f64>> = words.iter().map(|&w| (0..k).map(|t| self.phi(t, w)).collect()).collect();
        let mut counts = vec![0u32; k];
        let mut z: Vec<usize> = words
            .iter()
            .map(|_| {
                let t = rng.random_range(0..k);
                counts[t] += 1;
                t
            })
            .collect();
        let iters = self.params.infer_iters.max(1);
        let burn_in = iters / 2;
        let mut acc = vec![0.0; k];
        let mut weights = vec![0.0; k];
        for it in 0..iters {
            for (pos, p) in phi.iter().enumerate() {
                counts[z[pos]] -= 1;
                for t in 0..k {
                    weights[t] = (counts[t] as f64 + alpha) * p[t];
                }
                let new = categorical(&weights, &mut rng);
                counts[new] += 1;
                z[pos] = new;
            }
            if it >= burn_in {
                for (a, m) in acc.iter_mut().zip(mixture_from_counts(&counts, alpha)) {
                    *a += m;
                }
            }
        }
        normalize(&mut acc);
        Mixture {
            theta: acc,
            uniform_fallback: false,
        }
    }

    /// Header plus one `word<TAB>count_0,…,count_{K−1}` line per vocabulary word.
    pub fn write(&self, path: &Path, header: &Header) -> Result<()> {
        let p = &self.params;
        let header = header
            .clone()
            .with("topics", p.topics)
            .with("alpha", p.alpha())
            .with("beta", p.beta)
            .with("train_iters", p.train_iters)
            .with("infer_iters", p.infer_iters)
            .with("seed", p.seed)
            .with("stop_words", p.stop_words.join(","));
        let v = self.vocab.len();
        persist::write_file(path, |w| {
            header.write_to(w)?;
            for (i, word) in self.vocab.iter().enumerate() {
                let counts: Vec<String> = (0..p.topics).map(|t| self.topic_word[t * v + i].to_string()).collect();
                writeln!(w, "{word}\t{}", counts.join(","))?;
            }
            Ok(())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = persist::read_text(path)?;
        let stop_raw = text.require("stop_words")?;
        let params = TopicParams {
            topics: text.require_parsed("topics")?,
            alpha: Some(text.require_parsed("alpha")?),
            beta: text.require_parsed("beta")?,
            train_iters: text.require_parsed("train_iters")?,
            infer_iters: text.require_parsed("infer_iters")?,
            seed: text.require_parsed("seed")?,
            stop_words: if stop_raw.is_empty() {
                Vec::new()
            } else {
                stop_raw.split(',').map(str::to_string).collect()
            },
        };
        let k = params.topics;
        let mut vocab = Vec::with_capacity(text.lines.len());
        let mut columns: Vec<Vec<u32>> = Vec::with_capacity(text.lines.len());
        for (line, raw) in &text.lines {
            let bad = || text.parse_error(*line, format!("expected `word<TAB>{k} counts`"));
            let (word, counts) = raw.split_once('\t').ok_or_else(bad)?;
            let counts = counts
                .split(',')
                .map(|c| c.parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            if counts.len() != k {
                return Err(bad());
            }
            vocab.push(word.to_string());
            columns.push(counts);
        }
        let v = vocab.len();
        let mut topic_word = vec![0u32; k * v];
        let mut topic_totals = vec![0u64; k];
        for (w, counts) in columns.iter().enumerate() {
            for (t, &c) in counts.iter().enumerate() {
                topic_word[t * v + w] = c;
                topic_totals[t] += c as u64;
            }
        }
        Ok(TopicModel {
            params,
            vocab,
            topic_word,
            topic_totals,
            training_mixtures: Vec::new(),
        })
    }
}

/// Per topic, accumulated mixture weight of each section.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TopicSectionTable {
    pub tables: Vec<BTreeMap<SectionTitle, f64>>,
}

/// For every training article with sections and every topic i, adds the
/// article's weight on topic i to `tables[i][S]` for each of its sections S.
pub fn build_topic_section_table<'a>(
    model: &TopicModel,
    train: impl IntoIterator<Item = &'a Article>,
) -> TopicSectionTable {
    let articles: Vec<&Article> = train.into_iter().filter(|a| a.has_sections()).collect();
    let mixtures: Vec<Mixture> = articles.par_iter().map(|a| model.infer_mixture(&a.tokens)).collect();
    let mut table = TopicSectionTable {
        tables: vec![BTreeMap::new(); model.topics()],
    };
    for (article, mixture) in articles.iter().zip(&mixtures) {
        table.add(&article.distinct_sections(), &mixture.theta);
    }
    table
}

impl TopicSectionTable {
    pub fn add(&mut self, sections: &BTreeSet<&SectionTitle>, theta: &[f64]) {
        for (tab, &w) in self.tables.iter_mut().zip(theta) {
            for &s in sections {
                *tab.entry(s.clone()).or_default() += w;
            }
        }
    }

    /// Σ_i θ[i] · table_i[S] for every section S.
    pub fn scores(&self, theta: &[f64]) -> BTreeMap<SectionTitle, f64> {
        let mut scores: BTreeMap<SectionTitle, f64> = BTreeMap::new();
        for (tab, &w) in self.tables.iter().zip(theta) {
            for (s, &x) in tab {
                *scores.entry(s.clone()).or_default() += w * x;
            }
        }
        scores
    }

    /// `topic_id<TAB>section<TAB>weight` lines.
    pub fn write(&self, path: &Path, header: &Header) -> Result<()> {
        let header = header.clone().with("topics", self.tables.len());
        persist::write_file(path, |w| {
            header.write_to(w)?;
            for (t, tab) in self.tables.iter().enumerate() {
                for (s, x) in tab {
                    writeln!(w, "{t}\t{s}\t{x}")?;
                }
            }
            Ok(())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = persist::read_text(path)?;
        let k: usize = text.require_parsed("topics")?;
        let mut tables = vec![BTreeMap::new(); k];
        for (line, raw) in &text.lines {
            let bad = || text.parse_error(*line, "expected `topic_id<TAB>section<TAB>weight`");
            let f = persist::split_fields(raw, 3).ok_or_else(bad)?;
            let t: usize = f[0].parse().map_err(|_| bad())?;
            let tab = tables.get_mut(t).ok_or_else(bad)?;
            tab.insert(
                SectionTitle::new(f[1]).map_err(|_| bad())?,
                f[2].parse::<f64>().map_err(|_| bad())?,
            );
        }
        Ok(TopicSectionTable { tables })
    }
}

pub fn recommend_topic(
    table: &TopicSectionTable,
    model: &TopicModel,
    article: &Article,
    k: usize,
    exclude_existing: bool,
) -> Ranking {
    let mixture = model.infer_mixture(&article.tokens);
    let existing = if exclude_existing {
        article.distinct_sections()
    } else {
        BTreeSet::new()
    };
    let ranking = Ranking::from_scores(METHOD, table.scores(&mixture.theta), &existing, k);
    if mixture.uniform_fallback {
        ranking.with_flag(RankingFlag::UniformMixture)
    } else {
        ranking
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::{article, title};
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn quick(topics: usize, seed: u64) -> TopicParams {
        TopicParams {
            topics,
            train_iters: 100,
            infer_iters: 50,
            seed,
            ..TopicParams::default()
        }
    }

    /// Ten documents over "river …" words and ten over "stadium …" words.
    fn two_groups() -> Vec<Vec<String>> {
        let mut docs = Vec::new();
        for i in 0..10 {
            docs.push(words(&format!("river bank water flood bridge river water w{}", i % 3)));
            docs.push(words(&format!("stadium goal match league season goal match s{}", i % 3)));
        }
        docs
    }

    fn refs(docs: &[Vec<String>]) -> Vec<&[String]> {
        docs.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn separable_groups_get_separate_topics() {
        let docs = two_groups();
        let params = TopicParams { alpha: Some(0.1), ..quick(2, 11) };
        let model = train_topic_model(&refs(&docs), &params).unwrap();
        let dominant = |m: &[f64]| if m[0] > m[1] { 0 } else { 1 };
        let river = dominant(&model.training_mixtures[0]);
        for (i, m) in model.training_mixtures.iter().enumerate() {
            let max = m.iter().cloned().fold(0.0, f64::max);
            assert!(max >= 0.9, "doc {i}: {m:?}");
            assert_eq!(dominant(m) == river, i % 2 == 0);
        }
    }

    #[test]
    fn single_topic_mixture_is_one() {
        let docs = two_groups();
        let model = train_topic_model(&refs(&docs), &quick(1, 0)).unwrap();
        assert_eq!(model.infer_mixture(&docs[0]).theta, vec![1.0]);
        assert!(model.training_mixtures.iter().all(|m| m == &vec![1.0]));
    }

    #[test]
    fn training_is_deterministic() {
        let docs = two_groups();
        let a = train_topic_model(&refs(&docs), &quick(3, 5)).unwrap();
        let b = train_topic_model(&refs(&docs), &quick(3, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_vocabulary_is_rejected() {
        let empty: Vec<Vec<String>> = vec![vec![], vec![]];
        assert!(matches!(
            train_topic_model(&refs(&empty), &quick(2, 0)),
            Err(Error::EmptyVocabulary)
        ));
        let stopped = TopicParams {
            stop_words: vec!["the".into()],
            ..quick(2, 0)
        };
        assert!(matches!(
            train_topic_model(&refs(&[words("the the")]), &stopped),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn inference_agrees_with_training_state() {
        let docs = two_groups();
        let params = TopicParams { alpha: Some(0.1), ..quick(2, 4) };
        let model = train_topic_model(&refs(&docs), &params).unwrap();
        for (doc, trained) in docs.iter().zip(&model.training_mixtures) {
            let inferred = model.infer_mixture(doc);
            let tv: f64 = inferred.theta.iter().zip(trained).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
            assert!(tv <= 0.1, "{:?} vs {trained:?}", inferred.theta);
        }
    }

    #[test]
    fn empty_document_gets_flagged_uniform_mixture() {
        let docs = two_groups();
        let model = train_topic_model(&refs(&docs), &quick(4, 0)).unwrap();
        let m = model.infer_mixture(&words("unknown tokens only"));
        assert!(m.uniform_fallback);
        assert_eq!(m.theta, vec![0.25; 4]);
    }

    #[test]
    fn accumulation_rule() {
        let mut table = TopicSectionTable {
            tables: vec![BTreeMap::new(); 2],
        };
        let x = title("X");
        table.add(&BTreeSet::from([&x]), &[0.7, 0.3]);
        assert_eq!(table.tables[0][&x], 0.7);
        assert_eq!(table.tables[1][&x], 0.3);
    }

    #[test]
    fn table_conserves_mass_and_skips_sectionless_articles() {
        let docs = two_groups();
        let model = train_topic_model(&refs(&docs), &quick(3, 2)).unwrap();
        let mut arts: Vec<Article> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut a = article(i as u64, if i % 2 == 0 { &["Geography", "History"] } else { &["History"] }, &[]);
                a.tokens = d.clone();
                a
            })
            .collect();
        let table = build_topic_section_table(&model, &arts);
        let mass = |s: &str| table.tables.iter().map(|t| t.get(&title(s)).copied().unwrap_or(0.0)).sum::<f64>();
        assert!((mass("History") - 20.0).abs() < 1e-6);
        assert!((mass("Geography") - 10.0).abs() < 1e-6);

        arts.push(article(99, &[], &[]));
        assert_eq!(build_topic_section_table(&model, &arts), table);
    }

    #[test]
    fn point_mass_mixture_follows_one_table() {
        let table = TopicSectionTable {
            tables: vec![
                BTreeMap::from([(title("A"), 3.0), (title("B"), 1.0)]),
                BTreeMap::from([(title("B"), 5.0), (title("C"), 4.0)]),
            ],
        };
        let mut ranking: Vec<(SectionTitle, f64)> = table.scores(&[0.0, 1.0]).into_iter().collect();
        crate::ranking::top_k(&mut ranking, 3);
        let order: Vec<&str> = ranking.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(order, vec!["B", "C", "A"]);

        // uniform mixture ranks by total weight across topics
        let uniform = table.scores(&[0.5, 0.5]);
        assert_eq!(uniform[&title("B")], 3.0);
        assert_eq!(uniform[&title("A")], 1.5);
    }

    #[test]
    fn recommendation_flags_and_exclusions() {
        let docs = two_groups();
        let model = train_topic_model(&refs(&docs), &quick(2, 0)).unwrap();
        let table = TopicSectionTable {
            tables: vec![BTreeMap::from([(title("A"), 2.0), (title("B"), 1.0)]); 2],
        };
        let mut target = article(1, &["A"], &[]);
        let r = recommend_topic(&table, &model, &target, 5, true);
        assert_eq!(r.flag, Some(RankingFlag::UniformMixture));
        assert_eq!(r.titles().map(|t| t.as_str()).collect::<Vec<_>>(), vec!["B"]);
        target.tokens = docs[0].clone();
        assert_eq!(recommend_topic(&table, &model, &target, 5, false).flag, None);
    }

    #[test]
    fn model_and_table_round_trip() {
        let docs = two_groups();
        let mut model = train_topic_model(&refs(&docs), &quick(3, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lda.model");
        model.write(&path, &Header::new("lda")).unwrap();
        let back = TopicModel::read(&path).unwrap();
        model.training_mixtures.clear();
        model.params.alpha = Some(model.params.alpha());
        assert_eq!(back, model);

        let arts: Vec<Article> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| Article { tokens: d.clone(), ..article(i as u64, &["S"], &[]) })
            .collect();
        let table = build_topic_section_table(&back, &arts);
        let tpath = dir.path().join("table.tsv");
        table.write(&tpath, &Header::new("topic-sections")).unwrap();
        assert_eq!(TopicSectionTable::read(&tpath).unwrap(), table);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mixtures_are_normalized(doc in proptest::collection::vec(0usize..12, 0..20), seed in 0u64..50) {
            let docs = two_groups();
            let model = train_topic_model(&refs(&docs), &TopicParams { train_iters: 10, infer_iters: 10, ..quick(3, seed) }).unwrap();
            let pool = ["river", "water", "goal", "match", "stadium", "bank", "flood", "league", "w0", "s1", "zzz", "qqq"];
            let tokens: Vec<String> = doc.iter().map(|&i| pool[i].to_string()).collect();
            let m = model.infer_mixture(&tokens);
            prop_assert!((m.theta.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(m.theta.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn scores_invariant_to_topic_relabeling(
            weights in proptest::collection::vec(proptest::collection::vec(0.0f64..5.0, 4), 3),
            theta in proptest::collection::vec(0.01f64..1.0, 3),
        ) {
            let names = ["A", "B", "C", "D"];
            let tables: Vec<BTreeMap<SectionTitle, f64>> = weights
                .iter()
                .map(|w| names.iter().zip(w).map(|(n, &x)| (title(n), x)).collect())
                .collect();
            let forward = TopicSectionTable { tables: tables.clone() }.scores(&theta);
            let mut rev_tables = tables;
            rev_tables.reverse();
            let mut rev_theta = theta.clone();
            rev_theta.reverse();
            let backward = TopicSectionTable { tables: rev_tables }.scores(&rev_theta);
            for (s, x) in &forward {
                prop_assert!((x - backward[s]).abs() <= 1e-12);
            }
        }
    }
}
