//! In-memory orchestration: preprocessing, model training, and recommender
//! adapters for the evaluation harness.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use crate::catgraph::{break_cycles, prune, restrict_to_root, CategoryFile, CategoryGraph, PrunedGraph, TypeMap};
use crate::corpus::{corpus_stats, filter_corpus, split_corpus, Article, CategoryId, Corpus, SectionTitle, SplitAssignment, SplitPart};
use crate::counts::{self, compute_scores, CategoryResolver, CategoryScope, ScoreTable};
use crate::error::{Error, Result};
use crate::eval::{evaluate_method, write_report_csv, write_report_tsv, EvalCase, EvalReport, RandomRecommender, Recommender};
use crate::persist::{self, Header};
use crate::factorize::{self, als_explicit, als_implicit, build_article_matrix, build_category_matrix, AlsParams, FactorModel, Holdout};
use crate::l2r::{metas_from_pruned, recommend_merged, train_merge_model, CategoryLists, CategoryMeta, CategoryRanker, MergeModel, TrainParams};
use crate::ranking::Ranking;
use crate::topics::{self, build_topic_section_table, recommend_topic, train_topic_model, TopicModel, TopicParams, TopicSectionTable};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub threshold: f64,
    /// Train, test and validation shares.
    pub split_ratios: [f64; 3],
    pub split_seed: u64,
    pub drop_stubs: bool,
    pub drop_unique: bool,
    pub scope: CategoryScope,
    pub holdout_fraction: f64,
    pub min_sections: usize,
    pub top_n: usize,
    pub cf_article: AlsParams,
    pub cf_category: AlsParams,
    pub lda: TopicParams,
    pub l2r: TrainParams,
    pub k_max: usize,
    pub random_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: crate::catgraph::DEFAULT_PURITY_THRESHOLD,
            split_ratios: [0.8, 0.15, 0.05],
            split_seed: 42,
            drop_stubs: true,
            drop_unique: true,
            scope: CategoryScope::Direct,
            holdout_fraction: 0.5,
            min_sections: 2,
            top_n: factorize::DEFAULT_TOP_N,
            cf_article: AlsParams::default(),
            cf_category: AlsParams::default(),
            lda: TopicParams::default(),
            l2r: TrainParams::default(),
            k_max: 20,
            random_seed: 0,
        }
    }
}

/// Every method the harness knows how to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Counts,
    CountsL2r,
    Topics,
    CfArticle,
    CfCategory,
    CfCategoryL2r,
    Random,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Counts,
        Method::CountsL2r,
        Method::Topics,
        Method::CfArticle,
        Method::CfCategory,
        Method::CfCategoryL2r,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Counts => counts::METHOD,
            Method::CountsL2r => "counts+l2r",
            Method::Topics => topics::METHOD,
            Method::CfArticle => factorize::ARTICLE_METHOD,
            Method::CfCategory => factorize::CATEGORY_METHOD,
            Method::CfCategoryL2r => "cf-category+l2r",
            Method::Random => crate::eval::RANDOM_METHOD,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lda" => Ok(Method::Topics),
            _ => Method::ALL
                .into_iter()
                .find(|m| m.name() == s)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Artifact paths relative to a work directory.
pub mod artifacts {
    pub const CORPUS: &str = "corpus.jsonl";
    pub const SPLIT: &str = "split.tsv";
    pub const STATS: &str = "stats.tsv";
    pub const PRUNED: &str = "pruned";
    pub const REMOVED_EDGES: &str = "pruned/removed_edges.tsv";
    pub const SWEEP: &str = "pruned/sweep.tsv";
    pub const COUNTS_SCORES: &str = "counts/scores.tsv";
    pub const COUNTS_MEMBERS: &str = "counts/members.tsv";
    pub const COVERAGE: &str = "counts/coverage.tsv";
    pub const CF_ARTICLE: &str = "cf-article";
    pub const HOLDOUT: &str = "cf-article/holdout.tsv";
    pub const CF_CATEGORY: &str = "cf-category";
    pub const LDA_MODEL: &str = "lda/model.tsv";
    pub const LDA_SECTIONS: &str = "lda/sections.tsv";
    pub const L2R_COUNTS: &str = "l2r/counts.tsv";
    pub const L2R_CF_CATEGORY: &str = "l2r/cf-category.tsv";
    pub const REPORT_TSV: &str = "eval/report.tsv";
    pub const REPORT_CSV: &str = "eval/report.csv";
}

/// Coverage curve length written next to the count table.
pub const COVERAGE_X_MAX: usize = 50;

fn tagged(header: &Header, kind: &str) -> Header {
    header.clone().merged(&Header::new(kind))
}

/// Filters the corpus and splits it.
pub fn ingest(corpus: &Corpus, blacklist: &BTreeSet<SectionTitle>, config: &PipelineConfig) -> Result<(Corpus, SplitAssignment)> {
    let corpus = filter_corpus(corpus, blacklist, config.drop_stubs, config.drop_unique);
    let split = split_corpus(&corpus, config.split_ratios, config.split_seed)?;
    Ok((corpus, split))
}

pub fn write_ingest(dir: &Path, corpus: &Corpus, split: &SplitAssignment, header: &Header) -> Result<()> {
    corpus.write_jsonl(&dir.join(artifacts::CORPUS), &tagged(header, "corpus"))?;
    split.write(&dir.join(artifacts::SPLIT), &tagged(header, "split"))?;
    corpus_stats(corpus).write(&dir.join(artifacts::STATS), &tagged(header, "stats"))
}

/// Network below `root`, made acyclic, then purity-pruned.
#[derive(Clone, Debug)]
pub struct Network {
    pub dag: CategoryGraph,
    pub removed_edges: Vec<(CategoryId, CategoryId)>,
    pub pruned: PrunedGraph,
}

pub fn build_network(
    corpus: &Corpus,
    categories: &CategoryFile,
    types: &TypeMap,
    root: CategoryId,
    threshold: f64,
) -> Result<Network> {
    let graph = CategoryGraph::from_corpus(categories, corpus, root)?;
    let (dag, removed_edges) = break_cycles(&restrict_to_root(&graph, root)?);
    let pruned = prune(&dag, types, threshold)?;
    Ok(Network {
        dag,
        removed_edges,
        pruned,
    })
}

impl Network {
    pub fn write(&self, dir: &Path, header: &Header) -> Result<()> {
        let h = tagged(header, "pruned");
        self.pruned.write(&dir.join(artifacts::PRUNED), &h)?;
        persist::write_file(&dir.join(artifacts::REMOVED_EDGES), |w| {
            h.write_to(w)?;
            for (c, p) in &self.removed_edges {
                writeln!(w, "{c}\t{p}")?;
            }
            Ok(())
        })
    }
}

/// Filtered corpus, split, and the category network.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub corpus: Corpus,
    pub split: SplitAssignment,
    pub network: Network,
}

pub fn articles_in<'a>(corpus: &'a Corpus, split: &'a SplitAssignment, part: SplitPart) -> impl Iterator<Item = &'a Article> + 'a {
    corpus
        .articles
        .iter()
        .filter(move |a| split.part_of(a.id) == Some(part))
}

impl Prepared {
    pub fn part(&self, part: SplitPart) -> impl Iterator<Item = &Article> + '_ {
        articles_in(&self.corpus, &self.split, part)
    }

    pub fn pruned(&self) -> &PrunedGraph {
        &self.network.pruned
    }

    pub fn write(&self, dir: &Path, header: &Header) -> Result<()> {
        write_ingest(dir, &self.corpus, &self.split, header)?;
        self.network.write(dir, header)
    }
}

pub fn prepare(
    corpus: &Corpus,
    categories: &CategoryFile,
    types: &TypeMap,
    blacklist: &BTreeSet<SectionTitle>,
    root: CategoryId,
    config: &PipelineConfig,
) -> Result<Prepared> {
    let (corpus, split) = ingest(corpus, blacklist, config)?;
    let network = build_network(&corpus, categories, types, root, config.threshold)?;
    Ok(Prepared { corpus, split, network })
}

pub fn train_counts(corpus: &Corpus, split: &SplitAssignment, pruned: &PrunedGraph) -> Result<ScoreTable> {
    compute_scores(articles_in(corpus, split, SplitPart::Train), &pruned.graph)
}

pub fn write_counts(dir: &Path, table: &ScoreTable, header: &Header) -> Result<()> {
    table.write(&dir.join(artifacts::COUNTS_SCORES), &dir.join(artifacts::COUNTS_MEMBERS), &tagged(header, "counts"))?;
    counts::write_coverage(
        &dir.join(artifacts::COVERAGE),
        &counts::coverage_curve(table, COVERAGE_X_MAX),
        &tagged(header, "coverage"),
    )
}

/// LDA over every article of the filtered corpus; the topic–section table
/// from training articles.
pub fn train_topics(corpus: &Corpus, split: &SplitAssignment, params: &TopicParams) -> Result<(TopicModel, TopicSectionTable)> {
    let documents: Vec<&[String]> = corpus.articles.iter().map(|a| a.tokens.as_slice()).collect();
    let model = train_topic_model(&documents, params)?;
    let table = build_topic_section_table(&model, articles_in(corpus, split, SplitPart::Train));
    Ok((model, table))
}

pub fn write_topics(dir: &Path, model: &TopicModel, table: &TopicSectionTable, header: &Header) -> Result<()> {
    model.write(&dir.join(artifacts::LDA_MODEL), &tagged(header, "lda"))?;
    table.write(&dir.join(artifacts::LDA_SECTIONS), &tagged(header, "lda-sections"))
}

pub fn train_article_cf(corpus: &Corpus, split: &SplitAssignment, config: &PipelineConfig) -> Result<(FactorModel, Holdout)> {
    let (matrix, holdout) = build_article_matrix(
        corpus,
        split,
        config.holdout_fraction,
        config.min_sections,
        config.cf_article.seed,
    )?;
    Ok((als_explicit(&matrix, &config.cf_article)?, holdout))
}

pub fn write_article_cf(dir: &Path, model: &FactorModel, holdout: &Holdout, header: &Header) -> Result<()> {
    model.write(&dir.join(artifacts::CF_ARTICLE), &tagged(header, "cf-article"))?;
    holdout.write(&dir.join(artifacts::HOLDOUT), &tagged(header, "holdout"))
}

pub fn train_category_cf(table: &ScoreTable, config: &PipelineConfig) -> Result<FactorModel> {
    als_implicit(&build_category_matrix(table, config.top_n), &config.cf_category)
}

pub fn write_category_cf(dir: &Path, model: &FactorModel, header: &Header) -> Result<()> {
    model.write(&dir.join(artifacts::CF_CATEGORY), &tagged(header, "cf-category"))
}

/// Merge model for `source`, fit on the validation split.
pub fn train_l2r(
    corpus: &Corpus,
    split: &SplitAssignment,
    pruned: &PrunedGraph,
    source: &dyn CategoryRanker,
    config: &PipelineConfig,
) -> Result<MergeModel> {
    let resolver = CategoryResolver::new(&pruned.graph, config.scope)?;
    train_merge_model(
        articles_in(corpus, split, SplitPart::Validation),
        |a: &Article| resolver.categories(a),
        source,
        &metas_from_pruned(pruned),
        &config.l2r,
    )
}

pub fn l2r_artifact(source: &str) -> &'static str {
    if source == factorize::CATEGORY_METHOD {
        artifacts::L2R_CF_CATEGORY
    } else {
        artifacts::L2R_COUNTS
    }
}

#[derive(Clone, Debug)]
pub struct Models {
    pub counts: ScoreTable,
    pub counts_merge: MergeModel,
    pub topic_model: TopicModel,
    pub topic_table: TopicSectionTable,
    pub article_cf: FactorModel,
    pub holdout: Holdout,
    pub category_cf: FactorModel,
    pub category_lists: CategoryLists,
    pub category_merge: MergeModel,
}

pub fn train_all(prepared: &Prepared, config: &PipelineConfig) -> Result<Models> {
    let (corpus, split, pruned) = (&prepared.corpus, &prepared.split, prepared.pruned());
    let counts = train_counts(corpus, split, pruned)?;
    let counts_merge = train_l2r(corpus, split, pruned, &counts, config)?;
    let (topic_model, topic_table) = train_topics(corpus, split, &config.lda)?;
    let (article_cf, holdout) = train_article_cf(corpus, split, config)?;
    let category_cf = train_category_cf(&counts, config)?;
    let category_lists = CategoryLists::from_factor_model(&category_cf, config.l2r.depth)?;
    let category_merge = train_l2r(corpus, split, pruned, &category_lists, config)?;
    Ok(Models {
        counts,
        counts_merge,
        topic_model,
        topic_table,
        article_cf,
        holdout,
        category_cf,
        category_lists,
        category_merge,
    })
}

impl Models {
    pub fn write(&self, dir: &Path, header: &Header) -> Result<()> {
        write_counts(dir, &self.counts, header)?;
        write_article_cf(dir, &self.article_cf, &self.holdout, header)?;
        write_category_cf(dir, &self.category_cf, header)?;
        write_topics(dir, &self.topic_model, &self.topic_table, header)?;
        self.counts_merge.write(&dir.join(artifacts::L2R_COUNTS), &tagged(header, "l2r"))?;
        self.category_merge.write(&dir.join(artifacts::L2R_CF_CATEGORY), &tagged(header, "l2r"))
    }
}

pub fn write_reports(dir: &Path, reports: &[EvalReport], header: &Header) -> Result<()> {
    let h = tagged(header, "report");
    write_report_tsv(&dir.join(artifacts::REPORT_TSV), reports, &h)?;
    write_report_csv(&dir.join(artifacts::REPORT_CSV), reports, &h)
}

/// Per-category rankings merged over an article's resolved categories; the
/// unweighted sum when `model` is `None`.
pub struct CategoryRecommender<'a> {
    pub name: String,
    pub source: &'a (dyn CategoryRanker + Sync),
    pub metas: &'a BTreeMap<CategoryId, CategoryMeta>,
    pub model: Option<&'a MergeModel>,
    pub resolver: &'a CategoryResolver,
    pub exclude_existing: bool,
}

impl CategoryRecommender<'_> {
    pub fn recommend_article(&self, article: &Article, k: usize) -> Ranking {
        let categories = self.resolver.categories(article);
        let identity;
        let model = match self.model {
            Some(model) => model,
            None => {
                identity = MergeModel::identity(self.metas.values().map(|m| m.size).max().unwrap_or(0));
                &identity
            }
        };
        let mut ranking = recommend_merged(self.source, self.metas, model, &categories, article, k, self.exclude_existing);
        ranking.method = self.name.clone();
        ranking
    }
}

impl Recommender for CategoryRecommender<'_> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn recommend(&self, case: &EvalCase<'_>, k: usize) -> Ranking {
        self.recommend_article(case.article, k)
    }
}

/// The unweighted P(S|C) sum, scored exactly as [`counts::recommend_for_article`].
pub struct CountsRecommender<'a> {
    pub table: &'a ScoreTable,
    pub resolver: &'a CategoryResolver,
    pub exclude_existing: bool,
}

impl Recommender for CountsRecommender<'_> {
    fn name(&self) -> String {
        counts::METHOD.to_string()
    }

    fn recommend(&self, case: &EvalCase<'_>, k: usize) -> Ranking {
        let categories = self.resolver.categories(case.article);
        counts::recommend_for_article(self.table, &categories, case.article, k, self.exclude_existing)
    }
}

pub struct TopicRecommender<'a> {
    pub table: &'a TopicSectionTable,
    pub model: &'a TopicModel,
    pub exclude_existing: bool,
}

impl Recommender for TopicRecommender<'_> {
    fn name(&self) -> String {
        topics::METHOD.to_string()
    }

    fn recommend(&self, case: &EvalCase<'_>, k: usize) -> Ranking {
        recommend_topic(self.table, self.model, case.article, k, self.exclude_existing)
    }
}

/// Article-level CF: sections of the article outside the case truth are the
/// ones the model saw, and are never recommended.
pub struct ArticleCfRecommender<'a> {
    pub model: &'a FactorModel,
}

impl Recommender for ArticleCfRecommender<'_> {
    fn name(&self) -> String {
        factorize::ARTICLE_METHOD.to_string()
    }

    fn recommend(&self, case: &EvalCase<'_>, k: usize) -> Ranking {
        let kept: BTreeSet<&SectionTitle> = case
            .article
            .distinct_sections()
            .into_iter()
            .filter(|s| !case.truth.contains(*s))
            .collect();
        factorize::recommend_from_model(self.model, case.article.id.0, k, &kept)
            .unwrap_or_else(|_| Ranking::empty(factorize::ARTICLE_METHOD))
    }
}

/// Test articles with their held-out sections as truth.
pub fn holdout_cases<'a>(corpus: &'a Corpus, holdout: &Holdout) -> Vec<EvalCase<'a>> {
    holdout
        .held_out
        .iter()
        .filter_map(|(id, truth)| {
            Some(EvalCase {
                article: corpus.get(*id)?,
                truth: truth.clone(),
            })
        })
        .collect()
}

/// Section vocabulary of the training articles.
pub fn training_vocabulary(corpus: &Corpus, split: &SplitAssignment) -> BTreeSet<SectionTitle> {
    articles_in(corpus, split, SplitPart::Train)
        .flat_map(|a| a.sections.iter().cloned())
        .collect()
}

/// Whatever models are available for scoring; methods whose model is absent
/// are rejected.
pub struct Context<'a> {
    pub corpus: &'a Corpus,
    pub split: &'a SplitAssignment,
    pub metas: BTreeMap<CategoryId, CategoryMeta>,
    pub resolver: CategoryResolver,
    pub counts: Option<&'a ScoreTable>,
    pub counts_merge: Option<&'a MergeModel>,
    pub topics: Option<(&'a TopicModel, &'a TopicSectionTable)>,
    pub article_cf: Option<(&'a FactorModel, &'a Holdout)>,
    pub category_lists: Option<&'a CategoryLists>,
    pub category_merge: Option<&'a MergeModel>,
    pub random_seed: u64,
}

impl<'a> Context<'a> {
    pub fn new(
        corpus: &'a Corpus,
        split: &'a SplitAssignment,
        pruned: &PrunedGraph,
        config: &PipelineConfig,
    ) -> Result<Self> {
        Ok(Context {
            corpus,
            split,
            metas: metas_from_pruned(pruned),
            resolver: CategoryResolver::new(&pruned.graph, config.scope)?,
            counts: None,
            counts_merge: None,
            topics: None,
            article_cf: None,
            category_lists: None,
            category_merge: None,
            random_seed: config.random_seed,
        })
    }

    pub fn with_models(corpus: &'a Corpus, split: &'a SplitAssignment, pruned: &PrunedGraph, models: &'a Models, config: &PipelineConfig) -> Result<Self> {
        Ok(Context {
            counts: Some(&models.counts),
            counts_merge: Some(&models.counts_merge),
            topics: Some((&models.topic_model, &models.topic_table)),
            article_cf: Some((&models.article_cf, &models.holdout)),
            category_lists: Some(&models.category_lists),
            category_merge: Some(&models.category_merge),
            ..Context::new(corpus, split, pruned, config)?
        })
    }

    fn need<T>(model: Option<T>, method: Method) -> Result<T> {
        model.ok_or_else(|| Error::InvalidConfig(format!("method {method} needs a trained model")))
    }

    fn category(&self, method: Method, source: &'a (dyn CategoryRanker + Sync), model: Option<&'a MergeModel>, exclude_existing: bool) -> CategoryRecommender<'_> {
        CategoryRecommender {
            name: method.name().to_string(),
            source,
            metas: &self.metas,
            model,
            resolver: &self.resolver,
            exclude_existing,
        }
    }

    pub fn recommender(&self, method: Method, exclude_existing: bool) -> Result<Box<dyn Recommender + '_>> {
        Ok(match method {
            Method::Counts => Box::new(CountsRecommender {
                table: Self::need(self.counts, method)?,
                resolver: &self.resolver,
                exclude_existing,
            }),
            Method::CountsL2r => Box::new(self.category(
                method,
                Self::need(self.counts, method)?,
                Some(Self::need(self.counts_merge, method)?),
                exclude_existing,
            )),
            Method::CfCategory => Box::new(self.category(method, Self::need(self.category_lists, method)?, None, exclude_existing)),
            Method::CfCategoryL2r => Box::new(self.category(
                method,
                Self::need(self.category_lists, method)?,
                Some(Self::need(self.category_merge, method)?),
                exclude_existing,
            )),
            Method::Topics => {
                let (model, table) = Self::need(self.topics, method)?;
                Box::new(TopicRecommender {
                    table,
                    model,
                    exclude_existing,
                })
            }
            Method::CfArticle => Box::new(ArticleCfRecommender {
                model: Self::need(self.article_cf, method)?.0,
            }),
            Method::Random => Box::new(RandomRecommender::new(training_vocabulary(self.corpus, self.split), self.random_seed)),
        })
    }

    /// Scores `method` on the test split. Article-level CF uses the held-out
    /// protocol; every other method reconstructs the full section set.
    pub fn evaluate(&self, method: Method, k_max: usize) -> Result<EvalReport> {
        let recommender = self.recommender(method, false)?;
        let cases = match method {
            Method::CfArticle => holdout_cases(self.corpus, Self::need(self.article_cf, method)?.1),
            _ => articles_in(self.corpus, self.split, SplitPart::Test).map(EvalCase::reconstruct).collect(),
        };
        evaluate_method(recommender.as_ref(), &cases, k_max)
    }
}

pub fn evaluate_all(prepared: &Prepared, models: &Models, methods: &[Method], config: &PipelineConfig) -> Result<Vec<EvalReport>> {
    let context = Context::with_models(&prepared.corpus, &prepared.split, prepared.pruned(), models, config)?;
    methods.iter().map(|&m| context.evaluate(m, config.k_max)).collect()
}
