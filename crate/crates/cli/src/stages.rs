use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use log::{info, warn};

use sectionrec_core::catgraph::{
    read_annotations, threshold_sweep, write_sweep, CategoryFile, PrunedGraph, TypeMap, TypeUniverse, DEFAULT_TYPE_UNIVERSE,
};
use sectionrec_core::corpus::{default_blacklist, load_articles, load_corpus, read_blacklist, SplitAssignment};
use sectionrec_core::counts::{self, recommend_for_category, ScoreTable};
use sectionrec_core::eval::{render_table, EvalCase};
use sectionrec_core::factorize::{self, FactorModel, Holdout};
use sectionrec_core::l2r::{CategoryLists, MergeModel};
use sectionrec_core::persist::{self, Header};
use sectionrec_core::pipeline::{self, artifacts, Context, Method};
use sectionrec_core::synth::{self, generate_synthetic};
use sectionrec_core::topics::{TopicModel, TopicSectionTable};
use sectionrec_core::{ArticleId, CategoryId, Corpus, Ranking};

use crate::config::RunConfig;
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub struct Run {
    pub config: RunConfig,
    pub fingerprint: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum TrainTarget {
    Counts,
    CfArticle,
    CfCategory,
    Lda,
    L2r,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum L2rSource {
    Counts,
    CfCategory,
}

pub struct RecommendRequest {
    pub article: Option<u64>,
    pub category: Option<u64>,
    pub method: String,
    pub k: usize,
    pub include_existing: bool,
}

/// Prerequisite artifact: its path relative to the work dir, what it is, and
/// the stage that produces it.
struct Artifact {
    rel: &'static str,
    what: &'static str,
    stage: &'static str,
}

const CORPUS: Artifact = Artifact { rel: artifacts::CORPUS, what: "ingested corpus", stage: "ingest" };
const SPLIT: Artifact = Artifact { rel: artifacts::SPLIT, what: "split assignment", stage: "ingest" };
const PRUNED: Artifact = Artifact { rel: "pruned/nodes.tsv", what: "pruned category graph", stage: "prune-graph" };
const COUNTS: Artifact = Artifact { rel: artifacts::COUNTS_SCORES, what: "category-section counts", stage: "train counts" };
const CF_ARTICLE: Artifact = Artifact { rel: "cf-article/meta.txt", what: "article CF model", stage: "train cf-article" };
const CF_CATEGORY: Artifact = Artifact { rel: "cf-category/meta.txt", what: "category CF model", stage: "train cf-category" };
const LDA: Artifact = Artifact { rel: artifacts::LDA_MODEL, what: "topic model", stage: "train lda" };
const L2R_COUNTS: Artifact = Artifact { rel: artifacts::L2R_COUNTS, what: "merge model for counts", stage: "train l2r" };
const L2R_CF_CATEGORY: Artifact = Artifact {
    rel: artifacts::L2R_CF_CATEGORY,
    what: "merge model for cf-category",
    stage: "train l2r --source cf-category",
};

fn input(path: &Path, what: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(CliError::Missing { stage: "synth", what, path: path.to_path_buf() })
    }
}

impl Run {
    fn work(&self) -> &Path {
        &self.config.paths.work_dir
    }

    fn header(&self) -> Header {
        Header::default().with("fingerprint", &self.fingerprint)
    }

    /// Path of `a`, which must exist; warns when it was produced under a different configuration.
    fn require(&self, a: &Artifact) -> Result<PathBuf> {
        let path = self.work().join(a.rel);
        if !path.exists() {
            return Err(CliError::Missing { stage: a.stage, what: a.what, path });
        }
        if let Some(found) = header_fingerprint(&path) {
            if found != self.fingerprint {
                warn!("{} was produced by configuration {found}, current is {}", path.display(), self.fingerprint);
            }
        }
        Ok(path)
    }

    fn load_ingested(&self) -> Result<(Corpus, SplitAssignment)> {
        let corpus_path = self.require(&CORPUS)?;
        let split_path = self.require(&SPLIT)?;
        let (corpus, _) = load_articles(&corpus_path, |_| true)?;
        Ok((corpus, SplitAssignment::read(&split_path)?))
    }

    fn load_categories(&self) -> Result<CategoryFile> {
        Ok(CategoryFile::read(&input(&self.config.paths.categories, "category file")?)?)
    }

    fn load_pruned(&self, corpus: &Corpus) -> Result<PrunedGraph> {
        self.require(&PRUNED)?;
        let categories = self.load_categories()?;
        Ok(PrunedGraph::read(&self.work().join(artifacts::PRUNED), corpus, &categories.names)?)
    }

    fn load_counts(&self) -> Result<ScoreTable> {
        let scores = self.require(&COUNTS)?;
        Ok(ScoreTable::read(&scores, &self.work().join(artifacts::COUNTS_MEMBERS))?)
    }

    fn load_category_lists(&self) -> Result<CategoryLists> {
        self.require(&CF_CATEGORY)?;
        let model = FactorModel::read(&self.work().join(artifacts::CF_CATEGORY))?;
        Ok(CategoryLists::from_factor_model(&model, self.config.pipeline.l2r.depth)?)
    }

    fn load_merge(&self, a: &Artifact) -> Result<MergeModel> {
        Ok(MergeModel::read(&self.require(a)?)?)
    }

    pub fn synth(&self) -> Result<()> {
        let s = generate_synthetic(&self.config.synth)?;
        if s.root.0 != self.config.root {
            warn!("synthetic root is {}, configured root is {}", s.root, self.config.root);
        }
        let paths = &self.config.paths;
        let header = self.header().with("seed", self.config.synth.seed);
        let tagged = |kind: &str| header.clone().merged(&Header::new(kind));
        s.corpus.write_jsonl(&paths.articles, &tagged("articles"))?;
        s.categories.write(&paths.categories, &tagged("categories"))?;
        s.types.write(&paths.types, &tagged("types"))?;
        if let Some(p) = &paths.type_universe {
            s.universe.write(p, &tagged("type-universe"))?;
        }
        if let Some(p) = &paths.annotations {
            sectionrec_core::catgraph::write_annotations(p, &s.annotations, &tagged("annotations"))?;
        }
        let planted = paths.articles.with_file_name(synth::files::PLANTED);
        s.write_planted(&planted, &tagged("planted"))?;
        info!(
            "synth: {} articles, {} categories ({} tags) written next to {}",
            s.corpus.len(),
            s.categories.names.len(),
            s.tags.len(),
            paths.articles.display()
        );
        Ok(())
    }

    pub fn ingest(&self) -> Result<()> {
        let paths = &self.config.paths;
        let articles = input(&paths.articles, "articles file")?;
        let categories = input(&paths.categories, "category file")?;
        let loaded = load_corpus(&articles, &categories)?;
        let blacklist = match &paths.blacklist {
            Some(p) => read_blacklist(p)?,
            None => default_blacklist(),
        };
        let (corpus, split) = pipeline::ingest(&loaded.corpus, &blacklist, &self.config.pipeline)?;
        pipeline::write_ingest(self.work(), &corpus, &split, &self.header())?;
        info!(
            "ingest: {} of {} articles kept; split {}/{}/{}",
            corpus.len(),
            loaded.corpus.len(),
            split.train.len(),
            split.test.len(),
            split.validation.len()
        );
        Ok(())
    }

    fn load_types(&self) -> Result<TypeMap> {
        let paths = &self.config.paths;
        let universe = match &paths.type_universe {
            Some(p) if p.exists() => TypeUniverse::read(p)?.len(),
            _ => DEFAULT_TYPE_UNIVERSE,
        };
        Ok(TypeMap::read(&input(&paths.types, "type map")?, universe)?)
    }

    pub fn prune_graph(&self) -> Result<()> {
        let (corpus, _) = self.load_ingested()?;
        let categories = self.load_categories()?;
        let types = self.load_types()?;
        let root = CategoryId(self.config.root);
        let network = pipeline::build_network(&corpus, &categories, &types, root, self.config.pipeline.threshold)?;
        network.write(self.work(), &self.header())?;
        info!(
            "prune-graph: {} cycle edges removed, {} of {} categories removed",
            network.removed_edges.len(),
            network.pruned.removed.len(),
            network.pruned.removed.len() + network.pruned.nodes.len()
        );
        if let Some(path) = self.config.paths.annotations.as_ref().filter(|p| p.exists()) {
            let annotations = read_annotations(path)?;
            let rows = threshold_sweep(&network.dag, &types, &annotations, &self.config.sweep_thresholds)?;
            write_sweep(&self.work().join(artifacts::SWEEP), &rows, &self.header().merged(&Header::new("sweep")))?;
        }
        Ok(())
    }

    pub fn train(&self, target: TrainTarget, source: L2rSource) -> Result<()> {
        let config = &self.config.pipeline;
        let header = self.header();
        match target {
            TrainTarget::Counts => {
                let (corpus, split) = self.load_ingested()?;
                let pruned = self.load_pruned(&corpus)?;
                let table = pipeline::train_counts(&corpus, &split, &pruned)?;
                pipeline::write_counts(self.work(), &table, &header)?;
                info!("train counts: {} categories with sections", table.len());
            }
            TrainTarget::CfArticle => {
                let (corpus, split) = self.load_ingested()?;
                let (model, holdout) = pipeline::train_article_cf(&corpus, &split, config)?;
                pipeline::write_article_cf(self.work(), &model, &holdout, &header)?;
                info!("train cf-article: final loss {:?}", model.loss_trace.last());
            }
            TrainTarget::CfCategory => {
                let table = self.load_counts()?;
                let model = pipeline::train_category_cf(&table, config)?;
                pipeline::write_category_cf(self.work(), &model, &header)?;
                info!("train cf-category: final loss {:?}", model.loss_trace.last());
            }
            TrainTarget::Lda => {
                let (corpus, split) = self.load_ingested()?;
                let (model, table) = pipeline::train_topics(&corpus, &split, &config.lda)?;
                pipeline::write_topics(self.work(), &model, &table, &header)?;
                info!("train lda: {} topics over {} words", model.topics(), model.vocab.len());
            }
            TrainTarget::L2r => {
                let table = self.load_counts()?;
                let lists = match source {
                    L2rSource::CfCategory => Some(self.load_category_lists()?),
                    L2rSource::Counts => None,
                };
                let (corpus, split) = self.load_ingested()?;
                let pruned = self.load_pruned(&corpus)?;
                let model = match &lists {
                    Some(lists) => pipeline::train_l2r(&corpus, &split, &pruned, lists, config)?,
                    None => pipeline::train_l2r(&corpus, &split, &pruned, &table, config)?,
                };
                let name = match source {
                    L2rSource::Counts => counts::METHOD,
                    L2rSource::CfCategory => factorize::CATEGORY_METHOD,
                };
                model.write(&self.work().join(pipeline::l2r_artifact(name)), &header.merged(&Header::new("l2r")))?;
                info!(
                    "train l2r: {} features, validation P@{} {:.4} (unweighted sum {:.4})",
                    model.selected.len(),
                    model.k_opt,
                    model.validation_score,
                    model.baseline_score
                );
            }
        }
        Ok(())
    }

    pub fn recommend(&self, request: &RecommendRequest, out: &mut impl Write) -> Result<()> {
        let method: Method = request.method.parse()?;
        let ranking = match (request.article, request.category) {
            (Some(id), _) => self.recommend_article(ArticleId(id), method, request)?,
            (None, Some(id)) => self.recommend_category(CategoryId(id), method, request.k)?,
            (None, None) => return Err(CliError::Config("pass --article-id or --category-id".into())),
        };
        if let Some(flag) = ranking.flag {
            warn!("{flag:?}: the ranking may be empty or uninformative");
        }
        for (rank, (title, score)) in ranking.entries.iter().enumerate() {
            writeln!(out, "{}\t{title}\t{score}", rank + 1).map_err(|e| anyhow!(e))?;
        }
        Ok(())
    }

    fn recommend_category(&self, c: CategoryId, method: Method, k: usize) -> Result<Ranking> {
        match method {
            Method::Counts => {
                let table = self.load_counts()?;
                Ok(recommend_for_category(&table, c, k)?)
            }
            Method::CfCategory => {
                self.require(&CF_CATEGORY)?;
                let model = FactorModel::read(&self.work().join(artifacts::CF_CATEGORY))?;
                let entries = model
                    .row_scores(c.0)
                    .map_err(|_| anyhow!("category {c} has no row in the category CF model"))?
                    .into_iter()
                    .take(k)
                    .collect();
                Ok(Ranking { method: method.name().into(), entries, flag: None })
            }
            _ => Err(CliError::Config(format!("method {method} cannot rank sections for a category"))),
        }
    }

    fn recommend_article(&self, id: ArticleId, method: Method, request: &RecommendRequest) -> Result<Ranking> {
        let (corpus, split) = self.load_ingested()?;
        let article = corpus
            .get(id)
            .ok_or_else(|| anyhow!("article {id} is not in the ingested corpus"))?;
        let models = Loaded::load(self, &[method])?;
        let pruned = self.load_pruned(&corpus)?;
        let context = models.context(&corpus, &split, &pruned, &self.config)?;
        let case = EvalCase { article, truth: Default::default() };
        let recommender = context.recommender(method, !request.include_existing)?;
        Ok(recommender.recommend(&case, request.k))
    }

    pub fn evaluate(&self, methods: &[String], k_max: Option<usize>, out: &mut impl Write) -> Result<()> {
        let methods: Vec<Method> = methods.iter().map(|m| m.parse()).collect::<std::result::Result<_, _>>()?;
        let k_max = k_max.unwrap_or(self.config.pipeline.k_max);
        if k_max == 0 {
            return Err(CliError::Config("--kmax must be at least 1".into()));
        }
        let (corpus, split) = self.load_ingested()?;
        let models = Loaded::load(self, &methods)?;
        let pruned = self.load_pruned(&corpus)?;
        let context = models.context(&corpus, &split, &pruned, &self.config)?;
        let mut reports = Vec::with_capacity(methods.len());
        for &m in &methods {
            let mut report = context.evaluate(m, k_max)?;
            report.fingerprint = Some(self.fingerprint.clone());
            reports.push(report);
        }
        pipeline::write_reports(self.work(), &reports, &self.header())?;
        let ks: Vec<usize> = [1, 5, 10, 20].into_iter().filter(|&k| k <= k_max).collect();
        write!(out, "{}", render_table(&reports, &ks)).map_err(|e| anyhow!(e))?;
        Ok(())
    }

    pub fn coverage(&self, x_max: usize, out: &mut impl Write) -> Result<()> {
        let table = self.load_counts()?;
        let curve = counts::coverage_curve(&table, x_max);
        counts::write_coverage(&self.work().join(artifacts::COVERAGE), &curve, &self.header().merged(&Header::new("coverage")))?;
        for (x, fraction) in curve {
            writeln!(out, "{x}\t{fraction}").map_err(|e| anyhow!(e))?;
        }
        Ok(())
    }
}

/// Models loaded from the work dir for a set of methods.
#[derive(Default)]
struct Loaded {
    counts: Option<ScoreTable>,
    counts_merge: Option<MergeModel>,
    topics: Option<(TopicModel, TopicSectionTable)>,
    article_cf: Option<(FactorModel, Holdout)>,
    category_lists: Option<CategoryLists>,
    category_merge: Option<MergeModel>,
}

impl Loaded {
    fn load(run: &Run, methods: &[Method]) -> Result<Self> {
        let mut loaded = Loaded::default();
        for &m in methods {
            match m {
                Method::Counts | Method::CountsL2r if loaded.counts.is_none() => loaded.counts = Some(run.load_counts()?),
                Method::CfCategory | Method::CfCategoryL2r if loaded.category_lists.is_none() => {
                    loaded.category_lists = Some(run.load_category_lists()?)
                }
                Method::Topics => {
                    let path = run.require(&LDA)?;
                    let table = TopicSectionTable::read(&run.work().join(artifacts::LDA_SECTIONS))?;
                    loaded.topics = Some((TopicModel::read(&path)?, table));
                }
                Method::CfArticle => {
                    run.require(&CF_ARTICLE)?;
                    let model = FactorModel::read(&run.work().join(artifacts::CF_ARTICLE))?;
                    loaded.article_cf = Some((model, Holdout::read(&run.work().join(artifacts::HOLDOUT))?));
                }
                _ => {}
            }
            match m {
                Method::CountsL2r => loaded.counts_merge = Some(run.load_merge(&L2R_COUNTS)?),
                Method::CfCategoryL2r => loaded.category_merge = Some(run.load_merge(&L2R_CF_CATEGORY)?),
                _ => {}
            }
        }
        Ok(loaded)
    }

    fn context<'a>(
        &'a self,
        corpus: &'a Corpus,
        split: &'a SplitAssignment,
        pruned: &PrunedGraph,
        config: &RunConfig,
    ) -> Result<Context<'a>> {
        let mut context = Context::new(corpus, split, pruned, &config.pipeline)?;
        context.counts = self.counts.as_ref();
        context.counts_merge = self.counts_merge.as_ref();
        context.topics = self.topics.as_ref().map(|(m, t)| (m, t));
        context.article_cf = self.article_cf.as_ref().map(|(m, h)| (m, h));
        context.category_lists = self.category_lists.as_ref();
        context.category_merge = self.category_merge.as_ref();
        Ok(context)
    }
}

/// `fingerprint` entry of an artifact's leading comment block, if any.
fn header_fingerprint(path: &Path) -> Option<String> {
    let reader = persist::open_reader(path).ok()?;
    reader
        .lines()
        .map_while(|l| l.ok())
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# fingerprint: ").map(str::to_string))
}
