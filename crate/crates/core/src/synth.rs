//! Deterministic synthetic corpora with planted category–section structure.
//!
//! Layout: a root category, one group category per entity type below it, leaf
//! categories below the groups, and "tag" categories (also below groups) whose
//! members are drawn evenly from several groups and are therefore impure. Each
//! leaf plants a fixed list of sections with exact inclusion counts; the first
//! one is its group's signature section and appears in every member.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catgraph::{self, Annotation, CategoryFile, TypeMap, TypeUniverse, DEFAULT_TYPE_UNIVERSE};
use crate::corpus::{Article, ArticleId, CategoryId, Corpus, SectionTitle};
use crate::error::{Error, Result};
use crate::persist::{self, Header};

pub const ROOT_NAME: &str = "Main topic classification";

const TYPE_NAMES: [&str; 55] = [
    "Populated place", "University", "Athlete", "Politician", "Musician", "Writer", "Scientist",
    "Company", "School", "Sports team", "Band", "Building", "River", "Mountain", "Park", "Airport",
    "Road", "Station", "Film", "Album", "Single", "Book", "Periodical", "Video game", "Software",
    "Species", "Plant", "Animal", "Disease", "Drug", "Chemical substance", "Event", "Sports event",
    "Military conflict", "Election", "Award", "Language", "Ethnic group", "Holiday", "Device",
    "Weapon", "Ship", "Aircraft", "Automobile", "Locomotive", "Food", "Beverage", "Currency",
    "Colour", "Sport", "Artwork", "Academic subject", "Religion", "Legislature", "Government agency",
];

const BLACKLIST_EXTRAS: [&str; 3] = ["References", "External links", "See also"];

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub groups: usize,
    pub leaf_categories: usize,
    pub articles_per_category: usize,
    /// Inclusion probability of each planted section, in planted order; the
    /// first entry belongs to the group signature section.
    pub planted_probabilities: Vec<f64>,
    /// Planted sections shared within a group (the rest are leaf-specific).
    pub shared_per_leaf: usize,
    pub group_pool: usize,
    /// Probability that a planted section occurrence is replaced by noise.
    pub noise: f64,
    pub noise_pool: usize,
    /// Tag categories as a fraction of leaf categories.
    pub tag_fraction: f64,
    pub tag_groups: usize,
    pub tag_members_per_group: usize,
    /// Two-cycles inserted among tag categories.
    pub cycles: usize,
    /// Probability that an article is also a direct member of its group category.
    pub broad_membership: f64,
    pub untyped_fraction: f64,
    pub stub_fraction: f64,
    /// Probability that an article carries one boilerplate (blacklisted) title.
    pub boilerplate_rate: f64,
    pub tokens_per_article: usize,
    pub leaf_vocabulary: usize,
    pub group_vocabulary: usize,
    pub global_vocabulary: usize,
    /// Token shares drawn from the leaf and group vocabularies; the rest is global.
    pub leaf_token_share: f64,
    pub group_token_share: f64,
    pub annotation_articles: usize,
    pub type_universe: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            groups: 10,
            leaf_categories: 200,
            articles_per_category: 30,
            planted_probabilities: vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3],
            shared_per_leaf: 3,
            group_pool: 6,
            noise: 0.1,
            noise_pool: 300,
            tag_fraction: 0.2,
            tag_groups: 3,
            tag_members_per_group: 6,
            cycles: 3,
            broad_membership: 0.3,
            untyped_fraction: 0.02,
            stub_fraction: 0.02,
            boilerplate_rate: 0.3,
            tokens_per_article: 40,
            leaf_vocabulary: 20,
            group_vocabulary: 40,
            global_vocabulary: 300,
            leaf_token_share: 0.3,
            group_token_share: 0.4,
            annotation_articles: 200,
            type_universe: DEFAULT_TYPE_UNIVERSE,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Expected distinct sections per regular article after boilerplate removal.
    pub fn expected_sections(&self) -> f64 {
        self.planted_probabilities.iter().sum()
    }

    pub fn tag_categories(&self) -> usize {
        (self.leaf_categories as f64 * self.tag_fraction).round() as usize
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synthetic corpus: {m}")));
        if self.groups == 0 || self.leaf_categories == 0 || self.articles_per_category == 0 {
            return bad("groups, leaf categories and articles per category must be positive");
        }
        if self.groups > self.type_universe || self.type_universe > TYPE_NAMES.len() {
            return bad("need one entity type per group and at most 55 types");
        }
        let p = &self.planted_probabilities;
        if p.is_empty() || p[0] != 1.0 || p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return bad("planted probabilities must start at 1 and lie in [0, 1]");
        }
        if self.shared_per_leaf >= p.len() || self.shared_per_leaf > self.group_pool {
            return bad("shared sections must fit both the planted list and the group pool");
        }
        for (name, x) in [
            ("noise", self.noise),
            ("tag_fraction", self.tag_fraction),
            ("broad_membership", self.broad_membership),
            ("untyped_fraction", self.untyped_fraction),
            ("stub_fraction", self.stub_fraction),
            ("boilerplate_rate", self.boilerplate_rate),
        ] {
            if !(0.0..=1.0).contains(&x) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.noise > 0.0 && self.noise_pool == 0 {
            return bad("noise needs a non-empty noise pool");
        }
        if self.tag_categories() > 0 && (self.tag_groups == 0 || self.tag_groups > self.groups) {
            return bad("tag categories need between 1 and `groups` source groups");
        }
        if 2 * self.cycles > self.tag_categories() {
            return bad("each cycle needs two tag categories");
        }
        if self.leaf_token_share + self.group_token_share > 1.0
            || self.leaf_vocabulary == 0
            || self.group_vocabulary == 0
            || self.global_vocabulary == 0
        {
            return bad("token shares must sum to at most 1 over non-empty vocabularies");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub config: SynthConfig,
    pub corpus: Corpus,
    pub categories: CategoryFile,
    pub universe: TypeUniverse,
    pub types: TypeMap,
    pub root: CategoryId,
    pub groups: Vec<CategoryId>,
    pub leaves: Vec<CategoryId>,
    pub tags: Vec<CategoryId>,
    pub maintenance: CategoryId,
    /// Per leaf, planted sections with their inclusion probabilities, best first.
    pub planted: BTreeMap<CategoryId, Vec<(SectionTitle, f64)>>,
    /// Is-a labels for (article, non-root ancestor) pairs of sampled articles.
    pub annotations: Vec<Annotation>,
}

fn title(s: String) -> SectionTitle {
    SectionTitle::new(&s).expect("generated titles are non-empty")
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let g_count = config.groups;

    let universe = TypeUniverse {
        names: TYPE_NAMES[..config.type_universe].iter().map(|s| s.to_string()).collect(),
    };
    let root = CategoryId(0);
    let groups: Vec<CategoryId> = (0..g_count).map(|g| CategoryId(1 + g as u64)).collect();
    let leaves: Vec<CategoryId> = (0..config.leaf_categories).map(|l| CategoryId(1000 + l as u64)).collect();
    let tags: Vec<CategoryId> = (0..config.tag_categories()).map(|t| CategoryId(100_000 + t as u64)).collect();
    let maintenance = CategoryId(900_000);
    let group_of_leaf = |l: usize| l % g_count;

    let mut categories = CategoryFile::default();
    categories.names.insert(root, ROOT_NAME.to_string());
    categories.names.insert(maintenance, "Articles needing cleanup".to_string());
    for (g, &c) in groups.iter().enumerate() {
        categories.names.insert(c, format!("{}s", universe.names[g]));
        categories.edges.insert((c, root));
    }
    for (l, &c) in leaves.iter().enumerate() {
        let g = group_of_leaf(l);
        categories.names.insert(c, format!("{}s of region {}", universe.names[g], l / g_count + 1));
        categories.edges.insert((c, groups[g]));
    }

    let signature = |g: usize| title(format!("{} overview", universe.names[g]));
    let group_pool: Vec<Vec<SectionTitle>> = (0..g_count)
        .map(|g| (1..=config.group_pool).map(|i| title(format!("{} topic {i}", universe.names[g]))).collect())
        .collect();
    let noise_pool: Vec<SectionTitle> = (1..=config.noise_pool).map(|i| title(format!("Miscellany {i}"))).collect();

    let mut planted = BTreeMap::new();
    for (l, &c) in leaves.iter().enumerate() {
        let g = group_of_leaf(l);
        let mut sections = vec![signature(g)];
        sections.extend(group_pool[g].choose_multiple(&mut rng, config.shared_per_leaf).cloned());
        let own = config.planted_probabilities.len() - 1 - config.shared_per_leaf;
        sections.extend((1..=own).map(|i| title(format!("Region {} section {i}", l + 1))));
        sections[1..].shuffle(&mut rng);
        let list: Vec<(SectionTitle, f64)> = sections.into_iter().zip(config.planted_probabilities.iter().copied()).collect();
        planted.insert(c, list);
    }

    let vocab = |prefix: String, n: usize| -> Vec<String> { (0..n).map(|i| format!("{prefix}{i}")).collect() };
    let global_vocab = vocab("w".into(), config.global_vocabulary);
    let group_vocab: Vec<Vec<String>> = (0..g_count).map(|g| vocab(format!("g{g}w"), config.group_vocabulary)).collect();

    let mut articles = Vec::new();
    let mut types = TypeMap::new(config.type_universe);
    let mut next_id = 1u64;
    let mut by_group: Vec<Vec<ArticleId>> = vec![Vec::new(); g_count];
    let mut leaf_of: BTreeMap<ArticleId, usize> = BTreeMap::new();
    for (l, &c) in leaves.iter().enumerate() {
        let g = group_of_leaf(l);
        let n = config.articles_per_category;
        let leaf_vocab = vocab(format!("l{l}w"), config.leaf_vocabulary);
        // exact inclusion counts: section j goes to round(p_j · n) members
        let mut sections: Vec<Vec<SectionTitle>> = vec![Vec::new(); n];
        for (s, p) in &planted[&c] {
            let count = (p * n as f64).round() as usize;
            for i in rand::seq::index::sample(&mut rng, n, count.min(n)) {
                sections[i].push(s.clone());
            }
        }
        for secs in sections {
            let id = ArticleId(next_id);
            next_id += 1;
            let mut secs: Vec<SectionTitle> = secs
                .into_iter()
                .map(|s| if rng.random::<f64>() < config.noise { noise_pool.choose(&mut rng).cloned().unwrap_or(s) } else { s })
                .collect();
            secs.dedup();
            secs = dedup_keep_order(secs);
            secs.shuffle(&mut rng);
            if rng.random::<f64>() < config.boilerplate_rate {
                secs.push(title(BLACKLIST_EXTRAS.choose(&mut rng).expect("non-empty").to_string()));
            }
            let tokens = (0..config.tokens_per_article)
                .map(|_| {
                    let u = rng.random::<f64>();
                    let pool = if u < config.leaf_token_share {
                        &leaf_vocab
                    } else if u < config.leaf_token_share + config.group_token_share {
                        &group_vocab[g]
                    } else {
                        &global_vocab
                    };
                    pool.choose(&mut rng).expect("non-empty vocabulary").clone()
                })
                .collect();
            let mut cats = BTreeSet::from([c]);
            if rng.random::<f64>() < config.broad_membership {
                cats.insert(groups[g]);
            }
            if rng.random::<f64>() >= config.untyped_fraction {
                types.insert(id, g)?;
            }
            by_group[g].push(id);
            leaf_of.insert(id, l);
            articles.push(Article {
                id,
                title: format!("{} {}", universe.names[g], id),
                tokens,
                sections: secs,
                categories: cats,
                is_stub: false,
                quality_class: None,
            });
        }
    }

    // impure tag categories: even draws from several groups
    let mut tag_members: BTreeMap<ArticleId, BTreeSet<CategoryId>> = BTreeMap::new();
    for (t, &c) in tags.iter().enumerate() {
        let parent = groups[rng.random_range(0..g_count)];
        categories.names.insert(c, format!("Tag {}", t + 1));
        categories.edges.insert((c, parent));
        let chosen = rand::seq::index::sample(&mut rng, g_count, config.tag_groups);
        for g in chosen {
            for &a in by_group[g].choose_multiple(&mut rng, config.tag_members_per_group) {
                tag_members.entry(a).or_default().insert(c);
            }
        }
    }
    for i in 0..config.cycles {
        let (a, b) = (tags[2 * i], tags[2 * i + 1]);
        categories.edges.insert((a, b));
        categories.edges.insert((b, a));
    }
    for article in &mut articles {
        if let Some(extra) = tag_members.get(&article.id) {
            article.categories.extend(extra.iter().copied());
        }
        if article.id.0 % 50 == 0 {
            article.categories.insert(maintenance);
        }
    }

    let regular = articles.len();
    let stubs = (regular as f64 * config.stub_fraction).round() as usize;
    for _ in 0..stubs {
        let l = rng.random_range(0..config.leaf_categories);
        let g = group_of_leaf(l);
        let id = ArticleId(next_id);
        next_id += 1;
        let sections = if rng.random::<bool>() { vec![signature(g)] } else { Vec::new() };
        types.insert(id, g)?;
        articles.push(Article {
            id,
            title: format!("{} stub {}", universe.names[g], id),
            tokens: group_vocab[g].choose_multiple(&mut rng, 5).cloned().collect(),
            sections,
            categories: BTreeSet::from([leaves[l]]),
            is_stub: true,
            quality_class: Some("stub".into()),
        });
    }

    let annotations = annotate(
        &articles[..regular],
        &categories,
        root,
        &leaves,
        &groups,
        &leaf_of,
        config.annotation_articles,
        &mut rng,
    );
    let corpus = Corpus::new(articles, format!("synthetic seed {}", config.seed))?;
    Ok(SyntheticCorpus {
        config: config.clone(),
        corpus,
        categories,
        universe,
        types,
        root,
        groups,
        leaves,
        tags,
        maintenance,
        planted,
        annotations,
    })
}

fn dedup_keep_order(v: Vec<SectionTitle>) -> Vec<SectionTitle> {
    let mut seen = BTreeSet::new();
    v.into_iter().filter(|s| seen.insert(s.clone())).collect()
}

/// Labels every non-root ancestor of sampled articles: an article is an
/// instance of its own leaf and group only.
#[allow(clippy::too_many_arguments)]
fn annotate(
    articles: &[Article],
    categories: &CategoryFile,
    root: CategoryId,
    leaves: &[CategoryId],
    groups: &[CategoryId],
    leaf_of: &BTreeMap<ArticleId, usize>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Annotation> {
    let mut parents: BTreeMap<CategoryId, Vec<CategoryId>> = BTreeMap::new();
    for &(c, p) in &categories.edges {
        parents.entry(c).or_default().push(p);
    }
    let mut annotations = Vec::new();
    let picks = rand::seq::index::sample(rng, articles.len(), count.min(articles.len())).into_vec();
    let mut picks: Vec<&Article> = picks.into_iter().map(|i| &articles[i]).collect();
    picks.sort_by_key(|a| a.id);
    for article in picks {
        let l = leaf_of[&article.id];
        let own = [leaves[l], groups[l % groups.len()]];
        let mut seen: BTreeSet<CategoryId> = BTreeSet::new();
        let mut stack: Vec<CategoryId> = article.categories.iter().copied().collect();
        while let Some(c) = stack.pop() {
            if seen.insert(c) {
                stack.extend(parents.get(&c).into_iter().flatten().copied());
            }
        }
        for c in seen.into_iter().filter(|&c| c != root && categories.contains(c)) {
            if parents.contains_key(&c) {
                annotations.push(Annotation {
                    article: article.id,
                    category: c,
                    is_instance: own.contains(&c),
                });
            }
        }
    }
    annotations
}

/// File names used by [`SyntheticCorpus::write_to`].
pub mod files {
    pub const ARTICLES: &str = "articles.jsonl";
    pub const CATEGORIES: &str = "categories.tsv";
    pub const TYPES: &str = "types.tsv";
    pub const TYPE_UNIVERSE: &str = "type_universe.tsv";
    pub const PLANTED: &str = "planted.tsv";
    pub const ANNOTATIONS: &str = "annotations.tsv";
}

impl SyntheticCorpus {
    pub fn write_to(&self, dir: &Path, header: &Header) -> Result<()> {
        let header = header.clone().with("seed", self.config.seed).with("root", self.root);
        self.corpus.write_jsonl(&dir.join(files::ARTICLES), &header)?;
        self.categories.write(&dir.join(files::CATEGORIES), &header)?;
        self.types.write(&dir.join(files::TYPES), &header)?;
        self.universe.write(&dir.join(files::TYPE_UNIVERSE), &header)?;
        catgraph::write_annotations(&dir.join(files::ANNOTATIONS), &self.annotations, &header)?;
        self.write_planted(&dir.join(files::PLANTED), &header)
    }

    /// `category<TAB>section<TAB>probability` rows in planted order.
    pub fn write_planted(&self, path: &Path, header: &Header) -> Result<()> {
        persist::write_file(path, |w| {
            header.write_to(w)?;
            for (c, list) in &self.planted {
                for (s, p) in list {
                    writeln!(w, "{c}\t{s}\t{p}")?;
                }
            }
            Ok(())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catgraph::{break_cycles, gini, prune, restrict_to_root, threshold_sweep, CategoryGraph, TypeHistogram};
    use crate::corpus::{default_blacklist, filter_corpus};
    use crate::counts::compute_scores;

    fn small() -> SynthConfig {
        SynthConfig {
            groups: 5,
            leaf_categories: 10,
            articles_per_category: 50,
            noise: 0.0,
            annotation_articles: 100,
            cycles: 1,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn zero_noise_sections_come_from_the_planted_list() {
        let s = generate_synthetic(&small()).unwrap();
        let blacklist = default_blacklist();
        for a in s.corpus.articles.iter().filter(|a| !a.is_stub) {
            let leaf = *a.categories.iter().find(|c| s.planted.contains_key(c)).unwrap();
            let planted: BTreeSet<&SectionTitle> = s.planted[&leaf].iter().map(|(t, _)| t).collect();
            for sec in &a.sections {
                assert!(planted.contains(sec) || blacklist.contains(sec), "{sec}");
            }
        }
    }

    #[test]
    fn zero_noise_counts_reproduce_planted_ranking() {
        let s = generate_synthetic(&small()).unwrap();
        let graph = CategoryGraph::from_corpus(&s.categories, &s.corpus, s.root).unwrap();
        let (dag, _) = break_cycles(&restrict_to_root(&graph, s.root).unwrap());
        let regular: Vec<&Article> = s.corpus.articles.iter().filter(|a| !a.is_stub).collect();
        let table = compute_scores(regular.iter().copied(), &dag).unwrap();
        for (leaf, list) in &s.planted {
            let got: Vec<(&SectionTitle, f64)> = table.get(*leaf).unwrap().sections.iter()
                .filter(|(t, _)| list.iter().any(|(x, _)| x == t))
                .map(|(t, p)| (t, *p))
                .collect();
            let want: Vec<(&SectionTitle, f64)> = list.iter().map(|(t, p)| (t, *p)).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn tag_categories_mix_types() {
        let s = generate_synthetic(&small()).unwrap();
        assert_eq!(s.tags.len(), 2);
        for &tag in &s.tags {
            let mut hist = TypeHistogram::zeros(s.universe.len());
            let mut kinds = BTreeSet::new();
            for a in s.corpus.articles.iter().filter(|a| a.categories.contains(&tag)) {
                if let Some(t) = s.types.get(a.id) {
                    hist.0[t] += 1;
                    kinds.insert(t);
                }
            }
            assert!(kinds.len() >= 2, "{kinds:?}");
            assert!(gini(&hist).unwrap() < 0.966);
        }
    }

    #[test]
    fn same_seed_same_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic(&small()).unwrap().write_to(a.path(), &Header::new("synth")).unwrap();
        generate_synthetic(&small()).unwrap().write_to(b.path(), &Header::new("synth")).unwrap();
        for name in [files::ARTICLES, files::CATEGORIES, files::TYPES, files::PLANTED, files::ANNOTATIONS] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn files_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate_synthetic(&small()).unwrap();
        s.write_to(dir.path(), &Header::new("synth")).unwrap();
        let loaded = crate::corpus::load_corpus(&dir.path().join(files::ARTICLES), &dir.path().join(files::CATEGORIES)).unwrap();
        assert_eq!(loaded.corpus.articles, s.corpus.articles);
        assert_eq!(loaded.categories, s.categories);
        assert_eq!(TypeMap::read(&dir.path().join(files::TYPES), 55).unwrap(), s.types);
        assert_eq!(catgraph::read_annotations(&dir.path().join(files::ANNOTATIONS)).unwrap(), s.annotations);
    }

    #[test]
    fn filtered_mean_matches_configured_mean() {
        let s = generate_synthetic(&SynthConfig::default()).unwrap();
        let filtered = filter_corpus(&s.corpus, &default_blacklist(), true, true);
        let mean = crate::corpus::corpus_stats(&filtered).mean_sections;
        let want = s.config.expected_sections();
        assert!((mean - want).abs() <= 0.05 * want, "{mean} vs {want}");
    }

    #[test]
    fn sweep_separates_tag_paths() {
        let s = generate_synthetic(&small()).unwrap();
        assert!(s.annotations.iter().any(|a| !a.is_instance));
        let graph = CategoryGraph::from_corpus(&s.categories, &s.corpus, s.root).unwrap();
        let (dag, _) = break_cycles(&restrict_to_root(&graph, s.root).unwrap());
        let rows = threshold_sweep(&dag, &s.types, &s.annotations, &[0.0, 0.966]).unwrap();
        assert!(rows[0].precision < 1.0);
        assert_eq!((rows[1].precision, rows[1].recall), (1.0, 1.0));
        let pruned = prune(&dag, &s.types, 0.966).unwrap();
        for t in &s.tags {
            assert!(pruned.removed.contains(t));
        }
        for c in s.leaves.iter().chain(&s.groups) {
            assert!(pruned.contains(*c));
        }
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        for bad in [
            SynthConfig { leaf_categories: 0, ..small() },
            SynthConfig { groups: 60, ..small() },
            SynthConfig { planted_probabilities: vec![0.5, 0.4], ..small() },
            SynthConfig { noise: 1.5, ..small() },
            SynthConfig { cycles: 5, ..small() },
        ] {
            assert!(matches!(generate_synthetic(&bad), Err(Error::InvalidConfig(_))));
        }
    }
}
