//! Category–section counts: P(S|C) per category, per-category rankings,
//! unweighted-sum merging for articles and the coverage curve.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use crate::catgraph::CategoryGraph;
use crate::corpus::{Article, CategoryId, SectionTitle};
use crate::error::{Error, Result};
use crate::persist::{self, Header};
use crate::ranking::{rank_order, Ranking, RankingFlag};

pub const METHOD: &str = "counts";

/// Which categories an article draws recommendations from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryScope {
    /// Direct memberships that survived pruning.
    #[default]
    Direct,
    /// Surviving direct memberships and all their ancestors.
    Ancestors,
}

/// Maps an article to the surviving categories it is scored from.
#[derive(Clone, Debug)]
pub struct CategoryResolver {
    scope: CategoryScope,
    nodes: BTreeSet<CategoryId>,
    ancestors: BTreeMap<CategoryId, Vec<CategoryId>>,
}

impl CategoryResolver {
    pub fn new(graph: &CategoryGraph, scope: CategoryScope) -> Result<Self> {
        let ancestors = match scope {
            CategoryScope::Direct => BTreeMap::new(),
            CategoryScope::Ancestors => graph.ancestor_table()?,
        };
        Ok(CategoryResolver {
            scope,
            nodes: graph.nodes().collect(),
            ancestors,
        })
    }

    pub fn scope(&self) -> CategoryScope {
        self.scope
    }

    /// Ascending category ids.
    pub fn categories(&self, article: &Article) -> Vec<CategoryId> {
        let direct = article.categories.iter().filter(|c| self.nodes.contains(c));
        match self.scope {
            CategoryScope::Direct => direct.copied().collect(),
            CategoryScope::Ancestors => direct
                .flat_map(|c| self.ancestors[c].iter().copied())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoryScores {
    /// Closure members with at least one section.
    pub members: usize,
    /// Sorted by descending P(S|C), ties by ascending title.
    pub sections: Vec<(SectionTitle, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable {
    pub categories: BTreeMap<CategoryId, CategoryScores>,
}

/// P(S|C) = (closure members of C containing S) / (closure members of C).
///
/// Only training articles with at least one section are counted; each section
/// counts once per article. Categories without such members are omitted.
pub fn compute_scores<'a>(
    train: impl IntoIterator<Item = &'a Article>,
    graph: &CategoryGraph,
) -> Result<ScoreTable> {
    let table = graph.ancestor_table()?;
    let mut members: BTreeMap<CategoryId, usize> = BTreeMap::new();
    let mut counts: BTreeMap<CategoryId, BTreeMap<&'a SectionTitle, usize>> = BTreeMap::new();
    for article in train {
        if !article.has_sections() {
            continue;
        }
        let closure: BTreeSet<CategoryId> = article
            .categories
            .iter()
            .filter_map(|c| table.get(c))
            .flatten()
            .copied()
            .collect();
        if closure.is_empty() {
            continue;
        }
        let sections = article.distinct_sections();
        for c in closure {
            *members.entry(c).or_default() += 1;
            let per = counts.entry(c).or_default();
            for &s in &sections {
                *per.entry(s).or_default() += 1;
            }
        }
    }
    let categories = members
        .into_iter()
        .map(|(c, m)| {
            let mut sections: Vec<(SectionTitle, f64)> = counts
                .remove(&c)
                .unwrap_or_default()
                .into_iter()
                .map(|(s, n)| (s.clone(), n as f64 / m as f64))
                .collect();
            sections.sort_by(rank_order);
            (c, CategoryScores { members: m, sections })
        })
        .collect();
    Ok(ScoreTable { categories })
}

impl ScoreTable {
    pub fn get(&self, c: CategoryId) -> Option<&CategoryScores> {
        self.categories.get(&c)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// `category_id<TAB>section<TAB>probability` to `scores`, and
    /// `category_id<TAB>members` to `members`.
    pub fn write(&self, scores: &Path, members: &Path, header: &Header) -> Result<()> {
        persist::write_file(scores, |w| {
            header.write_to(w)?;
            for (c, s) in &self.categories {
                for (title, p) in &s.sections {
                    writeln!(w, "{c}\t{title}\t{p}")?;
                }
            }
            Ok(())
        })?;
        persist::write_file(members, |w| {
            header.write_to(w)?;
            for (c, s) in &self.categories {
                writeln!(w, "{c}\t{}", s.members)?;
            }
            Ok(())
        })
    }

    pub fn read(scores: &Path, members: &Path) -> Result<Self> {
        let members_file = persist::read_text(members)?;
        let mut categories = BTreeMap::new();
        for (line, raw) in &members_file.lines {
            let bad = || members_file.parse_error(*line, "expected `category_id<TAB>members`");
            let f = persist::split_fields(raw, 2).ok_or_else(bad)?;
            categories.insert(
                CategoryId(f[0].parse().map_err(|_| bad())?),
                CategoryScores {
                    members: f[1].parse().map_err(|_| bad())?,
                    sections: Vec::new(),
                },
            );
        }
        let scores_file = persist::read_text(scores)?;
        for (line, raw) in &scores_file.lines {
            let bad = || scores_file.parse_error(*line, "expected `category_id<TAB>section<TAB>probability`");
            let f = persist::split_fields(raw, 3).ok_or_else(bad)?;
            let c = CategoryId(f[0].parse().map_err(|_| bad())?);
            let title = SectionTitle::new(f[1]).map_err(|_| bad())?;
            let p: f64 = f[2].parse().map_err(|_| bad())?;
            categories
                .get_mut(&c)
                .ok_or_else(|| scores_file.parse_error(*line, format!("category {c} has no member count")))?
                .sections
                .push((title, p));
        }
        for s in categories.values_mut() {
            s.sections.sort_by(rank_order);
        }
        Ok(ScoreTable { categories })
    }
}

pub fn recommend_for_category(table: &ScoreTable, c: CategoryId, k: usize) -> Result<Ranking> {
    let scores = table.get(c).ok_or(Error::UnknownCategory(c))?;
    Ok(Ranking {
        method: METHOD.to_string(),
        entries: scores.sections.iter().take(k).cloned().collect(),
        flag: None,
    })
}

/// Unweighted sum of P(S|C) over `categories` (as given by a
/// [`CategoryResolver`]), summed in ascending category order.
pub fn recommend_for_article(
    table: &ScoreTable,
    categories: &[CategoryId],
    article: &Article,
    k: usize,
    exclude_existing: bool,
) -> Ranking {
    if categories.is_empty() {
        return Ranking::empty(METHOD).with_flag(RankingFlag::NoSurvivingCategory);
    }
    let mut ordered = categories.to_vec();
    ordered.sort_unstable();
    ordered.dedup();
    let mut merged: BTreeMap<SectionTitle, f64> = BTreeMap::new();
    for c in ordered {
        for (title, p) in table.get(c).map(|s| s.sections.as_slice()).unwrap_or_default() {
            *merged.entry(title.clone()).or_default() += p;
        }
    }
    let existing = if exclude_existing {
        article.distinct_sections()
    } else {
        BTreeSet::new()
    };
    Ranking::from_scores(METHOD, merged, &existing, k)
}

/// For x = 1..=x_max, the fraction of categories in the table with at least x
/// sections.
pub fn coverage_curve(table: &ScoreTable, x_max: usize) -> Vec<(usize, f64)> {
    let total = table.len();
    (1..=x_max)
        .map(|x| {
            let n = table.categories.values().filter(|s| s.sections.len() >= x).count();
            (x, if total == 0 { 0.0 } else { n as f64 / total as f64 })
        })
        .collect()
}

pub fn write_coverage(path: &Path, curve: &[(usize, f64)], header: &Header) -> Result<()> {
    persist::write_file(path, |w| {
        header.write_to(w)?;
        writeln!(w, "x\tfraction")?;
        for (x, f) in curve {
            writeln!(w, "{x}\t{f}")?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::{article, title};
    use proptest::prelude::*;

    fn c(id: u64) -> CategoryId {
        CategoryId(id)
    }

    /// Root 1 with children 2 and 3.
    fn small_graph() -> CategoryGraph {
        CategoryGraph::new(
            [(c(1), "R".to_string()), (c(2), "A".into()), (c(3), "B".into())].into(),
            [(c(2), c(1)), (c(3), c(1))],
            BTreeMap::new(),
            c(1),
        )
    }

    fn titles(r: &Ranking) -> Vec<&str> {
        r.titles().map(|t| t.as_str()).collect()
    }

    #[test]
    fn hand_counted_probability() {
        let arts = vec![
            article(1, &["History", "Geography"], &[2]),
            article(2, &["History"], &[2]),
            article(3, &["History", "History"], &[2]),
            article(4, &["Economy"], &[2]),
        ];
        let table = compute_scores(&arts, &small_graph()).unwrap();
        let a = table.get(c(2)).unwrap();
        assert_eq!(a.members, 4);
        assert_eq!(a.sections[0], (title("History"), 0.75));
        // closure: the root sees the same four members
        assert_eq!(table.get(c(1)).unwrap().sections[0].1, 0.75);
        assert!(table.get(c(3)).is_none());
    }

    #[test]
    fn saturated_section_has_probability_one() {
        let arts = vec![article(1, &["History"], &[3]), article(2, &["History", "X"], &[3])];
        let table = compute_scores(&arts, &small_graph()).unwrap();
        assert_eq!(table.get(c(3)).unwrap().sections[0], (title("History"), 1.0));
    }

    #[test]
    fn articles_without_sections_do_not_count() {
        let arts = vec![article(1, &["History"], &[3]), article(2, &[], &[3])];
        let table = compute_scores(&arts, &small_graph()).unwrap();
        assert_eq!(table.get(c(3)).unwrap().members, 1);
    }

    #[test]
    fn town_category_ordering() {
        // member counts per section, largest first, as in a typical towns category
        let plan = [("History", 9), ("Demographics", 8), ("Economy", 7), ("Education", 6), ("Politics", 5)];
        let arts: Vec<Article> = (0..10)
            .map(|i| {
                let secs: Vec<&str> = plan.iter().filter(|(_, n)| i < *n).map(|(s, _)| *s).collect();
                article(i, &secs, &[2])
            })
            .collect();
        let table = compute_scores(&arts, &small_graph()).unwrap();
        let r = recommend_for_category(&table, c(2), 5).unwrap();
        assert_eq!(titles(&r), vec!["History", "Demographics", "Economy", "Education", "Politics"]);
    }

    #[test]
    fn category_ranking_truncation() {
        let arts = vec![article(1, &["A", "B"], &[2])];
        let table = compute_scores(&arts, &small_graph()).unwrap();
        assert_eq!(recommend_for_category(&table, c(2), 10).unwrap().len(), 2);
        assert!(recommend_for_category(&table, c(2), 0).unwrap().is_empty());
        assert!(matches!(recommend_for_category(&table, c(9), 3), Err(Error::UnknownCategory(_))));
    }

    fn table_of(rows: &[(u64, &[(&str, f64)])]) -> ScoreTable {
        ScoreTable {
            categories: rows
                .iter()
                .map(|(id, secs)| {
                    let mut sections: Vec<(SectionTitle, f64)> =
                        secs.iter().map(|(s, p)| (title(s), *p)).collect();
                    sections.sort_by(rank_order);
                    (c(*id), CategoryScores { members: 10, sections })
                })
                .collect(),
        }
    }

    #[test]
    fn two_categories_sum_their_scores() {
        let table = table_of(&[(2, &[("History", 0.5), ("Career", 0.9)]), (3, &[("History", 0.5)])]);
        let target = article(100, &[], &[2, 3]);
        let r = recommend_for_article(&table, &[c(2), c(3)], &target, 10, false);
        assert_eq!(r.entries[0], (title("History"), 1.0));
        assert_eq!(r.entries[1], (title("Career"), 0.9));
    }

    #[test]
    fn single_category_reduces_to_category_ranking() {
        let table = table_of(&[(2, &[("A", 0.8), ("B", 0.6), ("C", 0.4)])]);
        let target = article(100, &["B"], &[2]);
        let r = recommend_for_article(&table, &[c(2)], &target, 10, true);
        assert_eq!(titles(&r), vec!["A", "C"]);
        let full = recommend_for_article(&table, &[c(2)], &target, 10, false);
        assert_eq!(full.entries, recommend_for_category(&table, c(2), 10).unwrap().entries);
    }

    #[test]
    fn no_surviving_category_is_flagged() {
        let table = table_of(&[]);
        let r = recommend_for_article(&table, &[], &article(1, &[], &[]), 5, true);
        assert!(r.is_empty());
        assert_eq!(r.flag, Some(RankingFlag::NoSurvivingCategory));
    }

    #[test]
    fn resolver_modes() {
        let graph = small_graph();
        let a = article(1, &[], &[2, 7]);
        let direct = CategoryResolver::new(&graph, CategoryScope::Direct).unwrap();
        assert_eq!(direct.categories(&a), vec![c(2)]);
        let anc = CategoryResolver::new(&graph, CategoryScope::Ancestors).unwrap();
        assert_eq!(anc.categories(&a), vec![c(1), c(2)]);
    }

    #[test]
    fn coverage_examples() {
        let names: Vec<String> = (0..20).map(|i| format!("s{i}")).collect();
        let secs = |n: usize| names[..n].iter().map(|s| (s.as_str(), 0.5)).collect::<Vec<_>>();
        let (one, three, twenty) = (secs(1), secs(3), secs(20));
        let table = table_of(&[(1, &one), (2, &three), (3, &twenty)]);
        let curve = coverage_curve(&table, 20);
        assert_eq!(curve[1], (2, 2.0 / 3.0));
        assert_eq!(curve[19], (20, 1.0 / 3.0));

        let five = secs(5);
        let full = table_of(&[(1, &five), (2, &twenty)]);
        assert!(coverage_curve(&full, 5).iter().all(|&(_, f)| f == 1.0));
    }

    #[test]
    fn table_round_trips() {
        let arts = vec![
            article(1, &["History", "Geography"], &[2]),
            article(2, &["History"], &[3]),
            article(3, &["Economy", "Geography"], &[3]),
        ];
        let table = compute_scores(&arts, &small_graph()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (s, m) = (dir.path().join("counts.tsv"), dir.path().join("members.tsv"));
        table.write(&s, &m, &Header::new("counts")).unwrap();
        assert_eq!(ScoreTable::read(&s, &m).unwrap(), table);
    }

    fn arb_articles() -> impl Strategy<Value = Vec<Article>> {
        proptest::collection::vec(
            (
                proptest::collection::vec(0usize..6, 0..6),
                proptest::collection::btree_set(1u64..4, 1..3),
            ),
            1..25,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (secs, cats))| {
                    let names: Vec<String> = secs.iter().map(|s| format!("S{s}")).collect();
                    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                    let cats: Vec<u64> = cats.into_iter().collect();
                    article(i as u64, &refs, &cats)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn duplicating_a_section_changes_nothing(arts in arb_articles(), pick in 0usize..25) {
            let before = compute_scores(&arts, &small_graph()).unwrap();
            let mut dup = arts.clone();
            let i = pick % dup.len();
            if let Some(s) = dup[i].sections.first().cloned() {
                dup[i].sections.push(s);
            }
            prop_assert_eq!(compute_scores(&dup, &small_graph()).unwrap(), before);
        }

        #[test]
        fn probabilities_in_unit_interval_and_sorted(arts in arb_articles()) {
            let table = compute_scores(&arts, &small_graph()).unwrap();
            for s in table.categories.values() {
                prop_assert!(s.members > 0);
                for w in s.sections.windows(2) {
                    prop_assert!(rank_order(&w[0], &w[1]).is_lt());
                }
                for (_, p) in &s.sections {
                    prop_assert!(*p > 0.0 && *p <= 1.0);
                }
            }
        }

        #[test]
        fn adding_a_member_never_lowers_a_numerator(arts in arb_articles(), cat in 1u64..4) {
            let before = compute_scores(&arts, &small_graph()).unwrap();
            let mut more = arts.clone();
            more.push(article(1000, &["S0"], &[cat]));
            let after = compute_scores(&more, &small_graph()).unwrap();
            for (id, s) in &before.categories {
                let numer = |t: &CategoryScores, title: &SectionTitle| {
                    t.sections.iter().find(|(x, _)| x == title).map(|(_, p)| (p * t.members as f64).round() as usize).unwrap_or(0)
                };
                for (title, _) in &s.sections {
                    prop_assert!(numer(&after.categories[id], title) >= numer(s, title));
                }
            }
        }

        #[test]
        fn merge_is_order_invariant(arts in arb_articles(), k in 1usize..8) {
            let table = compute_scores(&arts, &small_graph()).unwrap();
            let target = article(999, &[], &[1, 2, 3]);
            let forward = recommend_for_article(&table, &[c(1), c(2), c(3)], &target, k, false);
            let backward = recommend_for_article(&table, &[c(3), c(2), c(1)], &target, k, false);
            prop_assert_eq!(forward, backward);
        }

        #[test]
        fn coverage_is_non_increasing(arts in arb_articles()) {
            let table = compute_scores(&arts, &small_graph()).unwrap();
            let curve = coverage_curve(&table, 10);
            for w in curve.windows(2) {
                prop_assert!(w[1].1 <= w[0].1);
            }
        }
    }
}
