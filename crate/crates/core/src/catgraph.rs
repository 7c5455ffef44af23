//! Category network: restriction to the topical subtree, cycle breaking, type
//! histograms, Gini purity and bottom-up pruning of impure categories.
//!
//! Edges always point from a child category to its parent. An article is a
//! member of a category's *closure* when it is a direct member of that category
//! or of any category from which it is reachable along child→parent edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::corpus::{ArticleId, CategoryId, Corpus};
use crate::error::{Error, Result};
use crate::persist::{self, Header};

/// Number of entity types in the default type universe.
pub const DEFAULT_TYPE_UNIVERSE: usize = 55;

/// Gini threshold used by the reference pruning setup.
pub const DEFAULT_PURITY_THRESHOLD: f64 = 0.966;

/// Parsed category file: `id<TAB>name` lines under `# categories`, then
/// `child_id<TAB>parent_id` lines under `# edges`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CategoryFile {
    pub names: BTreeMap<CategoryId, String>,
    /// (child, parent) pairs.
    pub edges: BTreeSet<(CategoryId, CategoryId)>,
    pub malformed_lines: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum CategorySection {
    Names,
    Edges,
}

impl CategoryFile {
    pub fn contains(&self, id: CategoryId) -> bool {
        self.names.contains_key(&id)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let reader = persist::open_reader(path)?;
        let mut file = CategoryFile::default();
        let mut section = CategorySection::Names;
        let mut lines = 0usize;
        let mut pending_edges = Vec::new();
        let mut first_problem = None;
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let trimmed = line.trim();
            match trimmed {
                "# categories" => {
                    section = CategorySection::Names;
                    continue;
                }
                "# edges" => {
                    section = CategorySection::Edges;
                    continue;
                }
                _ if trimmed.is_empty() || trimmed.starts_with('#') => continue,
                _ => {}
            }
            lines += 1;
            let parsed = match section {
                CategorySection::Names => line
                    .split_once('\t')
                    .and_then(|(id, name)| Some((id.trim().parse().ok()?, name.trim())))
                    .map(|(id, name)| {
                        file.names.insert(CategoryId(id), name.to_string());
                    }),
                CategorySection::Edges => persist::split_fields(&line, 2)
                    .and_then(|f| Some((f[0].trim().parse().ok()?, f[1].trim().parse().ok()?)))
                    .map(|(c, p)| pending_edges.push((idx + 1, CategoryId(c), CategoryId(p)))),
            };
            if parsed.is_none() {
                file.malformed_lines += 1;
                first_problem.get_or_insert(format!("line {}: {line:?}", idx + 1));
            }
        }
        for (line, child, parent) in pending_edges {
            if file.contains(child) && file.contains(parent) {
                file.edges.insert((child, parent));
            } else {
                file.malformed_lines += 1;
                first_problem.get_or_insert(format!("line {line}: edge references an undeclared id"));
            }
        }
        if file.malformed_lines * 100 > lines {
            return Err(Error::TooManyMalformed {
                path: path.to_path_buf(),
                bad: file.malformed_lines,
                total: lines,
                first: first_problem.unwrap_or_default(),
            });
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path, header: &Header) -> Result<()> {
        persist::write_file(path, |w| {
            header.write_to(w)?;
            writeln!(w, "# categories")?;
            for (id, name) in &self.names {
                writeln!(w, "{id}\t{name}")?;
            }
            writeln!(w, "# edges")?;
            for (child, parent) in &self.edges {
                writeln!(w, "{child}\t{parent}")?;
            }
            Ok(())
        })
    }
}

/// Category nodes, child→parent edges and direct article memberships.
///
/// In a pruned graph the root may have been removed, so `root` is not
/// guaranteed to be a node.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryGraph {
    pub names: BTreeMap<CategoryId, String>,
    /// Every node has an entry, possibly empty.
    pub parents: BTreeMap<CategoryId, BTreeSet<CategoryId>>,
    pub memberships: BTreeMap<ArticleId, BTreeSet<CategoryId>>,
    pub root: CategoryId,
}

impl CategoryGraph {
    pub fn new(
        names: BTreeMap<CategoryId, String>,
        edges: impl IntoIterator<Item = (CategoryId, CategoryId)>,
        memberships: BTreeMap<ArticleId, BTreeSet<CategoryId>>,
        root: CategoryId,
    ) -> Self {
        let mut parents: BTreeMap<CategoryId, BTreeSet<CategoryId>> =
            names.keys().map(|&id| (id, BTreeSet::new())).collect();
        for (child, parent) in edges {
            parents.entry(parent).or_default();
            parents.entry(child).or_default().insert(parent);
        }
        let memberships = memberships
            .into_iter()
            .map(|(a, cats)| {
                let cats: BTreeSet<CategoryId> =
                    cats.into_iter().filter(|c| parents.contains_key(c)).collect();
                (a, cats)
            })
            .filter(|(_, cats)| !cats.is_empty())
            .collect();
        CategoryGraph {
            names,
            parents,
            memberships,
            root,
        }
    }

    /// Graph over the category file with the corpus' direct memberships.
    pub fn from_corpus(file: &CategoryFile, corpus: &Corpus, root: CategoryId) -> Result<Self> {
        if !file.contains(root) {
            return Err(Error::UnknownCategory(root));
        }
        let memberships = corpus
            .articles
            .iter()
            .map(|a| (a.id, a.categories.clone()))
            .collect();
        Ok(CategoryGraph::new(
            file.names.clone(),
            file.edges.iter().copied(),
            memberships,
            root,
        ))
    }

    pub fn contains(&self, id: CategoryId) -> bool {
        self.parents.contains_key(&id)
    }

    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.parents.keys().copied()
    }

    /// (child, parent) pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (CategoryId, CategoryId)> + '_ {
        self.parents
            .iter()
            .flat_map(|(&c, ps)| ps.iter().map(move |&p| (c, p)))
    }

    pub fn edge_count(&self) -> usize {
        self.parents.values().map(BTreeSet::len).sum()
    }

    pub fn children(&self) -> BTreeMap<CategoryId, BTreeSet<CategoryId>> {
        let mut children: BTreeMap<CategoryId, BTreeSet<CategoryId>> =
            self.nodes().map(|id| (id, BTreeSet::new())).collect();
        for (c, p) in self.edges() {
            children.entry(p).or_default().insert(c);
        }
        children
    }

    pub fn direct_members(&self) -> BTreeMap<CategoryId, BTreeSet<ArticleId>> {
        let mut members: BTreeMap<CategoryId, BTreeSet<ArticleId>> = BTreeMap::new();
        for (&a, cats) in &self.memberships {
            for &c in cats {
                members.entry(c).or_default().insert(a);
            }
        }
        members
    }

    /// Graph restricted to `keep`; edges and memberships touching other nodes vanish.
    pub fn induced(&self, keep: &BTreeSet<CategoryId>) -> CategoryGraph {
        let names = self
            .names
            .iter()
            .filter(|(id, _)| keep.contains(id))
            .map(|(&id, n)| (id, n.clone()))
            .collect();
        let mut parents: BTreeMap<CategoryId, BTreeSet<CategoryId>> = BTreeMap::new();
        for &id in keep.iter().filter(|id| self.contains(**id)) {
            let ps = self.parents[&id]
                .iter()
                .copied()
                .filter(|p| keep.contains(p))
                .collect();
            parents.insert(id, ps);
        }
        let memberships = self
            .memberships
            .iter()
            .map(|(&a, cats)| (a, cats.intersection(keep).copied().collect::<BTreeSet<_>>()))
            .filter(|(_, cats)| !cats.is_empty())
            .collect();
        CategoryGraph {
            names,
            parents,
            memberships,
            root: self.root,
        }
    }

    /// `c` and every category from which `c` is reachable.
    pub fn descendants(&self, c: CategoryId) -> Result<BTreeSet<CategoryId>> {
        if !self.contains(c) {
            return Err(Error::UnknownCategory(c));
        }
        let children = self.children();
        let mut seen = BTreeSet::from([c]);
        let mut queue = VecDeque::from([c]);
        while let Some(n) = queue.pop_front() {
            for &child in &children[&n] {
                if seen.insert(child) {
                    queue.push_back(child);
                }
            }
        }
        Ok(seen)
    }

    /// Nodes ordered so that every child precedes all of its parents, or
    /// `None` when the graph has a cycle.
    pub fn children_first_order(&self) -> Option<Vec<CategoryId>> {
        let children = self.children();
        let mut pending: BTreeMap<CategoryId, usize> =
            children.iter().map(|(&id, cs)| (id, cs.len())).collect();
        let mut ready: BTreeSet<CategoryId> = pending
            .iter()
            .filter(|(_, &n)| n == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut order = Vec::with_capacity(self.node_count());
        while let Some(n) = ready.pop_first() {
            order.push(n);
            for p in &self.parents[&n] {
                let left = pending.get_mut(p).expect("parent is a node");
                *left -= 1;
                if *left == 0 {
                    ready.insert(*p);
                }
            }
        }
        (order.len() == self.node_count()).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.children_first_order().is_some()
    }

    /// For every node, the sorted list of the node itself and all its
    /// ancestors. Fails on cyclic graphs.
    pub fn ancestor_table(&self) -> Result<BTreeMap<CategoryId, Vec<CategoryId>>> {
        let order = self
            .children_first_order()
            .ok_or_else(|| Error::InvalidParameter("ancestor table needs an acyclic graph".into()))?;
        let mut table: BTreeMap<CategoryId, Vec<CategoryId>> = BTreeMap::new();
        for &n in order.iter().rev() {
            let mut acc: BTreeSet<CategoryId> = BTreeSet::from([n]);
            for p in &self.parents[&n] {
                acc.extend(table[p].iter().copied());
            }
            table.insert(n, acc.into_iter().collect());
        }
        Ok(table)
    }

    /// Categories whose closure contains `article`.
    pub fn article_ancestors(
        &self,
        table: &BTreeMap<CategoryId, Vec<CategoryId>>,
        article: ArticleId,
    ) -> BTreeSet<CategoryId> {
        self.memberships
            .get(&article)
            .into_iter()
            .flatten()
            .flat_map(|c| table[c].iter().copied())
            .collect()
    }

    /// Closure size of every node.
    pub fn closure_sizes(&self) -> Result<BTreeMap<CategoryId, usize>> {
        let table = self.ancestor_table()?;
        let mut sizes: BTreeMap<CategoryId, usize> = self.nodes().map(|c| (c, 0)).collect();
        for &a in self.memberships.keys() {
            for c in self.article_ancestors(&table, a) {
                *sizes.get_mut(&c).expect("ancestor is a node") += 1;
            }
        }
        Ok(sizes)
    }
}

/// Keeps `root` and every category from which `root` is reachable.
pub fn restrict_to_root(graph: &CategoryGraph, root: CategoryId) -> Result<CategoryGraph> {
    let keep = graph.descendants(root)?;
    let mut restricted = graph.induced(&keep);
    restricted.root = root;
    Ok(restricted)
}

/// Returns `closure_members(dag, c)`: direct members of `c` and of every
/// category below it.
pub fn closure_members(dag: &CategoryGraph, c: CategoryId) -> Result<BTreeSet<ArticleId>> {
    let below = dag.descendants(c)?;
    Ok(dag
        .memberships
        .iter()
        .filter(|(_, cats)| cats.iter().any(|x| below.contains(x)))
        .map(|(&a, _)| a)
        .collect())
}

/// Removes a feedback arc set and returns the acyclic graph with the removed
/// (child, parent) edges.
///
/// Each strongly connected component is ordered with the greedy
/// sink/source/degree-difference heuristic (sinks peeled to the right, sources
/// to the left, otherwise the node maximizing outdegree − indegree goes left);
/// edges pointing right-to-left in that order are removed. Ties always go to the
/// smallest id. Self-loops are always removed.
pub fn break_cycles(graph: &CategoryGraph) -> (CategoryGraph, Vec<(CategoryId, CategoryId)>) {
    let ids: Vec<CategoryId> = graph.nodes().collect();
    let index: BTreeMap<CategoryId, usize> = ids.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
    let mut removed = Vec::new();
    for (c, p) in graph.edges() {
        if c == p {
            removed.push((c, p));
        } else {
            adj[index[&c]].push(index[&p]);
        }
    }

    let components = strongly_connected_components(&adj);
    let mut component_of = vec![0usize; ids.len()];
    for (ci, comp) in components.iter().enumerate() {
        for &v in comp {
            component_of[v] = ci;
        }
    }
    for comp in components.iter().filter(|c| c.len() > 1) {
        let local: BTreeMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut local_edges = Vec::new();
        for &v in comp {
            for &w in &adj[v] {
                if let Some(&lw) = local.get(&w) {
                    local_edges.push((local[&v], lw));
                }
            }
        }
        let order = greedy_order(comp.len(), &local_edges);
        let mut position = vec![0usize; comp.len()];
        for (pos, &v) in order.iter().enumerate() {
            position[v] = pos;
        }
        for &(v, w) in &local_edges {
            if position[v] > position[w] {
                removed.push((ids[comp[v]], ids[comp[w]]));
            }
        }
    }
    debug_assert!(component_of.len() == ids.len());

    removed.sort();
    let removed_set: BTreeSet<(CategoryId, CategoryId)> = removed.iter().copied().collect();
    let mut dag = graph.clone();
    for (c, p) in &removed_set {
        dag.parents.get_mut(c).expect("edge source is a node").remove(p);
    }
    (dag, removed)
}

/// Greedy vertex sequence on nodes `0..n` (smaller index = smaller id).
fn greedy_order(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut out: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut inc: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(v, w) in edges {
        out[v].insert(w);
        inc[w].insert(v);
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Slot {
        Sink,
        Source,
        Delta(i64),
    }
    let slot_of = |v: usize, out: &[BTreeSet<usize>], inc: &[BTreeSet<usize>]| {
        if out[v].is_empty() {
            Slot::Sink
        } else if inc[v].is_empty() {
            Slot::Source
        } else {
            Slot::Delta(inc[v].len() as i64 - out[v].len() as i64)
        }
    };

    let mut sinks = BTreeSet::new();
    let mut sources = BTreeSet::new();
    // (indegree − outdegree, id): the first entry maximizes outdegree − indegree.
    let mut by_delta: BTreeSet<(i64, usize)> = BTreeSet::new();
    let mut slots = Vec::with_capacity(n);
    for v in 0..n {
        let s = slot_of(v, &out, &inc);
        match s {
            Slot::Sink => sinks.insert(v),
            Slot::Source => sources.insert(v),
            Slot::Delta(d) => by_delta.insert((d, v)),
        };
        slots.push(s);
    }

    let mut left = Vec::with_capacity(n);
    let mut right = Vec::new();
    loop {
        let (v, to_left) = if let Some(v) = sinks.pop_first() {
            (v, false)
        } else if let Some(v) = sources.pop_first() {
            (v, true)
        } else if let Some((_, v)) = by_delta.pop_first() {
            (v, true)
        } else {
            break;
        };
        if to_left {
            left.push(v);
        } else {
            right.push(v);
        }

        let mut touched: BTreeSet<usize> = BTreeSet::new();
        for w in std::mem::take(&mut out[v]) {
            inc[w].remove(&v);
            touched.insert(w);
        }
        for u in std::mem::take(&mut inc[v]) {
            out[u].remove(&v);
            touched.insert(u);
        }
        for u in touched {
            let old = slots[u];
            let new = slot_of(u, &out, &inc);
            if old == new {
                continue;
            }
            match old {
                Slot::Sink => sinks.remove(&u),
                Slot::Source => sources.remove(&u),
                Slot::Delta(d) => by_delta.remove(&(d, u)),
            };
            match new {
                Slot::Sink => sinks.insert(u),
                Slot::Source => sources.insert(u),
                Slot::Delta(d) => by_delta.insert((d, u)),
            };
            slots[u] = new;
        }
    }
    right.reverse();
    left.extend(right);
    left
}

/// Tarjan's algorithm, iterative. Components come out in reverse topological
/// order; each component lists its vertices in ascending order.
fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next = 0usize;

    for start in 0..n {
        if index[start] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(start, 0)];
        index[start] = next;
        low[start] = next;
        next += 1;
        stack.push(start);
        on_stack[start] = true;
        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            if let Some(&w) = adj[v].get(*edge) {
                *edge += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                while let Some(w) = stack.pop() {
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(comp);
            }
        }
    }
    components
}

/// Entity-type names, indexed by type id `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeUniverse {
    pub names: Vec<String>,
}

impl TypeUniverse {
    pub fn anonymous(size: usize) -> Self {
        TypeUniverse {
            names: (0..size).map(|i| format!("type{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Reads `type_id<TAB>type_name` lines; ids must be exactly `0..n`.
    pub fn read(path: &Path) -> Result<Self> {
        let text = persist::read_text(path)?;
        let mut names = BTreeMap::new();
        for (line, raw) in &text.lines {
            let bad = || text.parse_error(*line, format!("expected `type_id<TAB>name`, got {raw:?}"));
            let (id, name) = raw.split_once('\t').ok_or_else(bad)?;
            let id: usize = id.trim().parse().map_err(|_| bad())?;
            names.insert(id, name.trim().to_string());
        }
        if names.keys().enumerate().any(|(i, &id)| i != id) {
            return Err(text.parse_error(0, "type ids must be contiguous from 0"));
        }
        Ok(TypeUniverse {
            names: names.into_values().collect(),
        })
    }

    pub fn write(&self, path: &Path, header: &Header) -> Result<()> {
        persist::write_file(path, |w| {
            header.write_to(w)?;
            for (i, n) in self.names.iter().enumerate() {
                writeln!(w, "{i}\t{n}")?;
            }
            Ok(())
        })
    }
}

/// One top-level entity type per article. Articles without an entry are untyped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeMap {
    pub universe_size: usize,
    pub types: BTreeMap<ArticleId, usize>,
}

impl TypeMap {
    pub fn new(universe_size: usize) -> Self {
        TypeMap {
            universe_size,
            types: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, article: ArticleId, type_id: usize) -> Result<()> {
        if type_id >= self.universe_size {
            return Err(Error::InvalidParameter(format!(
                "type id {type_id} outside universe of size {}",
                self.universe_size
            )));
        }
        self.types.insert(article, type_id);
        Ok(())
    }

    pub fn get(&self, article: ArticleId) -> Option<usize> {
        self.types.get(&article).copied()
    }

    pub fn read(path: &Path, universe_size: usize) -> Result<Self> {
        let text = persist::read_text(path)?;
        let mut map = TypeMap::new(universe_size);
        for (line, raw) in &text.lines {
            let bad = || text.parse_error(*line, format!("expected `article_id<TAB>type_id`, got {raw:?}"));
            let f = persist::split_fields(raw, 2).ok_or_else(bad)?;
            let article = ArticleId(f[0].trim().parse().map_err(|_| bad())?);
            let ty: usize = f[1].trim().parse().map_err(|_| bad())?;
            map.insert(article, ty).map_err(|e| text.parse_error(*line, e.to_string()))?;
        }
        Ok(map)
    }

    pub fn write(&self, path: &Path, header: &Header) -> Result<()> {
        persist::write_file(path, |w| {
            header.write_to(w)?;
            for (a, t) in &self.types {
                writeln!(w, "{a}\t{t}")?;
            }
            Ok(())
        })
    }
}

/// Counts of member-article types over the fixed type universe.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeHistogram(pub Vec<u64>);

impl TypeHistogram {
    pub fn zeros(universe_size: usize) -> Self {
        TypeHistogram(vec![0; universe_size])
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn add(&mut self, other: &TypeHistogram) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

/// Gini coefficient over all bins, zeros included:
/// `Σᵢ Σⱼ |xᵢ − xⱼ| / (2 · n · Σᵢ xᵢ)`.
///
/// Computed exactly in integers from the sorted bins, where the double sum
/// equals `2 · Σᵢ (2i − n − 1) · x₍ᵢ₎`.
pub fn gini(hist: &TypeHistogram) -> Result<f64> {
    let n = hist.0.len();
    let total = hist.total();
    if total == 0 {
        return Err(Error::UndefinedPurity);
    }
    let mut sorted = hist.0.clone();
    sorted.sort_unstable();
    let numerator: i128 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2 * (i as i128 + 1) - n as i128 - 1) * x as i128)
        .sum();
    let denominator = n as u128 * total as u128;
    Ok(numerator as f64 / denominator as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeStats {
    pub purity: f64,
    pub histogram: TypeHistogram,
    /// Number of articles in the node's closure within the pruned graph.
    pub closure_size: usize,
}

/// The surviving part of a category network after purity pruning.
#[derive(Clone, Debug, PartialEq)]
pub struct PrunedGraph {
    pub graph: CategoryGraph,
    pub nodes: BTreeMap<CategoryId, NodeStats>,
    pub removed: BTreeSet<CategoryId>,
    pub threshold: f64,
    /// Number of node evaluations performed while pruning.
    pub evaluations: usize,
}

impl PrunedGraph {
    pub fn contains(&self, c: CategoryId) -> bool {
        self.nodes.contains_key(&c)
    }

    pub fn removed_fraction(&self) -> f64 {
        let total = self.nodes.len() + self.removed.len();
        if total == 0 {
            0.0
        } else {
            self.removed.len() as f64 / total as f64
        }
    }

    /// Writes `nodes.tsv`, `edges.tsv`, `histograms.tsv` and `removed.tsv` into `dir`.
    pub fn write(&self, dir: &Path, header: &Header) -> Result<()> {
        let header = header
            .clone()
            .with("threshold", self.threshold)
            .with("root", self.graph.root)
            .with("evaluations", self.evaluations);
        persist::write_file(&dir.join("nodes.tsv"), |w| {
            header.write_to(w)?;
            for (id, s) in &self.nodes {
                writeln!(w, "{id}\t{}\t{}", s.purity, s.closure_size)?;
            }
            Ok(())
        })?;
        persist::write_file(&dir.join("edges.tsv"), |w| {
            header.write_to(w)?;
            for (c, p) in self.graph.edges() {
                writeln!(w, "{c}\t{p}")?;
            }
            Ok(())
        })?;
        persist::write_file(&dir.join("histograms.tsv"), |w| {
            header.write_to(w)?;
            for (id, s) in &self.nodes {
                let counts: Vec<String> = s.histogram.0.iter().map(u64::to_string).collect();
                writeln!(w, "{id}\t{}", counts.join(","))?;
            }
            Ok(())
        })?;
        persist::write_file(&dir.join("removed.tsv"), |w| {
            header.write_to(w)?;
            for id in &self.removed {
                writeln!(w, "{id}")?;
            }
            Ok(())
        })
    }

    /// Reloads a pruned graph written by [`PrunedGraph::write`]; memberships
    /// and names are rebuilt from the corpus and category file.
    pub fn read(dir: &Path, corpus: &Corpus, names: &BTreeMap<CategoryId, String>) -> Result<Self> {
        let nodes_file = persist::read_text(&dir.join("nodes.tsv"))?;
        let threshold: f64 = nodes_file.require_parsed("threshold")?;
        let root = CategoryId(nodes_file.require_parsed("root")?);
        let evaluations: usize = nodes_file.require_parsed("evaluations")?;

        let hist_file = persist::read_text(&dir.join("histograms.tsv"))?;
        let mut histograms = BTreeMap::new();
        for (line, raw) in &hist_file.lines {
            let bad = || hist_file.parse_error(*line, "expected `id<TAB>counts`");
            let (id, counts) = raw.split_once('\t').ok_or_else(bad)?;
            let id = CategoryId(id.parse().map_err(|_| bad())?);
            let counts = counts
                .split(',')
                .map(|c| c.parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            histograms.insert(id, TypeHistogram(counts));
        }

        let mut nodes = BTreeMap::new();
        for (line, raw) in &nodes_file.lines {
            let bad = || nodes_file.parse_error(*line, "expected `id<TAB>purity<TAB>closure_size`");
            let f = persist::split_fields(raw, 3).ok_or_else(bad)?;
            let id = CategoryId(f[0].parse().map_err(|_| bad())?);
            let histogram = histograms
                .remove(&id)
                .ok_or_else(|| nodes_file.parse_error(*line, format!("no histogram for {id}")))?;
            nodes.insert(
                id,
                NodeStats {
                    purity: f[1].parse().map_err(|_| bad())?,
                    closure_size: f[2].parse().map_err(|_| bad())?,
                    histogram,
                },
            );
        }

        let edges_file = persist::read_text(&dir.join("edges.tsv"))?;
        let mut edges = Vec::new();
        for (line, raw) in &edges_file.lines {
            let bad = || edges_file.parse_error(*line, "expected `child<TAB>parent`");
            let f = persist::split_fields(raw, 2).ok_or_else(bad)?;
            edges.push((
                CategoryId(f[0].parse().map_err(|_| bad())?),
                CategoryId(f[1].parse().map_err(|_| bad())?),
            ));
        }

        let removed_file = persist::read_text(&dir.join("removed.tsv"))?;
        let removed = removed_file
            .lines
            .iter()
            .map(|(line, raw)| {
                raw.parse()
                    .map(CategoryId)
                    .map_err(|_| removed_file.parse_error(*line, "expected a category id"))
            })
            .collect::<Result<BTreeSet<_>>>()?;

        let kept_names = nodes
            .keys()
            .map(|id| (*id, names.get(id).cloned().unwrap_or_default()))
            .collect();
        let memberships = corpus.articles.iter().map(|a| (a.id, a.categories.clone())).collect();
        let graph = CategoryGraph::new(kept_names, edges, memberships, root);
        Ok(PrunedGraph {
            graph,
            nodes,
            removed,
            threshold,
            evaluations,
        })
    }
}

/// Bottom-up purity pruning of an acyclic graph.
///
/// Each node's histogram is the types of its direct members plus the histograms
/// returned by its children. A node whose Gini coefficient exceeds `threshold`
/// survives and returns its histogram to every parent; otherwise it is removed
/// and returns nothing. All-zero histograms count as impure. Every node is
/// evaluated exactly once.
pub fn prune(dag: &CategoryGraph, types: &TypeMap, threshold: f64) -> Result<PrunedGraph> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::ThresholdOutOfRange(threshold));
    }
    let order = dag
        .children_first_order()
        .ok_or_else(|| Error::InvalidParameter("pruning requires an acyclic graph".into()))?;
    let universe = types.universe_size;
    let children = dag.children();

    let mut returned: BTreeMap<CategoryId, TypeHistogram> = BTreeMap::new();
    for (&a, cats) in &dag.memberships {
        if let Some(t) = types.get(a) {
            for &c in cats {
                returned.entry(c).or_insert_with(|| TypeHistogram::zeros(universe)).0[t] += 1;
            }
        }
    }

    let mut kept: BTreeMap<CategoryId, (f64, TypeHistogram)> = BTreeMap::new();
    let mut removed = BTreeSet::new();
    let mut evaluations = 0usize;
    for n in order {
        evaluations += 1;
        let mut hist = returned.remove(&n).unwrap_or_else(|| TypeHistogram::zeros(universe));
        for child in &children[&n] {
            if let Some((_, h)) = kept.get(child) {
                hist.add(h);
            }
        }
        match gini(&hist) {
            Ok(g) if g > threshold => {
                kept.insert(n, (g, hist));
            }
            _ => {
                removed.insert(n);
            }
        }
    }

    let keep: BTreeSet<CategoryId> = kept.keys().copied().collect();
    let graph = dag.induced(&keep);
    let sizes = graph.closure_sizes()?;
    let nodes = kept
        .into_iter()
        .map(|(id, (purity, histogram))| {
            (
                id,
                NodeStats {
                    purity,
                    histogram,
                    closure_size: sizes[&id],
                },
            )
        })
        .collect();
    Ok(PrunedGraph {
        graph,
        nodes,
        removed,
        threshold,
        evaluations,
    })
}

/// A human judgement of whether `article` is an instance of ancestor `category`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Annotation {
    pub article: ArticleId,
    pub category: CategoryId,
    pub is_instance: bool,
}

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let text = persist::read_text(path)?;
    text.lines
        .iter()
        .map(|(line, raw)| {
            let bad = || text.parse_error(*line, "expected `article_id<TAB>category_id<TAB>0|1`");
            let f = persist::split_fields(raw, 3).ok_or_else(bad)?;
            Ok(Annotation {
                article: ArticleId(f[0].parse().map_err(|_| bad())?),
                category: CategoryId(f[1].parse().map_err(|_| bad())?),
                is_instance: match f[2] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad()),
                },
            })
        })
        .collect()
}

pub fn write_annotations(path: &Path, annotations: &[Annotation], header: &Header) -> Result<()> {
    persist::write_file(path, |w| {
        header.write_to(w)?;
        for a in annotations {
            writeln!(w, "{}\t{}\t{}", a.article, a.category, u8::from(a.is_instance))?;
        }
        Ok(())
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    /// Reported as 0 when nothing is predicted (see `precision_defined`).
    pub precision: f64,
    pub precision_defined: bool,
    pub recall: f64,
    pub removed_fraction: f64,
}

/// `threshold<TAB>precision<TAB>recall<TAB>removed_fraction` rows; undefined
/// precision is written as `nan`.
pub fn write_sweep(path: &Path, rows: &[SweepRow], header: &Header) -> Result<()> {
    persist::write_file(path, |w| {
        header.write_to(w)?;
        writeln!(w, "threshold\tprecision\trecall\tremoved_fraction")?;
        for r in rows {
            let precision = if r.precision_defined { r.precision.to_string() } else { "nan".into() };
            writeln!(w, "{}\t{precision}\t{}\t{}", r.threshold, r.recall, r.removed_fraction)?;
        }
        Ok(())
    })
}

/// Prunes at each threshold and scores the surviving article→ancestor paths
/// against annotations: a path is predicted when the category survives and the
/// article is in its closure.
pub fn threshold_sweep(
    dag: &CategoryGraph,
    types: &TypeMap,
    annotations: &[Annotation],
    thresholds: &[f64],
) -> Result<Vec<SweepRow>> {
    if annotations.is_empty() {
        return Err(Error::EmptyAnnotations);
    }
    let articles: BTreeSet<ArticleId> = annotations.iter().map(|a| a.article).collect();
    let mut rows = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let pruned = prune(dag, types, threshold)?;
        let table = pruned.graph.ancestor_table()?;
        let ancestors: BTreeMap<ArticleId, BTreeSet<CategoryId>> = articles
            .iter()
            .map(|&a| (a, pruned.graph.article_ancestors(&table, a)))
            .collect();
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for ann in annotations {
            let predicted = ancestors[&ann.article].contains(&ann.category);
            match (predicted, ann.is_instance) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision_defined = tp + fp > 0;
        rows.push(SweepRow {
            threshold,
            precision: if precision_defined {
                tp as f64 / (tp + fp) as f64
            } else {
                0.0
            },
            precision_defined,
            recall: if tp + fn_ > 0 {
                tp as f64 / (tp + fn_) as f64
            } else {
                0.0
            },
            removed_fraction: pruned.removed_fraction(),
        });
    }
    Ok(rows)
}
