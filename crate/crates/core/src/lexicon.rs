//! Lexical hierarchy: loading, validation, shortest hypernym chains,
//! depth/vocabulary filtering and surface-word sense resolution.
//!
//! The hierarchy is read from a tab-separated edge list
//! (`synset_id<TAB>lemma<TAB>parent,parent,...`). Depths count from the
//! root at depth 1, so a chain to a synset at depth `h` has exactly `h`
//! elements.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Opaque synset identifier, e.g. `dog.n.01`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SynsetId(String);

impl SynsetId {
    pub fn new(id: impl Into<String>) -> Self {
        SynsetId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SynsetId {
    fn from(s: &str) -> Self {
        SynsetId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synset {
    pub id: SynsetId,
    pub lemma: String,
    /// Direct hypernyms, sorted by id.
    pub parents: Vec<SynsetId>,
    pub depth: usize,
}

/// Argument position an event word occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Subject,
    Object,
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "subject" | "s" | "nsubj" => Some(Role::Subject),
            "object" | "o" | "obj" => Some(Role::Object),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Subject => "subject",
            Role::Object => "object",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate synset id {0}")]
    DuplicateId(SynsetId),
    #[error("synset {child} names unknown parent {parent}")]
    UnknownParent { child: SynsetId, parent: SynsetId },
    #[error("cycle detected among synsets {}", join_ids(.0))]
    Cycle(Vec<SynsetId>),
    #[error("no root synset (a record with an empty parent field)")]
    MissingRoot,
    #[error("multiple root synsets: {}", join_ids(.0))]
    MultipleRoots(Vec<SynsetId>),
    #[error("synsets unreachable from root: {}", join_ids(.0))]
    Unreachable(Vec<SynsetId>),
    #[error("unknown synset {0}")]
    UnknownSynset(SynsetId),
    #[error("sense map line {line}: {message}")]
    SenseMap { line: usize, message: String },
}

fn join_ids(ids: &[SynsetId]) -> String {
    ids.iter().map(SynsetId::as_str).collect::<Vec<_>>().join(", ")
}

/// Validated, immutable hypernym DAG.
///
/// Synsets are stored sorted by id, so internal indices order the same way
/// as the ids themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hierarchy {
    synsets: Vec<Synset>,
    index: HashMap<SynsetId, usize>,
    root: usize,
    // Parent chosen for the canonical shortest chain of each synset.
    chain_parent: Vec<Option<usize>>,
    by_lemma: BTreeMap<String, Vec<usize>>,
}

/// Ordered root-to-target sequence of synsets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HypernymChain {
    pub ids: Vec<SynsetId>,
}

impl HypernymChain {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn target(&self) -> Option<&SynsetId> {
        self.ids.last()
    }
}

struct Record {
    id: SynsetId,
    lemma: String,
    parents: Vec<SynsetId>,
}

fn parse_edge_list(text: &str) -> Result<Vec<Record>, LexiconError> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(LexiconError::Malformed {
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let id = fields[0].trim();
        let lemma = fields[1].trim();
        if id.is_empty() {
            return Err(LexiconError::Malformed {
                line: line_no,
                message: "empty synset id".into(),
            });
        }
        if lemma.is_empty() {
            return Err(LexiconError::Malformed {
                line: line_no,
                message: format!("empty lemma for {id}"),
            });
        }
        let mut parents: Vec<SynsetId> = fields
            .get(2)
            .map(|p| {
                p.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(SynsetId::from)
                    .collect()
            })
            .unwrap_or_default();
        parents.sort();
        parents.dedup();
        records.push(Record {
            id: SynsetId::from(id),
            lemma: lemma.to_string(),
            parents,
        });
    }
    Ok(records)
}

/// Reads and validates an edge-list file.
pub fn load_hierarchy(path: impl AsRef<Path>) -> Result<Hierarchy, LexiconError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| LexiconError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Hierarchy::from_edge_list(&text)
}

impl Hierarchy {
    /// Parses edge-list text. The result does not depend on record order.
    pub fn from_edge_list(text: &str) -> Result<Hierarchy, LexiconError> {
        let mut records = parse_edge_list(text)?;
        records.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in records.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(LexiconError::DuplicateId(pair[0].id.clone()));
            }
        }
        let index: HashMap<SynsetId, usize> = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), i))
            .collect();
        let n = records.len();
        let mut parent_idx: Vec<Vec<usize>> = Vec::with_capacity(n);
        for r in &records {
            let mut ps = Vec::with_capacity(r.parents.len());
            for p in &r.parents {
                match index.get(p) {
                    Some(&j) => ps.push(j),
                    None => {
                        return Err(LexiconError::UnknownParent {
                            child: r.id.clone(),
                            parent: p.clone(),
                        })
                    }
                }
            }
            parent_idx.push(ps);
        }
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (c, ps) in parent_idx.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }

        check_acyclic(&records, &parent_idx, &children)?;

        let roots: Vec<usize> = (0..n).filter(|&i| parent_idx[i].is_empty()).collect();
        let root = match roots.as_slice() {
            [] => return Err(LexiconError::MissingRoot),
            [r] => *r,
            _ => {
                return Err(LexiconError::MultipleRoots(
                    roots.iter().map(|&i| records[i].id.clone()).collect(),
                ))
            }
        };

        // Breadth-first depths from the root.
        let mut depth = vec![0usize; n];
        depth[root] = 1;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &c in &children[u] {
                if depth[c] == 0 {
                    depth[c] = depth[u] + 1;
                    queue.push_back(c);
                }
            }
        }
        let unreachable: Vec<SynsetId> = (0..n)
            .filter(|&i| depth[i] == 0)
            .map(|i| records[i].id.clone())
            .collect();
        if !unreachable.is_empty() {
            return Err(LexiconError::Unreachable(unreachable));
        }

        let chain_parent = canonical_chain_parents(&parent_idx, &depth);

        let mut by_lemma: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            by_lemma.entry(r.lemma.to_lowercase()).or_default().push(i);
        }

        let synsets = records
            .into_iter()
            .zip(depth)
            .map(|(r, d)| Synset {
                id: r.id,
                lemma: r.lemma,
                parents: r.parents,
                depth: d,
            })
            .collect();

        Ok(Hierarchy {
            synsets,
            index,
            root,
            chain_parent,
            by_lemma,
        })
    }

    pub fn root(&self) -> &SynsetId {
        &self.synsets[self.root].id
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn get(&self, id: &SynsetId) -> Option<&Synset> {
        self.index.get(id).map(|&i| &self.synsets[i])
    }

    pub fn contains(&self, id: &SynsetId) -> bool {
        self.index.contains_key(id)
    }

    pub fn depth(&self, id: &SynsetId) -> Option<usize> {
        self.get(id).map(|s| s.depth)
    }

    pub fn lemma(&self, id: &SynsetId) -> Option<&str> {
        self.get(id).map(|s| s.lemma.as_str())
    }

    /// Synsets in id order.
    pub fn synsets(&self) -> impl Iterator<Item = &Synset> {
        self.synsets.iter()
    }

    /// Synsets whose lemma equals `word` (case-insensitive), in id order.
    pub fn synsets_for_lemma(&self, word: &str) -> impl Iterator<Item = &SynsetId> {
        self.by_lemma
            .get(&word.to_lowercase())
            .into_iter()
            .flatten()
            .map(|&i| &self.synsets[i].id)
    }

    /// Shortest root-to-`id` chain; ties go to the lexicographically
    /// smallest id sequence.
    pub fn shortest_chain(&self, id: &SynsetId) -> Result<HypernymChain, LexiconError> {
        let mut cur = *self
            .index
            .get(id)
            .ok_or_else(|| LexiconError::UnknownSynset(id.clone()))?;
        let mut ids = vec![self.synsets[cur].id.clone()];
        while let Some(p) = self.chain_parent[cur] {
            ids.push(self.synsets[p].id.clone());
            cur = p;
        }
        ids.reverse();
        Ok(HypernymChain { ids })
    }
}

/// Free-function form of [`Hierarchy::shortest_chain`].
pub fn shortest_chain(h: &Hierarchy, c: &SynsetId) -> Result<HypernymChain, LexiconError> {
    h.shortest_chain(c)
}

fn check_acyclic(
    records: &[Record],
    parents: &[Vec<usize>],
    children: &[Vec<usize>],
) -> Result<(), LexiconError> {
    let n = records.len();
    // Kahn's algorithm from the parent side.
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut removed = vec![false; n];
    while let Some(u) = queue.pop_front() {
        removed[u] = true;
        for &c in &children[u] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    if removed.iter().all(|&r| r) {
        return Ok(());
    }
    // Trim nodes that only hang below a cycle: whatever survives has both a
    // live parent and a live child, i.e. lies on (or between) cycles.
    let mut live_children: Vec<usize> = (0..n)
        .map(|i| children[i].iter().filter(|&&c| !removed[c]).count())
        .collect();
    let mut queue: VecDeque<usize> = (0..n)
        .filter(|&i| !removed[i] && live_children[i] == 0)
        .collect();
    while let Some(u) = queue.pop_front() {
        if removed[u] {
            continue;
        }
        removed[u] = true;
        for &p in &parents[u] {
            if !removed[p] {
                live_children[p] -= 1;
                if live_children[p] == 0 {
                    queue.push_back(p);
                }
            }
        }
    }
    let ids = (0..n)
        .filter(|&i| !removed[i])
        .map(|i| records[i].id.clone())
        .collect();
    Err(LexiconError::Cycle(ids))
}

/// Picks, for every synset, the parent through which its canonical chain
/// runs. Chains at each depth are ranked level by level: a chain's rank is
/// decided first by its parent chain's rank, then by its own id.
fn canonical_chain_parents(parents: &[Vec<usize>], depth: &[usize]) -> Vec<Option<usize>> {
    let n = parents.len();
    let max_depth = depth.iter().copied().max().unwrap_or(0);
    let mut levels: Vec<Vec<usize>> = vec![Vec::new(); max_depth + 1];
    for i in 0..n {
        levels[depth[i]].push(i);
    }
    let mut rank = vec![0usize; n];
    let mut chosen: Vec<Option<usize>> = vec![None; n];
    for d in 1..=max_depth {
        let mut keyed: Vec<(usize, usize)> = Vec::with_capacity(levels[d].len());
        for &c in &levels[d] {
            let best = parents[c]
                .iter()
                .copied()
                .filter(|&p| depth[p] + 1 == d)
                .min_by_key(|&p| rank[p]);
            chosen[c] = best;
            keyed.push((best.map_or(0, |p| rank[p]), c));
        }
        keyed.sort_unstable();
        for (r, &(_, c)) in keyed.iter().enumerate() {
            rank[c] = r;
        }
    }
    chosen
}

/// Restricted view of a hierarchy for abstraction enumeration. Filtered
/// synsets stay in the graph; they are only skipped when chains are walked.
#[derive(Debug, Clone)]
pub struct FilteredHierarchy<'h> {
    hierarchy: &'h Hierarchy,
    enumerable: Vec<bool>,
}

/// Marks synsets shallower than `min_depth`, or whose lemma is not in
/// `corpus_vocab`, as non-enumerable. Pass `None` to skip the vocabulary
/// filter.
pub fn filter_hierarchy<'h>(
    h: &'h Hierarchy,
    min_depth: usize,
    corpus_vocab: Option<&BTreeSet<String>>,
) -> FilteredHierarchy<'h> {
    let enumerable = h
        .synsets
        .iter()
        .map(|s| {
            s.depth >= min_depth
                && corpus_vocab.is_none_or(|v| v.contains(&s.lemma.to_lowercase()))
        })
        .collect();
    FilteredHierarchy {
        hierarchy: h,
        enumerable,
    }
}

impl<'h> FilteredHierarchy<'h> {
    /// View with every synset enumerable.
    pub fn unfiltered(h: &'h Hierarchy) -> Self {
        filter_hierarchy(h, 1, None)
    }

    pub fn hierarchy(&self) -> &'h Hierarchy {
        self.hierarchy
    }

    pub fn is_enumerable(&self, id: &SynsetId) -> bool {
        self.hierarchy
            .index
            .get(id)
            .is_some_and(|&i| self.enumerable[i])
    }

    pub fn enumerable_count(&self) -> usize {
        self.enumerable.iter().filter(|&&e| e).count()
    }

    /// Shortest chain with non-enumerable synsets removed. The target
    /// itself is always kept so the original argument remains in the chain.
    pub fn enumerable_chain(&self, id: &SynsetId) -> Result<HypernymChain, LexiconError> {
        let full = self.hierarchy.shortest_chain(id)?;
        let last = full.ids.len() - 1;
        let ids = full
            .ids
            .into_iter()
            .enumerate()
            .filter(|(i, s)| *i == last || self.is_enumerable(s))
            .map(|(_, s)| s)
            .collect();
        Ok(HypernymChain { ids })
    }
}

/// Precomputed word-to-synset assignments, keyed by argument role.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SenseMap {
    entries: BTreeMap<(String, Role), SynsetId>,
}

impl SenseMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; the synset must exist in `h`.
    pub fn insert(
        &mut self,
        h: &Hierarchy,
        word: &str,
        role: Role,
        id: SynsetId,
    ) -> Result<(), LexiconError> {
        if !h.contains(&id) {
            return Err(LexiconError::UnknownSynset(id));
        }
        self.entries.insert((word.to_lowercase(), role), id);
        Ok(())
    }

    pub fn get(&self, word: &str, role: Role) -> Option<&SynsetId> {
        self.entries.get(&(word.to_lowercase(), role))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `word<TAB>role<TAB>synset_id` lines.
    pub fn parse(text: &str, h: &Hierarchy) -> Result<SenseMap, LexiconError> {
        let mut sm = SenseMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let [word, role, id] = fields.as_slice() else {
                return Err(LexiconError::SenseMap {
                    line: line_no,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            };
            let role = Role::parse(role).ok_or_else(|| LexiconError::SenseMap {
                line: line_no,
                message: format!("unknown role {role:?}"),
            })?;
            if word.is_empty() {
                return Err(LexiconError::SenseMap {
                    line: line_no,
                    message: "empty word".into(),
                });
            }
            sm.insert(h, word, role, SynsetId::from(*id))
                .map_err(|_| LexiconError::SenseMap {
                    line: line_no,
                    message: format!("synset {id} not in hierarchy"),
                })?;
        }
        Ok(sm)
    }

    pub fn load(path: impl AsRef<Path>, h: &Hierarchy) -> Result<SenseMap, LexiconError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| LexiconError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        SenseMap::parse(&text, h)
    }
}

/// Resolves a surface word to a synset: the sense map entry if present,
/// else the smallest synset id whose lemma matches. `None` means the word
/// is not in the hierarchy.
pub fn resolve_sense<'a>(
    sm: &'a SenseMap,
    h: &'a Hierarchy,
    word: &str,
    role: Role,
) -> Option<&'a SynsetId> {
    sm.get(word, role)
        .or_else(|| h.synsets_for_lemma(word).next())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> SynsetId {
        SynsetId::from(s)
    }

    fn diamond() -> Hierarchy {
        // root -> a -> c -> d, root -> b -> d
        Hierarchy::from_edge_list(
            "root\troot\t\n\
             a\ta\troot\n\
             b\tb\troot\n\
             c\tc\ta\n\
             d\td\tb,c\n",
        )
        .unwrap()
    }

    #[test]
    fn root_only() {
        let h = Hierarchy::from_edge_list("entity\tentity\t\n").unwrap();
        assert_eq!(h.root(), &id("entity"));
        assert_eq!(h.depth(&id("entity")), Some(1));
        assert_eq!(h.shortest_chain(&id("entity")).unwrap().ids, vec![id("entity")]);
    }

    #[test]
    fn two_field_root_line_accepted() {
        let h = Hierarchy::from_edge_list("# comment\nentity\tentity\n").unwrap();
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn diamond_depth_and_chain() {
        let h = diamond();
        assert_eq!(h.depth(&id("c")), Some(3));
        assert_eq!(h.depth(&id("d")), Some(3));
        let chain = h.shortest_chain(&id("d")).unwrap();
        assert_eq!(chain.ids, vec![id("root"), id("b"), id("d")]);
    }

    #[test]
    fn linear_chain() {
        let h = Hierarchy::from_edge_list("a\ta\t\nb\tb\ta\nc\tc\tb\n").unwrap();
        assert_eq!(
            h.shortest_chain(&id("c")).unwrap().ids,
            vec![id("a"), id("b"), id("c")]
        );
    }

    #[test]
    fn tie_break_is_lexicographic() {
        // x has two depth-2 parents; chain goes through the smaller id.
        let h = Hierarchy::from_edge_list(
            "r\tr\t\nq\tq\tr\np\tp\tr\nx\tx\tq,p\n",
        )
        .unwrap();
        assert_eq!(
            h.shortest_chain(&id("x")).unwrap().ids,
            vec![id("r"), id("p"), id("x")]
        );
    }

    #[test]
    fn tie_break_compares_whole_prefix() {
        // m < n, but the chain through n starts (root, a1, ..) which is
        // elementwise smaller than (root, a2, ..).
        let h = Hierarchy::from_edge_list(
            "root\troot\t\n\
             a1\ta\troot\n\
             a2\ta\troot\n\
             n\tn\ta1\n\
             m\tm\ta2\n\
             y\ty\tm,n\n",
        )
        .unwrap();
        assert_eq!(
            h.shortest_chain(&id("y")).unwrap().ids,
            vec![id("root"), id("a1"), id("n"), id("y")]
        );
    }

    #[test]
    fn two_cycle_is_reported() {
        let err = Hierarchy::from_edge_list("a\ta\tb\nb\tb\ta\n").unwrap_err();
        assert_eq!(err, LexiconError::Cycle(vec![id("a"), id("b")]));
    }

    #[test]
    fn cycle_below_root_names_only_cycle_members() {
        let err = Hierarchy::from_edge_list(
            "r\tr\t\nx\tx\tr,z\ny\ty\tx\nz\tz\ty\nleaf\tleaf\tz\n",
        )
        .unwrap_err();
        assert_eq!(err, LexiconError::Cycle(vec![id("x"), id("y"), id("z")]));
    }

    #[test]
    fn structural_errors() {
        assert_eq!(
            Hierarchy::from_edge_list("a\ta\t\na\tb\t\n").unwrap_err(),
            LexiconError::DuplicateId(id("a"))
        );
        assert_eq!(
            Hierarchy::from_edge_list("a\ta\tghost\n").unwrap_err(),
            LexiconError::UnknownParent {
                child: id("a"),
                parent: id("ghost")
            }
        );
        assert_eq!(Hierarchy::from_edge_list("").unwrap_err(), LexiconError::MissingRoot);
        assert_eq!(
            Hierarchy::from_edge_list("a\ta\t\nb\tb\t\n").unwrap_err(),
            LexiconError::MultipleRoots(vec![id("a"), id("b")])
        );
        assert!(matches!(
            Hierarchy::from_edge_list("a\ta\tb\tc\td\n").unwrap_err(),
            LexiconError::Malformed { line: 1, .. }
        ));
        assert!(matches!(
            Hierarchy::from_edge_list("a\t\t\n").unwrap_err(),
            LexiconError::Malformed { line: 1, .. }
        ));
    }

    #[test]
    fn unknown_synset_chain() {
        let h = diamond();
        assert_eq!(
            h.shortest_chain(&id("nope")).unwrap_err(),
            LexiconError::UnknownSynset(id("nope"))
        );
    }

    fn linear6() -> Hierarchy {
        Hierarchy::from_edge_list(
            "c1\tl1\t\nc2\tl2\tc1\nc3\tl3\tc2\nc4\tl4\tc3\nc5\tl5\tc4\nc6\tl6\tc5\n",
        )
        .unwrap()
    }

    #[test]
    fn filter_identity() {
        let h = linear6();
        let vocab: BTreeSet<String> = h.synsets().map(|s| s.lemma.clone()).collect();
        let f = filter_hierarchy(&h, 1, Some(&vocab));
        assert_eq!(f.enumerable_chain(&id("c6")).unwrap(), h.shortest_chain(&id("c6")).unwrap());
        assert_eq!(f.enumerable_count(), 6);
    }

    #[test]
    fn filter_by_depth_and_vocab() {
        let h = linear6();
        let f = filter_hierarchy(&h, 4, None);
        assert_eq!(
            f.enumerable_chain(&id("c6")).unwrap().ids,
            vec![id("c4"), id("c5"), id("c6")]
        );
        let vocab: BTreeSet<String> = ["l1", "l2", "l3", "l4", "l6"].iter().map(|s| s.to_string()).collect();
        let f = filter_hierarchy(&h, 4, Some(&vocab));
        assert_eq!(f.enumerable_chain(&id("c6")).unwrap().ids, vec![id("c4"), id("c6")]);
    }

    #[test]
    fn filtered_target_is_kept() {
        let h = linear6();
        let f = filter_hierarchy(&h, 4, None);
        assert_eq!(f.enumerable_chain(&id("c2")).unwrap().ids, vec![id("c2")]);
        assert!(!f.is_enumerable(&id("c2")));
    }

    #[test]
    fn sense_resolution() {
        let h = Hierarchy::from_edge_list(
            "entity.n.01\tentity\t\n\
             bank.n.02\tbank\tentity.n.01\n\
             bank.n.01\tbank\tentity.n.01\n\
             dog.n.01\tdog\tentity.n.01\n",
        )
        .unwrap();
        let mut sm = SenseMap::new();
        sm.insert(&h, "dog", Role::Subject, id("dog.n.01")).unwrap();
        assert_eq!(resolve_sense(&sm, &h, "dog", Role::Subject), Some(&id("dog.n.01")));
        let empty = SenseMap::new();
        assert_eq!(resolve_sense(&empty, &h, "bank", Role::Object), Some(&id("bank.n.01")));
        assert_eq!(resolve_sense(&empty, &h, "zxqw", Role::Object), None);
        assert!(sm.insert(&h, "cat", Role::Object, id("cat.n.01")).is_err());
    }

    #[test]
    fn sense_map_parsing() {
        let h = Hierarchy::from_edge_list("e\tentity\t\nd\tdog\te\n").unwrap();
        let sm = SenseMap::parse("# header\ndog\tsubject\td\nDog\tobject\td\n", &h).unwrap();
        assert_eq!(sm.get("dog", Role::Object), Some(&id("d")));
        assert_eq!(sm.len(), 2);
        assert!(matches!(
            SenseMap::parse("dog\tverb\td\n", &h).unwrap_err(),
            LexiconError::SenseMap { line: 1, .. }
        ));
        assert!(matches!(
            SenseMap::parse("dog\tsubject\tzzz\n", &h).unwrap_err(),
            LexiconError::SenseMap { line: 1, .. }
        ));
    }
}
