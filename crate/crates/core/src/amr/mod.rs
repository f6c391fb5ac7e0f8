//! PENMAN-notation AMR graphs: parsing, canonical serialization and the side
//! file format that keys graphs by tweet and sentence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod signals;

pub use signals::{extract_signals, normalize_actant, AliasError, AliasMap, RelationInstance};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmrError {
    #[error("empty input")]
    Empty,
    #[error("unbalanced parentheses at offset {pos}")]
    Unbalanced { pos: usize },
    #[error("duplicate variable {var:?} at offset {pos}")]
    DuplicateVariable { var: String, pos: usize },
    #[error("role :{role} without target at offset {pos}")]
    RoleWithoutTarget { role: String, pos: usize },
    #[error("expected {expected} at offset {pos}")]
    Expected { expected: &'static str, pos: usize },
    #[error("unexpected content after graph at offset {pos}")]
    Trailing { pos: usize },
    #[error("line {line}: {message}")]
    SideFile { line: usize, message: String },
}

/// Identifies the sentence a graph was parsed from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceMeta {
    pub tweet_id: String,
    pub sentence_index: u32,
}

impl fmt::Display for SentenceMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.tweet_id, self.sentence_index)
    }
}

impl std::str::FromStr for SentenceMeta {
    type Err = String;

    /// `<tweet_id>.<sentence_index>`; the tweet id may itself contain dots.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tweet, idx) = s.rsplit_once('.').ok_or_else(|| format!("expected <tweet_id>.<index>, got {s:?}"))?;
        let sentence_index = idx.parse().map_err(|_| format!("bad sentence index in {s:?}"))?;
        if tweet.is_empty() {
            return Err(format!("empty tweet id in {s:?}"));
        }
        Ok(SentenceMeta { tweet_id: tweet.to_string(), sentence_index })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Target {
    Var(String),
    Const(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrNode {
    pub var: String,
    pub concept: String,
    /// Byte range of the node's parenthesised source text.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AmrEdge {
    pub source: String,
    pub role: String,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrGraph {
    pub root: String,
    nodes: Vec<AmrNode>,
    edges: Vec<AmrEdge>,
    pub sentence_meta: Option<SentenceMeta>,
}

impl AmrGraph {
    pub fn nodes(&self) -> &[AmrNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[AmrEdge] {
        &self.edges
    }

    pub fn node(&self, var: &str) -> Option<&AmrNode> {
        self.nodes.iter().find(|n| n.var == var)
    }

    pub fn concept(&self, var: &str) -> Option<&str> {
        self.node(var).map(|n| n.concept.as_str())
    }

    /// Outgoing edges of `var` in canonical order (role, then target).
    pub fn children(&self, var: &str) -> Vec<&AmrEdge> {
        let mut out: Vec<&AmrEdge> = self.edges.iter().filter(|e| e.source == var).collect();
        out.sort_by_cached_key(|e| (e.role.clone(), self.target_key(&e.target)));
        out
    }

    fn target_key(&self, t: &Target) -> (u8, String) {
        match t {
            Target::Var(v) => (0, format!("{}\u{0}{}", self.concept(v).unwrap_or(""), v)),
            Target::Const(c) => (1, c.clone()),
        }
    }

    /// Checks the structural invariants: unique variables, every edge endpoint
    /// defined, every node reachable from the root.
    pub fn validate(&self) -> Result<(), String> {
        let mut vars = BTreeSet::new();
        for n in &self.nodes {
            if !vars.insert(n.var.as_str()) {
                return Err(format!("duplicate variable {:?}", n.var));
            }
        }
        if !vars.contains(self.root.as_str()) {
            return Err(format!("root {:?} is not a node", self.root));
        }
        for e in &self.edges {
            if !vars.contains(e.source.as_str()) {
                return Err(format!("edge source {:?} undefined", e.source));
            }
            if let Target::Var(v) = &e.target {
                if !vars.contains(v.as_str()) {
                    return Err(format!("edge target {v:?} undefined"));
                }
            }
        }
        let reached = self.dfs_order();
        if reached.len() != self.nodes.len() {
            return Err("graph has nodes unreachable from the root".into());
        }
        Ok(())
    }

    /// Variables in the order the canonical serialization expands them.
    pub fn dfs_order(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        self.dfs(&self.root, &mut seen, &mut order);
        order
    }

    fn dfs<'a>(&'a self, var: &'a str, seen: &mut BTreeSet<&'a str>, order: &mut Vec<&'a str>) {
        if !seen.insert(var) {
            return;
        }
        order.push(var);
        for e in self.children(var) {
            if let Target::Var(v) = &e.target {
                self.dfs(v, seen, order);
            }
        }
    }

    /// Canonical single-line PENMAN text: depth-first from the root, children
    /// ordered by role then target; a node is written in full at its first
    /// occurrence and as a bare variable afterwards.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut placed = BTreeSet::new();
        self.write_node(&self.root, &mut placed, &mut out);
        out
    }

    fn write_node<'a>(&'a self, var: &'a str, placed: &mut BTreeSet<&'a str>, out: &mut String) {
        placed.insert(var);
        out.push('(');
        out.push_str(var);
        out.push_str(" / ");
        out.push_str(self.concept(var).unwrap_or(""));
        for e in self.children(var) {
            out.push_str(" :");
            out.push_str(&e.role);
            out.push(' ');
            match &e.target {
                Target::Var(v) if !placed.contains(v.as_str()) => self.write_node(v, placed, out),
                Target::Var(v) => out.push_str(v),
                Target::Const(c) => out.push_str(c),
            }
        }
        out.push(')');
    }

    /// Graph isomorphism up to variable renaming: concepts, edge roles and
    /// constants must match under some bijection of variables that maps root
    /// to root.
    pub fn is_isomorphic(&self, other: &AmrGraph) -> bool {
        if self.nodes.len() != other.nodes.len() || self.edges.len() != other.edges.len() {
            return false;
        }
        let a_idx: HashMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.var.as_str(), i)).collect();
        let b_idx: HashMap<&str, usize> = other.nodes.iter().enumerate().map(|(i, n)| (n.var.as_str(), i)).collect();
        let encode = |g: &AmrGraph, idx: &HashMap<&str, usize>| -> Vec<(usize, String, Option<usize>, String)> {
            g.edges
                .iter()
                .map(|e| match &e.target {
                    Target::Var(v) => (idx[e.source.as_str()], e.role.clone(), Some(idx[v.as_str()]), String::new()),
                    Target::Const(c) => (idx[e.source.as_str()], e.role.clone(), None, c.clone()),
                })
                .collect()
        };
        let a_edges = encode(self, &a_idx);
        let b_edges = encode(other, &b_idx);
        let signature = |g: &AmrGraph, edges: &[(usize, String, Option<usize>, String)], i: usize| {
            let mut out: Vec<String> = edges
                .iter()
                .filter(|e| e.0 == i)
                .map(|e| format!("{}|{}", e.1, if e.2.is_some() { "" } else { &e.3 }))
                .collect();
            out.sort();
            (g.nodes[i].concept.clone(), out)
        };
        let a_sig: Vec<_> = (0..self.nodes.len()).map(|i| signature(self, &a_edges, i)).collect();
        let b_sig: Vec<_> = (0..other.nodes.len()).map(|i| signature(other, &b_edges, i)).collect();
        let mut b_sorted = b_edges.clone();
        b_sorted.sort();

        let order: Vec<usize> = self.dfs_order().iter().map(|v| a_idx[v]).collect();
        if order.len() != self.nodes.len() {
            return false;
        }
        let mut mapping = vec![usize::MAX; self.nodes.len()];
        let mut used = vec![false; other.nodes.len()];
        let root_b = match b_idx.get(other.root.as_str()) {
            Some(&r) => r,
            None => return false,
        };

        fn search(
            k: usize,
            order: &[usize],
            mapping: &mut [usize],
            used: &mut [bool],
            cands: &dyn Fn(usize) -> Vec<usize>,
            check: &dyn Fn(&[usize]) -> bool,
        ) -> bool {
            if k == order.len() {
                return check(mapping);
            }
            let a = order[k];
            for b in cands(a) {
                if used[b] {
                    continue;
                }
                mapping[a] = b;
                used[b] = true;
                if search(k + 1, order, mapping, used, cands, check) {
                    return true;
                }
                used[b] = false;
                mapping[a] = usize::MAX;
            }
            false
        }

        let root_a = a_idx[self.root.as_str()];
        let cands = |a: usize| -> Vec<usize> {
            if a == root_a {
                return if a_sig[a] == b_sig[root_b] { vec![root_b] } else { vec![] };
            }
            (0..b_sig.len()).filter(|&b| b_sig[b] == a_sig[a]).collect()
        };
        let check = |m: &[usize]| -> bool {
            let mut mapped: Vec<_> =
                a_edges.iter().map(|e| (m[e.0], e.1.clone(), e.2.map(|t| m[t]), e.3.clone())).collect();
            mapped.sort();
            mapped == b_sorted
        };
        search(0, &order, &mut mapping, &mut used, &cands, &check)
    }
}

impl fmt::Display for AmrGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    nodes: Vec<AmrNode>,
    raw_edges: Vec<(String, String, RawTarget)>,
    defined: HashMap<String, usize>,
}

enum RawTarget {
    Node(String),
    Quoted(String),
    Symbol(String),
}

fn is_symbol_byte(b: u8) -> bool {
    !b.is_ascii_whitespace() && !matches!(b, b'(' | b')' | b':' | b'/' | b'"')
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' && self.at_line_start() {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn at_line_start(&self) -> bool {
        self.src[..self.pos].rsplit('\n').next().is_some_and(|l| l.trim().is_empty())
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn symbol(&mut self) -> &'a str {
        let start = self.pos;
        while self.pos < self.bytes.len() && is_symbol_byte(self.bytes[self.pos]) {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn quoted(&mut self, open: usize) -> Result<&'a str, AmrError> {
        let start = self.pos;
        self.pos += 1;
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'\\' => self.pos += 2,
                b'"' => {
                    self.pos += 1;
                    return Ok(&self.src[start..self.pos]);
                }
                _ => self.pos += 1,
            }
        }
        Err(AmrError::Unbalanced { pos: open })
    }

    fn node(&mut self) -> Result<String, AmrError> {
        let open = self.pos;
        debug_assert_eq!(self.peek(), Some(b'('));
        self.pos += 1;
        self.skip_ws();
        let var_pos = self.pos;
        let var = self.symbol().to_string();
        if var.is_empty() {
            return match self.peek() {
                None => Err(AmrError::Unbalanced { pos: open }),
                _ => Err(AmrError::Expected { expected: "variable", pos: var_pos }),
            };
        }
        if self.defined.contains_key(&var) {
            return Err(AmrError::DuplicateVariable { var, pos: var_pos });
        }
        self.skip_ws();
        if self.peek() != Some(b'/') {
            return match self.peek() {
                None => Err(AmrError::Unbalanced { pos: open }),
                _ => Err(AmrError::Expected { expected: "'/' and concept", pos: self.pos }),
            };
        }
        self.pos += 1;
        self.skip_ws();
        let concept = match self.peek() {
            Some(b'"') => self.quoted(open)?.to_string(),
            _ => self.symbol().to_string(),
        };
        if concept.is_empty() {
            return match self.peek() {
                None => Err(AmrError::Unbalanced { pos: open }),
                _ => Err(AmrError::Expected { expected: "concept", pos: self.pos }),
            };
        }
        let slot = self.nodes.len();
        self.defined.insert(var.clone(), slot);
        self.nodes.push(AmrNode { var: var.clone(), concept, span: (open, open) });
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Err(AmrError::Unbalanced { pos: open }),
                Some(b')') => {
                    self.pos += 1;
                    self.nodes[slot].span = (open, self.pos);
                    return Ok(var);
                }
                Some(b':') => {
                    let role_pos = self.pos;
                    self.pos += 1;
                    let role = self.symbol().to_string();
                    if role.is_empty() {
                        return Err(AmrError::Expected { expected: "role name", pos: role_pos });
                    }
                    self.skip_ws();
                    let target = match self.peek() {
                        Some(b'(') => RawTarget::Node(self.node()?),
                        Some(b'"') => RawTarget::Quoted(self.quoted(open)?.to_string()),
                        Some(b) if is_symbol_byte(b) => RawTarget::Symbol(self.symbol().to_string()),
                        None => return Err(AmrError::Unbalanced { pos: open }),
                        Some(_) => return Err(AmrError::RoleWithoutTarget { role, pos: role_pos }),
                    };
                    self.raw_edges.push((var.clone(), role, target));
                }
                Some(_) => return Err(AmrError::Expected { expected: "role or ')'", pos: self.pos }),
            }
        }
    }
}

/// Parses one PENMAN graph. Leading `#` comment lines are skipped; a
/// `# ::id <tweet_id>.<index>` line sets the sentence metadata. A bare symbol
/// target naming a variable defined anywhere in the graph is a re-entrancy,
/// any other symbol is a constant.
pub fn parse_penman(text: &str) -> Result<AmrGraph, AmrError> {
    let mut p = Parser {
        src: text,
        bytes: text.as_bytes(),
        pos: 0,
        nodes: Vec::new(),
        raw_edges: Vec::new(),
        defined: HashMap::new(),
    };
    p.skip_ws();
    match p.peek() {
        None => return Err(AmrError::Empty),
        Some(b'(') => {}
        Some(b')') => return Err(AmrError::Unbalanced { pos: p.pos }),
        Some(_) => return Err(AmrError::Expected { expected: "'('", pos: p.pos }),
    }
    let root = p.node()?;
    p.skip_ws();
    if let Some(b) = p.peek() {
        return Err(if b == b')' { AmrError::Unbalanced { pos: p.pos } } else { AmrError::Trailing { pos: p.pos } });
    }
    let edges = p
        .raw_edges
        .into_iter()
        .map(|(source, role, t)| {
            let target = match t {
                RawTarget::Node(v) => Target::Var(v),
                RawTarget::Quoted(q) => Target::Const(q),
                RawTarget::Symbol(s) if p.defined.contains_key(&s) => Target::Var(s),
                RawTarget::Symbol(s) => Target::Const(s),
            };
            AmrEdge { source, role, target }
        })
        .collect();
    Ok(AmrGraph { root, nodes: p.nodes, edges, sentence_meta: metadata_id(text) })
}

fn metadata_id(text: &str) -> Option<SentenceMeta> {
    text.lines()
        .map(str::trim)
        .take_while(|l| l.is_empty() || l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# ::id").and_then(|rest| rest.split_whitespace().next()?.parse().ok()))
}

/// Parses an AMR side file: blocks separated by blank lines, each preceded by
/// a `# ::id <tweet_id>.<sentence_index>` comment.
pub fn parse_amr_file(text: &str) -> Result<Vec<AmrGraph>, AmrError> {
    let mut out = Vec::new();
    let mut block = String::new();
    let mut block_line = 0;
    let flush = |block: &mut String, line: usize, out: &mut Vec<AmrGraph>| -> Result<(), AmrError> {
        if block.trim().is_empty() {
            block.clear();
            return Ok(());
        }
        let graph = parse_penman(block).map_err(|e| AmrError::SideFile { line, message: e.to_string() })?;
        if graph.sentence_meta.is_none() {
            return Err(AmrError::SideFile { line, message: "block lacks a '# ::id <tweet_id>.<index>' line".into() });
        }
        out.push(graph);
        block.clear();
        Ok(())
    };
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut block, block_line, &mut out)?;
            continue;
        }
        if block.is_empty() {
            block_line = idx + 1;
        }
        block.push_str(line);
        block.push('\n');
    }
    flush(&mut block, block_line, &mut out)?;
    Ok(out)
}

/// Renders graphs in side-file format.
pub fn write_amr_file(graphs: &[AmrGraph]) -> String {
    let mut out = String::new();
    for g in graphs {
        if let Some(meta) = &g.sentence_meta {
            out.push_str(&format!("# ::id {meta}\n"));
        }
        out.push_str(&g.serialize());
        out.push_str("\n\n");
    }
    out
}

/// Graphs indexed by `<tweet_id>.<sentence_index>`.
pub fn index_by_id(graphs: Vec<AmrGraph>) -> BTreeMap<String, AmrGraph> {
    graphs.into_iter().filter_map(|g| Some((g.sentence_meta.as_ref()?.to_string(), g))).collect()
}
