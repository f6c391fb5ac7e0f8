//! Graph exports: a JSON graph document, GraphML and DOT.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::actantial::{ActantEdge, ActantialNetwork, ConflictEdge, MergedIdentityNetwork};
use crate::corpus::CampLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocNode {
    pub id: String,
    pub camp_incidence: Vec<CampLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEdge {
    pub id: String,
    pub source: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camp: Option<CampLabel>,
    pub weight: f64,
    pub score: f64,
    pub provenance_ids: Vec<String>,
}

impl DocEdge {
    fn from_edge(e: &ActantEdge, camp: Option<CampLabel>) -> DocEdge {
        DocEdge {
            id: e.id.clone(),
            source: e.source.clone(),
            target: e.target.clone(),
            camp,
            weight: e.weight,
            score: e.score,
            provenance_ids: e.tweet_ids().into_iter().map(String::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub issue: String,
    pub kind: String,
    pub nodes: Vec<DocNode>,
    pub edges: Vec<DocEdge>,
}

impl GraphDocument {
    pub fn from_network(net: &ActantialNetwork, kind: &str) -> GraphDocument {
        GraphDocument {
            issue: net.issue.clone(),
            kind: kind.to_string(),
            nodes: net.nodes().iter().map(|id| DocNode { id: id.clone(), camp_incidence: vec![net.camp] }).collect(),
            edges: net.edges().map(|e| DocEdge::from_edge(e, Some(net.camp))).collect(),
        }
    }

    pub fn from_identity(merged: &MergedIdentityNetwork) -> GraphDocument {
        GraphDocument {
            issue: merged.issue.clone(),
            kind: "identity".into(),
            nodes: merged
                .nodes
                .iter()
                .map(|n| DocNode { id: n.id.clone(), camp_incidence: n.camp_incidence.clone() })
                .collect(),
            edges: merged.edges.iter().map(|(camp, e)| DocEdge::from_edge(e, Some(*camp))).collect(),
        }
    }

    /// Each conflict edge appears twice, once per camp, with that camp's
    /// weight, score and provenance.
    pub fn from_conflict(
        left: &ActantialNetwork,
        right: &ActantialNetwork,
        conflicts: &[ConflictEdge],
    ) -> GraphDocument {
        let mut nodes = BTreeSet::new();
        let mut edges = Vec::new();
        for c in conflicts {
            nodes.insert(c.source.clone());
            nodes.insert(c.target.clone());
            for (camp, net) in [(CampLabel::Left, left), (CampLabel::Right, right)] {
                if let Some(e) = net.edge(&c.source, &c.target) {
                    edges.push(DocEdge::from_edge(e, Some(camp)));
                }
            }
        }
        GraphDocument {
            issue: left.issue.clone(),
            kind: "conflict".into(),
            nodes: nodes
                .into_iter()
                .map(|id| DocNode { id, camp_incidence: vec![CampLabel::Left, CampLabel::Right] })
                .collect(),
            edges,
        }
    }

    /// Edges with weight at least `min_weight`, and the nodes they touch.
    pub fn filtered(&self, min_weight: f64) -> GraphDocument {
        let edges: Vec<DocEdge> = self.edges.iter().filter(|e| e.weight >= min_weight).cloned().collect();
        let used: BTreeSet<&str> = edges.iter().flat_map(|e| [e.source.as_str(), e.target.as_str()]).collect();
        GraphDocument {
            issue: self.issue.clone(),
            kind: self.kind.clone(),
            nodes: self.nodes.iter().filter(|n| used.contains(n.id.as_str())).cloned().collect(),
            edges,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph document serializes");
        s.push('\n');
        s
    }

    pub fn to_graphml(&self) -> String {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
        out.push_str("  <key id=\"camps\" for=\"node\" attr.name=\"camp_incidence\" attr.type=\"string\"/>\n");
        out.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
        out.push_str("  <key id=\"score\" for=\"edge\" attr.name=\"score\" attr.type=\"double\"/>\n");
        out.push_str("  <key id=\"camp\" for=\"edge\" attr.name=\"camp\" attr.type=\"string\"/>\n");
        let _ = writeln!(
            out,
            "  <graph id=\"{}\" edgedefault=\"directed\">",
            xml_escape(&format!("{}/{}", self.issue, self.kind))
        );
        for n in &self.nodes {
            let camps: Vec<&str> = n.camp_incidence.iter().map(|c| c.as_str()).collect();
            let _ = writeln!(
                out,
                "    <node id=\"{}\"><data key=\"camps\">{}</data></node>",
                xml_escape(&n.id),
                camps.join(",")
            );
        }
        for e in &self.edges {
            let _ = write!(
                out,
                "    <edge id=\"{}\" source=\"{}\" target=\"{}\"><data key=\"weight\">{}</data><data key=\"score\">{}</data>",
                xml_escape(&e.id),
                xml_escape(&e.source),
                xml_escape(&e.target),
                e.weight,
                e.score
            );
            if let Some(c) = e.camp {
                let _ = write!(out, "<data key=\"camp\">{c}</data>");
            }
            out.push_str("</edge>\n");
        }
        out.push_str("  </graph>\n</graphml>\n");
        out
    }

    /// Red for negative scores, blue for positive, grey for zero; pen width
    /// scales linearly from 1 to 5 with weight.
    pub fn to_dot(&self) -> String {
        let max_w = self.edges.iter().map(|e| e.weight).fold(0.0f64, f64::max);
        let mut out = String::new();
        let _ = writeln!(out, "digraph {} {{", dot_quote(&format!("{}/{}", self.issue, self.kind)));
        for n in &self.nodes {
            let _ = writeln!(out, "  {};", dot_quote(&n.id));
        }
        for e in &self.edges {
            let width = if max_w > 0.0 { 1.0 + 4.0 * e.weight / max_w } else { 1.0 };
            let _ = writeln!(
                out,
                "  {} -> {} [color=\"{}\", penwidth={:.3}, weight={}, score={}];",
                dot_quote(&e.source),
                dot_quote(&e.target),
                score_color(e.score),
                width,
                e.weight,
                e.score
            );
        }
        out.push_str("}\n");
        out
    }
}

pub fn score_color(score: f64) -> &'static str {
    if score > 0.0 {
        "blue"
    } else if score < 0.0 {
        "red"
    } else {
        "grey"
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Output format selector for graph exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Json,
    GraphMl,
    Dot,
}

impl std::str::FromStr for GraphFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(GraphFormat::Json),
            "graphml" => Ok(GraphFormat::GraphMl),
            "dot" => Ok(GraphFormat::Dot),
            other => Err(format!("unknown graph format {other:?}")),
        }
    }
}

impl GraphDocument {
    pub fn render(&self, format: GraphFormat) -> String {
        match format {
            GraphFormat::Json => self.to_json(),
            GraphFormat::GraphMl => self.to_graphml(),
            GraphFormat::Dot => self.to_dot(),
        }
    }

    pub fn edge(&self, id: &str) -> Option<&DocEdge> {
        self.edges.iter().find(|e| e.id == id)
    }

    /// Edge count per camp, for quick summaries.
    pub fn edges_by_camp(&self) -> BTreeMap<Option<CampLabel>, usize> {
        let mut out = BTreeMap::new();
        for e in &self.edges {
            *out.entry(e.camp).or_default() += 1;
        }
        out
    }
}
