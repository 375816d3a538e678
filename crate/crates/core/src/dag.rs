//! User DAGs over schema variables and the generator graph derived from them.
//!
//! Conditional-input variables are made source nodes by reversing every edge
//! that points into them. The modified DAG is linearised with Kahn's algorithm,
//! breaking ties by schema column order, and every node records its direct
//! predecessors and its remaining (non-parent) ancestors.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::TableSchema;

/// Directed graph over variable names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dag {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
}

/// On-disk DAG description.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DagFile {
    /// Optional explicit node list, needed for variables without edges.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<String>,
    pub edges: Vec<[String; 2]>,
    #[serde(default)]
    pub conditional_inputs: Vec<String>,
}

impl DagFile {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn dag(&self) -> Dag {
        Dag::from_edges(
            self.nodes.iter().map(String::as_str),
            self.edges.iter().map(|[a, b]| (a.as_str(), b.as_str())),
        )
    }
}

impl Dag {
    /// Nodes are the listed names followed by edge endpoints in first-seen order.
    pub fn from_edges<'a>(
        nodes: impl IntoIterator<Item = &'a str>,
        edges: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Self {
        let mut dag = Dag::default();
        let mut seen = HashSet::new();
        for n in nodes {
            if seen.insert(n.to_owned()) {
                dag.nodes.push(n.to_owned());
            }
        }
        for (a, b) in edges {
            for n in [a, b] {
                if seen.insert(n.to_owned()) {
                    dag.nodes.push(n.to_owned());
                }
            }
            dag.edges.push((a.to_owned(), b.to_owned()));
        }
        dag
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn in_degree(&self, node: &str) -> usize {
        self.edges.iter().filter(|(_, b)| b == node).count()
    }

    pub fn to_file(&self, conditional_inputs: &[String]) -> DagFile {
        DagFile {
            nodes: self.nodes.clone(),
            edges: self.edges.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
            conditional_inputs: conditional_inputs.to_vec(),
        }
    }

    fn adjacency(&self) -> HashMap<&str, Vec<&str>> {
        let mut adj: HashMap<&str, Vec<&str>> = self.nodes.iter().map(|n| (n.as_str(), vec![])).collect();
        for (a, b) in &self.edges {
            adj.entry(a.as_str()).or_default().push(b.as_str());
        }
        adj
    }

    /// One directed cycle, closed by repeating its first node, if any exists.
    pub fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let adj = self.adjacency();
        let mut mark: HashMap<&str, Mark> = self.nodes.iter().map(|n| (n.as_str(), Mark::New)).collect();
        for start in &self.nodes {
            if mark[start.as_str()] != Mark::New {
                continue;
            }
            // iterative DFS keeping the active path
            let mut path: Vec<&str> = vec![start.as_str()];
            let mut cursor: Vec<usize> = vec![0];
            mark.insert(start.as_str(), Mark::Active);
            while let Some(&node) = path.last() {
                let i = cursor.last_mut().expect("parallel stacks");
                let children = &adj[node];
                if *i < children.len() {
                    let child = children[*i];
                    *i += 1;
                    match mark[child] {
                        Mark::New => {
                            mark.insert(child, Mark::Active);
                            path.push(child);
                            cursor.push(0);
                        }
                        Mark::Active => {
                            let from = path.iter().position(|&n| n == child).expect("on path");
                            let mut cycle: Vec<String> =
                                path[from..].iter().map(|s| (*s).to_owned()).collect();
                            cycle.push(child.to_owned());
                            return Some(cycle);
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark.insert(node, Mark::Done);
                    path.pop();
                    cursor.pop();
                }
            }
        }
        None
    }
}

/// Problems found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DagDiagnostic {
    CycleDetected(Vec<String>),
    UnknownNode(String),
    DuplicateEdge(String, String),
    SelfLoop(String),
    MissingVariable(String),
}

impl fmt::Display for DagDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DagDiagnostic::CycleDetected(c) => write!(f, "cycle {}", c.join(" -> ")),
            DagDiagnostic::UnknownNode(n) => write!(f, "unknown node {n:?}"),
            DagDiagnostic::DuplicateEdge(a, b) => write!(f, "duplicate edge {a:?} -> {b:?}"),
            DagDiagnostic::SelfLoop(n) => write!(f, "self-loop on {n:?}"),
            DagDiagnostic::MissingVariable(n) => write!(f, "schema variable {n:?} is not in the DAG"),
        }
    }
}

/// Checks `dag` against `schema`. An empty list means the DAG is valid.
pub fn validate(dag: &Dag, schema: &TableSchema) -> Vec<DagDiagnostic> {
    let mut out = Vec::new();
    for n in &dag.nodes {
        if schema.index_of(n).is_none() {
            out.push(DagDiagnostic::UnknownNode(n.clone()));
        }
    }
    let mut seen = HashSet::new();
    for (a, b) in &dag.edges {
        if a == b {
            out.push(DagDiagnostic::SelfLoop(a.clone()));
        } else if !seen.insert((a, b)) {
            out.push(DagDiagnostic::DuplicateEdge(a.clone(), b.clone()));
        }
    }
    let present: HashSet<&str> = dag.nodes.iter().map(String::as_str).collect();
    for v in schema.names() {
        if !present.contains(v) {
            out.push(DagDiagnostic::MissingVariable(v.to_owned()));
        }
    }
    if !out.iter().any(|d| matches!(d, DagDiagnostic::SelfLoop(_))) {
        if let Some(cycle) = dag.find_cycle() {
            out.push(DagDiagnostic::CycleDetected(cycle));
        }
    }
    out
}

fn diagnostics_to_error(diags: Vec<DagDiagnostic>) -> Result<()> {
    if diags.is_empty() {
        return Ok(());
    }
    if let Some(DagDiagnostic::CycleDetected(c)) = diags
        .iter()
        .find(|d| matches!(d, DagDiagnostic::CycleDetected(_)))
    {
        return Err(Error::CycleDetected(c.clone()));
    }
    Err(Error::InvalidDag(
        diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
    ))
}

/// Makes every conditional input a source node by reversing the edges that
/// point into it. Edges between two conditional inputs are dropped, since
/// neither end is generated.
pub fn apply_conditional_inputs(dag: &Dag, ci: &[String]) -> Result<Dag> {
    let ci_set: HashSet<&str> = ci.iter().map(String::as_str).collect();
    for c in ci {
        if !dag.nodes.contains(c) {
            return Err(Error::UnknownVariable(c.clone()));
        }
    }
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut seen = HashSet::new();
    for (a, b) in &dag.edges {
        let edge = match (ci_set.contains(a.as_str()), ci_set.contains(b.as_str())) {
            (true, true) => continue,
            (false, true) => (b.clone(), a.clone()),
            _ => (a.clone(), b.clone()),
        };
        if seen.insert(edge.clone()) {
            edges.push(edge);
        }
    }
    let out = Dag {
        nodes: dag.nodes.clone(),
        edges,
    };
    if let Some(cycle) = out.find_cycle() {
        return Err(Error::ReversalCycle(cycle));
    }
    Ok(out)
}

/// Kahn topological order; among ready nodes the one earliest in the schema
/// goes first. Nodes unknown to the schema rank after known ones, by name.
pub fn linearize(dag: &Dag, schema: &TableSchema) -> Result<Vec<String>> {
    let rank = |n: &str| (schema.index_of(n).unwrap_or(usize::MAX), n.to_owned());
    let mut indegree: HashMap<&str, usize> = dag.nodes.iter().map(|n| (n.as_str(), 0)).collect();
    for (_, b) in &dag.edges {
        *indegree.get_mut(b.as_str()).expect("endpoint is a node") += 1;
    }
    let adj = dag.adjacency();
    let mut ready: BinaryHeap<Reverse<(usize, String)>> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(n, _)| Reverse(rank(n)))
        .collect();
    let mut order = Vec::with_capacity(dag.nodes.len());
    while let Some(Reverse((_, node))) = ready.pop() {
        for &child in &adj[node.as_str()] {
            let d = indegree.get_mut(child).expect("child is a node");
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(rank(child)));
            }
        }
        order.push(node);
    }
    if order.len() != dag.nodes.len() {
        return Err(Error::CycleDetected(dag.find_cycle().unwrap_or_default()));
    }
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    ConditionalInput,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub name: String,
    pub role: NodeRole,
    /// Positions (in the linear order) of the direct parents.
    pub predecessors: Vec<usize>,
    /// Positions of ancestors that are not direct parents, ascending.
    pub attention: Vec<usize>,
}

/// Linearised, ancestor-annotated form of the conditional-input-modified DAG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorGraph {
    pub nodes: Vec<GraphNode>,
}

impl GeneratorGraph {
    pub fn order(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.name.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn node(&self, name: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn conditional_inputs(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.role == NodeRole::ConditionalInput)
            .map(|n| n.name.as_str())
            .collect()
    }

    pub fn generated(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.role == NodeRole::Generated)
            .map(|n| n.name.as_str())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Validates `dag`, applies the conditional-input modification, linearises,
/// and annotates every node with its predecessors and attention set.
pub fn build_graph(dag: &Dag, ci: &[String], schema: &TableSchema) -> Result<GeneratorGraph> {
    diagnostics_to_error(validate(dag, schema))?;
    let modified = apply_conditional_inputs(dag, ci)?;
    let order = linearize(&modified, schema)?;
    let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut parents: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); order.len()];
    for (a, b) in &modified.edges {
        parents[pos[b.as_str()]].insert(pos[a.as_str()]);
    }
    let mut ancestors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); order.len()];
    for t in 0..order.len() {
        let mut acc = BTreeSet::new();
        for &p in &parents[t] {
            debug_assert!(p < t, "linear order puts parents first");
            acc.insert(p);
            acc.extend(ancestors[p].iter().copied());
        }
        ancestors[t] = acc;
    }
    let ci_set: HashSet<&str> = ci.iter().map(String::as_str).collect();
    let nodes = order
        .iter()
        .enumerate()
        .map(|(t, name)| GraphNode {
            name: name.clone(),
            role: if ci_set.contains(name.as_str()) {
                NodeRole::ConditionalInput
            } else {
                NodeRole::Generated
            },
            predecessors: parents[t].iter().copied().collect(),
            attention: ancestors[t].difference(&parents[t]).copied().collect(),
        })
        .collect();
    Ok(GeneratorGraph { nodes })
}
