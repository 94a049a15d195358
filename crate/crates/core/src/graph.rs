//! Directed weighted network export of a connectedness table.
//!
//! Edge `j -> i` carries weight `theta_ij` and is kept when the weight
//! exceeds the threshold. Self-loops are never emitted. Output is
//! deterministic: nodes in index order, edges sorted by `(i, j)`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::connectedness::{self, FevdTable};
use crate::dataset::GroupMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Dot,
    Json,
}

impl std::str::FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(GraphFormat::Dot),
            "json" => Ok(GraphFormat::Json),
            other => Err(Error::InvalidParameter(format!("unsupported graph format `{other}` (expected dot or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Node {
    pub id: usize,
    pub label: String,
    pub group: String,
    pub to: f64,
    pub from: f64,
    pub net: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    /// Shock origin `j`.
    pub source: usize,
    /// Receiving variable `i`.
    pub target: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    pub horizon: usize,
    pub normalized: bool,
    pub threshold: f64,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

pub fn build_network(table: &FevdTable, labels: &[String], groups: &GroupMap, threshold: f64) -> Result<Network> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be >= 0, got {threshold}")));
    }
    let k = table.k();
    if labels.len() != k || groups.n_vars() != k {
        return Err(Error::Shape(format!(
            "{} labels and {} group entries for {k} variables",
            labels.len(),
            groups.n_vars()
        )));
    }
    let summary = connectedness::summarize(table);
    let nodes = (0..k)
        .map(|i| Node {
            id: i,
            label: labels[i].clone(),
            group: groups.labels[groups.group_of(i)].clone(),
            to: summary.to[i],
            from: summary.from[i],
            net: summary.net[i],
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let w = table.theta[(i, j)];
            if i != j && w > threshold {
                edges.push(Edge {
                    source: j,
                    target: i,
                    weight: w,
                });
            }
        }
    }
    Ok(Network {
        horizon: table.horizon,
        normalized: table.normalized,
        threshold,
        nodes,
        edges,
    })
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn to_dot(net: &Network) -> String {
    let f = crate::io::fmt_f64;
    let mut out = String::new();
    writeln!(out, "digraph connectedness {{").unwrap();
    writeln!(
        out,
        "  graph [horizon={}, normalized={}, threshold={}];",
        net.horizon,
        net.normalized,
        quote(&f(net.threshold))
    )
    .unwrap();
    for n in &net.nodes {
        writeln!(
            out,
            "  n{} [label={}, group={}, to={}, from={}, net={}];",
            n.id,
            quote(&n.label),
            quote(&n.group),
            quote(&f(n.to)),
            quote(&f(n.from)),
            quote(&f(n.net))
        )
        .unwrap();
    }
    for e in &net.edges {
        writeln!(out, "  n{} -> n{} [weight={}];", e.source, e.target, quote(&f(e.weight))).unwrap();
    }
    out.push_str("}\n");
    out
}

pub fn export_graph(
    table: &FevdTable,
    labels: &[String],
    groups: &GroupMap,
    threshold: f64,
    format: GraphFormat,
) -> Result<String> {
    let net = build_network(table, labels, groups, threshold)?;
    Ok(match format {
        GraphFormat::Dot => to_dot(&net),
        GraphFormat::Json => serde_json::to_string_pretty(&net)? + "\n",
    })
}
