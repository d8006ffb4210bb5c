use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Splitting continues until every component satisfies both limits that
/// are set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopCondition {
    pub max_nodes: Option<usize>,
    pub max_load_kw: Option<f64>,
}

impl Default for StopCondition {
    fn default() -> Self {
        StopCondition {
            max_nodes: Some(700),
            max_load_kw: None,
        }
    }
}

impl StopCondition {
    fn satisfied(&self, nodes: &[usize], demand: &[f64]) -> bool {
        self.max_nodes.is_none_or(|m| nodes.len() <= m)
            && self
                .max_load_kw
                .is_none_or(|m| nodes.iter().map(|&i| demand[i]).sum::<f64>() <= m)
    }
}

/// Exact edge betweenness of an unweighted graph (Brandes accumulation),
/// keyed by `(min, max)` node pairs. Each unordered node pair contributes
/// once.
pub fn edge_betweenness(adj: &[Vec<usize>], nodes: &[usize]) -> BTreeMap<(usize, usize), f64> {
    let n = adj.len();
    let mut bet: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &u in nodes {
        for &v in &adj[u] {
            if u < v {
                bet.insert((u, v), 0.0);
            }
        }
    }
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    for &s in nodes {
        let mut order = Vec::new();
        for &v in nodes {
            sigma[v] = 0.0;
            dist[v] = usize::MAX;
            delta[v] = 0.0;
        }
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &adj[w] {
                if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                    let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                    *bet.get_mut(&(v.min(w), v.max(w))).unwrap() += c;
                    delta[v] += c;
                }
            }
        }
    }
    for b in bet.values_mut() {
        *b /= 2.0;
    }
    bet
}

fn components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Communities {
    /// Community label per node; labels are ordered by each community's
    /// smallest node.
    pub labels: Vec<usize>,
    /// Edges removed, in removal order.
    pub removed: Vec<(usize, usize)>,
}

/// Girvan–Newman splitting of the graph on nodes `0..demand.len()`.
///
/// Within each component that violates `stop`, the edge of highest
/// betweenness is removed (ties within 1e-9 go to the lexicographically
/// smallest edge) and components are recomputed, until all comply.
pub fn girvan_newman(edges: &[(usize, usize)], demand: &[f64], stop: &StopCondition) -> Result<Communities> {
    let n = demand.len();
    if let Some(max) = stop.max_load_kw {
        if let Some(i) = (0..n).find(|&i| demand[i] > max) {
            return Err(Error::Validation(format!(
                "node {i} alone demands {} kW, above the community load limit {max} kW",
                demand[i]
            )));
        }
    }
    if stop.max_nodes == Some(0) {
        return Err(Error::Validation("community size limit must be at least 1".into()));
    }
    let mut set: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::Validation(format!("edge ({a}, {b}) outside 0..{n}")));
        }
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    }
    let build_adj = |set: &BTreeSet<(usize, usize)>| {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in set {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    };
    let mut adj = build_adj(&set);
    let mut removed = Vec::new();
    loop {
        let comps = components(&adj);
        let failing: Vec<&Vec<usize>> = comps.iter().filter(|c| !stop.satisfied(c, demand)).collect();
        if failing.is_empty() {
            let mut labels = vec![0; n];
            // components() yields them ordered by smallest node already
            for (k, c) in comps.iter().enumerate() {
                for &v in c {
                    labels[v] = k;
                }
            }
            return Ok(Communities { labels, removed });
        }
        for comp in failing {
            let bet = edge_betweenness(&adj, comp);
            let best = bet.values().copied().fold(f64::NEG_INFINITY, f64::max);
            let Some((&edge, _)) = bet.iter().find(|(_, &b)| b >= best - 1e-9) else {
                return Err(Error::Invariant("failing component has no edges".into()));
            };
            set.remove(&edge);
            removed.push(edge);
        }
        adj = build_adj(&set);
    }
}
