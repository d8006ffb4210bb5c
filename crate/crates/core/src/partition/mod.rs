//! Road graph augmentation with transformers, shortest-path Voronoi cells
//! around substations, and Girvan–Newman splitting of large cells.

mod girvan_newman;

pub use girvan_newman::{edge_betweenness, girvan_newman, Communities, StopCondition};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{geodesic_distance, GeoPoint};
use crate::ids::{GraphNode, LinkId, RoadNodeId, SubstationId};
use crate::ingest::{RoadNetwork, Substation};
use crate::mapping::{nearest_link, LinkIndex};
use crate::secondary::SecondaryNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub location: GeoPoint,
    /// Aggregated demand in kW; zero for road nodes.
    pub demand_kw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugEdge {
    pub a: GraphNode,
    pub b: GraphNode,
    pub length_m: f64,
    /// Road link this piece was cut from.
    pub link: LinkId,
}

/// Road graph with used transformers spliced into their host links.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentedGraph {
    pub nodes: BTreeMap<GraphNode, NodeInfo>,
    pub edges: Vec<AugEdge>,
}

impl AugmentedGraph {
    pub fn adjacency(&self) -> BTreeMap<GraphNode, Vec<(GraphNode, f64)>> {
        let mut adj: BTreeMap<GraphNode, Vec<(GraphNode, f64)>> = self.nodes.keys().map(|n| (*n, Vec::new())).collect();
        for e in &self.edges {
            adj.get_mut(&e.a).unwrap().push((e.b, e.length_m));
            adj.get_mut(&e.b).unwrap().push((e.a, e.length_m));
        }
        for list in adj.values_mut() {
            list.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
        }
        adj
    }

    pub fn total_demand(&self) -> f64 {
        self.nodes.values().map(|n| n.demand_kw).sum()
    }
}

/// Splits each link at the used transformers it hosts, ordered by their
/// position along the link. Transformers carry the demand they serve.
pub fn augment(roads: &RoadNetwork, secondaries: &[SecondaryNetwork]) -> Result<AugmentedGraph> {
    let mut g = AugmentedGraph::default();
    for (id, p) in &roads.nodes {
        g.nodes.insert(
            GraphNode::Road(*id),
            NodeInfo {
                location: *p,
                demand_kw: 0.0,
            },
        );
    }
    let mut hosted: BTreeMap<LinkId, Vec<(f64, GraphNode)>> = BTreeMap::new();
    for net in secondaries {
        if !roads.links.contains_key(&net.link) {
            return Err(Error::Invariant(format!("transformers reference unknown link {}", net.link)));
        }
        let seg = roads.segment(net.link);
        for t in &net.transformers {
            let node = GraphNode::Transformer(t.id);
            if g.nodes.contains_key(&node) {
                return Err(Error::Invariant(format!("transformer {} appears twice", t.id)));
            }
            g.nodes.insert(
                node,
                NodeInfo {
                    location: t.location,
                    demand_kw: t.demand_kw,
                },
            );
            let (_, frac) = seg.closest_point(t.location);
            hosted.entry(net.link).or_default().push((frac, node));
        }
    }
    for (link_id, link) in &roads.links {
        let mut chain = vec![GraphNode::Road(link.u)];
        if let Some(list) = hosted.get_mut(link_id) {
            list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            chain.extend(list.iter().map(|(_, n)| *n));
        }
        chain.push(GraphNode::Road(link.v));
        for w in chain.windows(2) {
            g.edges.push(AugEdge {
                a: w[0],
                b: w[1],
                length_m: geodesic_distance(g.nodes[&w[0]].location, g.nodes[&w[1]].location),
                link: *link_id,
            });
        }
    }
    Ok(g)
}

/// Where a substation enters the road graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub substation: SubstationId,
    pub node: RoadNodeId,
    /// Geodesic distance from the substation to `node`, meters.
    pub offset_m: f64,
}

/// Each substation seeds at the nearer endpoint of its nearest link.
pub fn substation_seeds(roads: &RoadNetwork, substations: &[Substation], padding: f64) -> Result<Vec<Seed>> {
    let idx = LinkIndex::build(roads, padding)?;
    let mut seeds: Vec<Seed> = substations
        .iter()
        .map(|s| {
            let (link, _) = nearest_link(s.location, &idx, f64::INFINITY)
                .ok_or_else(|| Error::Invariant(format!("substation {} found no link", s.id)))?;
            let l = roads.links[&link];
            let du = geodesic_distance(s.location, roads.nodes[&l.u]);
            let dv = geodesic_distance(s.location, roads.nodes[&l.v]);
            let (node, offset_m) = if dv < du || (dv == du && l.v < l.u) { (l.v, dv) } else { (l.u, du) };
            Ok(Seed {
                substation: s.id,
                node,
                offset_m,
            })
        })
        .collect::<Result<_>>()?;
    seeds.sort_by_key(|s| s.substation);
    Ok(seeds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Label {
    dist: f64,
    sub: SubstationId,
    node: GraphNode,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.sub.cmp(&self.sub))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VoronoiCells {
    pub owner: BTreeMap<GraphNode, SubstationId>,
    /// Network distance to the owning substation, meters.
    pub distance: BTreeMap<GraphNode, f64>,
    /// Road nodes no substation can reach; left out of every cell.
    pub unreachable: Vec<RoadNodeId>,
}

/// Multi-source Dijkstra over `(distance, substation id)` labels, so exact
/// ties go to the lower substation id.
pub fn voronoi_assign(graph: &AugmentedGraph, seeds: &[Seed]) -> Result<VoronoiCells> {
    let adj = graph.adjacency();
    let mut best: BTreeMap<GraphNode, (f64, SubstationId)> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    let better = |a: (f64, SubstationId), b: Option<&(f64, SubstationId)>| match b {
        None => true,
        Some(&(d, s)) => a.0 < d || (a.0 == d && a.1 < s),
    };
    for s in seeds {
        let node = GraphNode::Road(s.node);
        if !graph.nodes.contains_key(&node) {
            return Err(Error::Invariant(format!("seed {} of substation {} is not in the graph", s.node, s.substation)));
        }
        if better((s.offset_m, s.substation), best.get(&node)) {
            best.insert(node, (s.offset_m, s.substation));
            heap.push(Label {
                dist: s.offset_m,
                sub: s.substation,
                node,
            });
        }
    }
    let mut done: BTreeSet<GraphNode> = BTreeSet::new();
    while let Some(Label { dist, sub, node }) = heap.pop() {
        if done.contains(&node) || best.get(&node) != Some(&(dist, sub)) {
            continue;
        }
        done.insert(node);
        for &(w, len) in &adj[&node] {
            let cand = (dist + len, sub);
            if !done.contains(&w) && better(cand, best.get(&w)) {
                best.insert(w, cand);
                heap.push(Label {
                    dist: cand.0,
                    sub,
                    node: w,
                });
            }
        }
    }
    let unreachable: Vec<GraphNode> = graph.nodes.keys().filter(|n| !best.contains_key(n)).copied().collect();
    let stranded: Vec<String> = unreachable.iter().filter(|n| !n.is_road()).map(|n| n.to_string()).collect();
    if !stranded.is_empty() {
        return Err(Error::Validation(format!(
            "transformers unreachable from every substation along roads: {}",
            stranded.join(", ")
        )));
    }
    if !unreachable.is_empty() {
        warn!("{} road nodes are unreachable from every substation and are left out", unreachable.len());
    }
    Ok(VoronoiCells {
        owner: best.iter().map(|(n, (_, s))| (*n, *s)).collect(),
        distance: best.iter().map(|(n, (d, _))| (*n, *d)).collect(),
        unreachable: unreachable
            .into_iter()
            .filter_map(|n| match n {
                GraphNode::Road(r) => Some(r),
                GraphNode::Transformer(_) => None,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub id: usize,
    pub substation: SubstationId,
    /// Sorted ascending.
    pub nodes: Vec<GraphNode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionMap {
    pub cells: VoronoiCells,
    pub community_of: BTreeMap<GraphNode, usize>,
    pub communities: Vec<Community>,
}

/// Nodes and edge list of the subgraph induced by `nodes` (sorted), with
/// edges as index pairs into `nodes`.
pub fn induced(graph: &AugmentedGraph, nodes: &[GraphNode]) -> Vec<(usize, usize, f64)> {
    let pos: BTreeMap<GraphNode, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut out: Vec<(usize, usize, f64)> = graph
        .edges
        .iter()
        .filter_map(|e| match (pos.get(&e.a), pos.get(&e.b)) {
            (Some(&i), Some(&j)) => Some((i.min(j), i.max(j), e.length_m)),
            _ => None,
        })
        .collect();
    out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    out
}

fn is_connected(n: usize, edges: &[(usize, usize, f64)]) -> bool {
    if n == 0 {
        return true;
    }
    let mut uf = crate::secondary::UnionFind::new(n);
    let mut parts = n;
    for &(a, b, _) in edges {
        if uf.union(a, b) {
            parts -= 1;
        }
    }
    parts == 1
}

/// Voronoi cells, then Girvan–Newman within each cell. Communities that
/// contain transformers but no road node could never be fed, so each is
/// merged into an adjacent community.
pub fn partition(graph: &AugmentedGraph, seeds: &[Seed], stop: &StopCondition) -> Result<PartitionMap> {
    let cells = voronoi_assign(graph, seeds)?;
    let mut by_sub: BTreeMap<SubstationId, Vec<GraphNode>> = BTreeMap::new();
    for (n, s) in &cells.owner {
        by_sub.entry(*s).or_default().push(*n);
    }
    let per_cell: Vec<(SubstationId, Vec<Vec<GraphNode>>)> = by_sub
        .par_iter()
        .map(|(sub, nodes)| {
            let edges = induced(graph, nodes);
            if !is_connected(nodes.len(), &edges) {
                return Err(Error::Invariant(format!(
                    "Voronoi cell of substation {sub} is disconnected; check the road data"
                )));
            }
            let demand: Vec<f64> = nodes.iter().map(|n| graph.nodes[n].demand_kw).collect();
            let pairs: Vec<(usize, usize)> = edges.iter().map(|&(a, b, _)| (a, b)).collect();
            let comm = girvan_newman(&pairs, &demand, stop)?;
            let merged = merge_unfed(&comm.labels, &pairs, nodes);
            let k = merged.iter().copied().max().map_or(0, |m| m + 1);
            let mut groups = vec![Vec::new(); k];
            for (i, &l) in merged.iter().enumerate() {
                groups[l].push(nodes[i]);
            }
            groups.retain(|g| !g.is_empty());
            Ok((*sub, groups))
        })
        .collect::<Result<_>>()?;
    let mut map = PartitionMap {
        cells,
        ..Default::default()
    };
    for (sub, groups) in per_cell {
        for nodes in groups {
            let id = map.communities.len();
            for n in &nodes {
                map.community_of.insert(*n, id);
            }
            map.communities.push(Community {
                id,
                substation: sub,
                nodes,
            });
        }
    }
    Ok(map)
}

/// Relabels so every community holds a road node, merging road-less ones
/// into the smallest-labelled neighbour; labels are then compacted in order
/// of each community's smallest node.
fn merge_unfed(labels: &[usize], edges: &[(usize, usize)], nodes: &[GraphNode]) -> Vec<usize> {
    let mut labels = labels.to_vec();
    loop {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut has_road = vec![false; k];
        let mut present = vec![false; k];
        for (i, &l) in labels.iter().enumerate() {
            present[l] = true;
            has_road[l] |= nodes[i].is_road();
        }
        let Some(bad) = (0..k).find(|&l| present[l] && !has_road[l]) else { break };
        let neighbour = edges
            .iter()
            .filter_map(|&(a, b)| match (labels[a] == bad, labels[b] == bad) {
                (true, false) => Some(labels[b]),
                (false, true) => Some(labels[a]),
                _ => None,
            })
            .min();
        match neighbour {
            Some(target) => {
                for l in labels.iter_mut() {
                    if *l == bad {
                        *l = target;
                    }
                }
            }
            // isolated transformer-only cell: nothing to merge with
            None => break,
        }
    }
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in &labels {
        let next = remap.len();
        remap.entry(l).or_insert(next);
    }
    labels.iter().map(|l| remap[l]).collect()
}
