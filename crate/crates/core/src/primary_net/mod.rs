//! Per-community primary network: the road subgraph is pruned to a
//! minimum-length forest that feeds every transformer from one or more
//! root road nodes, subject to capacity and voltage limits.

mod heuristic;
mod network;

pub use heuristic::PrimaryOracle;
pub use network::{stitch, Bases, DistributionNetwork, EdgeKind, NetEdge, NetNode, NodeKind};

use std::collections::{BTreeMap, VecDeque};

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{geodesic_distance, GeoPoint};
use crate::ids::{GraphNode, RoadNodeId, SubstationId};
use crate::ingest::Substation;
use crate::milp::{solve_milp, Constraint, LazyCutOracle, LinearModel, MilpOptions, Sense, SolveStats, SolveStatus, VarKind};
use crate::partition::{induced, AugmentedGraph, Community, PartitionMap};
use crate::secondary::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrimaryOptions {
    /// Line capacity f̄, kW.
    pub line_capacity_kw: f64,
    /// Feeder capacity s̄ at each root, kW.
    pub feeder_capacity_kw: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub resistance_ohm_per_km: f64,
    pub bases: Bases,
    /// Adds valid but redundant rows that tighten the relaxation: per-edge
    /// `x_e ≤ y_r`, transformer coverage `Σ x_e ≥ 1`, and flow bounds
    /// capped at the community's total demand.
    pub tighten: bool,
}

impl Default for PrimaryOptions {
    fn default() -> Self {
        PrimaryOptions {
            line_capacity_kw: 400.0,
            feeder_capacity_kw: 1000.0,
            v_min: 0.95,
            v_max: 1.05,
            resistance_ohm_per_km: 0.33,
            bases: Bases::default(),
            tighten: true,
        }
    }
}

impl PrimaryOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.line_capacity_kw > 0.0 && self.feeder_capacity_kw > 0.0 && self.resistance_ohm_per_km >= 0.0) {
            return Err(Error::Validation("primary capacities must be positive and resistance non-negative".into()));
        }
        if !(self.v_min < 1.0 && 1.0 <= self.v_max) {
            return Err(Error::Validation(format!(
                "voltage band [{}, {}] must satisfy v_min < 1 <= v_max",
                self.v_min, self.v_max
            )));
        }
        self.bases.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimaryEdge {
    /// Tail index (incidence +1).
    pub a: usize,
    /// Head index (incidence −1).
    pub b: usize,
    pub length_m: f64,
    pub resistance_pu: f64,
}

/// One community's primary problem. Node `i` is `nodes[i]`; road nodes
/// carry zero demand and transformers zero substation distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimaryProblem {
    pub community: usize,
    pub substation: SubstationId,
    pub substation_location: GeoPoint,
    pub nodes: Vec<GraphNode>,
    pub locations: Vec<GeoPoint>,
    pub demand_kw: Vec<f64>,
    /// Geodesic distance from the substation to each road node, meters.
    pub d_root_m: Vec<f64>,
    pub edges: Vec<PrimaryEdge>,
    pub opts: PrimaryOptions,
}

impl PrimaryProblem {
    pub fn from_community(
        graph: &AugmentedGraph,
        community: &Community,
        substation: &Substation,
        opts: &PrimaryOptions,
    ) -> PrimaryProblem {
        let nodes = community.nodes.clone();
        let locations: Vec<GeoPoint> = nodes.iter().map(|n| graph.nodes[n].location).collect();
        let z_base = opts.bases.z_base_primary();
        let edges = induced(graph, &nodes)
            .into_iter()
            .map(|(a, b, len)| PrimaryEdge {
                a,
                b,
                length_m: len,
                resistance_pu: opts.resistance_ohm_per_km * len / 1000.0 / z_base,
            })
            .collect();
        PrimaryProblem {
            community: community.id,
            substation: substation.id,
            substation_location: substation.location,
            demand_kw: nodes.iter().map(|n| graph.nodes[n].demand_kw).collect(),
            d_root_m: nodes
                .iter()
                .zip(&locations)
                .map(|(n, p)| if n.is_road() { geodesic_distance(substation.location, *p) } else { 0.0 })
                .collect(),
            nodes,
            locations,
            edges,
            opts: *opts,
        }
    }

    pub fn is_road(&self, i: usize) -> bool {
        self.nodes[i].is_road()
    }

    pub fn road_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.is_road(i)).collect()
    }

    pub fn transformer_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.is_road(i)).collect()
    }

    pub fn total_demand_kw(&self) -> f64 {
        self.demand_kw.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.opts.validate()?;
        for t in self.transformer_nodes() {
            if !(self.demand_kw[t] > 0.0) {
                return Err(Error::Validation(format!("transformer {} has no demand", self.nodes[t])));
            }
        }
        let n = self.nodes.len();
        if self.edges.iter().any(|e| e.a >= n || e.b >= n || e.a == e.b) {
            return Err(Error::Validation("primary edge endpoints out of range".into()));
        }
        Ok(())
    }
}

/// Variable layout of the primary model.
#[derive(Debug, Clone)]
pub struct PrimaryModel {
    pub model: LinearModel,
    m: usize,
    n: usize,
    /// Road node index → position among road nodes.
    road_pos: BTreeMap<usize, usize>,
    n_road: usize,
}

impl PrimaryModel {
    pub fn x(&self, e: usize) -> usize {
        e
    }
    pub fn f(&self, e: usize) -> usize {
        self.m + e
    }
    pub fn y(&self, r: usize) -> usize {
        2 * self.m + self.road_pos[&r]
    }
    pub fn z(&self, r: usize) -> usize {
        2 * self.m + self.n_road + self.road_pos[&r]
    }
    pub fn v(&self, i: usize) -> usize {
        2 * self.m + 2 * self.n_road + i
    }
    pub fn num_nodes(&self) -> usize {
        self.n
    }
}

/// Builds the connectivity, radiality, flow and voltage constraints.
///
/// Flows are in per-unit of the power base. With incidence +1 at an edge's
/// tail and −1 at its head, transformer balance `A_Tᵀ f = p` makes positive
/// `f_e` run from head to tail, so the voltage coupling is written
/// `v_head − v_tail = r_e f_e` to make voltage fall along the flow.
pub fn build_primary_model(p: &PrimaryProblem) -> Result<(PrimaryModel, CycleCuts)> {
    p.validate()?;
    let o = &p.opts;
    if let Some(t) = p.transformer_nodes().into_iter().find(|&t| p.demand_kw[t] > o.feeder_capacity_kw) {
        return Err(Error::Infeasible(format!(
            "transformer {} demands {} kW, more than one feeder can carry ({} kW)",
            p.nodes[t], p.demand_kw[t], o.feeder_capacity_kw
        )));
    }
    let base = o.bases.s_base_kw;
    let m = p.edges.len();
    let n = p.nodes.len();
    let roads = p.road_nodes();
    let road_pos: BTreeMap<usize, usize> = roads.iter().enumerate().map(|(k, &r)| (r, k)).collect();
    let mut pm = PrimaryModel {
        model: LinearModel::new(),
        m,
        n,
        road_pos,
        n_road: roads.len(),
    };
    let fbar = o.line_capacity_kw / base;
    let sbar = o.feeder_capacity_kw / base;
    let fcap = if o.tighten { fbar.min(p.total_demand_kw() / base) } else { fbar };
    let big_m = o.v_max - o.v_min;
    let lm = &mut pm.model;
    let label = |i: usize| p.nodes[i].to_string();
    for e in &p.edges {
        let x = lm.add_binary(format!("x_{}_{}", label(e.a), label(e.b)));
        lm.set_cost(x, e.length_m);
    }
    for e in &p.edges {
        lm.add_var(format!("f_{}_{}", label(e.a), label(e.b)), VarKind::Continuous, -fcap, fcap);
    }
    for &r in &roads {
        lm.add_binary(format!("y_{}", label(r)));
    }
    for &r in &roads {
        let z = lm.add_binary(format!("z_{}", label(r)));
        lm.set_cost(z, -p.d_root_m[r]);
        lm.objective_offset += p.d_root_m[r];
    }
    for i in 0..n {
        lm.add_var(format!("v_{}", label(i)), VarKind::Continuous, o.v_min, o.v_max);
    }

    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, e) in p.edges.iter().enumerate() {
        incident[e.a].push(k);
        incident[e.b].push(k);
    }
    let sign = |k: usize, i: usize| if p.edges[k].a == i { 1.0 } else { -1.0 };

    for &r in &roads {
        let (y, z) = (pm.y(r), pm.z(r));
        let deg: Vec<(usize, f64)> = incident[r].iter().map(|&k| (k, 1.0)).collect();
        let lm = &mut pm.model;
        // no incident edges unless chosen
        let mut row = deg.clone();
        row.push((y, -(m as f64)));
        lm.add_constraint(row, Sense::Le, 0.0);
        // chosen nodes have an edge
        let mut row = deg.clone();
        row.push((y, -1.0));
        lm.add_constraint(row, Sense::Ge, 0.0);
        // roots are chosen
        lm.add_constraint(vec![(y, 1.0), (z, 1.0)], Sense::Ge, 1.0);
        // chosen non-roots transfer: degree ≥ 2
        let mut row = deg.clone();
        row.push((y, -2.0));
        row.push((z, -2.0));
        lm.add_constraint(row, Sense::Ge, -2.0);
        if o.tighten {
            for &k in &incident[r] {
                lm.add_constraint(vec![(k, 1.0), (y, -1.0)], Sense::Le, 0.0);
            }
        }
    }
    // edge count of a forest rooted at the chosen roots
    {
        let mut row: Vec<(usize, f64)> = (0..m).map(|k| (k, 1.0)).collect();
        for &r in &roads {
            row.push((pm.y(r), -1.0));
            row.push((pm.z(r), -1.0));
        }
        let rhs = p.transformer_nodes().len() as f64 - roads.len() as f64;
        pm.model.add_constraint(row, Sense::Eq, rhs);
    }
    for t in p.transformer_nodes() {
        let row: Vec<(usize, f64)> = incident[t].iter().map(|&k| (pm.f(k), sign(k, t))).collect();
        pm.model.add_constraint(row, Sense::Eq, p.demand_kw[t] / base);
        if o.tighten {
            pm.model.add_constraint(incident[t].iter().map(|&k| (k, 1.0)).collect(), Sense::Ge, 1.0);
        }
    }
    if o.tighten {
        for (chain, k) in transformer_chains(p, &incident) {
            pm.model.add_constraint(chain.into_iter().map(|e| (e, 1.0)).collect(), Sense::Ge, k as f64);
        }
        // each root injects at most s̄
        let min_roots = (p.total_demand_kw() / o.feeder_capacity_kw - 1e-9).ceil().max(1.0);
        let row: Vec<(usize, f64)> = roads.iter().map(|&r| (pm.z(r), 1.0)).collect();
        pm.model.add_constraint(row, Sense::Le, roads.len() as f64 - min_roots);
    }
    for &r in &roads {
        let z = pm.z(r);
        let net: Vec<(usize, f64)> = incident[r].iter().map(|&k| (pm.f(k), sign(k, r))).collect();
        let mut up = net.clone();
        up.push((z, sbar));
        pm.model.add_constraint(up, Sense::Le, sbar);
        let mut lo = net;
        lo.push((z, -sbar));
        pm.model.add_constraint(lo, Sense::Ge, -sbar);
    }
    for k in 0..m {
        pm.model.add_constraint(vec![(pm.f(k), 1.0), (k, -fbar)], Sense::Le, 0.0);
        pm.model.add_constraint(vec![(pm.f(k), -1.0), (k, -fbar)], Sense::Le, 0.0);
    }
    // roots are regulated to 1 pu
    for &r in &roads {
        let (v, z) = (pm.v(r), pm.z(r));
        pm.model.add_constraint(vec![(v, 1.0), (z, big_m)], Sense::Ge, 1.0);
        pm.model.add_constraint(vec![(v, 1.0), (z, -big_m)], Sense::Le, 1.0);
    }
    for (k, e) in p.edges.iter().enumerate() {
        let (va, vb, f) = (pm.v(e.a), pm.v(e.b), pm.f(k));
        let drop = vec![(vb, 1.0), (va, -1.0), (f, -e.resistance_pu)];
        let mut le = drop.clone();
        le.push((k, big_m));
        pm.model.add_constraint(le, Sense::Le, big_m);
        let mut ge = drop;
        ge.push((k, -big_m));
        pm.model.add_constraint(ge, Sense::Ge, -big_m);
    }
    let cuts = CycleCuts {
        edges: p.edges.iter().map(|e| (e.a, e.b)).collect(),
        n,
    };
    Ok((pm, cuts))
}

/// Maximal paths whose interior nodes are transformers, as `(edges,
/// transformer count)`. Transformers only touch their chain, so every
/// transformer reaches a root along it: with road nodes at both ends at
/// most one chain edge can be left out, with one end dangling none can.
fn transformer_chains(p: &PrimaryProblem, incident: &[Vec<usize>]) -> Vec<(Vec<usize>, usize)> {
    let other = |k: usize, i: usize| if p.edges[k].a == i { p.edges[k].b } else { p.edges[k].a };
    let mut seen = vec![false; p.edges.len()];
    let mut out = Vec::new();
    for t in p.transformer_nodes() {
        if incident[t].iter().all(|&k| seen[k]) {
            continue;
        }
        let mut edges = Vec::new();
        let mut count = 1;
        let mut road_ends = 0;
        for &start in &incident[t] {
            let (mut prev, mut k) = (t, start);
            loop {
                if seen[k] {
                    break;
                }
                seen[k] = true;
                edges.push(k);
                let next = other(k, prev);
                if p.is_road(next) {
                    road_ends += 1;
                    break;
                }
                count += 1;
                match incident[next].iter().find(|&&e| e != k) {
                    Some(&e) => (prev, k) = (next, e),
                    None => break,
                }
            }
        }
        if road_ends > 0 {
            out.push((edges, count));
        }
    }
    out
}

/// Separates cycles among selected edges as `Σ_{e∈C} x_e ≤ |C| − 1`,
/// one per fundamental cycle of the selection.
#[derive(Debug, Clone)]
pub struct CycleCuts {
    edges: Vec<(usize, usize)>,
    n: usize,
}

impl CycleCuts {
    pub fn new(edges: Vec<(usize, usize)>, n: usize) -> Self {
        CycleCuts { edges, n }
    }

    /// Edge index sets of fundamental cycles of the chosen edges.
    pub fn cycles(&self, chosen: &[usize]) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.n);
        let mut tree: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.n];
        let mut closing = Vec::new();
        for &k in chosen {
            let (a, b) = self.edges[k];
            if uf.union(a, b) {
                tree[a].push((b, k));
                tree[b].push((a, k));
            } else {
                closing.push(k);
            }
        }
        closing
            .into_iter()
            .map(|k| {
                let (a, b) = self.edges[k];
                let mut path = tree_path(&tree, a, b);
                path.push(k);
                path.sort_unstable();
                path
            })
            .collect()
    }
}

/// Edge indices on the unique forest path from `a` to `b`.
fn tree_path(tree: &[Vec<(usize, usize)>], a: usize, b: usize) -> Vec<usize> {
    let mut prev: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut queue = VecDeque::from([a]);
    let mut seen = vec![false; tree.len()];
    seen[a] = true;
    while let Some(u) = queue.pop_front() {
        if u == b {
            break;
        }
        for &(w, k) in &tree[u] {
            if !seen[w] {
                seen[w] = true;
                prev.insert(w, (u, k));
                queue.push_back(w);
            }
        }
    }
    let mut path = Vec::new();
    let mut cur = b;
    while cur != a {
        let (u, k) = prev[&cur];
        path.push(k);
        cur = u;
    }
    path
}

impl LazyCutOracle for CycleCuts {
    fn cuts(&mut self, values: &[f64]) -> Vec<Constraint> {
        let chosen: Vec<usize> = (0..self.edges.len()).filter(|&k| values[k] > 0.5).collect();
        self.cycles(&chosen)
            .into_iter()
            .map(|c| {
                let rhs = c.len() as f64 - 1.0;
                Constraint::new(c.into_iter().map(|k| (k, 1.0)).collect(), Sense::Le, rhs)
            })
            .collect()
    }
}

/// Selected primary edge oriented away from its root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub edge: usize,
    pub from: usize,
    pub to: usize,
    /// Downstream flow in kW as solved.
    pub flow_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimarySolution {
    pub problem: PrimaryProblem,
    pub objective: f64,
    pub x: Vec<bool>,
    pub y: BTreeMap<usize, bool>,
    pub z: BTreeMap<usize, bool>,
    /// Signed edge flows in per-unit as solved.
    pub f_pu: Vec<f64>,
    pub v: Vec<f64>,
    pub tree: Vec<TreeEdge>,
    pub roots: Vec<usize>,
    pub cuts_added: usize,
    pub stats: SolveStats,
}

impl PrimarySolution {
    pub fn root_ids(&self) -> Vec<RoadNodeId> {
        self.roots
            .iter()
            .filter_map(|&r| match self.problem.nodes[r] {
                GraphNode::Road(id) => Some(id),
                GraphNode::Transformer(_) => None,
            })
            .collect()
    }

    /// Chosen road nodes that are not roots.
    pub fn transfer_nodes(&self) -> Vec<usize> {
        self.y.iter().filter(|(r, &y)| y && self.z[r]).map(|(r, _)| *r).collect()
    }
}

fn empty_solution(p: &PrimaryProblem) -> PrimarySolution {
    let roads = p.road_nodes();
    PrimarySolution {
        problem: p.clone(),
        objective: 0.0,
        x: vec![false; p.edges.len()],
        y: roads.iter().map(|&r| (r, false)).collect(),
        z: roads.iter().map(|&r| (r, true)).collect(),
        f_pu: vec![0.0; p.edges.len()],
        v: vec![1.0; p.nodes.len()],
        tree: Vec::new(),
        roots: Vec::new(),
        cuts_added: 0,
        stats: SolveStats::default(),
    }
}

/// Solves one community. On infeasibility, the voltage band, then line
/// capacity, then feeder capacity are relaxed in turn to name the binding
/// family; relaxed solutions are never returned.
pub fn solve_primary(p: &PrimaryProblem, milp: &MilpOptions) -> Result<PrimarySolution> {
    if p.transformer_nodes().is_empty() {
        p.validate()?;
        return Ok(empty_solution(p));
    }
    let (pm, cycles) = build_primary_model(p)?;
    let mut oracle = PrimaryOracle { p, pm: &pm, cycles };
    let sol = solve_milp(&pm.model, milp, &mut oracle)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::NodeLimit => return Err(Error::NodeLimit(milp.node_limit)),
        SolveStatus::Unbounded => return Err(Error::Invariant("primary model unbounded".into())),
        SolveStatus::Infeasible => return Err(Error::Infeasible(triage(p, milp))),
    }
    debug!(
        "community {}: objective {:.1} after {} nodes, {} cuts",
        p.community, sol.objective, sol.stats.nodes, sol.stats.cuts_added
    );
    let vals = sol.values.as_ref().expect("optimal solutions carry values");
    let roads = p.road_nodes();
    let x: Vec<bool> = (0..p.edges.len()).map(|k| vals[pm.x(k)] > 0.5).collect();
    let y: BTreeMap<usize, bool> = roads.iter().map(|&r| (r, vals[pm.y(r)] > 0.5)).collect();
    let z: BTreeMap<usize, bool> = roads.iter().map(|&r| (r, vals[pm.z(r)] > 0.5)).collect();
    let f_pu: Vec<f64> = (0..p.edges.len()).map(|k| vals[pm.f(k)]).collect();
    let v: Vec<f64> = (0..p.nodes.len()).map(|i| vals[pm.v(i)]).collect();
    let roots: Vec<usize> = roads.iter().copied().filter(|r| !z[r]).collect();
    let tree = orient_tree(p, &x, &roots, &f_pu)?;
    Ok(PrimarySolution {
        problem: p.clone(),
        objective: sol.objective,
        x,
        y,
        z,
        f_pu,
        v,
        tree,
        roots,
        cuts_added: sol.stats.cuts_added,
        stats: sol.stats,
    })
}

/// Orients selected edges away from the roots and checks the result is a
/// forest with one root per tree covering every transformer.
fn orient_tree(p: &PrimaryProblem, x: &[bool], roots: &[usize], f_pu: &[f64]) -> Result<Vec<TreeEdge>> {
    let n = p.nodes.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, e) in p.edges.iter().enumerate().filter(|(k, _)| x[*k]) {
        adj[e.a].push((e.b, k));
        adj[e.b].push((e.a, k));
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for &r in roots {
        if seen[r] {
            return Err(Error::Invariant(format!("community {}: two roots share a tree", p.community)));
        }
        seen[r] = true;
        let mut queue = VecDeque::from([(r, usize::MAX)]);
        while let Some((u, via)) = queue.pop_front() {
            for &(w, k) in &adj[u] {
                if k == via {
                    continue;
                }
                if seen[w] {
                    return Err(Error::Invariant(format!(
                        "community {}: selected edges contain a cycle or join two roots",
                        p.community
                    )));
                }
                seen[w] = true;
                let e = p.edges[k];
                // positive f runs head → tail
                let downstream = if e.b == u { f_pu[k] } else { -f_pu[k] };
                out.push(TreeEdge {
                    edge: k,
                    from: u,
                    to: w,
                    flow_kw: downstream * p.opts.bases.s_base_kw,
                });
                queue.push_back((w, k));
            }
        }
    }
    if let Some(t) = p.transformer_nodes().into_iter().find(|&t| !seen[t]) {
        return Err(Error::Invariant(format!("community {}: transformer {} is not fed", p.community, p.nodes[t])));
    }
    if let Some(i) = (0..n).find(|&i| !seen[i] && !adj[i].is_empty()) {
        return Err(Error::Invariant(format!(
            "community {}: node {} is on a selected edge but not under a root",
            p.community, p.nodes[i]
        )));
    }
    Ok(out)
}

fn triage(p: &PrimaryProblem, milp: &MilpOptions) -> String {
    let try_relaxed = |q: &PrimaryProblem| -> bool {
        build_primary_model(q)
            .and_then(|(pm, cycles)| solve_milp(&pm.model, milp, &mut PrimaryOracle { p: q, pm: &pm, cycles }))
            .map(|s| s.status == SolveStatus::Optimal)
            .unwrap_or(false)
    };
    let mut q = p.clone();
    q.opts.v_min = 0.0;
    q.opts.v_max = 2.0;
    let what = if try_relaxed(&q) {
        "the voltage band binds (feasible once voltage limits are lifted)"
    } else {
        q.opts.line_capacity_kw = 1e6;
        if try_relaxed(&q) {
            "line capacity binds (feasible once voltage and line limits are lifted)"
        } else {
            q.opts.feeder_capacity_kw = 1e6;
            if try_relaxed(&q) {
                "feeder capacity binds (feasible once voltage, line and feeder limits are lifted)"
            } else {
                "the community cannot be connected at all"
            }
        }
    };
    format!(
        "primary network for community {} (substation {}) is infeasible: {what}",
        p.community, p.substation
    )
}

pub fn build_problems(
    graph: &AugmentedGraph,
    partition: &PartitionMap,
    substations: &[Substation],
    opts: &PrimaryOptions,
) -> Result<Vec<PrimaryProblem>> {
    let subs: BTreeMap<SubstationId, &Substation> = substations.iter().map(|s| (s.id, s)).collect();
    partition
        .communities
        .iter()
        .map(|c| {
            let s = subs
                .get(&c.substation)
                .ok_or_else(|| Error::Invariant(format!("community {} names unknown substation {}", c.id, c.substation)))?;
            Ok(PrimaryProblem::from_community(graph, c, s, opts))
        })
        .collect()
}

/// Solves every community in parallel, in community order.
pub fn solve_all(problems: &[PrimaryProblem], milp: &MilpOptions) -> Result<Vec<PrimarySolution>> {
    problems.par_iter().map(|p| solve_primary(p, milp)).collect()
}
