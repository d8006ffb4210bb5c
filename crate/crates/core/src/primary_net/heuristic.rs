//! LP-guided construction of feasible primary forests, used to seed the
//! branch-and-bound incumbent.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use super::{CycleCuts, PrimaryModel, PrimaryProblem};
use crate::milp::{Constraint, LazyCutOracle};

/// Cycle cuts plus the forest heuristic.
pub struct PrimaryOracle<'a> {
    pub p: &'a PrimaryProblem,
    pub pm: &'a PrimaryModel,
    pub cycles: CycleCuts,
}

impl LazyCutOracle for PrimaryOracle<'_> {
    fn cuts(&mut self, values: &[f64]) -> Vec<Constraint> {
        self.cycles.cuts(values)
    }

    fn heuristic(&mut self, lp: &[f64]) -> Option<Vec<f64>> {
        let mut roots = initial_roots(self.p, self.pm, lp);
        let by_pref = root_preference(self.p, self.pm, lp);
        for _ in 0..4 {
            let forest = grow_forest(self.p, self.pm, lp, &roots)?;
            match evaluate(self.p, self.pm, &forest, &roots) {
                Ok(x) => return Some(x),
                Err(()) => {
                    // add the next preferred root and retry
                    let next = by_pref.iter().find(|r| !roots.contains(r))?;
                    roots.insert(*next);
                }
            }
        }
        None
    }
}

/// Road nodes by decreasing LP root weight `1 − z`, then by distance.
fn root_preference(p: &PrimaryProblem, pm: &PrimaryModel, lp: &[f64]) -> Vec<usize> {
    let mut roads = p.road_nodes();
    roads.sort_by(|&a, &b| {
        let (wa, wb) = (1.0 - lp[pm.z(a)], 1.0 - lp[pm.z(b)]);
        wb.total_cmp(&wa).then(p.d_root_m[a].total_cmp(&p.d_root_m[b])).then(a.cmp(&b))
    });
    roads
}

fn initial_roots(p: &PrimaryProblem, pm: &PrimaryModel, lp: &[f64]) -> BTreeSet<usize> {
    let pref = root_preference(p, pm, lp);
    let need = (p.total_demand_kw() / p.opts.feeder_capacity_kw - 1e-9).ceil().max(1.0) as usize;
    let mut roots: BTreeSet<usize> = pref.iter().copied().filter(|&r| 1.0 - lp[pm.z(r)] >= 0.5).collect();
    for r in pref {
        if roots.len() >= need {
            break;
        }
        roots.insert(r);
    }
    roots
}

/// Multi-source shortest-path growth: repeatedly attaches the unconnected
/// transformer nearest to the current forest. Edge cost favours edges the
/// LP selected. Returns chosen edge indices.
fn grow_forest(p: &PrimaryProblem, pm: &PrimaryModel, lp: &[f64], roots: &BTreeSet<usize>) -> Option<Vec<usize>> {
    let n = p.nodes.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, e) in p.edges.iter().enumerate() {
        adj[e.a].push((e.b, k));
        adj[e.b].push((e.a, k));
    }
    let cost: Vec<f64> = p
        .edges
        .iter()
        .enumerate()
        .map(|(k, e)| e.length_m * (1.0 - lp[pm.x(k)].clamp(0.0, 1.0)) + 1e-3 * e.length_m)
        .collect();
    let mut in_tree = vec![false; n];
    for &r in roots {
        in_tree[r] = true;
    }
    let mut pending: BTreeSet<usize> = p.transformer_nodes().into_iter().collect();
    let mut chosen = Vec::new();
    while !pending.is_empty() {
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        for i in (0..n).filter(|&i| in_tree[i]) {
            dist[i] = 0.0;
            heap.push(Reverse((Ord(0.0), i)));
        }
        let mut hit = None;
        while let Some(Reverse((Ord(d), u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            if pending.contains(&u) {
                hit = Some(u);
                break;
            }
            for &(w, k) in &adj[u] {
                let nd = d + cost[k];
                if nd < dist[w] && !in_tree[w] {
                    dist[w] = nd;
                    via[w] = k;
                    heap.push(Reverse((Ord(nd), w)));
                }
            }
        }
        let mut u = hit?;
        while !in_tree[u] {
            in_tree[u] = true;
            pending.remove(&u);
            let k = via[u];
            chosen.push(k);
            let e = p.edges[k];
            u = if e.a == u { e.b } else { e.a };
        }
    }
    Some(chosen)
}

#[derive(Clone, Copy, PartialEq)]
struct Ord(f64);
impl Eq for Ord {}
impl std::cmp::Ord for Ord {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
impl PartialOrd for Ord {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Full variable vector for a forest, or `Err` if a limit is broken.
fn evaluate(p: &PrimaryProblem, pm: &PrimaryModel, edges: &[usize], roots: &BTreeSet<usize>) -> Result<Vec<f64>, ()> {
    let n = p.nodes.len();
    let o = &p.opts;
    let base = o.bases.s_base_kw;
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for &k in edges {
        let e = p.edges[k];
        adj[e.a].push((e.b, k));
        adj[e.b].push((e.a, k));
    }
    let mut x = vec![0.0; pm.model.num_vars()];
    let mut order = Vec::new();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    let used_roots: Vec<usize> = roots.iter().copied().filter(|&r| !adj[r].is_empty()).collect();
    for &r in &used_roots {
        seen[r] = true;
        order.push(r);
        let mut head = order.len() - 1;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(w, k) in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some((u, k));
                    order.push(w);
                }
            }
        }
    }
    let mut through: Vec<f64> = p.demand_kw.clone();
    for &u in order.iter().rev() {
        if let Some((par, k)) = parent[u] {
            if through[u] > o.line_capacity_kw + 1e-9 {
                return Err(());
            }
            let e = p.edges[k];
            // positive f runs head → tail
            let f = if e.b == par { through[u] } else { -through[u] } / base;
            x[pm.x(k)] = 1.0;
            x[pm.f(k)] = f;
            through[par] += through[u];
        }
    }
    if used_roots.iter().any(|&r| through[r] > o.feeder_capacity_kw + 1e-9) {
        return Err(());
    }
    for i in 0..n {
        x[pm.v(i)] = 1.0;
    }
    for &u in &order {
        if let Some((par, k)) = parent[u] {
            let v = x[pm.v(par)] - p.edges[k].resistance_pu * through[u] / base;
            if v < o.v_min {
                return Err(());
            }
            x[pm.v(u)] = v;
        }
    }
    for r in p.road_nodes() {
        let used = !adj[r].is_empty();
        x[pm.y(r)] = if used { 1.0 } else { 0.0 };
        x[pm.z(r)] = if used && used_roots.contains(&r) { 0.0 } else { 1.0 };
    }
    Ok(x)
}
