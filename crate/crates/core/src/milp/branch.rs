use log::{debug, trace};
use serde::{Deserialize, Serialize};

use super::simplex::{Lp, LpStatus};
use super::{Constraint, LinearModel, Solution, SolveStats, SolveStatus, VarKind};
use crate::error::{Error, Result};

/// Supplies constraints that are only checked on integer-feasible points.
///
/// Every returned cut must be violated by `values`; otherwise the search
/// stops with [`Error::InvalidCut`].
pub trait LazyCutOracle {
    fn cuts(&mut self, values: &[f64]) -> Vec<Constraint>;

    /// Optional primal heuristic: a complete candidate built from a
    /// fractional LP point. Candidates are verified before use.
    fn heuristic(&mut self, _lp_values: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Oracle that never cuts.
pub struct NoCuts;

impl LazyCutOracle for NoCuts {
    fn cuts(&mut self, _: &[f64]) -> Vec<Constraint> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MilpOptions {
    pub node_limit: usize,
    pub int_tol: f64,
    pub feas_tol: f64,
    /// Relative optimality gap used for pruning.
    pub rel_gap: f64,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            node_limit: 1_000_000,
            int_tol: 1e-6,
            feas_tol: 1e-6,
            rel_gap: 1e-6,
        }
    }
}

/// Solves `lp`, refactoring or restarting from the slack basis if the
/// simplex stalls.
pub(crate) fn robust_solve(lp: &mut Lp) -> Result<LpStatus> {
    let s = lp.solve();
    if s != LpStatus::Stalled {
        return Ok(s);
    }
    debug!("simplex stalled, refactoring");
    if lp.refactor() {
        let s = lp.solve();
        if s != LpStatus::Stalled {
            return Ok(s);
        }
    }
    debug!("simplex stalled again, restarting from slack basis");
    lp.reset_basis();
    match lp.solve() {
        LpStatus::Stalled => Err(Error::Invariant("simplex failed to converge".into())),
        s => Ok(s),
    }
}

/// Nodes between calls to the oracle's primal heuristic.
const HEURISTIC_EVERY: usize = 25;

fn accept_candidate(model: &LinearModel, int_vars: &[usize], cuts: &[Constraint], opts: &MilpOptions, x: &[f64]) -> bool {
    x.len() == model.num_vars()
        && int_vars.iter().all(|&j| x[j] == x[j].round())
        && model.max_violation(x) <= opts.feas_tol
        && cuts.iter().all(|c| c.violation(x) <= opts.feas_tol)
}

struct Node {
    /// `(lower, upper)` for each integer variable, in `int_vars` order.
    bounds: Vec<(f64, f64)>,
    parent_bound: f64,
    depth: usize,
}

/// Depth-first branch-and-bound.
///
/// All nodes share a single tableau: bounds do not enter `B⁻¹A`, so each
/// node only resets variable bounds and re-optimizes with the dual simplex.
/// Lazy cuts are appended as global rows.
pub fn solve_milp(model: &LinearModel, opts: &MilpOptions, oracle: &mut dyn LazyCutOracle) -> Result<Solution> {
    model.validate()?;
    let int_vars: Vec<usize> = (0..model.num_vars())
        .filter(|&j| model.vars[j].kind == VarKind::Binary)
        .collect();
    let mut lp = Lp::new(model);
    let mut stats = SolveStats::default();
    let mut cuts: Vec<Constraint> = Vec::new();
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut root_unbounded = false;
    let mut hit_limit = false;

    let mut stack = vec![Node {
        bounds: int_vars.iter().map(|&j| lp.bounds(j)).collect(),
        parent_bound: f64::NEG_INFINITY,
        depth: 0,
    }];

    let prune_tol = |inc: f64| (opts.rel_gap * inc.abs()).max(1e-9);

    while let Some(node) = stack.pop() {
        if let Some((inc, _)) = &incumbent {
            if node.parent_bound >= inc - prune_tol(*inc) {
                continue;
            }
        }
        if stats.nodes >= opts.node_limit {
            hit_limit = true;
            break;
        }
        stats.nodes += 1;
        stats.max_depth = stats.max_depth.max(node.depth);
        for (k, &j) in int_vars.iter().enumerate() {
            lp.set_bounds(j, node.bounds[k].0, node.bounds[k].1);
        }

        // Solve, separating lazy cuts until the point is accepted or pruned.
        loop {
            let status = robust_solve(&mut lp)?;
            trace!("node {} depth {} status {status:?}", stats.nodes, node.depth);
            match status {
                LpStatus::Infeasible => break,
                LpStatus::Unbounded => {
                    if node.depth == 0 {
                        root_unbounded = true;
                    }
                    break;
                }
                LpStatus::Stalled => unreachable!(),
                LpStatus::Optimal => {}
            }
            let x = lp.values();
            let obj = model.objective_value(&x);
            if let Some((inc, _)) = &incumbent {
                if obj >= inc - prune_tol(*inc) {
                    break;
                }
            }
            let frac = int_vars
                .iter()
                .map(|&j| (j, (x[j] - x[j].round()).abs()))
                .filter(|&(_, f)| f > opts.int_tol)
                .fold(None::<(usize, f64)>, |best, (j, f)| match best {
                    Some((_, bf)) if bf >= f - 1e-12 => best,
                    _ => Some((j, f)),
                });
            trace!("  obj {obj:.3} fractional {}", int_vars.iter().filter(|&&j| (x[j] - x[j].round()).abs() > opts.int_tol).count());
            if frac.is_some() && (stats.nodes == 1 || stats.nodes % HEURISTIC_EVERY == 0) {
                if let Some(cand) = oracle.heuristic(&x) {
                    let obj = model.objective_value(&cand);
                    let better = incumbent.as_ref().is_none_or(|(inc, _)| obj < *inc - prune_tol(*inc));
                    if better && accept_candidate(model, &int_vars, &cuts, opts, &cand) && oracle.cuts(&cand).is_empty() {
                        debug!("heuristic incumbent {obj} at node {}", stats.nodes);
                        incumbent = Some((obj, cand));
                    }
                }
                if let Some((inc, _)) = &incumbent {
                    if obj >= inc - prune_tol(*inc) {
                        break;
                    }
                }
            }
            if let Some((j, _)) = frac {
                let k = int_vars.iter().position(|&v| v == j).unwrap();
                let down = x[j].floor();
                let mut lo_child = node.bounds.clone();
                lo_child[k].1 = down;
                let mut hi_child = node.bounds.clone();
                hi_child[k].0 = down + 1.0;
                let near_up = x[j] - down >= 0.5;
                let (first, second) = if near_up { (hi_child, lo_child) } else { (lo_child, hi_child) };
                stack.push(Node {
                    bounds: second,
                    parent_bound: obj,
                    depth: node.depth + 1,
                });
                stack.push(Node {
                    bounds: first,
                    parent_bound: obj,
                    depth: node.depth + 1,
                });
                break;
            }
            // integer feasible: snap and ask the oracle
            let mut xr = x.clone();
            for &j in &int_vars {
                xr[j] = xr[j].round();
            }
            let new_cuts = oracle.cuts(&xr);
            if !new_cuts.is_empty() {
                for c in &new_cuts {
                    if c.coeffs.iter().any(|&(j, _)| j >= model.num_vars()) {
                        return Err(Error::InvalidCut("cut references an unknown variable".into()));
                    }
                    if c.violation(&xr) <= opts.feas_tol {
                        return Err(Error::InvalidCut(format!(
                            "oracle returned a cut that the candidate satisfies: {c:?}"
                        )));
                    }
                    lp.push_row(c);
                }
                stats.cuts_added += new_cuts.len();
                cuts.extend(new_cuts);
                continue;
            }
            let viol = model
                .max_violation(&xr)
                .max(cuts.iter().map(|c| c.violation(&xr)).fold(0.0, f64::max));
            if viol > opts.feas_tol {
                // the snapped point drifted; rebuild the tableau and retry once
                if !lp.refactor() {
                    lp.reset_basis();
                }
                let x2 = match robust_solve(&mut lp)? {
                    LpStatus::Optimal => lp.values(),
                    _ => break,
                };
                let mut xr2 = x2.clone();
                for &j in &int_vars {
                    xr2[j] = xr2[j].round();
                }
                let v2 = model.max_violation(&xr2);
                if v2 > opts.feas_tol {
                    return Err(Error::Invariant(format!(
                        "integer candidate violates the model by {v2:e} after refactoring"
                    )));
                }
                xr = xr2;
            }
            let obj = model.objective_value(&xr);
            if incumbent.as_ref().is_none_or(|(inc, _)| obj < *inc) {
                debug!("incumbent {obj} at node {}", stats.nodes);
                incumbent = Some((obj, xr));
            }
            break;
        }
        if root_unbounded {
            break;
        }
    }
    stats.lp_iterations = lp.iterations;

    let (status, values, objective) = if root_unbounded {
        (SolveStatus::Unbounded, None, f64::NEG_INFINITY)
    } else {
        match (incumbent, hit_limit) {
            (Some((o, v)), false) => (SolveStatus::Optimal, Some(v), o),
            (Some((o, v)), true) => (SolveStatus::NodeLimit, Some(v), o),
            (None, true) => (SolveStatus::NodeLimit, None, f64::INFINITY),
            (None, false) => (SolveStatus::Infeasible, None, f64::INFINITY),
        }
    };
    Ok(Solution {
        status,
        values,
        objective,
        cuts,
        stats,
    })
}
