//! Dense-tableau bounded-variable simplex.
//!
//! Every row `i` of the model becomes `a_i·x + s_i = b_i` with a bounded
//! slack `s_i`, so the initial basis is the identity and every variable,
//! structural or slack, lives inside `[lo, up]` (either side may be
//! infinite). The full tableau `B⁻¹[A | I]` is kept explicitly, which is
//! fine at desk scale; a revised/sparse implementation would replace this
//! type without touching the branch-and-bound driver.
//!
//! Two algorithms share the tableau:
//! * primal simplex with a composite phase 1 (minimize the sum of bound
//!   violations of basic variables), used from cold starts;
//! * dual simplex, used after bound changes or appended rows, when the
//!   current basis is still dual feasible.
//!
//! Both switch to Bland's rule after [`DEGENERATE_LIMIT`] degenerate pivots.

use super::{Constraint, LinearModel, Sense, VarKind};

const PIV_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
pub(crate) const DEGENERATE_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap hit or the basis became numerically unusable.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarStatus {
    Basic,
    Lower,
    Upper,
    /// Nonbasic at zero with both bounds infinite.
    Free,
}

#[derive(Debug, Clone)]
pub(crate) struct Lp {
    m: usize,
    n: usize,
    n_struct: usize,
    tab: Vec<f64>,
    rhs: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    status: Vec<VarStatus>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    pub iterations: usize,
    pivots_since_refactor: usize,
}

enum Step {
    Flip,
    Pivot { row: usize, leave_at_upper: bool },
}

impl Lp {
    /// Builds the LP relaxation of `model` (binaries become `[0, 1]`).
    pub fn new(model: &LinearModel) -> Lp {
        let n_struct = model.vars.len();
        let mut cost = vec![0.0; n_struct];
        for &(j, c) in &model.objective {
            cost[j] += c;
        }
        let mut lo = Vec::with_capacity(n_struct);
        let mut up = Vec::with_capacity(n_struct);
        for v in &model.vars {
            match v.kind {
                VarKind::Binary => {
                    lo.push(v.lower.max(0.0));
                    up.push(v.upper.min(1.0));
                }
                VarKind::Continuous => {
                    lo.push(v.lower);
                    up.push(v.upper);
                }
            }
        }
        let mut lp = Lp {
            m: 0,
            n: n_struct,
            n_struct,
            tab: Vec::new(),
            rhs: Vec::new(),
            beta: Vec::new(),
            basis: Vec::new(),
            pos: vec![usize::MAX; n_struct],
            status: vec![VarStatus::Lower; n_struct],
            lo,
            up,
            cost,
            d: Vec::new(),
            rows: Vec::new(),
            b: Vec::new(),
            iterations: 0,
            pivots_since_refactor: 0,
        };
        lp.d = lp.cost.clone();
        for j in 0..n_struct {
            lp.status[j] = lp.preferred_status(j);
        }
        for c in &model.constraints {
            lp.push_row(c);
        }
        lp.recompute_beta();
        lp
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, up: f64) {
        self.lo[j] = lo;
        self.up[j] = up;
        if self.status[j] != VarStatus::Basic {
            self.status[j] = self.valid_status(j, self.status[j]);
        }
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lo[j], self.up[j])
    }

    /// Structural values of the current basic solution.
    pub fn values(&self) -> Vec<f64> {
        (0..self.n_struct).map(|j| self.value(j)).collect()
    }

    /// Largest dual infeasibility over nonbasic columns.
    pub fn dual_infeasibility(&self) -> f64 {
        (0..self.n)
            .filter(|&j| self.status[j] != VarStatus::Basic && self.lo[j] < self.up[j])
            .map(|j| match self.status[j] {
                VarStatus::Lower => (-self.d[j]).max(0.0),
                VarStatus::Upper => self.d[j].max(0.0),
                VarStatus::Free => self.d[j].abs(),
                VarStatus::Basic => 0.0,
            })
            .fold(0.0, f64::max)
    }

    fn value(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::Basic => self.beta[self.pos[j]],
            VarStatus::Lower => self.lo[j],
            VarStatus::Upper => self.up[j],
            VarStatus::Free => 0.0,
        }
    }

    fn preferred_status(&self, j: usize) -> VarStatus {
        let (lo, up) = (self.lo[j], self.up[j]);
        if self.d.get(j).copied().unwrap_or(0.0) < 0.0 {
            if up.is_finite() {
                VarStatus::Upper
            } else if lo.is_finite() {
                VarStatus::Lower
            } else {
                VarStatus::Free
            }
        } else if lo.is_finite() {
            VarStatus::Lower
        } else if up.is_finite() {
            VarStatus::Upper
        } else {
            VarStatus::Free
        }
    }

    fn valid_status(&self, j: usize, s: VarStatus) -> VarStatus {
        match s {
            VarStatus::Lower if self.lo[j].is_finite() => VarStatus::Lower,
            VarStatus::Upper if self.up[j].is_finite() => VarStatus::Upper,
            VarStatus::Basic => VarStatus::Basic,
            _ => {
                if self.lo[j].is_finite() {
                    VarStatus::Lower
                } else if self.up[j].is_finite() {
                    VarStatus::Upper
                } else {
                    VarStatus::Free
                }
            }
        }
    }

    /// Appends `c` as a new row with its slack basic.
    pub fn push_row(&mut self, c: &Constraint) {
        let (slo, sup) = match c.sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        let old_n = self.n;
        let new_n = old_n + 1;
        // widen existing rows by one zero column
        let mut tab = Vec::with_capacity((self.m + 1) * new_n);
        for i in 0..self.m {
            tab.extend_from_slice(&self.tab[i * old_n..(i + 1) * old_n]);
            tab.push(0.0);
        }
        let mut row = vec![0.0; new_n];
        for &(j, a) in &c.coeffs {
            row[j] += a;
        }
        row[old_n] = 1.0;
        let mut r = c.rhs;
        for i in 0..self.m {
            let bj = self.basis[i];
            let f = row[bj];
            if f != 0.0 {
                let src = &tab[i * new_n..(i + 1) * new_n];
                for (x, s) in row.iter_mut().zip(src) {
                    *x -= f * s;
                }
                row[bj] = 0.0;
                r -= f * self.rhs[i];
            }
        }
        tab.extend_from_slice(&row);
        self.tab = tab;
        self.n = new_n;
        self.lo.push(slo);
        self.up.push(sup);
        self.cost.push(0.0);
        self.d.push(0.0);
        self.status.push(VarStatus::Basic);
        self.pos.push(self.m);
        self.basis.push(old_n);
        self.rhs.push(r);
        // new slack value = rhs - a·x at the current point
        let ax: f64 = c.coeffs.iter().map(|&(j, a)| a * self.value(j)).sum();
        self.beta.push(c.rhs - ax);
        self.rows.push(c.coeffs.clone());
        self.b.push(c.rhs);
        self.m += 1;
    }

    fn recompute_beta(&mut self) {
        let n = self.n;
        let nonbasic: Vec<(usize, f64)> = (0..n)
            .filter(|&j| self.status[j] != VarStatus::Basic)
            .map(|j| (j, self.value(j)))
            .filter(|&(_, x)| x != 0.0)
            .collect();
        for i in 0..self.m {
            let row = &self.tab[i * n..(i + 1) * n];
            let mut v = self.rhs[i];
            for &(j, x) in &nonbasic {
                v -= row[j] * x;
            }
            self.beta[i] = v;
        }
    }

    fn recompute_d(&mut self) {
        let n = self.n;
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.tab[i * n..(i + 1) * n];
                for (d, a) in self.d.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for &j in &self.basis {
            self.d[j] = 0.0;
        }
    }

    /// Rebuilds `B⁻¹[A | I]` from the original rows for the current basis.
    /// Returns false if the basis is numerically singular.
    pub fn refactor(&mut self) -> bool {
        let (m, n) = (self.m, self.n);
        let mut tab = vec![0.0; m * n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                tab[i * n + j] += a;
            }
            tab[i * n + self.n_struct + i] = 1.0;
        }
        let mut rhs = self.b.clone();
        let mut assigned = vec![false; m];
        let mut new_basis = vec![usize::MAX; m];
        let mut order: Vec<usize> = self.basis.clone();
        order.sort_unstable();
        let mut buf = vec![0.0; n];
        for &q in &order {
            let mut best = None;
            let mut best_abs = 1e-11;
            for i in 0..m {
                if !assigned[i] && tab[i * n + q].abs() > best_abs {
                    best_abs = tab[i * n + q].abs();
                    best = Some(i);
                }
            }
            let Some(r) = best else { return false };
            assigned[r] = true;
            new_basis[r] = q;
            gauss_pivot(&mut tab, &mut rhs, None, n, m, r, q, &mut buf);
        }
        self.tab = tab;
        self.rhs = rhs;
        self.basis = new_basis;
        for p in self.pos.iter_mut() {
            *p = usize::MAX;
        }
        for (i, &j) in self.basis.iter().enumerate() {
            self.pos[j] = i;
        }
        self.recompute_d();
        self.recompute_beta();
        self.pivots_since_refactor = 0;
        true
    }

    /// Resets to the all-slack basis.
    pub fn reset_basis(&mut self) {
        for j in 0..self.n {
            self.status[j] = VarStatus::Lower;
            self.pos[j] = usize::MAX;
        }
        self.basis = (0..self.m).map(|i| self.n_struct + i).collect();
        for (i, &j) in self.basis.iter().enumerate() {
            self.status[j] = VarStatus::Basic;
            self.pos[j] = i;
        }
        self.d = self.cost.clone();
        for j in 0..self.n {
            if self.status[j] != VarStatus::Basic {
                self.status[j] = self.preferred_status(j);
            }
        }
        let ok = self.refactor();
        debug_assert!(ok, "slack basis is always nonsingular");
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let leaving = self.basis[r];
        let mut buf = vec![0.0; self.n];
        gauss_pivot(&mut self.tab, &mut self.rhs, Some(&mut self.d), self.n, self.m, r, q, &mut buf);
        self.d[q] = 0.0;
        self.basis[r] = q;
        self.pos[q] = r;
        self.pos[leaving] = usize::MAX;
        self.status[q] = VarStatus::Basic;
        self.iterations += 1;
        self.pivots_since_refactor += 1;
    }

    fn infeasibility(&self, i: usize) -> f64 {
        let j = self.basis[i];
        let v = self.beta[i];
        if v < self.lo[j] - PRIMAL_TOL * (1.0 + self.lo[j].abs()) {
            self.lo[j] - v
        } else if v > self.up[j] + PRIMAL_TOL * (1.0 + self.up[j].abs()) {
            v - self.up[j]
        } else {
            0.0
        }
    }

    fn is_dual_feasible(&self) -> bool {
        self.dual_infeasibility() <= DUAL_TOL
    }

    /// Flips boxed nonbasic variables to the bound that their reduced cost
    /// prefers.
    fn flip_to_dual_feasible(&mut self) {
        let mut changed = false;
        for j in 0..self.n {
            let s = self.status[j];
            if s == VarStatus::Basic || !(self.lo[j].is_finite() && self.up[j].is_finite()) {
                continue;
            }
            if s == VarStatus::Lower && self.d[j] < -DUAL_TOL {
                self.status[j] = VarStatus::Upper;
                changed = true;
            } else if s == VarStatus::Upper && self.d[j] > DUAL_TOL {
                self.status[j] = VarStatus::Lower;
                changed = true;
            }
        }
        if changed {
            self.recompute_beta();
        }
    }

    fn iteration_cap(&self) -> usize {
        20_000 + 50 * (self.m + self.n)
    }

    /// Solves from the current basis.
    pub fn solve(&mut self) -> LpStatus {
        for j in 0..self.n {
            if self.status[j] != VarStatus::Basic {
                self.status[j] = self.valid_status(j, self.status[j]);
            }
        }
        if self.pivots_since_refactor > 4 * (self.m + 10) && !self.refactor() {
            self.reset_basis();
        }
        self.recompute_beta();
        self.flip_to_dual_feasible();
        if self.is_dual_feasible() {
            match self.dual_simplex() {
                LpStatus::Infeasible => return LpStatus::Infeasible,
                LpStatus::Optimal => {
                    if self.is_dual_feasible() {
                        return LpStatus::Optimal;
                    }
                }
                _ => {}
            }
        }
        match self.primal(true) {
            LpStatus::Optimal => self.primal(false),
            other => other,
        }
    }

    fn dual_simplex(&mut self) -> LpStatus {
        let n = self.n;
        let mut degenerate = 0usize;
        let cap = self.iteration_cap();
        for _ in 0..cap {
            let bland = degenerate > DEGENERATE_LIMIT;
            // leaving row
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let inf = self.infeasibility(i);
                if inf > 0.0 {
                    let better = match leave {
                        None => true,
                        Some((r, best)) => {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                inf > best
                            }
                        }
                    };
                    if better {
                        leave = Some((i, inf));
                    }
                }
            }
            let Some((r, _)) = leave else { return LpStatus::Optimal };
            let jr = self.basis[r];
            let below = self.beta[r] < self.lo[jr];
            let target = if below { self.lo[jr] } else { self.up[jr] };
            let row = &self.tab[r * n..(r + 1) * n];
            let mut enter: Option<(usize, f64, f64)> = None;
            for j in 0..n {
                let s = self.status[j];
                if s == VarStatus::Basic || self.lo[j] == self.up[j] {
                    continue;
                }
                let a = row[j];
                if a.abs() <= PIV_TOL {
                    continue;
                }
                let ok = match (s, below) {
                    (VarStatus::Lower, true) => a < 0.0,
                    (VarStatus::Upper, true) => a > 0.0,
                    (VarStatus::Lower, false) => a > 0.0,
                    (VarStatus::Upper, false) => a < 0.0,
                    (VarStatus::Free, _) => true,
                    (VarStatus::Basic, _) => false,
                };
                if !ok {
                    continue;
                }
                let ratio = (self.d[j] / a).abs();
                let better = match enter {
                    None => true,
                    Some((_, br, ba)) => {
                        if bland {
                            ratio < br - 1e-12
                        } else {
                            ratio < br - 1e-12 || (ratio <= br + 1e-12 && a.abs() > ba)
                        }
                    }
                };
                if better {
                    enter = Some((j, ratio, a.abs()));
                }
            }
            let Some((q, ratio, _)) = enter else { return LpStatus::Infeasible };
            if ratio <= 1e-12 {
                degenerate += 1;
            }
            let alpha_rq = self.tab[r * n + q];
            let dx = (self.beta[r] - target) / alpha_rq;
            let xq = self.value(q);
            for i in 0..self.m {
                let a = self.tab[i * n + q];
                if a != 0.0 {
                    self.beta[i] -= a * dx;
                }
            }
            self.beta[r] = xq + dx;
            self.status[jr] = if below { VarStatus::Lower } else { VarStatus::Upper };
            self.pivot(r, q);
        }
        LpStatus::Stalled
    }

    /// Primal simplex; `phase_one` minimizes the total bound violation of
    /// basic variables, otherwise the true objective.
    fn primal(&mut self, phase_one: bool) -> LpStatus {
        let n = self.n;
        if !phase_one {
            self.recompute_d();
        }
        let mut degenerate = 0usize;
        let cap = self.iteration_cap();
        let mut d1 = vec![0.0; n];
        for _ in 0..cap {
            let bland = degenerate > DEGENERATE_LIMIT;
            let mut c1 = vec![0.0; self.m];
            if phase_one {
                let mut any = false;
                for (i, c) in c1.iter_mut().enumerate() {
                    let j = self.basis[i];
                    if self.infeasibility(i) > 0.0 {
                        any = true;
                        *c = if self.beta[i] < self.lo[j] { -1.0 } else { 1.0 };
                    }
                }
                if !any {
                    return LpStatus::Optimal;
                }
                d1.iter_mut().for_each(|x| *x = 0.0);
                for (i, &c) in c1.iter().enumerate() {
                    if c != 0.0 {
                        let row = &self.tab[i * n..(i + 1) * n];
                        for (d, a) in d1.iter_mut().zip(row) {
                            *d -= c * a;
                        }
                    }
                }
            }
            let dvec = if phase_one { &d1 } else { &self.d };
            // entering column
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..n {
                let s = self.status[j];
                if s == VarStatus::Basic || self.lo[j] == self.up[j] {
                    continue;
                }
                let dj = dvec[j];
                let dir = match s {
                    VarStatus::Lower if dj < -DUAL_TOL => 1.0,
                    VarStatus::Upper if dj > DUAL_TOL => -1.0,
                    VarStatus::Free if dj.abs() > DUAL_TOL => -dj.signum(),
                    _ => continue,
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                if enter.is_none_or(|(b, _)| dj.abs() > dvec[b].abs()) {
                    enter = Some((j, dir));
                }
            }
            let Some((q, dir)) = enter else {
                return if phase_one { LpStatus::Infeasible } else { LpStatus::Optimal };
            };
            // ratio test
            let mut t_best = if self.lo[q].is_finite() && self.up[q].is_finite() {
                self.up[q] - self.lo[q]
            } else {
                f64::INFINITY
            };
            let mut step = Step::Flip;
            let mut best_alpha = 0.0;
            for i in 0..self.m {
                let a = self.tab[i * n + q];
                if a.abs() <= PIV_TOL {
                    continue;
                }
                let rate = -dir * a;
                let j = self.basis[i];
                let v = self.beta[i];
                let (lo, up) = (self.lo[j], self.up[j]);
                let cand = if phase_one && c1[i] < 0.0 {
                    // below its lower bound
                    (rate > 0.0).then(|| ((lo - v) / rate, false))
                } else if phase_one && c1[i] > 0.0 {
                    (rate < 0.0).then(|| ((up - v) / rate, true))
                } else if rate < 0.0 {
                    lo.is_finite().then(|| (((v - lo) / -rate).max(0.0), false))
                } else {
                    up.is_finite().then(|| (((up - v) / rate).max(0.0), true))
                };
                let Some((t, at_upper)) = cand else { continue };
                let better = if bland {
                    t < t_best - 1e-12
                        || (t <= t_best + 1e-12
                            && matches!(step, Step::Pivot { row, .. } if j < self.basis[row]))
                } else {
                    t < t_best - 1e-12 || (t <= t_best + 1e-12 && a.abs() > best_alpha)
                };
                if better {
                    t_best = t;
                    best_alpha = a.abs();
                    step = Step::Pivot {
                        row: i,
                        leave_at_upper: at_upper,
                    };
                }
            }
            if t_best == f64::INFINITY {
                return if phase_one { LpStatus::Stalled } else { LpStatus::Unbounded };
            }
            if t_best <= 1e-12 {
                degenerate += 1;
            }
            let xq = self.value(q);
            for i in 0..self.m {
                let a = self.tab[i * n + q];
                if a != 0.0 {
                    self.beta[i] -= dir * a * t_best;
                }
            }
            match step {
                Step::Flip => {
                    self.status[q] = if dir > 0.0 { VarStatus::Upper } else { VarStatus::Lower };
                    self.iterations += 1;
                }
                Step::Pivot { row, leave_at_upper } => {
                    let jr = self.basis[row];
                    self.beta[row] = xq + dir * t_best;
                    self.status[jr] = if leave_at_upper { VarStatus::Upper } else { VarStatus::Lower };
                    self.pivot(row, q);
                }
            }
        }
        LpStatus::Stalled
    }
}

/// Gauss–Jordan pivot on `(r, q)` of an `m × n` row-major tableau, also
/// updating the right-hand side and optionally the reduced-cost row.
#[allow(clippy::too_many_arguments)]
fn gauss_pivot(
    tab: &mut [f64],
    rhs: &mut [f64],
    d: Option<&mut Vec<f64>>,
    n: usize,
    m: usize,
    r: usize,
    q: usize,
    buf: &mut [f64],
) {
    let piv = tab[r * n + q];
    {
        let row = &mut tab[r * n..(r + 1) * n];
        for x in row.iter_mut() {
            *x /= piv;
        }
        row[q] = 1.0;
        buf.copy_from_slice(row);
    }
    rhs[r] /= piv;
    let rr = rhs[r];
    let nz: Vec<usize> = (0..n).filter(|&j| buf[j] != 0.0).collect();
    for i in 0..m {
        if i == r {
            continue;
        }
        let f = tab[i * n + q];
        if f != 0.0 {
            let row = &mut tab[i * n..(i + 1) * n];
            for &j in &nz {
                row[j] -= f * buf[j];
            }
            row[q] = 0.0;
            rhs[i] -= f * rr;
        }
    }
    if let Some(d) = d {
        let f = d[q];
        if f != 0.0 {
            for &j in &nz {
                d[j] -= f * buf[j];
            }
            d[q] = 0.0;
        }
    }
}
