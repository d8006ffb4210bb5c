//! Incremental Bowyer–Watson Delaunay triangulation with ghost triangles.
//!
//! Instead of a bounding super-triangle, every convex-hull edge carries a
//! ghost triangle `(a, b, GHOST)` whose "circumcircle" is the open half-plane
//! left of `a → b` plus the open edge itself. A point outside the hull then
//! conflicts with exactly the ghosts it can see, and the ordinary cavity
//! retriangulation handles hull growth. Predicates are Shewchuk's adaptive
//! exact tests, so cocircular and collinear inputs are decided consistently.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use robust::{incircle, orient2d, Coord};

use crate::error::{Error, Result};

const GHOST: usize = usize::MAX;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Triangulation {
    /// Counter-clockwise triangles over input indices.
    pub triangles: Vec<[usize; 3]>,
    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// `(dropped, kept)` for points that coincide with an earlier point.
    pub duplicates: Vec<(usize, usize)>,
    /// True when all distinct points are collinear; `edges` is then the
    /// chain through them in order along the line.
    pub collinear: bool,
}

fn c(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

fn orient(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    orient2d(c(a), c(b), c(p))
}

fn strictly_between(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let bp = [p[0] - b[0], p[1] - b[1]];
    ab[0] * ap[0] + ab[1] * ap[1] > 0.0 && -(ab[0] * bp[0] + ab[1] * bp[1]) > 0.0
}

fn rotate_ghost_last(t: [usize; 3]) -> [usize; 3] {
    match t.iter().position(|&v| v == GHOST) {
        Some(0) => [t[1], t[2], t[0]],
        Some(1) => [t[2], t[0], t[1]],
        _ => t,
    }
}

/// Delaunay triangulation of planar points. Needs at least two points.
pub fn triangulate(points: &[[f64; 2]]) -> Result<Triangulation> {
    if points.len() < 2 {
        return Err(Error::Validation(format!(
            "triangulation needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Validation("non-finite point in triangulation input".into()));
    }
    let mut seen: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut unique = Vec::new();
    let mut duplicates = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let key = ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits());
        match seen.get(&key) {
            Some(&k) => duplicates.push((i, k)),
            None => {
                seen.insert(key, i);
                unique.push(i);
            }
        }
    }
    let mut out = Triangulation {
        duplicates,
        ..Default::default()
    };
    if unique.len() < 2 {
        out.collinear = true;
        return Ok(out);
    }
    let pt = |i: usize| points[i];
    let (a, b) = (unique[0], unique[1]);
    let Some(k) = unique.iter().position(|&i| orient(pt(a), pt(b), pt(i)) != 0.0) else {
        // all collinear: chain along the direction a→b
        let d = [pt(b)[0] - pt(a)[0], pt(b)[1] - pt(a)[1]];
        let mut order = unique.clone();
        let key = |i: usize| (pt(i)[0] - pt(a)[0]) * d[0] + (pt(i)[1] - pt(a)[1]) * d[1];
        order.sort_by(|&i, &j| key(i).total_cmp(&key(j)));
        out.edges = order.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
        out.edges.sort_unstable();
        out.collinear = true;
        return Ok(out);
    };
    let c0 = unique[k];
    let first = if orient(pt(a), pt(b), pt(c0)) > 0.0 { [a, b, c0] } else { [b, a, c0] };
    let mut tris: Vec<[usize; 3]> = vec![
        first,
        [first[1], first[0], GHOST],
        [first[2], first[1], GHOST],
        [first[0], first[2], GHOST],
    ];

    let conflicts = |t: &[usize; 3], p: [f64; 2]| -> bool {
        if t[2] == GHOST {
            let (u, v) = (pt(t[0]), pt(t[1]));
            let o = orient(u, v, p);
            o > 0.0 || (o == 0.0 && strictly_between(u, v, p))
        } else {
            incircle(c(pt(t[0])), c(pt(t[1])), c(pt(t[2])), c(p)) > 0.0
        }
    };

    for &i in unique.iter().filter(|&&i| i != a && i != b && i != c0) {
        let p = pt(i);
        let (bad, keep): (Vec<[usize; 3]>, Vec<[usize; 3]>) = tris.into_iter().partition(|t| conflicts(t, p));
        debug_assert!(!bad.is_empty(), "every new point conflicts with some triangle");
        let directed: HashSet<(usize, usize)> = bad
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .collect();
        tris = keep;
        for t in &bad {
            for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                if !directed.contains(&(v, u)) {
                    tris.push(rotate_ghost_last([u, v, i]));
                }
            }
        }
    }

    let mut edges = BTreeSet::new();
    for t in tris.iter().filter(|t| t[2] != GHOST) {
        for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            edges.insert((u.min(v), u.max(v)));
        }
        out.triangles.push(*t);
    }
    out.triangles.sort_unstable();
    out.edges = edges.into_iter().collect();
    Ok(out)
}
