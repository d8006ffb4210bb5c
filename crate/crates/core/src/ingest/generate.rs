use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Residence, RoadLink, RoadNetwork, Scenario, Substation, PROFILE_HOURS};
use crate::error::{Error, Result};
use crate::geo::{GeoPoint, LocalFrame};
use crate::ids::{LinkId, ResidenceId, RoadNodeId, SubstationId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoadStyle {
    Grid,
    RadialSuburb,
}

impl std::str::FromStr for RoadStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(RoadStyle::Grid),
            "radial-suburb" => Ok(RoadStyle::RadialSuburb),
            other => Err(Error::Validation(format!("unknown road style `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub seed: u64,
    pub n_res: usize,
    pub n_sub: usize,
    pub extent_km: f64,
    pub style: RoadStyle,
    /// Grid side (nodes per row) or ring count driver; derived from `n_res`
    /// when absent.
    pub grid_k: Option<usize>,
    pub center: GeoPoint,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            seed: 7,
            n_res: 500,
            n_sub: 3,
            extent_km: 2.0,
            style: RoadStyle::Grid,
            grid_k: None,
            center: GeoPoint { lon: -80.41, lat: 37.23 },
        }
    }
}

impl GenerateOptions {
    pub fn effective_k(&self) -> usize {
        self.grid_k
            .unwrap_or_else(|| ((self.n_res as f64 / 10.0).sqrt().round() as usize + 1).clamp(2, 40))
            .max(2)
    }
}

const DEMAND_RANGE: (f64, f64) = (0.3, 5.0);
const OFFSET_SIGMA_M: f64 = 20.0;
const OFFSET_MIN_M: f64 = 5.0;
const OFFSET_MAX_M: f64 = 60.0;

/// Deterministic synthetic region for a fixed seed.
pub fn generate_scenario(opts: &GenerateOptions) -> Result<Scenario> {
    if opts.n_res == 0 || opts.n_sub == 0 {
        return Err(Error::Validation("n_res and n_sub must both be at least 1".into()));
    }
    if !(opts.extent_km > 0.0) {
        return Err(Error::Validation("extent must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let frame = LocalFrame::new(opts.center);
    let extent = opts.extent_km * 1000.0;
    let k = opts.effective_k();

    let (xy_nodes, edges, levels) = match opts.style {
        RoadStyle::Grid => grid_roads(k, extent, &mut rng),
        RoadStyle::RadialSuburb => radial_roads(k, extent, &mut rng),
    };

    let mut roads = RoadNetwork::default();
    for (i, xy) in xy_nodes.iter().enumerate() {
        roads.nodes.insert(RoadNodeId(i as u64 + 1), frame.unproject(*xy));
    }
    for (i, ((a, b), level)) in edges.iter().zip(&levels).enumerate() {
        roads.links.insert(
            LinkId(i as u64 + 1),
            RoadLink {
                u: RoadNodeId(*a as u64 + 1),
                v: RoadNodeId(*b as u64 + 1),
                level: *level,
            },
        );
    }

    // Residences: pick a link proportional to its length, a position along
    // it, and a perpendicular offset.
    let lengths: Vec<f64> = edges
        .iter()
        .map(|(a, b)| dist(xy_nodes[*a], xy_nodes[*b]))
        .collect();
    let total: f64 = lengths.iter().sum();
    let normal = Normal::new(0.0, OFFSET_SIGMA_M).expect("valid sigma");
    let mut residences = Vec::with_capacity(opts.n_res);
    for i in 0..opts.n_res {
        let mut pick = rng.random_range(0.0..total);
        let mut e = 0;
        while e + 1 < lengths.len() && pick >= lengths[e] {
            pick -= lengths[e];
            e += 1;
        }
        let (a, b) = (xy_nodes[edges[e].0], xy_nodes[edges[e].1]);
        let t: f64 = rng.random_range(0.05..0.95);
        let raw: f64 = normal.sample(&mut rng);
        let off = raw.signum() * raw.abs().clamp(OFFSET_MIN_M, OFFSET_MAX_M);
        let len = lengths[e];
        let perp = [-(b[1] - a[1]) / len, (b[0] - a[0]) / len];
        let xy = [
            a[0] + t * (b[0] - a[0]) + off * perp[0],
            a[1] + t * (b[1] - a[1]) + off * perp[1],
        ];
        let demand: Vec<f64> = (0..PROFILE_HOURS)
            .map(|_| rng.random_range(DEMAND_RANGE.0..DEMAND_RANGE.1))
            .collect();
        residences.push(Residence::from_profile(
            ResidenceId(i as u64 + 1),
            frame.unproject(xy),
            demand,
        )?);
    }

    let substations = (0..opts.n_sub)
        .map(|i| {
            let xy = [
                rng.random_range(-0.6..0.6) * extent,
                rng.random_range(-0.6..0.6) * extent,
            ];
            Substation {
                id: SubstationId(i as u64 + 1),
                location: frame.unproject(xy),
            }
        })
        .collect();

    let s = Scenario {
        roads,
        substations,
        residences,
    };
    s.validate()?;
    Ok(s)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

type RoadLayout = (Vec<[f64; 2]>, Vec<(usize, usize)>, Vec<u8>);

/// k×k lattice, 2·k·(k−1) links, lightly jittered.
fn grid_roads(k: usize, extent: f64, rng: &mut ChaCha8Rng) -> RoadLayout {
    let spacing = extent / (k - 1) as f64;
    let jitter = 0.1 * spacing;
    let mut nodes = Vec::with_capacity(k * k);
    for row in 0..k {
        for col in 0..k {
            nodes.push([
                -extent / 2.0 + col as f64 * spacing + rng.random_range(-jitter..jitter),
                -extent / 2.0 + row as f64 * spacing + rng.random_range(-jitter..jitter),
            ]);
        }
    }
    let mut edges = Vec::new();
    let mut levels = Vec::new();
    for row in 0..k {
        for col in 0..k {
            let i = row * k + col;
            if col + 1 < k {
                edges.push((i, i + 1));
                levels.push(if row % 3 == 0 { 2 } else { 4 });
            }
            if row + 1 < k {
                edges.push((i, i + k));
                levels.push(if col % 3 == 0 { 2 } else { 4 });
            }
        }
    }
    (nodes, edges, levels)
}

/// Concentric rings joined by eight spokes around a central node.
fn radial_roads(k: usize, extent: f64, rng: &mut ChaCha8Rng) -> RoadLayout {
    const SPOKES: usize = 8;
    let rings = (k / 2).max(1);
    let ring_gap = extent / 2.0 / rings as f64;
    let mut nodes = vec![[0.0, 0.0]];
    for ring in 1..=rings {
        for s in 0..SPOKES {
            let angle = std::f64::consts::TAU * s as f64 / SPOKES as f64
                + rng.random_range(-0.05..0.05);
            let r = ring as f64 * ring_gap * rng.random_range(0.95..1.05);
            nodes.push([r * angle.cos(), r * angle.sin()]);
        }
    }
    let idx = |ring: usize, s: usize| 1 + (ring - 1) * SPOKES + s % SPOKES;
    let mut edges = Vec::new();
    let mut levels = Vec::new();
    for s in 0..SPOKES {
        edges.push((0, idx(1, s)));
        levels.push(2);
        for ring in 1..rings {
            edges.push((idx(ring, s), idx(ring + 1, s)));
            levels.push(2);
        }
    }
    for ring in 1..=rings {
        for s in 0..SPOKES {
            edges.push((idx(ring, s), idx(ring, s + 1)));
            levels.push(5);
        }
    }
    (nodes, edges, levels)
}
