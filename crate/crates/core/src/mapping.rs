//! Residence-to-link mapping and candidate transformer placement.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{index_links, interpolate_along, point_segment_distance, BBox, GeoPoint, Segment, SpatialIndex};
use crate::ids::{LinkId, ResidenceId, TransformerId};
use crate::ingest::{RoadNetwork, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingOptions {
    /// Padding added around each link's bounding box, meters.
    pub padding_m: f64,
    /// Residences farther than this from every link are rejected.
    pub max_distance_m: f64,
    /// Target spacing between candidate transformers, meters.
    pub spacing_m: f64,
    /// Residences per transformer used to size the candidate set.
    pub rho: usize,
}

impl Default for MappingOptions {
    fn default() -> Self {
        MappingOptions {
            padding_m: 100.0,
            max_distance_m: 5000.0,
            spacing_m: 50.0,
            rho: 8,
        }
    }
}

/// Quad-tree over padded link boxes plus the link geometry.
#[derive(Debug, Clone)]
pub struct LinkIndex {
    index: SpatialIndex,
    segments: BTreeMap<LinkId, Segment>,
    padding: f64,
}

impl LinkIndex {
    pub fn build(roads: &RoadNetwork, padding: f64) -> Result<Self> {
        let segs = roads.link_segments();
        let index = index_links(&segs, padding)?;
        Ok(LinkIndex {
            index,
            segments: segs.into_iter().map(|(id, s)| (LinkId(id), s)).collect(),
            padding,
        })
    }

    pub fn segment(&self, id: LinkId) -> &Segment {
        &self.segments[&id]
    }
}

/// Nearest link to `p` and its distance, or `None` if nothing lies within
/// `max_distance` meters. Ties go to the lower link id.
///
/// The shortlist from a query box of half-size `r` holds every link within
/// `padding + r`; if its best distance exceeds that radius a farther link
/// could still win, so the box grows until the answer is certain.
pub fn nearest_link(p: GeoPoint, idx: &LinkIndex, max_distance: f64) -> Option<(LinkId, f64)> {
    let mut r = 0.0;
    loop {
        let reach = idx.padding + r;
        let shortlist = idx.index.query(&BBox::around(p, r));
        let best = shortlist
            .iter()
            .map(|&id| (LinkId(id), point_segment_distance(p, &idx.segments[&LinkId(id)])))
            .fold(None::<(LinkId, f64)>, |best, (id, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((id, d)),
            });
        match best {
            Some((id, d)) if d <= reach => return (d <= max_distance).then_some((id, d)),
            _ if reach >= max_distance => {
                return best.filter(|&(_, d)| d <= max_distance);
            }
            _ => r = (2.0 * reach).max(1.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkAssignment {
    /// residence → (link, distance in meters)
    pub forward: BTreeMap<ResidenceId, (LinkId, f64)>,
    /// link → residences mapped to it, ascending; links without residences
    /// are absent.
    pub inverse: BTreeMap<LinkId, Vec<ResidenceId>>,
}

impl LinkAssignment {
    pub fn from_forward(forward: BTreeMap<ResidenceId, (LinkId, f64)>) -> Self {
        let mut inverse: BTreeMap<LinkId, Vec<ResidenceId>> = BTreeMap::new();
        for (r, (l, _)) in &forward {
            inverse.entry(*l).or_default().push(*r);
        }
        LinkAssignment { forward, inverse }
    }
}

pub fn build_assignment(scenario: &Scenario, opts: &MappingOptions) -> Result<LinkAssignment> {
    let idx = LinkIndex::build(&scenario.roads, opts.padding_m)?;
    let forward = scenario
        .residences
        .par_iter()
        .map(|r| {
            nearest_link(r.location, &idx, opts.max_distance_m)
                .map(|hit| (r.id, hit))
                .ok_or(Error::Unmapped {
                    residence: r.id.0,
                    max_m: opts.max_distance_m,
                })
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(LinkAssignment::from_forward(forward))
}

/// Number of candidates on a link:
/// `max(1, min(floor(length / spacing), ceil(n_mapped / rho)))`.
pub fn candidate_count(length: f64, n_mapped: usize, spacing: f64, rho: usize) -> usize {
    let by_length = (length / spacing).floor() as usize;
    let by_load = n_mapped.div_ceil(rho.max(1));
    by_length.min(by_load).max(1)
}

pub fn place_candidates(link: &Segment, n_mapped: usize, spacing: f64, rho: usize) -> Vec<GeoPoint> {
    let k = candidate_count(link.length(), n_mapped, spacing, rho);
    interpolate_along(link, k).expect("k is at least 1")
}

/// Candidate transformers per link with globally unique ids, numbered from
/// 1 in link-id order.
pub type TransformerCandidates = BTreeMap<LinkId, Vec<(TransformerId, GeoPoint)>>;

pub fn place_all_candidates(
    roads: &RoadNetwork,
    assignment: &LinkAssignment,
    opts: &MappingOptions,
) -> TransformerCandidates {
    let mut next = 1;
    let mut out = BTreeMap::new();
    for (link, residences) in &assignment.inverse {
        let pts = place_candidates(&roads.segment(*link), residences.len(), opts.spacing_m, opts.rho);
        let with_ids = pts
            .into_iter()
            .map(|p| {
                let id = TransformerId(next);
                next += 1;
                (id, p)
            })
            .collect();
        out.insert(*link, with_ids);
    }
    out
}
