//! Geometric primitives on the sphere plus a local planar frame for
//! segment geometry.
//!
//! Distances are great-circle (haversine) distances in meters. Anything that
//! needs planar reasoning (projection onto a segment, side tests,
//! interpolation) works in an equirectangular frame centered on a reference
//! point, which is accurate at county scale.

mod quadtree;

pub use quadtree::{SpatialIndex, DEFAULT_LEAF_CAPACITY, MAX_DEPTH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Cross products with magnitude below this (in m²) count as collinear.
pub const COLLINEAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite coordinate ({lon}, {lat})"
            )));
        }
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Validation(format!(
                "coordinate ({lon}, {lat}) out of range"
            )));
        }
        Ok(GeoPoint { lon, lat })
    }

    /// Linear interpolation in lon/lat, which is a straight line in the
    /// local frame.
    pub fn lerp(self, other: GeoPoint, t: f64) -> GeoPoint {
        GeoPoint {
            lon: self.lon + (other.lon - self.lon) * t,
            lat: self.lat + (other.lat - self.lat) * t,
        }
    }
}

/// Great-circle distance in meters.
pub fn geodesic_distance(p: GeoPoint, q: GeoPoint) -> f64 {
    let (lat1, lat2) = (p.lat.to_radians(), q.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (q.lon - p.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular frame tangent at `origin`; coordinates in meters.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    origin: GeoPoint,
    cos_lat: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        LocalFrame {
            origin,
            cos_lat: origin.lat.to_radians().cos(),
        }
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn project(&self, p: GeoPoint) -> [f64; 2] {
        [
            (p.lon - self.origin.lon).to_radians() * EARTH_RADIUS_M * self.cos_lat,
            (p.lat - self.origin.lat).to_radians() * EARTH_RADIUS_M,
        ]
    }

    pub fn unproject(&self, xy: [f64; 2]) -> GeoPoint {
        GeoPoint {
            lon: self.origin.lon + (xy[0] / (EARTH_RADIUS_M * self.cos_lat)).to_degrees(),
            lat: self.origin.lat + (xy[1] / EARTH_RADIUS_M).to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: GeoPoint,
    pub b: GeoPoint,
}

impl Segment {
    pub fn new(a: GeoPoint, b: GeoPoint) -> Result<Self> {
        if a == b {
            return Err(Error::Validation(format!(
                "degenerate segment at ({}, {})",
                a.lon, a.lat
            )));
        }
        Ok(Segment { a, b })
    }

    pub fn reversed(&self) -> Segment {
        Segment { a: self.b, b: self.a }
    }

    pub fn length(&self) -> f64 {
        geodesic_distance(self.a, self.b)
    }

    pub fn midpoint(&self) -> GeoPoint {
        self.point_at(0.5)
    }

    /// Point at fraction `t` of the great-circle arc from `a` to `b`.
    pub fn point_at(&self, t: f64) -> GeoPoint {
        let to_vec = |p: GeoPoint| {
            let (lat, lon) = (p.lat.to_radians(), p.lon.to_radians());
            [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
        };
        let (u, v) = (to_vec(self.a), to_vec(self.b));
        let omega = self.length() / EARTH_RADIUS_M;
        if omega < 1e-12 {
            return self.a.lerp(self.b, t);
        }
        let (wa, wb) = (((1.0 - t) * omega).sin() / omega.sin(), (t * omega).sin() / omega.sin());
        let w = [wa * u[0] + wb * v[0], wa * u[1] + wb * v[1], wa * u[2] + wb * v[2]];
        GeoPoint {
            lon: w[1].atan2(w[0]).to_degrees(),
            lat: w[2].atan2(w[0].hypot(w[1])).to_degrees(),
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox {
            min_lon: self.a.lon.min(self.b.lon),
            min_lat: self.a.lat.min(self.b.lat),
            max_lon: self.a.lon.max(self.b.lon),
            max_lat: self.a.lat.max(self.b.lat),
        }
    }

    /// Closest point of the segment to `p`, measured in the frame centered
    /// at `p`. Returns the point and its clamped parameter along a→b.
    pub fn closest_point(&self, p: GeoPoint) -> (GeoPoint, f64) {
        let frame = LocalFrame::new(p);
        let a = frame.project(self.a);
        let b = frame.project(self.b);
        let ab = [b[0] - a[0], b[1] - a[1]];
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        let t = if len2 > 0.0 {
            ((-a[0]) * ab[0] + (-a[1]) * ab[1]) / len2
        } else {
            0.0
        };
        let t = t.clamp(0.0, 1.0);
        (self.a.lerp(self.b, t), t)
    }
}

/// Geodesic distance from `p` to the nearest point of `s`.
pub fn point_segment_distance(p: GeoPoint, s: &Segment) -> f64 {
    let (q, _) = s.closest_point(p);
    let d = geodesic_distance(p, q);
    d.min(geodesic_distance(p, s.a))
        .min(geodesic_distance(p, s.b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    On,
}

impl Side {
    pub fn flipped(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::On => Side::On,
        }
    }
}

/// Signed area test of `p` against the directed line a→b in the frame
/// centered at `p`.
///
/// The cross product is always evaluated with the endpoints in a canonical
/// order so that reversing the segment flips the answer exactly.
pub fn side_of(p: GeoPoint, s: &Segment) -> Side {
    let swapped = (s.b.lon, s.b.lat) < (s.a.lon, s.a.lat);
    let (a, b) = if swapped { (s.b, s.a) } else { (s.a, s.b) };
    let cross = side_cross(p, a, b);
    let side = if cross.abs() < COLLINEAR_EPS {
        Side::On
    } else if cross > 0.0 {
        Side::Left
    } else {
        Side::Right
    };
    if swapped {
        side.flipped()
    } else {
        side
    }
}

/// Cross product (b − a) × (p − a) in the frame centered at `p`, in m².
pub fn side_cross(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    let frame = LocalFrame::new(p);
    let a = frame.project(a);
    let b = frame.project(b);
    // p is the frame origin.
    (b[0] - a[0]) * (-a[1]) - (b[1] - a[1]) * (-a[0])
}

/// `k` points at fractions i/(k+1) of the segment's great-circle arc,
/// i = 1..=k, so consecutive points are equally far apart.
pub fn interpolate_along(s: &Segment, k: usize) -> Result<Vec<GeoPoint>> {
    if k == 0 {
        return Err(Error::Validation(
            "interpolation count must be at least 1".into(),
        ));
    }
    let step = 1.0 / (k as f64 + 1.0);
    Ok((1..=k).map(|i| s.point_at(i as f64 * step)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self> {
        if !(min_lon <= max_lon && min_lat <= max_lat) {
            return Err(Error::Validation(format!(
                "inverted bounding box [{min_lon}, {min_lat}, {max_lon}, {max_lat}]"
            )));
        }
        Ok(BBox {
            min_lon,
            min_lat,
            max_lon,
            max_lat,
        })
    }

    pub fn around(p: GeoPoint, half_size_m: f64) -> BBox {
        BBox {
            min_lon: p.lon,
            min_lat: p.lat,
            max_lon: p.lon,
            max_lat: p.lat,
        }
        .padded(half_size_m)
    }

    /// Expands by `meters` on every side. The longitude margin uses the
    /// latitude farthest from the equator so the result never undershoots.
    pub fn padded(&self, meters: f64) -> BBox {
        let dlat = (meters / EARTH_RADIUS_M).to_degrees();
        let extreme_lat = (self.min_lat.abs().max(self.max_lat.abs()) + dlat).min(89.999);
        let dlon = (meters / (EARTH_RADIUS_M * extreme_lat.to_radians().cos())).to_degrees();
        BBox {
            min_lon: self.min_lon - dlon,
            min_lat: self.min_lat - dlat,
            max_lon: self.max_lon + dlon,
            max_lat: self.max_lat + dlat,
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_lon <= other.max_lon
            && other.min_lon <= self.max_lon
            && self.min_lat <= other.max_lat
            && other.min_lat <= self.max_lat
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.min_lon <= other.min_lon
            && self.min_lat <= other.min_lat
            && other.max_lon <= self.max_lon
            && other.max_lat <= self.max_lat
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min_lon: self.min_lon.min(other.min_lon),
            min_lat: self.min_lat.min(other.min_lat),
            max_lon: self.max_lon.max(other.max_lon),
            max_lat: self.max_lat.max(other.max_lat),
        }
    }
}

/// Builds a quad-tree over link boxes padded by `padding` meters.
pub fn index_links(links: &[(u64, Segment)], padding: f64) -> Result<SpatialIndex> {
    if links.is_empty() {
        return Err(Error::Validation("cannot index an empty link list".into()));
    }
    if !(padding >= 0.0) {
        return Err(Error::Validation(format!("negative padding {padding}")));
    }
    let entries = links
        .iter()
        .map(|(id, s)| (*id, s.bbox().padded(padding)))
        .collect();
    Ok(SpatialIndex::build(entries, DEFAULT_LEAF_CAPACITY))
}
