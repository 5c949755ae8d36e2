//! Web Mercator tile arithmetic, tract polygons and tile coverage.
//!
//! All geometry is planar in lon/lat degrees. Tile rectangles are axis-aligned in
//! lon/lat because Mercator tile edges are meridians and parallels.

mod coverage;
pub mod fetch;
mod geojson;
mod mercator;
mod polygon;

pub use coverage::{tiles_covering_boundary, tiles_covering_boundary_with, TileCoverage, TileInclusion};
pub use geojson::{boundary_geometry, parse_tract_boundaries, ParsedBoundaries, DEFAULT_ID_PROPERTY};
pub use mercator::{lonlat_to_tile, lonlat_to_tile_fraction, tile_bounds};
pub use polygon::{point_in_polygon, polygon_area_km2, KM_PER_DEGREE};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Northern/southern limit of the Web Mercator square, in degrees.
pub const MAX_LAT: f64 = 85.051_128_779_806_59;
pub const MAX_ZOOM: u8 = 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} is outside the Web Mercator range")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} is outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("non-finite coordinate ({lon}, {lat})")]
    NonFinite { lon: f64, lat: f64 },
    #[error("zoom {0} is outside [0, {MAX_ZOOM}]")]
    ZoomOutOfRange(u8),
    #[error("tile {x}/{y} is outside the grid at zoom {zoom}")]
    TileOutOfRange { zoom: u8, x: u32, y: u32 },
    #[error("ring has {0} points; a closed ring needs at least 4")]
    RingTooShort(usize),
    #[error("ring is not closed (first point differs from last)")]
    RingNotClosed,
    #[error("tract boundary has no polygon parts")]
    NoParts,
    #[error("invalid GeoJSON: {0}")]
    GeoJson(String),
    #[error("features missing id property {key:?} at indices {indices:?}")]
    MissingIdProperty { key: String, indices: Vec<usize> },
    #[error("feature {index}: {reason}")]
    BadFeature { index: usize, reason: String },
}

/// A lon/lat position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        let p = Self { lon, lat };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !self.lon.is_finite() || !self.lat.is_finite() {
            return Err(GeoError::NonFinite { lon: self.lon, lat: self.lat });
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(GeoError::LongitudeOutOfRange(self.lon));
        }
        if self.lat.abs() > MAX_LAT {
            return Err(GeoError::LatitudeOutOfRange(self.lat));
        }
        Ok(())
    }
}

/// A slippy-map tile address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileCoord {
    pub zoom: u8,
    pub x: u32,
    pub y: u32,
}

impl TileCoord {
    pub fn new(zoom: u8, x: u32, y: u32) -> Result<Self, GeoError> {
        if zoom > MAX_ZOOM {
            return Err(GeoError::ZoomOutOfRange(zoom));
        }
        let n = 1u64 << zoom;
        if u64::from(x) >= n || u64::from(y) >= n {
            return Err(GeoError::TileOutOfRange { zoom, x, y });
        }
        Ok(Self { zoom, x, y })
    }
}

impl std::fmt::Display for TileCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.zoom, self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    /// Closed containment test.
    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lon >= self.min_lon && p.lon <= self.max_lon && p.lat >= self.min_lat && p.lat <= self.max_lat
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_lon <= other.max_lon
            && other.min_lon <= self.max_lon
            && self.min_lat <= other.max_lat
            && other.min_lat <= self.max_lat
    }

    pub fn area_deg2(&self) -> f64 {
        (self.max_lon - self.min_lon) * (self.max_lat - self.min_lat)
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lon: 0.5 * (self.min_lon + self.max_lon),
            lat: 0.5 * (self.min_lat + self.max_lat),
        }
    }
}

/// One polygon: an outer ring plus optional holes. Rings are closed (first == last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<GeoPoint>,
    pub holes: Vec<Vec<GeoPoint>>,
}

impl Polygon {
    pub fn new(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>) -> Result<Self, GeoError> {
        check_ring(&exterior)?;
        for h in &holes {
            check_ring(h)?;
        }
        Ok(Self { exterior, holes })
    }

    pub fn rings(&self) -> impl Iterator<Item = &[GeoPoint]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }
}

fn check_ring(ring: &[GeoPoint]) -> Result<(), GeoError> {
    if ring.len() < 4 {
        return Err(GeoError::RingTooShort(ring.len()));
    }
    if ring.first() != ring.last() {
        return Err(GeoError::RingNotClosed);
    }
    for p in ring {
        p.validate()?;
    }
    Ok(())
}

/// A census tract: an opaque id plus one or more polygon parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractBoundary {
    pub tract_id: String,
    pub parts: Vec<Polygon>,
}

impl TractBoundary {
    pub fn new(tract_id: impl Into<String>, parts: Vec<Polygon>) -> Result<Self, GeoError> {
        if parts.is_empty() {
            return Err(GeoError::NoParts);
        }
        Ok(Self { tract_id: tract_id.into(), parts })
    }

    /// Single-part tract from an axis-aligned box, wound counter-clockwise.
    pub fn rectangle(tract_id: impl Into<String>, b: BBox) -> Result<Self, GeoError> {
        let ring = vec![
            GeoPoint::new(b.min_lon, b.min_lat)?,
            GeoPoint::new(b.max_lon, b.min_lat)?,
            GeoPoint::new(b.max_lon, b.max_lat)?,
            GeoPoint::new(b.min_lon, b.max_lat)?,
            GeoPoint::new(b.min_lon, b.min_lat)?,
        ];
        Self::new(tract_id, vec![Polygon::new(ring, vec![])?])
    }

    /// Every ring of every part; exterior rings first within each part.
    pub fn rings(&self) -> impl Iterator<Item = &[GeoPoint]> {
        self.parts.iter().flat_map(Polygon::rings)
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox {
            min_lon: f64::INFINITY,
            min_lat: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            max_lat: f64::NEG_INFINITY,
        };
        for p in self.parts.iter().flat_map(|part| part.exterior.iter()) {
            b.min_lon = b.min_lon.min(p.lon);
            b.max_lon = b.max_lon.max(p.lon);
            b.min_lat = b.min_lat.min(p.lat);
            b.max_lat = b.max_lat.max(p.lat);
        }
        b
    }

    /// Best-effort simplicity check of the outer rings: true when no two
    /// non-adjacent edges of a ring properly cross. Rings above 4,000 vertices
    /// are not checked.
    pub fn outer_rings_look_simple(&self) -> bool {
        self.parts.iter().all(|p| ring_looks_simple(&p.exterior))
    }
}

fn ring_looks_simple(ring: &[GeoPoint]) -> bool {
    let m = ring.len().saturating_sub(1);
    if m > 4000 {
        return true;
    }
    for i in 0..m {
        for j in (i + 2)..m {
            if i == 0 && j == m - 1 {
                continue;
            }
            if polygon::segments_properly_cross(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return false;
            }
        }
    }
    true
}
