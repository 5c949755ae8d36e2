use super::polygon::{point_in_polygon, ring_area_with};
use super::{lonlat_to_tile, tile_bounds, BBox, GeoError, GeoPoint, TileCoord, TractBoundary, MAX_LAT};

/// How tiles relate to a tract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileInclusion {
    /// Any tile whose rectangle overlaps the tract with positive area.
    #[default]
    Intersects,
    /// Only tiles whose center point lies in the tract.
    CenterInside,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileCoverage {
    /// Sorted by `(x, y)`, no duplicates.
    pub tiles: Vec<TileCoord>,
    /// Set when the tract has zero area; `tiles` is then empty.
    pub degenerate: bool,
}

/// Relative overlap below which a tile is treated as merely touching the tract.
const TOUCH_EPS: f64 = 1e-10;

pub fn tiles_covering_boundary(b: &TractBoundary, zoom: u8) -> Result<TileCoverage, GeoError> {
    tiles_covering_boundary_with(b, zoom, TileInclusion::Intersects)
}

pub fn tiles_covering_boundary_with(
    b: &TractBoundary,
    zoom: u8,
    rule: TileInclusion,
) -> Result<TileCoverage, GeoError> {
    let bbox = b.bbox();
    let planar = |p: GeoPoint| (p.lon, p.lat);
    let area: f64 = b
        .parts
        .iter()
        .map(|part| {
            ring_area_with(&part.exterior, planar) - part.holes.iter().map(|h| ring_area_with(h, planar)).sum::<f64>()
        })
        .sum();
    if !(area > TOUCH_EPS * bbox.area_deg2()) {
        return Ok(TileCoverage { tiles: Vec::new(), degenerate: true });
    }

    let nw = lonlat_to_tile(GeoPoint::new(bbox.min_lon, bbox.max_lat.min(MAX_LAT))?, zoom)?;
    let se = lonlat_to_tile(GeoPoint::new(bbox.max_lon, bbox.min_lat.max(-MAX_LAT))?, zoom)?;

    let mut tiles = Vec::new();
    for x in nw.x..=se.x {
        for y in nw.y..=se.y {
            let t = TileCoord { zoom, x, y };
            let rect = tile_bounds(t);
            let keep = match rule {
                TileInclusion::Intersects => overlap_area(b, &rect) > TOUCH_EPS * rect.area_deg2(),
                TileInclusion::CenterInside => point_in_polygon(rect.center(), b),
            };
            if keep {
                tiles.push(t);
            }
        }
    }
    Ok(TileCoverage { tiles, degenerate: false })
}

/// Area (deg²) of the tract clipped to `rect`, holes subtracted.
fn overlap_area(b: &TractBoundary, rect: &BBox) -> f64 {
    let bb = b.bbox();
    if !bb.intersects(rect) {
        return 0.0;
    }
    b.parts
        .iter()
        .map(|part| {
            let outer = clipped_area(&part.exterior, rect);
            if outer == 0.0 {
                return 0.0;
            }
            outer - part.holes.iter().map(|h| clipped_area(h, rect)).sum::<f64>()
        })
        .sum()
}

/// Sutherland–Hodgman clip of a closed ring against an axis-aligned rectangle,
/// returning the area of the clipped ring. Exact for any simple ring because the
/// clip window is convex.
fn clipped_area(ring: &[GeoPoint], rect: &BBox) -> f64 {
    let mut pts: Vec<(f64, f64)> = ring[..ring.len() - 1].iter().map(|p| (p.lon, p.lat)).collect();
    // (axis, bound, keep_greater)
    let planes = [
        (0usize, rect.min_lon, true),
        (0, rect.max_lon, false),
        (1, rect.min_lat, true),
        (1, rect.max_lat, false),
    ];
    for (axis, bound, keep_greater) in planes {
        if pts.is_empty() {
            return 0.0;
        }
        let inside = |p: (f64, f64)| {
            let v = if axis == 0 { p.0 } else { p.1 };
            if keep_greater {
                v >= bound
            } else {
                v <= bound
            }
        };
        let cut = |a: (f64, f64), b: (f64, f64)| {
            if axis == 0 {
                let t = (bound - a.0) / (b.0 - a.0);
                (bound, a.1 + t * (b.1 - a.1))
            } else {
                let t = (bound - a.1) / (b.1 - a.1);
                (a.0 + t * (b.0 - a.0), bound)
            }
        };
        let mut out = Vec::with_capacity(pts.len() + 4);
        for i in 0..pts.len() {
            let cur = pts[i];
            let prev = pts[(i + pts.len() - 1) % pts.len()];
            match (inside(prev), inside(cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(cut(prev, cur)),
                (false, true) => {
                    out.push(cut(prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
        pts = out;
    }
    if pts.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..pts.len() {
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[(i + 1) % pts.len()];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Polygon;

    fn block(zoom: u8, x0: u32, y0: u32, w: u32, h: u32) -> BBox {
        let nw = tile_bounds(TileCoord { zoom, x: x0, y: y0 });
        let se = tile_bounds(TileCoord { zoom, x: x0 + w - 1, y: y0 + h - 1 });
        BBox { min_lon: nw.min_lon, max_lat: nw.max_lat, max_lon: se.max_lon, min_lat: se.min_lat }
    }

    #[test]
    fn tract_strictly_inside_one_tile() {
        let r = tile_bounds(TileCoord { zoom: 16, x: 16000, y: 24000 });
        let w = r.max_lon - r.min_lon;
        let h = r.max_lat - r.min_lat;
        let inner = BBox {
            min_lon: r.min_lon + 0.2 * w,
            max_lon: r.min_lon + 0.7 * w,
            min_lat: r.min_lat + 0.3 * h,
            max_lat: r.min_lat + 0.6 * h,
        };
        let b = TractBoundary::rectangle("t", inner).unwrap();
        let cov = tiles_covering_boundary(&b, 16).unwrap();
        assert_eq!(cov.tiles, vec![TileCoord { zoom: 16, x: 16000, y: 24000 }]);
        assert!(!cov.degenerate);
    }

    #[test]
    fn aligned_square_spans_exactly_its_block() {
        let b = TractBoundary::rectangle("t", block(18, 67260, 97430, 2, 2)).unwrap();
        let cov = tiles_covering_boundary(&b, 18).unwrap();
        let expect: Vec<TileCoord> = [(67260, 97430), (67260, 97431), (67261, 97430), (67261, 97431)]
            .iter()
            .map(|&(x, y)| TileCoord { zoom: 18, x, y })
            .collect();
        assert_eq!(cov.tiles, expect);
    }

    #[test]
    fn degenerate_polygon_gives_empty_flagged_result() {
        let ring: Vec<GeoPoint> = [(0.0, 0.0), (0.001, 0.001), (0.002, 0.002), (0.0, 0.0)]
            .iter()
            .map(|&(lon, lat)| GeoPoint { lon, lat })
            .collect();
        let b = TractBoundary::new("d", vec![Polygon::new(ring, vec![]).unwrap()]).unwrap();
        let cov = tiles_covering_boundary(&b, 18).unwrap();
        assert!(cov.degenerate);
        assert!(cov.tiles.is_empty());
    }

    #[test]
    fn tile_inside_hole_is_excluded() {
        let outer = block(10, 100, 100, 3, 3);
        let hole = block(10, 101, 101, 1, 1);
        let ring = |b: BBox| {
            vec![
                GeoPoint { lon: b.min_lon, lat: b.min_lat },
                GeoPoint { lon: b.max_lon, lat: b.min_lat },
                GeoPoint { lon: b.max_lon, lat: b.max_lat },
                GeoPoint { lon: b.min_lon, lat: b.max_lat },
                GeoPoint { lon: b.min_lon, lat: b.min_lat },
            ]
        };
        let t = TractBoundary::new("h", vec![Polygon::new(ring(outer), vec![ring(hole)]).unwrap()]).unwrap();
        let cov = tiles_covering_boundary(&t, 10).unwrap();
        assert_eq!(cov.tiles.len(), 8);
        assert!(!cov.tiles.contains(&TileCoord { zoom: 10, x: 101, y: 101 }));
    }

    #[test]
    fn center_rule_is_a_subset() {
        let r = block(17, 500, 700, 3, 2);
        let shrunk = BBox {
            min_lon: r.min_lon + 0.3 * (r.max_lon - r.min_lon) / 3.0,
            ..r
        };
        let b = TractBoundary::rectangle("c", shrunk).unwrap();
        let all = tiles_covering_boundary(&b, 17).unwrap().tiles;
        let centers = tiles_covering_boundary_with(&b, 17, TileInclusion::CenterInside).unwrap().tiles;
        assert_eq!(all.len(), 6);
        assert_eq!(centers.len(), 6);
        let thin = BBox { min_lon: r.min_lon + 0.6 * (r.max_lon - r.min_lon) / 3.0, ..r };
        let b = TractBoundary::rectangle("c", thin).unwrap();
        let centers = tiles_covering_boundary_with(&b, 17, TileInclusion::CenterInside).unwrap().tiles;
        assert_eq!(centers.len(), 4);
        assert!(centers.iter().all(|t| tiles_covering_boundary(&b, 17).unwrap().tiles.contains(t)));
    }
}
