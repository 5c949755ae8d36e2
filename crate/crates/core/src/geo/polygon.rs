use super::{GeoPoint, TractBoundary};

/// Kilometres per degree used by the equirectangular area approximation.
pub const KM_PER_DEGREE: f64 = 111.32;

fn cross(o: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon)
}

pub(crate) fn on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool {
    cross(a, b, p) == 0.0
        && p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

/// True when segments `ab` and `cd` cross at a single interior point of both.
pub(crate) fn segments_properly_cross(a: GeoPoint, b: GeoPoint, c: GeoPoint, d: GeoPoint) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Even-odd ray casting over every ring of every part.
///
/// Points inside a hole are outside. A point lying exactly on any edge (outer or hole)
/// counts as inside.
pub fn point_in_polygon(p: GeoPoint, b: &TractBoundary) -> bool {
    let mut inside = false;
    for ring in b.rings() {
        for w in ring.windows(2) {
            let (a, c) = (w[0], w[1]);
            if on_segment(p, a, c) {
                return true;
            }
            if (a.lat > p.lat) != (c.lat > p.lat) {
                let x = a.lon + (p.lat - a.lat) * (c.lon - a.lon) / (c.lat - a.lat);
                if p.lon < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Shoelace area of a closed ring in whatever planar units `f` maps to.
pub(crate) fn ring_area_with(ring: &[GeoPoint], f: impl Fn(GeoPoint) -> (f64, f64)) -> f64 {
    let mut acc = 0.0;
    for w in ring.windows(2) {
        let (x0, y0) = f(w[0]);
        let (x1, y1) = f(w[1]);
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc.abs()
}

/// Area in km² on an equirectangular projection centred at the mean latitude of the
/// outer-ring vertices. Holes are subtracted; the result is never negative.
pub fn polygon_area_km2(b: &TractBoundary) -> f64 {
    let (sum, count) = b
        .parts
        .iter()
        .flat_map(|p| &p.exterior[..p.exterior.len().saturating_sub(1)])
        .fold((0.0, 0usize), |(s, c), p| (s + p.lat, c + 1));
    if count == 0 {
        return 0.0;
    }
    let k_lon = (sum / count as f64).to_radians().cos() * KM_PER_DEGREE;
    let project = |p: GeoPoint| (p.lon * k_lon, p.lat * KM_PER_DEGREE);
    let total: f64 = b
        .parts
        .iter()
        .map(|part| {
            let outer = ring_area_with(&part.exterior, project);
            let holes: f64 = part.holes.iter().map(|h| ring_area_with(h, project)).sum();
            outer - holes
        })
        .sum();
    total.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{BBox, Polygon};

    fn ring(pts: &[(f64, f64)]) -> Vec<GeoPoint> {
        pts.iter().map(|&(lon, lat)| GeoPoint { lon, lat }).collect()
    }

    fn square_with_hole() -> TractBoundary {
        let outer = ring(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0), (0.0, 0.0)]);
        let hole = ring(&[(1.0, 1.0), (1.0, 3.0), (3.0, 3.0), (3.0, 1.0), (1.0, 1.0)]);
        TractBoundary::new("h", vec![Polygon::new(outer, vec![hole]).unwrap()]).unwrap()
    }

    #[test]
    fn unit_square_center_inside() {
        let sq = TractBoundary::rectangle("u", BBox { min_lon: 0.0, min_lat: 0.0, max_lon: 1.0, max_lat: 1.0 }).unwrap();
        assert!(point_in_polygon(GeoPoint { lon: 0.5, lat: 0.5 }, &sq));
        assert!(!point_in_polygon(GeoPoint { lon: 1.5, lat: 0.5 }, &sq));
    }

    #[test]
    fn hole_is_outside_but_its_edge_is_inside() {
        let b = square_with_hole();
        assert!(!point_in_polygon(GeoPoint { lon: 2.0, lat: 2.0 }, &b));
        assert!(point_in_polygon(GeoPoint { lon: 0.5, lat: 2.0 }, &b));
        assert!(point_in_polygon(GeoPoint { lon: 1.0, lat: 2.0 }, &b));
    }

    #[test]
    fn boundary_points_count_as_inside() {
        let sq = TractBoundary::rectangle("u", BBox { min_lon: 0.0, min_lat: 0.0, max_lon: 1.0, max_lat: 1.0 }).unwrap();
        for (x, y) in [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0), (0.0, 0.0), (1.0, 1.0)] {
            assert!(point_in_polygon(GeoPoint { lon: x, lat: y }, &sq), "({x}, {y})");
        }
    }

    #[test]
    fn multipolygon_parts_both_count() {
        let a = ring(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)]);
        let b = ring(&[(5.0, 5.0), (6.0, 5.0), (6.0, 6.0), (5.0, 6.0), (5.0, 5.0)]);
        let t = TractBoundary::new("m", vec![Polygon::new(a, vec![]).unwrap(), Polygon::new(b, vec![]).unwrap()]).unwrap();
        assert!(point_in_polygon(GeoPoint { lon: 0.5, lat: 0.5 }, &t));
        assert!(point_in_polygon(GeoPoint { lon: 5.5, lat: 5.5 }, &t));
        assert!(!point_in_polygon(GeoPoint { lon: 3.0, lat: 3.0 }, &t));
    }

    #[test]
    fn equator_square_area() {
        let sq = TractBoundary::rectangle("e", BBox { min_lon: 0.0, min_lat: -0.005, max_lon: 0.01, max_lat: 0.005 }).unwrap();
        // 1.1132 km per side; cos(0) = 1.
        assert!((polygon_area_km2(&sq) - 1.1132 * 1.1132).abs() < 1e-9);
    }

    #[test]
    fn collinear_ring_has_zero_area() {
        let r = ring(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 0.0)]);
        let t = TractBoundary::new("c", vec![Polygon::new(r, vec![]).unwrap()]).unwrap();
        assert_eq!(polygon_area_km2(&t), 0.0);
    }

    #[test]
    fn centered_half_size_hole_removes_a_quarter() {
        let outer = ring(&[(0.0, -0.01), (0.02, -0.01), (0.02, 0.01), (0.0, 0.01), (0.0, -0.01)]);
        let hole = ring(&[(0.005, -0.005), (0.005, 0.005), (0.015, 0.005), (0.015, -0.005), (0.005, -0.005)]);
        let with = TractBoundary::new("w", vec![Polygon::new(outer.clone(), vec![hole]).unwrap()]).unwrap();
        let without = TractBoundary::new("o", vec![Polygon::new(outer, vec![]).unwrap()]).unwrap();
        assert!((polygon_area_km2(&with) - 0.75 * polygon_area_km2(&without)).abs() < 1e-12);
    }

    #[test]
    fn proper_crossing_excludes_touching() {
        let p = |x, y| GeoPoint { lon: x, lat: y };
        assert!(segments_properly_cross(p(0.0, 0.0), p(2.0, 2.0), p(0.0, 2.0), p(2.0, 0.0)));
        assert!(!segments_properly_cross(p(0.0, 0.0), p(1.0, 1.0), p(1.0, 1.0), p(2.0, 0.0)));
    }
}
