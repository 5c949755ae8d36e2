//! Independent oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tractlens_core::geo::{tile_bounds, BBox, GeoPoint, Polygon, TileCoord, TractBoundary};

pub fn pt(lon: f64, lat: f64) -> GeoPoint {
    GeoPoint { lon, lat }
}

/// Winding number of `ring` around `p` (Sunday's crossing rule).
pub fn winding_number(p: GeoPoint, ring: &[GeoPoint]) -> i32 {
    let is_left = |a: GeoPoint, b: GeoPoint| (b.lon - a.lon) * (p.lat - a.lat) - (p.lon - a.lon) * (b.lat - a.lat);
    let mut wn = 0;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.lat <= p.lat {
            if b.lat > p.lat && is_left(a, b) > 0.0 {
                wn += 1;
            }
        } else if b.lat <= p.lat && is_left(a, b) < 0.0 {
            wn -= 1;
        }
    }
    wn
}

pub fn winding_inside(p: GeoPoint, b: &TractBoundary) -> bool {
    b.parts.iter().any(|part| {
        winding_number(p, &part.exterior) != 0 && part.holes.iter().all(|h| winding_number(p, h) == 0)
    })
}

fn seg_dist(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.lon + t * dx, a.lat + t * dy);
    ((p.lon - qx).powi(2) + (p.lat - qy).powi(2)).sqrt()
}

/// Distance from `p` to the nearest edge of any ring.
pub fn edge_distance(p: GeoPoint, b: &TractBoundary) -> f64 {
    b.rings().flat_map(|r| r.windows(2).map(move |w| seg_dist(p, w[0], w[1]))).fold(f64::INFINITY, f64::min)
}

/// Closed ring of `n` vertices at sorted random angles around `(cx, cy)`.
/// Equal radii give a convex polygon, random radii a star-shaped one.
pub fn random_ring(rng: &mut ChaCha8Rng, cx: f64, cy: f64, radius: f64, n: usize, convex: bool) -> Vec<GeoPoint> {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let mut ring: Vec<GeoPoint> = angles
        .iter()
        .map(|a| {
            let r = if convex { radius } else { radius * rng.random_range(0.3..1.0) };
            pt(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    ring.push(ring[0]);
    ring
}

pub fn boundary_from_ring(id: &str, ring: Vec<GeoPoint>) -> TractBoundary {
    TractBoundary::new(id, vec![Polygon::new(ring, vec![]).unwrap()]).unwrap()
}

fn strictly_inside_box(p: GeoPoint, b: &BBox) -> bool {
    p.lon > b.min_lon && p.lon < b.max_lon && p.lat > b.min_lat && p.lat < b.max_lat
}

fn cross(o: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon)
}

fn segments_cross(a: GeoPoint, b: GeoPoint, c: GeoPoint, d: GeoPoint) -> bool {
    let (d1, d2) = (cross(c, d, a), cross(c, d, b));
    let (d3, d4) = (cross(a, b, c), cross(a, b, d));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Rectangle/polygon intersection: a rectangle corner in the polygon, a polygon vertex
/// in the rectangle, or an edge crossing.
pub fn rect_intersects(b: &BBox, poly: &TractBoundary) -> bool {
    let corners =
        [pt(b.min_lon, b.min_lat), pt(b.max_lon, b.min_lat), pt(b.max_lon, b.max_lat), pt(b.min_lon, b.max_lat)];
    if corners.iter().any(|&c| winding_inside(c, poly)) {
        return true;
    }
    if poly.rings().flatten().any(|&v| strictly_inside_box(v, b)) {
        return true;
    }
    let rect_edges = [(0, 1), (1, 2), (2, 3), (3, 0)];
    poly.rings().any(|r| {
        r.windows(2).any(|w| rect_edges.iter().any(|&(i, j)| segments_cross(w[0], w[1], corners[i], corners[j])))
    })
}

/// Every tile in the polygon's bbox range that intersects it, sorted by (x, y).
pub fn coverage_oracle(poly: &TractBoundary, zoom: u8) -> Vec<TileCoord> {
    let bb = poly.bbox();
    let n = 1u32 << zoom;
    let col = |lon: f64| (((lon + 180.0) / 360.0 * n as f64).floor() as i64).clamp(0, n as i64 - 1) as u32;
    let row = |lat: f64| {
        let phi = lat.to_radians();
        (((1.0 - (phi.tan() + 1.0 / phi.cos()).ln() / std::f64::consts::PI) / 2.0 * n as f64).floor() as i64)
            .clamp(0, n as i64 - 1) as u32
    };
    let mut out = Vec::new();
    for x in col(bb.min_lon).saturating_sub(1)..=(col(bb.max_lon) + 1).min(n - 1) {
        for y in row(bb.max_lat).saturating_sub(1)..=(row(bb.min_lat) + 1).min(n - 1) {
            let t = TileCoord { zoom, x, y };
            if rect_intersects(&tile_bounds(t), poly) {
                out.push(t);
            }
        }
    }
    out
}

/// Uniform random design and a noisy linear response.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Array2<f64>, Array1<f64>) {
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
    let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y = Array1::from_shape_fn(n, |i| {
        1.5 + (0..d).map(|j| x[[i, j]] * beta[j]).sum::<f64>() + rng.random_range(-0.5..0.5)
    });
    (x, y)
}

/// Ordinary least squares with intercept via the normal equations: `(intercept, slopes)`.
pub fn normal_equations(x: &Array2<f64>, y: &Array1<f64>) -> (f64, Vec<f64>) {
    let (n, d) = x.dim();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] });
    let b = DVector::from_iterator(n, y.iter().copied());
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    let sol = ata.cholesky().expect("full rank").solve(&atb);
    (sol[0], sol.iter().skip(1).copied().collect())
}

pub fn rmse_loop(o: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..o.len() {
        s += (o[i] - p[i]) * (o[i] - p[i]);
    }
    (s / o.len() as f64).sqrt()
}

pub fn r2_loop(o: &[f64], p: &[f64]) -> f64 {
    let mut mean = 0.0;
    for v in o {
        mean += v;
    }
    mean /= o.len() as f64;
    let (mut res, mut tot) = (0.0, 0.0);
    for i in 0..o.len() {
        res += (o[i] - p[i]).powi(2);
        tot += (o[i] - mean).powi(2);
    }
    1.0 - res / tot
}

pub fn pearson_loop(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
