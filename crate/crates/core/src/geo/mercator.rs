use std::f64::consts::PI;

use super::{BBox, GeoError, GeoPoint, TileCoord, MAX_ZOOM};

/// Unclamped fractional tile position `(x, y)` of `p` at `zoom`.
pub fn lonlat_to_tile_fraction(p: GeoPoint, zoom: u8) -> Result<(f64, f64), GeoError> {
    p.validate()?;
    if zoom > MAX_ZOOM {
        return Err(GeoError::ZoomOutOfRange(zoom));
    }
    let n = (1u64 << zoom) as f64;
    let phi = p.lat.to_radians();
    let x = (p.lon + 180.0) / 360.0 * n;
    let y = (1.0 - (phi.tan() + 1.0 / phi.cos()).ln() / PI) / 2.0 * n;
    Ok((x, y))
}

/// The tile containing `p` at `zoom`, clamped into the grid (lon = 180 maps to the last column).
pub fn lonlat_to_tile(p: GeoPoint, zoom: u8) -> Result<TileCoord, GeoError> {
    let (fx, fy) = lonlat_to_tile_fraction(p, zoom)?;
    let max = ((1u64 << zoom) - 1) as f64;
    let x = fx.floor().clamp(0.0, max) as u32;
    let y = fy.floor().clamp(0.0, max) as u32;
    Ok(TileCoord { zoom, x, y })
}

fn tile_lon(x: u32, n: f64) -> f64 {
    f64::from(x) / n * 360.0 - 180.0
}

fn tile_lat(y: u32, n: f64) -> f64 {
    (PI * (1.0 - 2.0 * f64::from(y) / n)).sinh().atan().to_degrees()
}

/// Lon/lat rectangle of a tile: corners `(x, y)` (north-west) and `(x + 1, y + 1)` (south-east).
pub fn tile_bounds(t: TileCoord) -> BBox {
    let n = (1u64 << t.zoom) as f64;
    BBox {
        min_lon: tile_lon(t.x, n),
        max_lon: tile_lon(t.x + 1, n),
        max_lat: tile_lat(t.y, n),
        min_lat: tile_lat(t.y + 1, n),
    }
}
