//! GeoJSON (RFC 7946) reading and writing for tract boundaries.

use serde_json::{json, Value};

use super::{GeoError, GeoPoint, Polygon, TractBoundary};

pub const DEFAULT_ID_PROPERTY: &str = "GEOID";

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedBoundaries {
    pub boundaries: Vec<TractBoundary>,
    pub warnings: Vec<String>,
}

/// Reads a FeatureCollection of Polygon/MultiPolygon features into tract boundaries.
///
/// The tract id comes from `properties[id_key]` (strings and numbers accepted). Open
/// rings are closed with a warning; other geometry types are skipped with a warning.
/// Every feature lacking the id property is reported in a single error.
pub fn parse_tract_boundaries(geojson_text: &str, id_key: &str) -> Result<ParsedBoundaries, GeoError> {
    let root: Value = serde_json::from_str(geojson_text).map_err(|e| GeoError::GeoJson(e.to_string()))?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(GeoError::GeoJson("top-level object is not a FeatureCollection".into()));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| GeoError::GeoJson("FeatureCollection has no features array".into()))?;

    let mut boundaries = Vec::new();
    let mut warnings = Vec::new();
    let mut missing = Vec::new();
    for (index, feature) in features.iter().enumerate() {
        let id = match feature.get("properties").and_then(|p| p.get(id_key)) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Number(n)) => Some(n.to_string()),
            _ => None,
        };
        let geometry = feature.get("geometry").unwrap_or(&Value::Null);
        let gtype = geometry.get("type").and_then(Value::as_str).unwrap_or("null");
        let coords = geometry.get("coordinates");
        let parts_json: Vec<&Value> = match (gtype, coords) {
            ("Polygon", Some(c)) => vec![c],
            ("MultiPolygon", Some(Value::Array(polys))) => polys.iter().collect(),
            _ => {
                warnings.push(format!("feature {index}: skipped {gtype} geometry"));
                continue;
            }
        };
        let Some(id) = id else {
            missing.push(index);
            continue;
        };
        let mut parts = Vec::with_capacity(parts_json.len());
        for pj in parts_json {
            parts.push(parse_polygon(pj, index, &id, &mut warnings)?);
        }
        let b = TractBoundary::new(id, parts).map_err(|e| bad(index, e.to_string()))?;
        if !b.outer_rings_look_simple() {
            warnings.push(format!("feature {index} ({}): outer ring self-intersects", b.tract_id));
        }
        boundaries.push(b);
    }
    if !missing.is_empty() {
        return Err(GeoError::MissingIdProperty { key: id_key.to_string(), indices: missing });
    }
    Ok(ParsedBoundaries { boundaries, warnings })
}

fn bad(index: usize, reason: impl Into<String>) -> GeoError {
    GeoError::BadFeature { index, reason: reason.into() }
}

fn parse_polygon(v: &Value, index: usize, id: &str, warnings: &mut Vec<String>) -> Result<Polygon, GeoError> {
    let rings = v.as_array().ok_or_else(|| bad(index, "polygon coordinates are not an array"))?;
    if rings.is_empty() {
        return Err(bad(index, "polygon has no rings"));
    }
    let mut parsed = Vec::with_capacity(rings.len());
    for r in rings {
        let pts = r.as_array().ok_or_else(|| bad(index, "ring is not an array"))?;
        let mut ring = Vec::with_capacity(pts.len() + 1);
        for p in pts {
            let pos = p.as_array().filter(|a| a.len() >= 2).ok_or_else(|| bad(index, "position needs [lon, lat]"))?;
            let lon = pos[0].as_f64().ok_or_else(|| bad(index, "non-numeric longitude"))?;
            let lat = pos[1].as_f64().ok_or_else(|| bad(index, "non-numeric latitude"))?;
            ring.push(GeoPoint::new(lon, lat).map_err(|e| bad(index, e.to_string()))?);
        }
        if !ring.is_empty() && ring.first() != ring.last() {
            ring.push(ring[0]);
            warnings.push(format!("feature {index} ({id}): auto-closed open ring"));
        }
        parsed.push(ring);
    }
    let exterior = parsed.remove(0);
    Polygon::new(exterior, parsed).map_err(|e| bad(index, e.to_string()))
}

fn signed_area(ring: &[GeoPoint]) -> f64 {
    ring.windows(2).map(|w| w[0].lon * w[1].lat - w[1].lon * w[0].lat).sum::<f64>() * 0.5
}

fn ring_json(ring: &[GeoPoint], ccw: bool) -> Value {
    let mut pts: Vec<Value> = ring.iter().map(|p| json!([p.lon, p.lat])).collect();
    if (signed_area(ring) > 0.0) != ccw {
        pts.reverse();
    }
    Value::Array(pts)
}

/// GeoJSON geometry for a tract, with RFC 7946 winding (outer rings counter-clockwise,
/// holes clockwise).
pub fn boundary_geometry(b: &TractBoundary) -> Value {
    let polys: Vec<Value> = b
        .parts
        .iter()
        .map(|p| {
            let mut rings = vec![ring_json(&p.exterior, true)];
            rings.extend(p.holes.iter().map(|h| ring_json(h, false)));
            Value::Array(rings)
        })
        .collect();
    if polys.len() == 1 {
        json!({ "type": "Polygon", "coordinates": polys.into_iter().next().unwrap() })
    } else {
        json!({ "type": "MultiPolygon", "coordinates": polys })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"{"type":"FeatureCollection","features":[
      {"type":"Feature","properties":{"GEOID":"17031010100"},
       "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
      {"type":"Feature","properties":{"GEOID":17031010200},
       "geometry":{"type":"Polygon","coordinates":[[[1,0],[2,0],[2,1],[1,1],[1,0]]]}}
    ]}"#;

    #[test]
    fn two_polygons_two_boundaries() {
        let p = parse_tract_boundaries(TWO, DEFAULT_ID_PROPERTY).unwrap();
        let ids: Vec<&str> = p.boundaries.iter().map(|b| b.tract_id.as_str()).collect();
        assert_eq!(ids, ["17031010100", "17031010200"]);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn multipolygon_has_two_parts() {
        let text = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"GEOID":"m"},
          "geometry":{"type":"MultiPolygon","coordinates":[
            [[[0,0],[1,0],[1,1],[0,1],[0,0]]],
            [[[3,3],[4,3],[4,4],[3,4],[3,3]]]]}}]}"#;
        let p = parse_tract_boundaries(text, "GEOID").unwrap();
        assert_eq!(p.boundaries.len(), 1);
        assert_eq!(p.boundaries[0].parts.len(), 2);
    }

    #[test]
    fn missing_id_names_the_feature() {
        let text = r#"{"type":"FeatureCollection","features":[
          {"type":"Feature","properties":{"GEOID":"a"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}},
          {"type":"Feature","properties":{"NAME":"b"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}]}"#;
        let err = parse_tract_boundaries(text, "GEOID").unwrap_err();
        assert_eq!(err, GeoError::MissingIdProperty { key: "GEOID".into(), indices: vec![1] });
    }

    #[test]
    fn open_rings_are_closed_with_warning_and_points_skipped() {
        let text = r#"{"type":"FeatureCollection","features":[
          {"type":"Feature","properties":{"GEOID":"a"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}},
          {"type":"Feature","properties":{"GEOID":"p"},"geometry":{"type":"Point","coordinates":[0,0]}}]}"#;
        let p = parse_tract_boundaries(text, "GEOID").unwrap();
        assert_eq!(p.boundaries.len(), 1);
        assert_eq!(p.boundaries[0].parts[0].exterior.len(), 5);
        assert_eq!(p.warnings.len(), 2);
    }

    #[test]
    fn custom_id_key_and_non_collection() {
        assert!(parse_tract_boundaries(TWO, "TRACTCE").is_err());
        assert!(matches!(parse_tract_boundaries(r#"{"type":"Feature"}"#, "GEOID"), Err(GeoError::GeoJson(_))));
    }

    #[test]
    fn written_winding_follows_rfc7946() {
        let cw_outer: Vec<GeoPoint> = [(0.0, 0.0), (0.0, 2.0), (2.0, 2.0), (2.0, 0.0), (0.0, 0.0)]
            .iter()
            .map(|&(lon, lat)| GeoPoint { lon, lat })
            .collect();
        let ccw_hole: Vec<GeoPoint> = [(0.5, 0.5), (1.5, 0.5), (1.5, 1.5), (0.5, 1.5), (0.5, 0.5)]
            .iter()
            .map(|&(lon, lat)| GeoPoint { lon, lat })
            .collect();
        let b = TractBoundary::new("w", vec![Polygon::new(cw_outer, vec![ccw_hole]).unwrap()]).unwrap();
        let g = boundary_geometry(&b);
        let rings = g["coordinates"].as_array().unwrap();
        let to_pts = |r: &Value| -> Vec<GeoPoint> {
            r.as_array()
                .unwrap()
                .iter()
                .map(|p| GeoPoint { lon: p[0].as_f64().unwrap(), lat: p[1].as_f64().unwrap() })
                .collect()
        };
        assert!(signed_area(&to_pts(&rings[0])) > 0.0);
        assert!(signed_area(&to_pts(&rings[1])) < 0.0);
    }
}
