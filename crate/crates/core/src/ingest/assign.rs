use std::collections::BTreeMap;

use super::{Category, CategoryCounts, CrimeRecord};
use crate::geo::{point_in_polygon, BBox, GeoPoint, TractBoundary};
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TractAssignment {
    /// One entry per boundary tract id, including tracts with zero crimes.
    pub counts: BTreeMap<String, CategoryCounts>,
    pub unassigned: u64,
}

impl TractAssignment {
    pub fn assigned(&self) -> u64 {
        self.counts.values().map(CategoryCounts::total).sum()
    }
}

const GRID: usize = 64;

/// Uniform bucket grid over tract bounding boxes. Each cell lists candidate tracts in
/// ascending tract-id order.
struct BucketIndex<'a> {
    tracts: Vec<(&'a TractBoundary, BBox)>,
    extent: BBox,
    cells: Vec<Vec<usize>>,
}

impl<'a> BucketIndex<'a> {
    fn new(boundaries: &'a [TractBoundary]) -> Self {
        let mut tracts: Vec<(&TractBoundary, BBox)> = boundaries.iter().map(|b| (b, b.bbox())).collect();
        tracts.sort_by(|a, b| a.0.tract_id.cmp(&b.0.tract_id));
        let extent = tracts.iter().fold(
            BBox { min_lon: f64::INFINITY, min_lat: f64::INFINITY, max_lon: f64::NEG_INFINITY, max_lat: f64::NEG_INFINITY },
            |e, (_, b)| BBox {
                min_lon: e.min_lon.min(b.min_lon),
                min_lat: e.min_lat.min(b.min_lat),
                max_lon: e.max_lon.max(b.max_lon),
                max_lat: e.max_lat.max(b.max_lat),
            },
        );
        let mut idx = Self { tracts, extent, cells: vec![Vec::new(); GRID * GRID] };
        for (i, (_, b)) in idx.tracts.iter().enumerate() {
            let (c0, r0) = idx.cell(b.min_lon, b.min_lat);
            let (c1, r1) = idx.cell(b.max_lon, b.max_lat);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    idx.cells[r * GRID + c].push(i);
                }
            }
        }
        idx
    }

    fn cell(&self, lon: f64, lat: f64) -> (usize, usize) {
        let f = |v: f64, lo: f64, hi: f64| {
            if hi > lo {
                (((v - lo) / (hi - lo) * GRID as f64).floor().max(0.0) as usize).min(GRID - 1)
            } else {
                0
            }
        };
        (f(lon, self.extent.min_lon, self.extent.max_lon), f(lat, self.extent.min_lat, self.extent.max_lat))
    }

    /// Index (into the sorted tract list) of the first tract containing `p`.
    fn locate(&self, p: GeoPoint) -> Option<usize> {
        if self.tracts.is_empty() || !self.extent.contains(p) {
            return None;
        }
        let (c, r) = self.cell(p.lon, p.lat);
        self.cells[r * GRID + c]
            .iter()
            .copied()
            .find(|&i| self.tracts[i].1.contains(p) && point_in_polygon(p, self.tracts[i].0))
    }
}

/// Assigns each record to the containing tract. A record on a shared edge goes to the
/// first containing tract in sorted tract-id order; records outside every tract are
/// counted as unassigned.
pub fn assign_crimes_to_tracts(records: &[CrimeRecord], boundaries: &[TractBoundary]) -> TractAssignment {
    let index = BucketIndex::new(boundaries);
    let n = index.tracts.len();
    let partials = par::map_chunks(records, 4096, |chunk| {
        let mut counts = vec![CategoryCounts::default(); n];
        let mut unassigned = 0u64;
        for r in chunk {
            match index.locate(r.location) {
                Some(i) => counts[i].add(r.category),
                None => unassigned += 1,
            }
        }
        (counts, unassigned)
    });

    let mut totals = vec![CategoryCounts::default(); n];
    let mut unassigned = 0;
    for (counts, u) in partials {
        for (t, c) in totals.iter_mut().zip(counts) {
            t.merge(&c);
        }
        unassigned += u;
    }
    let mut counts = BTreeMap::new();
    for ((b, _), c) in index.tracts.iter().zip(totals) {
        counts.entry(b.tract_id.clone()).or_insert_with(CategoryCounts::default).merge(&c);
    }
    TractAssignment { counts, unassigned }
}

impl CategoryCounts {
    pub fn add(&mut self, c: Category) {
        match c {
            Category::Personal => self.personal += 1,
            Category::Property => self.property += 1,
            Category::Other => self.other += 1,
        }
    }

    pub fn merge(&mut self, o: &CategoryCounts) {
        self.personal += o.personal;
        self.property += o.property;
        self.other += o.other;
    }
}
