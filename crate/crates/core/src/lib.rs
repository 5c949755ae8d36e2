//! Tract-level crime-rate modeling from satellite tile features.
//!
//! The crate is organised as a pipeline:
//!
//! * [`geo`]: Web Mercator tile math, tract polygons, tile coverage and a cached tile fetcher.
//! * [`ingest`]: crime CSV and ACS parsing, crime-to-tract assignment and per-1,000 rates.
//! * [`features`]: per-tile feature vectors (built-in image statistics or imported vectors)
//!   pooled into a tract-level [`features::FeatureMatrix`].
//! * [`elastic_net`]: standardization and the coordinate-descent elastic-net solver.
//! * [`harness`]: k-fold cross-validation, hyperparameter search, crime-level stratification
//!   and the experiment grid.
//! * [`synth`] and [`output`]: planted synthetic cities and the CSV/GeoJSON/table emitters.
//!
//! Data-parallel loops go through rayon when the `parallel` feature is enabled (the default)
//! and fall back to plain iterators otherwise. Results are identical either way.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod elastic_net;
pub mod features;
pub mod geo;
pub mod harness;
pub mod ingest;
pub mod output;
pub mod par;
pub mod synth;

mod fmt;
pub use fmt::{fmt_sig, write_atomic};
