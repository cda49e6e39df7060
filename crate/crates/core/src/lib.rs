//! Evidence layers from natural-language queries over geologic-map polygons.
//!
//! The pipeline: ingest a polygon attribute table ([`geodata`]), embed each
//! polygon's description and the query ([`embed`]), rank and threshold the
//! polygons into an evidence layer ([`evidence`]), combine layers into
//! contact zones ([`contact`]), and score the results against known sites or
//! reference tracts ([`evaluate`]). [`project`] persists all of it as plain
//! files that GIS tools can read.

pub mod config;
pub mod contact;
pub mod depositmodel;
pub mod embed;
pub mod error;
pub mod evaluate;
pub mod evidence;
mod fsutil;
pub mod geodata;
pub mod geojson_io;
pub mod geometry;
mod ids;
pub mod project;
pub mod projection;
pub mod workspace;

pub use error::{Error, ErrorClass, Result};
