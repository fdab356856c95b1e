//! Spatial analysis of patient-level mortality records.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! - [`ingest`] parses a column dictionary, streams and cleans patient CSV
//!   rows, and loads population tables and GeoJSON region geometry.
//! - [`aggregate`] folds cleaned records into per-region cohort counts and
//!   normalizes them into rate tables.
//! - [`cartogram`] places one equal-sized hexagon per region on an axial grid,
//!   keeping hexes close to geography and neighbors next to each other.
//! - [`render`] writes choropleth, hexbin, faceted and series figures as
//!   standalone SVG using a reversed RdYlBu scale.
//! - [`stats`] computes correlation matrices and fits lasso-penalized
//!   logistic regressions for feature selection.
//!
//! ```no_run
//! use hexmort::{aggregate, ingest};
//!
//! # fn main() -> hexmort::Result<()> {
//! let schema = ingest::parse_schema("schema.json")?;
//! let (records, drops) = ingest::load_patients("patients.csv", &schema)?;
//! let population = ingest::load_population("population.csv")?;
//! let table = aggregate::aggregate_regions(
//!     &records,
//!     aggregate::Level::State,
//!     aggregate::Cohort::DeceasedOnly,
//!     &population,
//!     aggregate::UnknownRegions::Reject,
//! )?;
//! let rates = aggregate::normalize_rates(&table.regions, &"deaths".parse()?, aggregate::Basis::Per100k)?;
//! # let _ = (drops, rates);
//! # Ok(())
//! # }
//! ```

pub mod aggregate;
pub mod cartogram;
pub mod error;
pub mod geometry;
pub mod ingest;
pub mod render;
pub mod stats;

pub use error::{Error, Result};
