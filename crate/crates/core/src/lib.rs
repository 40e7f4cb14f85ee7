//! Telomere-shortening lineage models.
//!
//! Lineages divide at exponential times and shorten one telomere per
//! chromosome at each division; a lineage becomes senescent when a telomere
//! length drops below zero. The crate simulates those lineages, evaluates
//! the transport approximation of the model, and inverts it to estimate the
//! initial telomere length density from senescence times.

pub mod analytic;
pub mod bounds;
pub mod curve;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod multitelomere;
pub mod quad;
pub mod simulator;

pub use curve::DensityCurve;
pub use error::{Error, Result};

/// Whether a lineage carries one telomere or 2k telomeres (k chromosomes).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    One,
    Multi(multitelomere::ChromosomeCount),
}

impl Dimension {
    pub fn multi(k: u32) -> Result<Self> {
        Ok(Dimension::Multi(multitelomere::ChromosomeCount::new(k)?))
    }

    /// Number of telomeres per lineage.
    pub fn telomeres(&self) -> usize {
        match self {
            Dimension::One => 1,
            Dimension::Multi(k) => 2 * k.get() as usize,
        }
    }

    /// Chromosome count, with the one-telomere model reported as `None`.
    pub fn k(&self) -> Option<u32> {
        match self {
            Dimension::One => None,
            Dimension::Multi(k) => Some(k.get()),
        }
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dimension::One => write!(f, "1"),
            Dimension::Multi(k) => write!(f, "2k (k = {})", k.get()),
        }
    }
}
