pub mod error;
pub mod expr;
pub mod real;

pub use error::{Error, Result};
pub mod metric;
pub mod domain;
pub mod spectral;
pub mod boundary;
pub mod quad;
pub mod leaf;
pub mod capillary;
pub mod comparison;
pub mod minimizer;
pub mod foliation;
pub mod asymptotics;

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}
