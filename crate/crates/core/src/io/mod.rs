//! File formats: the `FIVAEMB1` embedding container, embedding CSV, and
//! binary PPM/PGM images.

pub mod container;
pub mod csv;
pub mod ppm;

use std::path::Path;

pub use container::RawEmbeddings;

use crate::error::Result;

/// Reads embeddings from a container, or from CSV when the file name ends
/// in `.csv`.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<RawEmbeddings> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
    if is_csv {
        csv::read(path)
    } else {
        container::read(path)
    }
}
