//! Configuration-driven scenario runner for the ring-cavity lattice models.

pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;

pub use error::{HarnessError, Result};

/// Caps the global rayon pool from `RINGLAT_THREADS`; a no-op when unset
/// or when the pool already exists.
pub fn init_threads() -> Result<()> {
    match std::env::var("RINGLAT_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|n| *n >= 1)
                .ok_or_else(|| HarnessError::Config(format!("RINGLAT_THREADS=`{v}` is not a positive integer")))?;
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
        Err(_) => Ok(()),
    }
}
