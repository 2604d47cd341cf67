//! Execution policy for the data-parallel loops (pulse batches, angle sweeps,
//! oracle sampling) and the deterministic RNG stream layout they share.
//!
//! Work is always cut into fixed-size chunks whose random streams depend only
//! on `(seed, tag, chunk)`, never on the worker that runs them. Sequential and
//! parallel execution therefore produce bit-identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise runs
    /// sequentially.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Evaluates `f(0..n)` and returns results in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one chunk of one logical stream.
pub fn stream_rng(seed: u64, tag: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)));
    rng.set_stream(chunk);
    rng
}

/// Independent seed for the `index`-th sub-experiment of a run (sweep point,
/// calibration batch, ...).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

/// Splits `total` items into chunks of at most `chunk` items.
pub(crate) fn chunk_sizes(total: usize, chunk: usize) -> Vec<usize> {
    let mut sizes = vec![chunk; total / chunk];
    if !total.is_multiple_of(chunk) {
        sizes.push(total % chunk);
    }
    sizes
}
