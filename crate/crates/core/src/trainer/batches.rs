use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Paired index batches for one epoch.
///
/// The epoch has `ceil(max(n_s, n_t) / m)` batches of exactly `m` indices
/// per side. Each side draws from a stream of concatenated fresh
/// permutations, so the smaller domain is recycled and every index of the
/// larger one is visited exactly once per epoch when `m` divides its size.
pub fn make_batches(n_s: usize, n_t: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if n_s == 0 || n_t == 0 {
        return Err(Error::invalid("cannot batch an empty domain"));
    }
    let larger = n_s.max(n_t);
    if m == 0 || m > larger {
        return Err(Error::invalid(format!("batch size {m} must lie in 1..={larger}")));
    }
    let n_batches = larger.div_ceil(m);
    let src = cycled(n_s, n_batches * m, rng);
    let tgt = cycled(n_t, n_batches * m, rng);
    Ok(src
        .chunks(m)
        .zip(tgt.chunks(m))
        .map(|(s, t)| (s.to_vec(), t.to_vec()))
        .collect())
}

fn cycled(n: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(len + n);
    while out.len() < len {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        out.extend(perm);
    }
    out.truncate(len);
    out
}
