//! Space-filling designs for training surrogates.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n × p` Latin hypercube sample on `[0, 1]^p`: each column hits every one of
/// the `n` equal-width strata exactly once, jittered uniformly inside it.
pub fn latin_hypercube(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(n, p);
    let mut perm: Vec<usize> = (0..n).collect();
    for c in 0..p {
        perm.shuffle(&mut rng);
        for (r, &k) in perm.iter().enumerate() {
            out[(r, c)] = (k as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_per_stratum() {
        let x = latin_hypercube(50, 3, 7);
        for c in 0..3 {
            let mut strata: Vec<usize> = x
                .column(c)
                .iter()
                .map(|v| (v * 50.0).floor() as usize)
                .collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..50).collect::<Vec<_>>());
        }
        assert_eq!(x, latin_hypercube(50, 3, 7));
        assert_ne!(x, latin_hypercube(50, 3, 8));
    }
}
