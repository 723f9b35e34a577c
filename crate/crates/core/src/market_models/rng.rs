use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Counter-based Gaussian streams for one path.
///
/// Path `j` under key `seed` reads ChaCha stream `2j` for the spot shocks and
/// `2j + 1` for the vol-factor shocks, so each path is a pure function of
/// `(seed, j)` and the spot shocks do not depend on whether the factor stream
/// is consumed.
pub struct PathStreams {
    spot: ChaCha8Rng,
    factor: ChaCha8Rng,
}

impl PathStreams {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut spot = ChaCha8Rng::seed_from_u64(seed);
        spot.set_stream(2 * path);
        let mut factor = ChaCha8Rng::seed_from_u64(seed);
        factor.set_stream(2 * path + 1);
        Self { spot, factor }
    }

    #[inline]
    pub fn spot_shock(&mut self) -> f64 {
        self.spot.sample(StandardNormal)
    }

    #[inline]
    pub fn factor_shock(&mut self) -> f64 {
        self.factor.sample(StandardNormal)
    }
}
