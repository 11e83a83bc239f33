#![allow(dead_code)]

use intervention::SystemParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CORPUS_SEED: u64 = 0x005E_ED0F_1A7E;

pub fn example_params() -> SystemParams {
    SystemParams::new(5, 0.2, 0.8, 100).unwrap()
}

/// N in [2, 10], p_l = 1/N, p_h uniform in (p_l, 1), T in [10, 200].
pub fn random_params(rng: &mut ChaCha8Rng) -> SystemParams {
    let n = rng.gen_range(2..=10usize);
    let p_low = 1.0 / n as f64;
    let p_high = loop {
        let p = rng.gen_range(p_low..1.0);
        if p > p_low {
            break p;
        }
    };
    let horizon = rng.gen_range(10..=200usize);
    SystemParams::new(n, p_low, p_high, horizon).unwrap()
}

/// Random (params, t) pairs with t in [1, T-1].
pub fn random_tuples(seed: u64) -> impl Iterator<Item = (SystemParams, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::iter::from_fn(move || {
        let params = random_params(&mut rng);
        let t = rng.gen_range(1..params.horizon());
        Some((params, t))
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
