#![allow(dead_code)]

use fhe_fft::fhe::{DepthPolicy, SchemeParams};

/// `n = 1`, `q = 2^128 - 159`; decryption correctness checked by measured noise.
pub fn mid_params() -> SchemeParams {
    SchemeParams::with_max_budget(1, 128, 159, 2, None)
        .unwrap()
        .with_policy(DepthPolicy::Measured)
}

/// `n = 1`, `q = 2^200 - 75`; a worst-case depth budget of 21.
pub fn arith_params() -> SchemeParams {
    SchemeParams::with_max_budget(1, 200, 75, 2, None).unwrap()
}

/// `n = 1`, `q = 2^256 - 189`; enough measured headroom for a 4-point,
/// 16-bit transform (NAND depth 80).
pub fn fft_params() -> SchemeParams {
    SchemeParams::with_max_budget(1, 256, 189, 2, None)
        .unwrap()
        .with_policy(DepthPolicy::Measured)
}
