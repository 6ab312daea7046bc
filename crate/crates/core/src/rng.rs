//! Counter-based normal variates.
//!
//! Every Brownian increment is a pure function of
//! `(base_seed, path_index, step_index, site_index)`, computed with the
//! Philox4x32-10 block function followed by a Box–Muller transform. There is
//! no generator state, so ensembles produce identical numbers on any number
//! of threads and in any order.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Identifies one increment of one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub base_seed: u64,
    pub path_index: u64,
    pub step_index: u64,
    pub site_index: u64,
}

/// Standard normal pair for the block holding sites `2m` and `2m + 1`.
#[inline]
pub(crate) fn normal_pair(base_seed: u64, path_index: u64, step_index: u64, pair: u64) -> (f64, f64) {
    debug_assert!(step_index < 1 << 32 && pair < 1 << 32);
    let counter = [
        pair as u32,
        step_index as u32,
        path_index as u32,
        (path_index >> 32) as u32,
    ];
    let key = [base_seed as u32, (base_seed >> 32) as u32];
    let x = philox4x32_10(counter, key);
    let bits_a = ((x[0] as u64) << 32) | x[1] as u64;
    let bits_b = ((x[2] as u64) << 32) | x[3] as u64;
    // u1 ∈ (0, 1], u2 ∈ [0, 1)
    let u1 = ((bits_a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (bits_b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

/// Standard normal variate for `key`.
pub fn standard_normal(key: NoiseKey) -> f64 {
    let (z0, z1) = normal_pair(key.base_seed, key.path_index, key.step_index, key.site_index >> 1);
    if key.site_index & 1 == 0 {
        z0
    } else {
        z1
    }
}

/// Brownian increment over a step of length `dt`: `√dt · N(0, 1)`.
pub fn draw_increment(key: NoiseKey, dt: f64) -> f64 {
    dt.sqrt() * standard_normal(key)
}

/// Fills `out[k]` with standard normals for sites `0..out.len()` of one step.
pub(crate) fn fill_standard_normals(base_seed: u64, path_index: u64, step_index: u64, out: &mut [f64]) {
    for (pair, chunk) in out.chunks_mut(2).enumerate() {
        let (z0, z1) = normal_pair(base_seed, path_index, step_index, pair as u64);
        chunk[0] = z0;
        if let Some(second) = chunk.get_mut(1) {
            *second = z1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        // Reference vectors distributed with the Random123 library.
        assert_eq!(
            philox4x32_10([0, 0, 0, 0], [0, 0]),
            [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344],
                [0xa4093822, 0x299f31d0]
            ),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    fn key(path: u64, step: u64, site: u64) -> NoiseKey {
        NoiseKey {
            base_seed: 42,
            path_index: path,
            step_index: step,
            site_index: site,
        }
    }

    #[test]
    fn same_key_same_value() {
        let k = key(3, 17, 5);
        assert_eq!(draw_increment(k, 0.01).to_bits(), draw_increment(k, 0.01).to_bits());
    }

    #[test]
    fn fill_matches_single_draws() {
        let mut buf = vec![0.0; 7];
        fill_standard_normals(42, 9, 100, &mut buf);
        for (site, &z) in buf.iter().enumerate() {
            assert_eq!(z, standard_normal(key(9, 100, site as u64)));
        }
    }

    #[test]
    fn moments_of_one_path() {
        let dt = 0.01;
        let n = 1_000_000u64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for step in 0..n / 4 {
            for site in 0..4 {
                let x = draw_increment(key(0, step, site), dt);
                s1 += x;
                s2 += x * x;
            }
        }
        let nf = n as f64;
        let mean = s1 / nf;
        let var = s2 / nf - mean * mean;
        assert!(mean.abs() < 4.0 * dt.sqrt() / nf.sqrt(), "mean {mean}");
        assert!((var / dt - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn distinct_paths_are_uncorrelated() {
        let n = 100_000u64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for step in 0..n {
            let x = standard_normal(key(1, step, 0));
            let y = standard_normal(key(2, step, 0));
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let rho = sxy / (sxx * syy).sqrt();
        assert!(rho.abs() < 0.01, "rho {rho}");
    }
}
