//! Seeded lattice value noise.

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn hash3(seed: u64, a: i64, b: i64) -> u64 {
    mix(seed ^ mix((a as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ mix(b as u64)))
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    (hash3(seed, ix, iy) >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smoothly interpolated random lattice values in `[0, 1)`, one lattice
/// cell per unit of `(x, y)`.
pub(crate) fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let (tx, ty) = (smoothstep(x - fx), smoothstep(y - fy));
    let v00 = lattice(seed, ix, iy);
    let v10 = lattice(seed, ix + 1, iy);
    let v01 = lattice(seed, ix, iy + 1);
    let v11 = lattice(seed, ix + 1, iy + 1);
    let top = v00 + (v10 - v00) * tx;
    let bottom = v01 + (v11 - v01) * tx;
    top + (bottom - top) * ty
}

/// Weighted sum of octaves `(cells per unit, weight)`, normalized to `[0, 1)`.
pub(crate) fn fractal(seed: u64, x: f64, y: f64, octaves: &[(f64, f64)]) -> f64 {
    let total: f64 = octaves.iter().map(|o| o.1).sum();
    octaves
        .iter()
        .enumerate()
        .map(|(i, &(freq, w))| w * value_noise(seed.wrapping_add(i as u64 * 0x51), x * freq, y * freq))
        .sum::<f64>()
        / total
}
