//! Sinusoidal positional encoding of 3-D positions.

use std::f64::consts::PI;

use super::real::Real;

/// Output width for `num_freqs` octaves: raw coordinates plus a sin/cos pair
/// per octave and axis.
pub fn pe_dim(num_freqs: usize) -> usize {
    3 + 6 * num_freqs
}

/// `(x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x))`,
/// octaves outermost, axes innermost within each sin/cos block.
pub fn pe_encode<R: Real>(x: [R; 3], num_freqs: usize) -> Vec<R> {
    let mut out = Vec::with_capacity(pe_dim(num_freqs));
    out.extend_from_slice(&x);
    let mut scale = PI;
    for _ in 0..num_freqs {
        for c in x {
            out.push((c * scale).sin());
        }
        for c in x {
            out.push((c * scale).cos());
        }
        scale *= 2.0;
    }
    out
}
