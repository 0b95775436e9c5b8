//! Seeded random operators and low-discrepancy sequences.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::operator::{hermitian_norm, CMatrix};

/// Deterministic generator for `(seed, stream)`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normalize(m: CMatrix) -> CMatrix {
    let norm = hermitian_norm(&m);
    if norm > 0.0 {
        m.map(|z| z / norm)
    } else {
        m
    }
}

/// Real symmetric Gaussian matrix (GOE-style), scaled to unit operator norm.
pub fn goe<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for j in 0..n {
        let d: f64 = rng.sample(StandardNormal);
        m[(j, j)] = Complex64::new(d * std::f64::consts::SQRT_2, 0.0);
        for k in j + 1..n {
            let x: f64 = rng.sample(StandardNormal);
            m[(j, k)] = Complex64::new(x, 0.0);
            m[(k, j)] = Complex64::new(x, 0.0);
        }
    }
    normalize(m)
}

/// Complex Hermitian Gaussian matrix (GUE-style), scaled to unit operator norm.
pub fn gue<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for j in 0..n {
        let d: f64 = rng.sample(StandardNormal);
        m[(j, j)] = Complex64::new(d, 0.0);
        for k in j + 1..n {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2;
            m[(j, k)] = z;
            m[(k, j)] = z.conj();
        }
    }
    normalize(m)
}

/// Haar-ish random unitary from the QR factors of a complex Gaussian matrix.
pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        Complex64::new(x, y)
    });
    let qr = g.qr();
    let (q, r) = qr.unpack();
    let mut q = q;
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for j in 0..n {
            q[(j, k)] *= phase;
        }
    }
    q
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut x = 0.0;
    while i > 0 {
        x += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    x
}

/// Point `index` of the `dim`-dimensional Halton sequence, shifted modulo 1
/// by `shift` (a Cranley-Patterson rotation). Prefixes are stable: the first
/// `k` points do not depend on how many are drawn.
pub fn halton(index: u64, dim: usize, shift: &[f64]) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()] as u64;
            let x = radical_inverse(index + 1, base) + shift.get(d).copied().unwrap_or(0.0);
            x - x.floor()
        })
        .collect()
}

/// `k` unit directions in `R^m`: equally spaced angles for `m = 2`, a
/// Fibonacci lattice for `m = 3`, seeded Gaussian draws otherwise.
pub fn sphere_directions(m: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    match m {
        1 => (0..k).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect(),
        2 => (0..k)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / k as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..k)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / k as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut r = rng(seed, 0xd1);
            (0..k)
                .map(|_| {
                    let v: Vec<f64> = (0..m).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / n).collect()
                })
                .collect()
        }
    }
}
