//! Deterministic parallel reductions.
//!
//! Work is split into a fixed number of chunks that does not depend on the
//! thread pool. Chunks are evaluated in parallel a wave at a time and folded
//! into the accumulator strictly in chunk order, so the floating-point result
//! is the same for any number of threads.

use rayon::prelude::*;

/// Chunks evaluated concurrently before being folded in.
pub const WAVE: usize = 64;

pub fn ordered_fold<T, A, F, G>(n_chunks: usize, init: A, eval: F, fold: G) -> A
where
    T: Send,
    F: Fn(usize) -> T + Sync,
    G: FnMut(A, usize, T) -> A,
{
    ordered_fold_waves(n_chunks, WAVE, init, eval, fold)
}

/// `ordered_fold` with an explicit bound on chunks held in memory at once.
/// The result does not depend on `wave`.
pub fn ordered_fold_waves<T, A, F, G>(n_chunks: usize, wave: usize, init: A, eval: F, mut fold: G) -> A
where
    T: Send,
    F: Fn(usize) -> T + Sync,
    G: FnMut(A, usize, T) -> A,
{
    let wave = wave.max(1);
    let mut acc = init;
    let mut start = 0;
    while start < n_chunks {
        let end = (start + wave).min(n_chunks);
        let parts: Vec<T> = (start..end).into_par_iter().map(&eval).collect();
        for (i, part) in parts.into_iter().enumerate() {
            acc = fold(acc, start + i, part);
        }
        start = end;
    }
    acc
}

/// Neumaier-compensated running sum of complex matrices stored flat.
#[derive(Clone, Debug)]
pub struct CompensatedSum {
    sum: Vec<num_complex::Complex64>,
    comp: Vec<num_complex::Complex64>,
}

impl CompensatedSum {
    pub fn new(len: usize) -> Self {
        let z = num_complex::Complex64::new(0.0, 0.0);
        Self { sum: vec![z; len], comp: vec![z; len] }
    }

    pub fn add(&mut self, x: &[num_complex::Complex64]) {
        assert_eq!(x.len(), self.sum.len());
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(x) {
            let (re, cre) = two_sum(s.re, v.re);
            let (im, cim) = two_sum(s.im, v.im);
            s.re = re;
            s.im = im;
            c.re += cre;
            c.im += cim;
        }
    }

    pub fn add_scaled(&mut self, x: &[num_complex::Complex64], w: f64) {
        let scaled: Vec<_> = x.iter().map(|z| z * w).collect();
        self.add(&scaled);
    }

    pub fn total(&self) -> Vec<num_complex::Complex64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = if a.abs() >= b.abs() { (a - s) + b } else { (b - s) + a };
    (s, err)
}
