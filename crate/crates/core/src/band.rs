//! Symmetric positive definite banded linear algebra.
//!
//! Matrices from bilinear quads on a structured grid have a fixed half
//! bandwidth once nodes are numbered along the short axis, so a dense band
//! (row-major, lower triangle) beats general sparse storage here: assembly
//! is index arithmetic, factorization never fills outside the band, and
//! repeated refactorization during optimization stays allocation-free.

use crate::error::{Error, Result};

/// Lower-band storage: row `i` holds columns `i - hb ..= i` at
/// `band[i * (hb + 1) + hb - (i - k)]`, so the diagonal sits at offset `hb`.
#[derive(Debug, Clone)]
pub struct BandedSystem {
    n: usize,
    hb: usize,
    band: Vec<f64>,
}

impl BandedSystem {
    pub fn new(n: usize, half_bandwidth: usize) -> Self {
        BandedSystem {
            n,
            hb: half_bandwidth,
            band: vec![0.0; n * (half_bandwidth + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.hb
    }

    pub fn reset(&mut self) {
        self.band.fill(0.0);
    }

    /// Accumulates a symmetric contribution. Entries above the diagonal are
    /// ignored; element matrices contain both (i, j) and (j, i), so each
    /// stored entry is visited exactly once.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if j > i {
            return;
        }
        debug_assert!(i - j <= self.hb, "entry ({i},{j}) outside bandwidth {}", self.hb);
        self.band[i * (self.hb + 1) + self.hb - (i - j)] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.hb {
            0.0
        } else {
            self.band[i * (self.hb + 1) + self.hb - (i - j)]
        }
    }

    /// Dense Cholesky restricted to the band; fails on loss of positive
    /// definiteness (singular or indefinite assembly).
    pub fn factorize(&self) -> Result<BandedCholesky> {
        let (n, hb) = (self.n, self.hb);
        let w = hb + 1;
        let mut l = self.band.clone();
        for i in 0..n {
            let k0 = i.saturating_sub(hb);
            for k in k0..=i {
                let m0 = k0.max(k.saturating_sub(hb));
                let mut sum = l[i * w + hb - (i - k)];
                for m in m0..k {
                    sum -= l[i * w + hb - (i - m)] * l[k * w + hb - (k - m)];
                }
                if k < i {
                    l[i * w + hb - (i - k)] = sum / l[k * w + hb];
                } else {
                    if sum <= 1e-300 {
                        return Err(Error::numerical(format!(
                            "matrix is not positive definite at row {i} (pivot {sum:.3e})"
                        )));
                    }
                    l[i * w + hb] = sum.sqrt();
                }
            }
        }
        Ok(BandedCholesky { n, hb, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    hb: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, hb, w) = (self.n, self.hb, self.hb + 1);
        for i in 0..n {
            let k0 = i.saturating_sub(hb);
            let mut sum = x[i];
            for k in k0..i {
                sum -= self.l[i * w + hb - (i - k)] * x[k];
            }
            x[i] = sum / self.l[i * w + hb];
        }
        for i in (0..n).rev() {
            let kend = (i + hb).min(n - 1);
            let mut sum = x[i];
            for k in i + 1..=kend {
                sum -= self.l[k * w + hb - (k - i)] * x[k];
            }
            x[i] = sum / self.l[i * w + hb];
        }
    }
}
