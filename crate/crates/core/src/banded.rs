//! Symmetric banded matrices with an `LDLᵀ` factorization and selected
//! inversion of the band of the inverse.

use crate::error::{Result, VsplineError};

/// Symmetric matrix stored by its lower band: entry `(i, i - k)` for
/// `k = 0..=bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    size: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(size: usize, bandwidth: usize) -> Self {
        Self {
            size,
            bandwidth,
            data: vec![0.0; size * (bandwidth + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let k = hi - lo;
        (k <= self.bandwidth).then(|| hi * (self.bandwidth + 1) + k)
    }

    /// Entry `(i, j)`; zero outside the band.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `value` to `(i, j)` (and implicitly `(j, i)`).
    ///
    /// Panics if the position lies outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += value;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.size).map(|i| self.get(i, i)).sum()
    }

    /// Entrywise `self + scale * other` for matrices of equal shape.
    pub fn add_scaled(&mut self, other: &BandedSym, scale: f64) {
        assert_eq!(self.size, other.size);
        assert_eq!(self.bandwidth, other.bandwidth);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.size);
        let mut out = vec![0.0; self.size];
        for i in 0..self.size {
            let lo = i.saturating_sub(self.bandwidth);
            let hi = (i + self.bandwidth).min(self.size - 1);
            out[i] = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
        out
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.size)
            .map(|i| (0..self.size).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// `LDLᵀ` factorization without pivoting.
    ///
    /// Fails with the offending row when a pivot is not safely positive.
    pub fn factor(&self) -> Result<BandedLdl> {
        let n = self.size;
        let p = self.bandwidth;
        let mut l = BandedSym::zeros(n, p);
        let mut d = vec![0.0; n];
        for j in 0..n {
            let lo = j.saturating_sub(p);
            let mut pivot = self.get(j, j);
            for k in lo..j {
                let ljk = l.get(j, k);
                pivot -= ljk * ljk * d[k];
            }
            let scale = self.get(j, j).abs();
            if !pivot.is_finite() || pivot <= scale * 1e-15 {
                return Err(VsplineError::NotPositiveDefinite { row: j, pivot });
            }
            d[j] = pivot;
            for i in j + 1..=(j + p).min(n - 1) {
                let lo_i = i.saturating_sub(p);
                let mut acc = self.get(i, j);
                for k in lo_i.max(lo)..j {
                    acc -= l.get(i, k) * d[k] * l.get(j, k);
                }
                let s = l.slot(i, j).expect("in band");
                l.data[s] = acc / pivot;
            }
        }
        Ok(BandedLdl { l, d })
    }
}

/// Unit lower-triangular band factor `L` (diagonal unused) and pivots `D`.
#[derive(Debug, Clone)]
pub struct BandedLdl {
    l: BandedSym,
    d: Vec<f64>,
}

impl BandedLdl {
    pub fn size(&self) -> usize {
        self.d.len()
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.size();
        let p = self.l.bandwidth;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(p);
            let mut acc = x[i];
            for k in lo..i {
                acc -= self.l.get(i, k) * x[k];
            }
            x[i] = acc;
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for i in (0..n).rev() {
            let hi = (i + p).min(n - 1);
            let mut acc = x[i];
            for k in i + 1..=hi {
                acc -= self.l.get(k, i) * x[k];
            }
            x[i] = acc;
        }
        x
    }

    /// Entries of the inverse within the band, by backward recursion over
    /// the factor. Costs `O(n p²)`.
    pub fn selected_inverse(&self) -> BandedSym {
        let n = self.size();
        let p = self.l.bandwidth;
        let mut z = BandedSym::zeros(n, p);
        for i in (0..n).rev() {
            let hi = (i + p).min(n - 1);
            for j in (i + 1..=hi).rev() {
                let mut acc = 0.0;
                for k in i + 1..=hi {
                    acc -= self.l.get(k, i) * z.get(k, j);
                }
                let s = z.slot(i, j).expect("in band");
                z.data[s] = acc;
            }
            let mut diag = 1.0 / self.d[i];
            for k in i + 1..=hi {
                diag -= self.l.get(k, i) * z.get(k, i);
            }
            let s = z.slot(i, i).expect("in band");
            z.data[s] = diag;
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, p: usize, seed: u64) -> BandedSym {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandedSym::zeros(n, p);
        for i in 0..n {
            for k in 1..=p.min(i) {
                a.add(i, i - k, rng.random_range(-1.0..1.0));
            }
        }
        for i in 0..n {
            let row: f64 = (0..n).filter(|&j| j != i).map(|j| a.get(i, j).abs()).sum();
            a.add(i, i, row + rng.random_range(0.5..2.0));
        }
        a
    }

    fn dense(a: &BandedSym) -> DMatrix<f64> {
        DMatrix::from_fn(a.size(), a.size(), |i, j| a.get(i, j))
    }

    #[test]
    fn solve_matches_dense() {
        let a = random_spd(17, 3, 1);
        let b: Vec<f64> = (0..17).map(|i| (i as f64).sin()).collect();
        let x = a.factor().unwrap().solve(&b);
        let reference = dense(&a).lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for (u, v) in x.iter().zip(reference.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn selected_inverse_matches_dense() {
        for (n, p, seed) in [(1, 3, 0), (5, 3, 2), (24, 3, 3), (12, 1, 4)] {
            let a = random_spd(n, p, seed);
            let z = a.factor().unwrap().selected_inverse();
            let inv = dense(&a).try_inverse().unwrap();
            for i in 0..n {
                for j in i.saturating_sub(p)..=i {
                    assert!((z.get(i, j) - inv[(i, j)]).abs() < 1e-12, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn reports_failing_pivot() {
        let mut a = BandedSym::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        a.add(2, 2, 1.0);
        match a.factor() {
            Err(VsplineError::NotPositiveDefinite { row, pivot }) => {
                assert_eq!(row, 1);
                assert!(pivot < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
