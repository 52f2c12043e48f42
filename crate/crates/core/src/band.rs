//! Symmetric banded storage and a banded Cholesky factorization.
//!
//! The beam operators couple neighbouring nodes only, so every matrix the
//! integrator touches has half-bandwidth 3 in the interleaved `(φ, ψ)`
//! ordering.

use nalgebra::DMatrix;

/// Lower band of a symmetric matrix, column-major: entry `(i, j)` with
/// `j ≤ i ≤ j + kd` lives at `data[j * (kd + 1) + (i - j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, kd: usize) -> Self {
        SymBand {
            n,
            kd,
            data: vec![0.0; n * (kd + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.kd
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        (i - j <= self.kd && i < self.n).then(|| j * (self.kd + 1) + (i - j))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds to the symmetric pair `(i, j)`/`(j, i)`.
    ///
    /// Panics when the entry falls outside the band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band {}", self.kd));
        self.data[s] += value;
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.data[i * (self.kd + 1)]
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let col = &self.data[j * (self.kd + 1)..(j + 1) * (self.kd + 1)];
            y[j] += col[0] * x[j];
            for (off, &a) in col.iter().enumerate().skip(1) {
                let i = j + off;
                if i >= self.n {
                    break;
                }
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quad(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.apply(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// `self + s · other` with the wider of the two bandwidths.
    pub fn combined(&self, s: f64, other: &SymBand) -> SymBand {
        assert_eq!(self.n, other.n);
        let kd = self.kd.max(other.kd);
        let mut out = SymBand::zeros(self.n, kd);
        for src in [(1.0, self), (s, other)] {
            let (scale, m) = src;
            for j in 0..m.n {
                for off in 0..=m.kd {
                    let i = j + off;
                    if i < m.n {
                        out.data[j * (kd + 1) + off] += scale * m.data[j * (m.kd + 1) + off];
                    }
                }
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn cholesky(&self) -> Option<BandCholesky> {
        let (n, kd) = (self.n, self.kd);
        let w = kd + 1;
        let mut l = self.data.clone();
        for j in 0..n {
            let k0 = j.saturating_sub(kd);
            let mut d = l[j * w];
            for k in k0..j {
                let ljk = l[k * w + (j - k)];
                d -= ljk * ljk;
            }
            if !(d > 0.0) {
                return None;
            }
            let d = d.sqrt();
            l[j * w] = d;
            for i in (j + 1)..n.min(j + w) {
                let mut s = l[j * w + (i - j)];
                for k in i.saturating_sub(kd)..j {
                    s -= l[k * w + (i - k)] * l[k * w + (j - k)];
                }
                l[j * w + (i - j)] = s / d;
            }
        }
        Some(BandCholesky { n, kd, l })
    }
}

/// `A = L Lᵀ` with `L` stored in the same band layout.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    kd: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let w = self.kd + 1;
        assert_eq!(b.len(), self.n);
        for j in 0..self.n {
            b[j] /= self.l[j * w];
            let bj = b[j];
            for i in (j + 1)..self.n.min(j + w) {
                b[i] -= self.l[j * w + (i - j)] * bj;
            }
        }
        for j in (0..self.n).rev() {
            let mut s = b[j];
            for i in (j + 1)..self.n.min(j + w) {
                s -= self.l[j * w + (i - j)] * b[i];
            }
            b[j] = s / self.l[j * w];
        }
    }
}
