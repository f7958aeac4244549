//! Symmetric banded matrices and a shifted Cholesky solver for Newton steps.

/// Symmetric matrix with `bw` sub-diagonals, stored by rows of the lower band.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // row i, column j <= i
        i * (self.bw + 1) + (i - j)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` and, implicitly, to `(j, i)`.
    ///
    /// Panics if the entry lies outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside bandwidth {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Product with a vector.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Extracts the principal sub-matrix on rows `start..start+len`.
    pub fn principal(&self, start: usize, len: usize) -> SymBand {
        let mut out = SymBand::zeros(len, self.bw);
        for i in 0..len {
            for j in i.saturating_sub(self.bw)..=i {
                let k = out.idx(i, j);
                out.data[k] = self.get(start + i, start + j);
            }
        }
        out
    }

    fn max_abs_diag(&self) -> f64 {
        (0..self.n).map(|i| self.data[self.idx(i, i)].abs()).fold(0.0, f64::max)
    }

    /// Attempts an `L D L^T` factorisation of `self + shift I`; fails if a
    /// pivot is not safely positive.
    fn ldlt(&self, shift: f64, floor: f64) -> Option<SymBand> {
        let mut f = self.clone();
        for i in 0..self.n {
            let k = f.idx(i, i);
            f.data[k] += shift;
        }
        let bw = self.bw;
        for j in 0..self.n {
            let lo = j.saturating_sub(bw);
            let mut d = f.data[f.idx(j, j)];
            for k in lo..j {
                let l = f.data[f.idx(j, k)];
                d -= l * l * f.data[f.idx(k, k)];
            }
            if !(d > floor) {
                return None;
            }
            let dj = f.idx(j, j);
            f.data[dj] = d;
            for i in (j + 1)..(j + bw + 1).min(self.n) {
                let lo_i = i.saturating_sub(bw).max(lo);
                let mut s = f.data[f.idx(i, j)];
                for k in lo_i..j {
                    s -= f.data[f.idx(i, k)] * f.data[f.idx(j, k)] * f.data[f.idx(k, k)];
                }
                let ij = f.idx(i, j);
                f.data[ij] = s / d;
            }
        }
        Some(f)
    }

    fn ldlt_solve(f: &SymBand, b: &[f64]) -> Vec<f64> {
        let n = f.n;
        let bw = f.bw;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in i.saturating_sub(bw)..i {
                y[i] -= f.data[f.idx(i, k)] * y[k];
            }
        }
        for i in 0..n {
            y[i] /= f.data[f.idx(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..(i + bw + 1).min(n) {
                y[i] -= f.data[f.idx(k, i)] * y[k];
            }
        }
        y
    }

    /// Solves `(self + tau I) x = b` with the smallest `tau >= 0` from a
    /// doubling sequence that makes the matrix safely positive definite.
    /// Returns the solution and the shift used.
    pub fn solve_shifted(&self, b: &[f64]) -> Option<(Vec<f64>, f64)> {
        assert_eq!(b.len(), self.n);
        if self.n == 0 {
            return Some((Vec::new(), 0.0));
        }
        let scale = self.max_abs_diag().max(1e-300);
        let floor = 1e-13 * scale;
        let mut tau = 0.0;
        for _ in 0..80 {
            if let Some(f) = self.ldlt(tau, floor) {
                let x = Self::ldlt_solve(&f, b);
                if x.iter().all(|v| v.is_finite()) {
                    return Some((x, tau));
                }
            }
            tau = if tau == 0.0 { 1e-10 * scale } else { 4.0 * tau };
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_tridiagonal() {
        let n = 6;
        let mut a = SymBand::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let b = a.mul_vec(&x_true);
        let (x, tau) = a.solve_shifted(&b).unwrap();
        assert_eq!(tau, 0.0);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn pentadiagonal_solution() {
        let n = 9;
        let mut a = SymBand::zeros(n, 2);
        for i in 0..n {
            a.add(i, i, 6.0);
            if i >= 1 {
                a.add(i, i - 1, -4.0 + 0.1 * i as f64);
            }
            if i >= 2 {
                a.add(i, i - 2, 1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let b = a.mul_vec(&x_true);
        let (x, _) = a.solve_shifted(&b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_matrix_gets_shifted() {
        let mut a = SymBand::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, -1.0);
        let (x, tau) = a.solve_shifted(&[1.0, 1.0]).unwrap();
        assert!(tau > 1.0);
        assert!(x[0] > 0.0 && x[1] > 0.0);
    }

    #[test]
    fn principal_block() {
        let mut a = SymBand::zeros(4, 1);
        for i in 0..4 {
            a.add(i, i, i as f64);
        }
        a.add(2, 1, 7.0);
        let p = a.principal(1, 2);
        assert_eq!(p.get(0, 0), 1.0);
        assert_eq!(p.get(1, 0), 7.0);
        assert_eq!(p.get(0, 1), 7.0);
    }
}
