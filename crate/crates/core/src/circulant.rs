//! Circulant matrices on `Z_N`, stored by their first row and diagonalized by the DFT.
//!
//! Convention: `C_xy = row[(y - x) mod N]` and the symbol is
//! `c(p_j) = sum_d row[d] exp(i p_j d)` with `p_j = 2 pi j / N`.

use num_complex::Complex64;
use rustfft::FftPlanner;

#[derive(Debug, Clone, PartialEq)]
pub struct Circulant {
    pub row: Vec<Complex64>,
}

fn forward(data: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(data.len()).process(data);
}

fn inverse(data: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(data.len()).process(data);
}

/// `sum_d row[d] exp(+2 pi i j d / N)` for every `j`.
pub fn symbol_of(row: &[Complex64]) -> Vec<Complex64> {
    let mut v = row.to_vec();
    inverse(&mut v);
    v
}

/// Inverse of [`symbol_of`].
pub fn row_of(symbol: &[Complex64]) -> Vec<Complex64> {
    let n = symbol.len() as f64;
    let mut v = symbol.to_vec();
    forward(&mut v);
    for c in &mut v {
        *c /= n;
    }
    v
}

impl Circulant {
    pub fn from_row(row: Vec<Complex64>) -> Self {
        Self { row }
    }

    pub fn from_real_row(row: &[f64]) -> Self {
        Self { row: row.iter().map(|&r| Complex64::new(r, 0.0)).collect() }
    }

    pub fn from_symbol(symbol: &[Complex64]) -> Self {
        Self { row: row_of(symbol) }
    }

    pub fn identity(n: usize) -> Self {
        let mut row = vec![Complex64::new(0.0, 0.0); n];
        row[0] = Complex64::new(1.0, 0.0);
        Self { row }
    }

    pub fn size(&self) -> usize {
        self.row.len()
    }

    pub fn symbol(&self) -> Vec<Complex64> {
        symbol_of(&self.row)
    }

    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> Complex64 {
        let n = self.row.len();
        self.row[(y + n - x % n) % n]
    }

    /// Row sum, i.e. the symbol at `p = 0`.
    pub fn row_sum(&self) -> Complex64 {
        self.row.iter().sum()
    }

    pub fn mul(&self, other: &Circulant) -> Circulant {
        let a = self.symbol();
        let b = other.symbol();
        let prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Circulant::from_symbol(&prod)
    }

    pub fn to_dense(&self) -> faer::Mat<Complex64> {
        let n = self.size();
        faer::Mat::from_fn(n, n, |x, y| self.entry(x, y))
    }
}
