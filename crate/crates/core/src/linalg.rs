//! Exact linear algebra over the Gaussian rationals ℚ(i): row reduction,
//! kernel bases, and stationary vectors of rational matrices.

use num::{One, Zero};

use crate::error::{EndoError, Result};
use crate::exact::Rat;

/// Gaussian rational a + bi.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GaussRat {
    pub re: Rat,
    pub im: Rat,
}

impl GaussRat {
    pub fn zero() -> Self {
        GaussRat { re: Rat::zero(), im: Rat::zero() }
    }

    pub fn one() -> Self {
        GaussRat { re: Rat::one(), im: Rat::zero() }
    }

    pub fn real(r: Rat) -> Self {
        GaussRat { re: r, im: Rat::zero() }
    }

    pub fn new(re: Rat, im: Rat) -> Self {
        GaussRat { re, im }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn add(&self, o: &Self) -> Self {
        GaussRat { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    pub fn sub(&self, o: &Self) -> Self {
        GaussRat { re: &self.re - &o.re, im: &self.im - &o.im }
    }

    pub fn mul(&self, o: &Self) -> Self {
        GaussRat {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }

    pub fn conj(&self) -> Self {
        GaussRat { re: self.re.clone(), im: -self.im.clone() }
    }

    pub fn recip(&self) -> Option<Self> {
        let n = &self.re * &self.re + &self.im * &self.im;
        if n.is_zero() {
            return None;
        }
        Some(GaussRat { re: &self.re / &n, im: -&self.im / &n })
    }

    pub fn div(&self, o: &Self) -> Option<Self> {
        o.recip().map(|r| self.mul(&r))
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (crate::exact::rat_to_f64(&self.re), crate::exact::rat_to_f64(&self.im))
    }
}

/// Reduced row echelon form in place; returns pivot column indices.
fn rref(m: &mut [Vec<GaussRat>]) -> Vec<usize> {
    let rows = m.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = m[0].len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].recip().unwrap();
        for j in c..cols {
            m[r][j] = m[r][j].mul(&inv);
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..cols {
                    let s = m[r][j].mul(&f);
                    m[i][j] = m[i][j].sub(&s);
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    pivots
}

/// Basis of the null space of an m×n matrix.
pub fn kernel_basis(matrix: &[Vec<GaussRat>]) -> Vec<Vec<GaussRat>> {
    if matrix.is_empty() {
        return Vec::new();
    }
    let cols = matrix[0].len();
    let mut m = matrix.to_vec();
    let pivots = rref(&mut m);
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&fc| {
            let mut v = vec![GaussRat::zero(); cols];
            v[fc] = GaussRat::one();
            for (ri, &pc) in pivots.iter().enumerate() {
                v[pc] = GaussRat::zero().sub(&m[ri][fc]);
            }
            v
        })
        .collect()
}

/// Solve M v = v with the normalization Σ v_i = 1, requiring the fixed
/// space to be one-dimensional.
pub fn stationary_vector(matrix: &[Vec<Rat>]) -> Result<Vec<Rat>> {
    let n = matrix.len();
    let m: Vec<Vec<GaussRat>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut e = GaussRat::real(matrix[i][j].clone());
                    if i == j {
                        e = e.sub(&GaussRat::one());
                    }
                    e
                })
                .collect()
        })
        .collect();
    let kernel = kernel_basis(&m);
    if kernel.len() != 1 {
        return Err(EndoError::Numerical(format!(
            "fixed space has dimension {}, expected 1",
            kernel.len()
        )));
    }
    let v = &kernel[0];
    if v.iter().any(|e| !e.im.is_zero()) {
        return Err(EndoError::Numerical("stationary vector is not real".into()));
    }
    let total: Rat = v.iter().map(|e| e.re.clone()).sum();
    if total.is_zero() {
        return Err(EndoError::Numerical("stationary vector sums to zero".into()));
    }
    Ok(v.iter().map(|e| &e.re / &total).collect())
}

/// Solve the affine system A x = b exactly; errors when inconsistent or
/// underdetermined.
pub fn solve_unique(matrix: &[Vec<GaussRat>], rhs: &[GaussRat]) -> Result<Vec<GaussRat>> {
    let rows = matrix.len();
    assert_eq!(rows, rhs.len());
    let cols = if rows == 0 { 0 } else { matrix[0].len() };
    let mut aug: Vec<Vec<GaussRat>> = matrix
        .iter()
        .zip(rhs)
        .map(|(row, b)| {
            let mut r = row.clone();
            r.push(b.clone());
            r
        })
        .collect();
    let pivots = rref(&mut aug);
    if pivots.contains(&cols) {
        return Err(EndoError::Numerical("linear system is inconsistent".into()));
    }
    if pivots.len() < cols {
        return Err(EndoError::Numerical("linear system is underdetermined".into()));
    }
    let mut x = vec![GaussRat::zero(); cols];
    for (ri, &pc) in pivots.iter().enumerate() {
        x[pc] = aug[ri][cols].clone();
    }
    Ok(x)
}
