//! Dense complex vectors and matrices.
//!
//! Only the handful of products the channel and PHY models need: conjugate
//! transpose, matrix-vector and row-vector-matrix products, diagonal phase
//! matrices and squared norms. Storage is row-major `Complex64`.

use std::f64::consts::TAU;
use std::ops::Index;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

fn all_finite(entries: &[C64]) -> bool {
    entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Non-empty vector of finite complex numbers.
///
/// Also used for row vectors such as `h^H` channels: a row `r` applied to a
/// column `x` is [`CVector::dot`], which does not conjugate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<C64>", into = "Vec<C64>")]
pub struct CVector(Vec<C64>);

impl CVector {
    pub fn new(entries: Vec<C64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty);
        }
        if !all_finite(&entries) {
            return Err(Error::NonFinite("complex vector"));
        }
        Ok(CVector(entries))
    }

    /// # Panics
    /// If `len == 0`.
    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "CVector must be non-empty");
        CVector(vec![C64::new(0.0, 0.0); len])
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    // Never true; present for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &C64> {
        self.0.iter()
    }

    /// Bilinear product `sum_m self[m] * other[m]` (row times column).
    pub fn dot(&self, other: &CVector) -> Result<C64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                context: "dot",
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    /// Hermitian inner product `sum_m conj(self[m]) * other[m]`.
    pub fn inner(&self, other: &CVector) -> Result<C64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                context: "inner",
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(self)
    }

    pub fn scale(&self, alpha: C64) -> CVector {
        CVector(self.0.iter().map(|z| z * alpha).collect())
    }

    pub fn scale_real(&self, alpha: f64) -> CVector {
        CVector(self.0.iter().map(|z| z * alpha).collect())
    }

    pub fn add(&self, other: &CVector) -> Result<CVector> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                context: "add",
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(CVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn conj(&self) -> CVector {
        CVector(self.0.iter().map(|z| z.conj()).collect())
    }

    /// View as an `n x 1` column matrix.
    pub fn to_column(&self) -> CMatrix {
        CMatrix {
            rows: self.len(),
            cols: 1,
            data: self.0.clone(),
        }
    }

    /// View as a `1 x n` row matrix.
    pub fn to_row(&self) -> CMatrix {
        CMatrix {
            rows: 1,
            cols: self.len(),
            data: self.0.clone(),
        }
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.0
    }
}

impl Index<usize> for CVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<C64>> for CVector {
    type Error = Error;
    fn try_from(v: Vec<C64>) -> Result<Self> {
        CVector::new(v)
    }
}

impl From<CVector> for Vec<C64> {
    fn from(v: CVector) -> Self {
        v.0
    }
}

/// Row-major dense complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch {
                context: "matrix storage",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if !all_finite(&data) {
            return Err(Error::NonFinite("complex matrix"));
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Outer product `a * b^H`.
    pub fn outer(a: &CVector, b: &CVector) -> Self {
        Self::from_fn(a.len(), b.len(), |r, c| a[r] * b[c].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Row `r` as a vector. Fails only when the matrix has zero columns.
    pub fn row_vector(&self, r: usize) -> Result<CVector> {
        CVector::new(self.row(r).to_vec())
    }

    pub fn scale_real(&self, alpha: f64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * alpha).collect(),
        }
    }

    pub fn add(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context: "matrix add",
                expected: self.rows * self.cols,
                actual: other.rows * other.cols,
            });
        }
        Ok(CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.data)
    }
}

/// Conjugate transpose.
pub fn hermitian(m: &CMatrix) -> CMatrix {
    CMatrix::from_fn(m.cols, m.rows, |r, c| m.get(c, r).conj())
}

pub fn matvec(m: &CMatrix, v: &CVector) -> Result<CVector> {
    if m.cols != v.len() {
        return Err(Error::DimensionMismatch {
            context: "matvec",
            expected: m.cols,
            actual: v.len(),
        });
    }
    let out = (0..m.rows)
        .map(|r| m.row(r).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
        .collect();
    CVector::new(out)
}

/// Row vector times matrix: `(1 x rows) * (rows x cols) -> (1 x cols)`.
pub fn vecmat(v: &CVector, m: &CMatrix) -> Result<CVector> {
    if m.rows != v.len() {
        return Err(Error::DimensionMismatch {
            context: "vecmat",
            expected: m.rows,
            actual: v.len(),
        });
    }
    let mut out = vec![C64::new(0.0, 0.0); m.cols];
    for (r, vr) in v.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(m.row(r)) {
            *o += vr * a;
        }
    }
    CVector::new(out)
}

pub fn matmul(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            context: "matmul",
            expected: a.cols,
            actual: b.rows,
        });
    }
    let mut out = CMatrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        for k in 0..a.cols {
            let ark = a.get(r, k);
            for c in 0..b.cols {
                out.data[r * b.cols + c] += ark * b.get(k, c);
            }
        }
    }
    Ok(out)
}

/// Diagonal phase-shift matrix `diag(exp(j*theta_n))` with unit amplitudes.
pub fn diag_from_phases(phases: &[f64]) -> Result<CMatrix> {
    for &p in phases {
        if !(0.0..=TAU).contains(&p) {
            return Err(Error::PhaseOutOfRange { value: p });
        }
    }
    let n = phases.len();
    let mut m = CMatrix::zeros(n, n);
    for (i, &p) in phases.iter().enumerate() {
        m.data[i * n + i] = C64::from_polar(1.0, p);
    }
    Ok(m)
}

pub fn norm_sq(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn hermitian_examples() {
        let m = CMatrix::new(1, 1, vec![c(1.0, 2.0)]).unwrap();
        assert_eq!(hermitian(&m).as_slice(), &[c(1.0, -2.0)]);

        let sym = CMatrix::new(2, 2, vec![c(1.0, 0.0), c(3.0, 0.0), c(3.0, 0.0), c(5.0, 0.0)])
            .unwrap();
        assert_eq!(hermitian(&sym), sym);

        let m = CMatrix::new(2, 2, vec![c(0.0, 0.0), c(0.0, 1.0), c(2.0, 0.0), c(0.0, 0.0)])
            .unwrap();
        let h = hermitian(&m);
        assert_eq!(h.as_slice(), &[c(0.0, 0.0), c(2.0, 0.0), c(0.0, -1.0), c(0.0, 0.0)]);
    }

    #[test]
    fn matvec_examples() {
        let v = CVector::new(vec![c(1.0, -1.0), c(2.0, 0.5)]).unwrap();
        assert_eq!(matvec(&CMatrix::identity(2), &v).unwrap(), v);
        let z = matvec(&CMatrix::zeros(2, 2), &v).unwrap();
        assert!(z.iter().all(|e| *e == c(0.0, 0.0)));

        let m = CMatrix::new(2, 2, vec![c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)])
            .unwrap();
        let v = CVector::from_real(&[1.0, 2.0]).unwrap();
        assert_eq!(matvec(&m, &v).unwrap().as_slice(), &[c(0.0, 1.0), c(0.0, 2.0)]);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let v = CVector::zeros(3);
        assert!(matches!(
            matvec(&CMatrix::identity(2), &v),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn diag_from_phases_examples() {
        let d = diag_from_phases(&[0.0]).unwrap();
        assert_eq!(d.as_slice(), &[c(1.0, 0.0)]);

        let d = diag_from_phases(&[PI]).unwrap();
        assert!((d.get(0, 0) - c(-1.0, 0.0)).norm() < 1e-15);

        let d = diag_from_phases(&[PI / 2.0, PI]).unwrap();
        assert!((d.get(0, 0) - c(0.0, 1.0)).norm() < 1e-15);
        assert!((d.get(1, 1) - c(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(d.get(0, 1), c(0.0, 0.0));
        assert_eq!(d.get(1, 0), c(0.0, 0.0));
    }

    #[test]
    fn diag_rejects_out_of_range() {
        assert!(matches!(
            diag_from_phases(&[-0.1]),
            Err(Error::PhaseOutOfRange { .. })
        ));
        assert!(diag_from_phases(&[TAU + 1e-9]).is_err());
        assert!(diag_from_phases(&[TAU]).is_ok());
    }

    #[test]
    fn norm_sq_examples() {
        assert_eq!(norm_sq(&CVector::zeros(4)), 0.0);
        assert_eq!(norm_sq(&CVector::new(vec![c(3.0, 4.0)]).unwrap()), 25.0);
        let v = CVector::new(vec![c(1.0, 0.0), c(0.0, 1.0), c(1.0, 1.0)]).unwrap();
        assert_eq!(norm_sq(&v), 4.0);
        let ip = v.inner(&v).unwrap();
        assert!((ip.re - 4.0).abs() < 1e-12 && ip.im.abs() < 1e-12);
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(matches!(CVector::new(vec![]), Err(Error::Empty)));
        assert!(CVector::new(vec![c(f64::NAN, 0.0)]).is_err());
        assert!(CMatrix::new(2, 2, vec![c(0.0, 0.0); 3]).is_err());
        assert!(CMatrix::new(1, 1, vec![c(0.0, f64::INFINITY)]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cvec(n: usize) -> impl Strategy<Value = CVector> {
            proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64), n)
                .prop_map(|v| CVector::new(v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap())
        }

        fn cmat(r: usize, k: usize) -> impl Strategy<Value = CMatrix> {
            proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64), r * k).prop_map(
                move |v| CMatrix::new(r, k, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap(),
            )
        }

        fn rel_close(a: C64, b: C64, scale: f64) -> bool {
            (a - b).norm() <= 1e-10 * scale.max(1.0)
        }

        proptest! {
            #[test]
            fn hermitian_is_involution(m in cmat(3, 4)) {
                prop_assert_eq!(hermitian(&hermitian(&m)), m);
            }

            #[test]
            fn norm_sq_is_homogeneous(v in cvec(5), ar in -3.0..3.0f64, ai in -3.0..3.0f64) {
                let alpha = c(ar, ai);
                let lhs = norm_sq(&v.scale(alpha));
                let rhs = alpha.norm_sqr() * norm_sq(&v);
                prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
            }

            #[test]
            fn matvec_distributes(m in cmat(4, 3), a in cvec(3), b in cvec(3)) {
                let lhs = matvec(&m, &a.add(&b).unwrap()).unwrap();
                let rhs = matvec(&m, &a).unwrap().add(&matvec(&m, &b).unwrap()).unwrap();
                let scale = lhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
                for (x, y) in lhs.iter().zip(rhs.iter()) {
                    prop_assert!(rel_close(*x, *y, scale));
                }
            }

            #[test]
            fn diag_entries_are_unit_modulus(p in proptest::collection::vec(0.0..TAU, 1..20)) {
                let d = diag_from_phases(&p).unwrap();
                for i in 0..p.len() {
                    prop_assert!((d.get(i, i).norm() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
