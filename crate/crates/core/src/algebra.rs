//! Elements of B = M_d(C) and of the amplifications M_n(B) = M_{nd}(C).

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C = Complex64;
pub type Mat = DMatrix<C>;
/// An element of the base algebra, stored as a d×d matrix.
pub type BElement = Mat;

pub const I: C = C::new(0.0, 1.0);
pub const ONE: C = C::new(1.0, 0.0);
pub const ZERO: C = C::new(0.0, 0.0);

/// Default tolerance for positivity decisions.
pub const PSD_TOL: f64 = 1e-10;

/// Block matrix in M_n(B), stored as its nd×nd complex matrix.
/// Block (i, j) occupies rows i·d..(i+1)·d and columns j·d..(j+1)·d.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMatrix {
    pub d: usize,
    pub mat: Mat,
}

impl LevelMatrix {
    pub fn new(d: usize, mat: Mat) -> Self {
        assert!(d >= 1 && mat.nrows() == mat.ncols() && mat.nrows() % d == 0);
        Self { d, mat }
    }

    pub fn zeros(d: usize, n: usize) -> Self {
        Self::new(d, Mat::zeros(n * d, n * d))
    }

    pub fn identity(d: usize, n: usize) -> Self {
        Self::new(d, Mat::identity(n * d, n * d))
    }

    /// Level n.
    pub fn n(&self) -> usize {
        self.mat.nrows() / self.d
    }

    pub fn block(&self, i: usize, j: usize) -> BElement {
        let d = self.d;
        self.mat.view((i * d, j * d), (d, d)).into_owned()
    }

    pub fn set_block(&mut self, i: usize, j: usize, b: &BElement) {
        let d = self.d;
        self.mat.view_mut((i * d, j * d), (d, d)).copy_from(b);
    }

    pub fn from_blocks(d: usize, n: usize, f: impl Fn(usize, usize) -> BElement) -> Self {
        let mut out = Self::zeros(d, n);
        for i in 0..n {
            for j in 0..n {
                out.set_block(i, j, &f(i, j));
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.d, self.mat.adjoint())
    }

    pub fn inverse(&self) -> Option<Self> {
        invert(&self.mat).map(|m| Self::new(self.d, m))
    }

    pub fn scale(&self, z: C) -> Self {
        Self::new(self.d, self.mat.map(|x| x * z))
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.d, &self.mat + &o.mat)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.d, &self.mat - &o.mat)
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self::new(self.d, &self.mat * &o.mat)
    }

    pub fn norm(&self) -> f64 {
        op_norm(&self.mat)
    }

    pub fn is_finite(&self) -> bool {
        self.mat.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Returns (b − b*)/2i.
pub fn imag_part(b: &LevelMatrix) -> LevelMatrix {
    let diff = &b.mat - b.mat.adjoint();
    LevelMatrix::new(b.d, diff.map(|z| z / (2.0 * I)))
}

/// Smallest eigenvalue of Im(b); b lies in M_n^{+,ε}(B) iff this exceeds ε.
pub fn half_plane_margin(b: &LevelMatrix) -> f64 {
    min_eig_hermitian(&imag_part(b).mat)
}

/// min |λ| over the spectrum of b.
pub fn spectrum_floor(b: &LevelMatrix) -> f64 {
    eigenvalues(&b.mat)
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min)
}

/// b0 ⊗ 1_n: b0 repeated along the diagonal blocks.
pub fn amplify(b0: &BElement, n: usize) -> LevelMatrix {
    let d = b0.nrows();
    LevelMatrix::new(d, Mat::identity(n, n).kronecker(b0))
}

/// Block-diagonal b ⊕ c.
pub fn direct_sum(b: &LevelMatrix, c: &LevelMatrix) -> LevelMatrix {
    let (p, q) = (b.mat.nrows(), c.mat.nrows());
    let mut m = Mat::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).copy_from(&b.mat);
    m.view_mut((p, p), (q, q)).copy_from(&c.mat);
    LevelMatrix::new(b.d, m)
}

/// All eigenvalues of a general square complex matrix.
pub fn eigenvalues(m: &Mat) -> Vec<C> {
    if m.nrows() == 0 {
        return vec![];
    }
    let (_, t) = m.clone().schur().unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Eigenvalues of the Hermitian part of `h`, ascending.
/// Eigenvalues of the Hermitian part, ascending. Zero rows are deflated
/// first (each carries the eigenvalue 0): the solver in nalgebra can return
/// NaN on matrices that are mostly zero.
pub fn eig_hermitian(h: &Mat) -> Vec<f64> {
    let sym = (h + h.adjoint()).map(|z| z * 0.5);
    let live: Vec<usize> = (0..sym.nrows()).filter(|&r| sym.row(r).iter().any(|z| *z != ZERO)).collect();
    let sub = Mat::from_fn(live.len(), live.len(), |r, c| sym[(live[r], live[c])]);
    let mut ev: Vec<f64> = if live.is_empty() {
        Vec::new()
    } else {
        SymmetricEigen::new(sub).eigenvalues.iter().copied().collect()
    };
    ev.resize(sym.nrows(), 0.0);
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eig_hermitian(h: &Mat) -> f64 {
    if h.nrows() == 0 {
        return 0.0;
    }
    eig_hermitian(h)[0]
}

pub fn max_eig_hermitian(h: &Mat) -> f64 {
    eig_hermitian(h).last().copied().unwrap_or(0.0)
}

pub fn is_psd(h: &Mat, tol: f64) -> bool {
    min_eig_hermitian(h) >= -tol
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |a, &s| a.max(s))
}

/// Inverse via LU, rejecting numerically singular input.
pub fn invert(m: &Mat) -> Option<Mat> {
    let inv = m.clone().try_inverse()?;
    if inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Some(inv)
    } else {
        None
    }
}

/// Matrix unit e_{ij} of size d.
pub fn matrix_unit(d: usize, i: usize, j: usize) -> BElement {
    let mut e = Mat::zeros(d, d);
    e[(i, j)] = ONE;
    e
}

/// Matrix unit with row-major index α = i·d + j.
pub fn unit(d: usize, alpha: usize) -> BElement {
    matrix_unit(d, alpha / d, alpha % d)
}

/// Row-major vectorization.
pub fn vec_of(b: &BElement) -> Vec<C> {
    let d = b.nrows();
    (0..d * d).map(|k| b[(k / d, k % d)]).collect()
}

pub fn unvec(d: usize, v: &[C]) -> BElement {
    Mat::from_fn(d, d, |r, c| v[r * d + c])
}

pub fn scalar(d: usize, z: C) -> BElement {
    Mat::identity(d, d).map(|x| x * z)
}

/// JSON form {"d", "n", "re", "im"} with nd×nd nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelMatrixJson {
    pub d: usize,
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

pub const MAX_D: usize = 16;
pub const MAX_LEVEL: usize = 64;

pub(crate) fn to_nested(m: &Mat) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let re = (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)].re).collect()).collect();
    let im = (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)].im).collect()).collect();
    (re, im)
}

pub(crate) fn from_nested(re: &[Vec<f64>], im: &[Vec<f64>], rows: usize, cols: usize) -> Result<Mat> {
    let shape_ok = |a: &[Vec<f64>]| a.len() == rows && a.iter().all(|r| r.len() == cols);
    if !shape_ok(re) || !shape_ok(im) {
        return Err(Error::Parse(format!("expected {rows}×{cols} arrays")));
    }
    let m = Mat::from_fn(rows, cols, |r, c| C::new(re[r][c], im[r][c]));
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Parse("non-finite entry".into()));
    }
    Ok(m)
}

impl LevelMatrix {
    pub fn to_json(&self) -> LevelMatrixJson {
        let (re, im) = to_nested(&self.mat);
        LevelMatrixJson { d: self.d, n: self.n(), re, im }
    }

    pub fn from_json(j: &LevelMatrixJson) -> Result<Self> {
        if j.d == 0 || j.d > MAX_D || j.n == 0 || j.n > MAX_LEVEL {
            return Err(Error::Parse(format!("unsupported d = {}, n = {}", j.d, j.n)));
        }
        let size = j.d * j.n;
        Ok(Self::new(j.d, from_nested(&j.re, &j.im, size, size)?))
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let j: LevelMatrixJson =
            serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json(&j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
        (a - b).iter().all(|z| z.norm() < tol)
    }

    #[test]
    fn eigenvalues_of_mostly_zero_hermitian() {
        // [[1, i], [−i, 1]] spread over a 40×40 zero matrix: spectrum {0, 2, 0^38}
        let mut h = Mat::zeros(40, 40);
        h[(3, 3)] = c(1., 0.);
        h[(3, 31)] = c(0., 1.);
        h[(31, 3)] = c(0., -1.);
        h[(31, 31)] = c(1., 0.);
        let ev = eig_hermitian(&h);
        assert_eq!(ev.len(), 40);
        assert!(ev.iter().all(|x| x.is_finite()));
        assert!(ev[0].abs() < 1e-15 && (ev[39] - 2.0).abs() < 1e-14);
        assert!(ev[38].abs() < 1e-15);
    }

    #[test]
    fn imag_part_examples() {
        let b = LevelMatrix::new(2, Mat::identity(2, 2).map(|z| z * I));
        assert!(close(&imag_part(&b).mat, &Mat::identity(2, 2), 1e-15));

        let b = LevelMatrix::new(2, Mat::from_row_slice(2, 2, &[c(0., 2.), ONE, ZERO, ZERO]));
        let expect = Mat::from_row_slice(2, 2, &[c(2., 0.), c(0., -0.5), c(0., 0.5), ZERO]);
        assert!(close(&imag_part(&b).mat, &expect, 1e-15));

        let h = Mat::from_row_slice(2, 2, &[c(1., 0.), c(2., 1.), c(2., -1.), c(-3., 0.)]);
        assert!(close(&imag_part(&LevelMatrix::new(1, h)).mat, &Mat::zeros(2, 2), 1e-15));
    }

    #[test]
    fn margin_examples() {
        let b = LevelMatrix::new(2, Mat::identity(6, 6).map(|z| z * c(0., 3.)));
        assert!((half_plane_margin(&b) - 3.0).abs() < 1e-12);
        let b = LevelMatrix::new(1, Mat::from_element(1, 1, c(1., 2.)));
        assert!((half_plane_margin(&b) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_floor_examples() {
        let b = LevelMatrix::new(2, Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0., 2.), c(-3., 0.)])));
        assert!((spectrum_floor(&b) - 2.0).abs() < 1e-12);
        let five = LevelMatrix::new(2, Mat::identity(4, 4).map(|z| z * 5.0));
        assert!((spectrum_floor(&five) - 5.0).abs() < 1e-12);
        let sing = LevelMatrix::new(1, Mat::from_row_slice(2, 2, &[ONE, ONE, ONE, ONE]));
        assert!(spectrum_floor(&sing) < 1e-12);
        // non-normal: eigenvalues 1 and 2 regardless of the large off-diagonal entry
        let nn = LevelMatrix::new(1, Mat::from_row_slice(2, 2, &[ONE, c(100., 0.), ZERO, c(2., 0.)]));
        assert!((spectrum_floor(&nn) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn amplify_examples() {
        let b0 = Mat::from_element(1, 1, c(2., 1.));
        let a = amplify(&b0, 2);
        assert_eq!(a.mat, Mat::from_row_slice(2, 2, &[c(2., 1.), ZERO, ZERO, c(2., 1.)]));
        assert_eq!(amplify(&Mat::identity(2, 2), 3).mat, Mat::identity(6, 6));
        assert_eq!(amplify(&Mat::zeros(2, 2), 3).mat, Mat::zeros(6, 6));
    }

    #[test]
    fn json_round_trip_and_rejects() {
        let b = LevelMatrix::new(2, Mat::from_fn(4, 4, |r, k| c(r as f64, k as f64 - 1.0)));
        let s = serde_json::to_vec(&b.to_json()).unwrap();
        assert_eq!(LevelMatrix::parse(&s).unwrap(), b);
        assert!(LevelMatrix::parse(br#"{"d":2,"n":1,"re":[[1]],"im":[[0]]}"#).is_err());
        assert!(LevelMatrix::parse(br#"{"d":0,"n":1,"re":[],"im":[]}"#).is_err());
        assert!(LevelMatrix::parse(b"nope").is_err());
    }
}
