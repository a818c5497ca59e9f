//! Truncated non-commutative power series over B with multilinear coefficients.
//!
//! An ℓ-linear map B^ℓ → B is stored as a d² × d^{2ℓ} matrix acting on the
//! row-major vectorization of x₁ ⊗ … ⊗ x_ℓ (slot 0 most significant).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    from_nested, invert, op_norm, to_nested, unit, unvec, vec_of, BElement, LevelMatrix, Mat, C,
    I, MAX_D, ONE, ZERO,
};
use crate::error::{Error, Result};

pub const MAX_ARITY: usize = 12;
/// Largest coefficient operator (columns) accepted from external input.
pub const MAX_COLUMNS: usize = 1 << 20;

pub type SparseVec = Vec<(usize, C)>;

fn sparse_of(b: &BElement) -> SparseVec {
    vec_of(b)
        .into_iter()
        .enumerate()
        .filter(|(_, z)| *z != ZERO)
        .collect()
}

fn kron_sparse(a: &SparseVec, b: &SparseVec, bdim: usize) -> SparseVec {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &(i, x) in a {
        for &(j, y) in b {
            out.push((i * bdim + j, x * y));
        }
    }
    out
}

fn merge_sparse(mut v: SparseVec) -> SparseVec {
    v.sort_unstable_by_key(|e| e.0);
    let mut out: SparseVec = Vec::with_capacity(v.len());
    for (i, z) in v {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += z,
            _ => out.push((i, z)),
        }
    }
    out
}

/// An ℓ-linear map B^ℓ → B.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilinearMap {
    pub d: usize,
    pub ell: usize,
    pub op: Mat,
}

impl MultilinearMap {
    pub fn new(d: usize, ell: usize, op: Mat) -> Self {
        assert_eq!(op.nrows(), d * d);
        assert_eq!(op.ncols(), (d * d).pow(ell as u32));
        Self { d, ell, op }
    }

    pub fn zero(d: usize, ell: usize) -> Self {
        Self::new(d, ell, Mat::zeros(d * d, (d * d).pow(ell as u32)))
    }

    pub fn constant(b: &BElement) -> Self {
        let d = b.nrows();
        Self::new(d, 0, Mat::from_column_slice(d * d, 1, &vec_of(b)))
    }

    pub fn identity(d: usize) -> Self {
        Self::new(d, 1, Mat::identity(d * d, d * d))
    }

    /// Builds the map from its values on tuples of matrix units; `f` receives
    /// the row-major unit indices α₁,…,α_ℓ.
    pub fn from_units(d: usize, ell: usize, f: impl Fn(&[usize]) -> BElement + Sync) -> Self {
        let dd = d * d;
        let cols = dd.pow(ell as u32);
        let columns: Vec<Vec<C>> = (0..cols)
            .into_par_iter()
            .map(|col| vec_of(&f(&digits(col, dd, ell))))
            .collect();
        let mut op = Mat::zeros(dd, cols);
        for (col, v) in columns.iter().enumerate() {
            for (r, z) in v.iter().enumerate() {
                op[(r, col)] = *z;
            }
        }
        Self::new(d, ell, op)
    }

    pub fn dd(&self) -> usize {
        self.d * self.d
    }

    /// Value on an arbitrary tuple of arguments.
    pub fn apply(&self, args: &[BElement]) -> BElement {
        assert_eq!(args.len(), self.ell);
        let mut v: SparseVec = vec![(0, ONE)];
        for a in args {
            v = kron_sparse(&v, &sparse_of(a), self.dd());
            if v.is_empty() {
                break;
            }
        }
        self.apply_sparse(&v)
    }

    pub fn apply_sparse(&self, v: &SparseVec) -> BElement {
        let mut out = vec![ZERO; self.dd()];
        for &(col, z) in v {
            let column = self.op.column(col);
            for (o, t) in out.iter_mut().zip(column.iter()) {
                *o += t * z;
            }
        }
        unvec(self.d, &out)
    }

    /// Value on the unit tuple with the given column index.
    pub fn column_value(&self, col: usize) -> BElement {
        unvec(self.d, self.op.column(col).as_slice())
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!((self.d, self.ell), (o.d, o.ell));
        Self::new(self.d, self.ell, &self.op + &o.op)
    }

    pub fn sub(&self, o: &Self) -> Self {
        assert_eq!((self.d, self.ell), (o.d, o.ell));
        Self::new(self.d, self.ell, &self.op - &o.op)
    }

    pub fn scale(&self, z: C) -> Self {
        Self::new(self.d, self.ell, self.op.map(|x| x * z))
    }

    /// Postcomposition with a linear map B → B given as a d²×d² matrix.
    pub fn post(&self, rho: &Mat) -> Self {
        Self::new(self.d, self.ell, rho * &self.op)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.op.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    pub fn is_zero(&self) -> bool {
        self.op.iter().all(|z| *z == ZERO)
    }

    pub fn is_identity(&self) -> bool {
        self.ell == 1 && self.op == Mat::identity(self.dd(), self.dd())
    }

    /// Σ over unit tuples of ‖T(e_α)‖: an upper bound for the completely
    /// bounded norm of T on norm-one arguments.
    pub fn unit_sum_bound(&self) -> f64 {
        (0..self.op.ncols()).map(|c| op_norm(&self.column_value(c))).sum()
    }

    /// Concatenation product (x, y) ↦ self(x)·other(y).
    pub fn product(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d);
        let d = self.d;
        let dd = self.dd();
        let (ca, cb) = (self.op.ncols(), other.op.ncols());
        let mut op = Mat::zeros(dd, ca * cb);
        for a in 0..ca {
            let sa = self.column_value(a);
            if sa.iter().all(|z| *z == ZERO) {
                continue;
            }
            for b in 0..cb {
                let ub = other.op.column(b);
                let col = a * cb + b;
                for r in 0..d {
                    for c in 0..d {
                        let mut acc = ZERO;
                        for m in 0..d {
                            acc += sa[(r, m)] * ub[m * d + c];
                        }
                        op[(r * d + c, col)] = acc;
                    }
                }
            }
        }
        Self::new(d, self.ell + other.ell, op)
    }

    /// Substitutes `inner` into slot `slot`, producing arity ℓ − 1 + k.
    pub fn compose_slot(&self, slot: usize, inner: &Self) -> Self {
        assert!(slot < self.ell && self.d == inner.d);
        if inner.is_identity() {
            return self.clone();
        }
        let dd = self.dd();
        let k = inner.ell;
        let pre_n = dd.pow(slot as u32);
        let suf_n = dd.pow((self.ell - slot - 1) as u32);
        let u_n = dd.pow(k as u32);
        let new_ell = self.ell - 1 + k;
        let mut op = Mat::zeros(dd, dd.pow(new_ell as u32));
        for pre in 0..pre_n {
            for suf in 0..suf_n {
                for a in 0..dd {
                    let src = (pre * dd + a) * suf_n + suf;
                    let tcol = self.op.column(src);
                    if tcol.iter().all(|z| *z == ZERO) {
                        continue;
                    }
                    for u in 0..u_n {
                        let w = inner.op[(a, u)];
                        if w == ZERO {
                            continue;
                        }
                        let dst = (pre * u_n + u) * suf_n + suf;
                        for r in 0..dd {
                            op[(r, dst)] += tcol[r] * w;
                        }
                    }
                }
            }
        }
        Self::new(self.d, new_ell, op)
    }

    /// Fixes slot `slot` to the element `b`.
    pub fn fix_slot(&self, slot: usize, b: &BElement) -> Self {
        self.compose_slot(slot, &Self::constant(b))
    }

    /// Value on (x, …, x).
    pub fn diag_apply(&self, x: &BElement) -> BElement {
        self.apply(&vec![x.clone(); self.ell])
    }
}

/// Base-`base` digits of `n`, most significant first, padded to `len`.
pub fn digits(mut n: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for k in (0..len).rev() {
        out[k] = n % base;
        n /= base;
    }
    out
}

/// Truncated series Σ_{ℓ ≤ L} T_ℓ(b, …, b).
#[derive(Debug, Clone, PartialEq)]
pub struct NCSeries {
    pub d: usize,
    pub coeffs: Vec<MultilinearMap>,
    /// Geometric growth constant M with ‖T_ℓ‖ ≲ M^ℓ, when known.
    pub tail_bound: Option<f64>,
}

/// Result of [`NCSeries::mult_inverse`].
#[derive(Debug, Clone, PartialEq)]
pub enum SeriesInverse {
    /// Ordinary power-series inverse (invertible constant term).
    Series(NCSeries),
    /// For s(w) = w + w·v(w)·w: the inverse is w ↦ w⁻¹ − Φ(w) with Φ the
    /// contained series.
    AtInfinity(NCSeries),
}

impl NCSeries {
    pub fn new(d: usize, coeffs: Vec<MultilinearMap>) -> Self {
        for (l, c) in coeffs.iter().enumerate() {
            assert_eq!((c.d, c.ell), (d, l), "coefficient {l} has wrong shape");
        }
        Self { d, coeffs, tail_bound: None }
    }

    pub fn zero(d: usize, order: usize) -> Self {
        Self::new(d, (0..=order).map(|l| MultilinearMap::zero(d, l)).collect())
    }

    /// The series w ↦ w.
    pub fn identity(d: usize, order: usize) -> Self {
        let mut s = Self::zero(d, order.max(1));
        s.coeffs[1] = MultilinearMap::identity(d);
        s
    }

    pub fn constant(b: &BElement, order: usize) -> Self {
        let d = b.nrows();
        let mut s = Self::zero(d, order);
        s.coeffs[0] = MultilinearMap::constant(b);
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn truncate(&self, order: usize) -> Self {
        let mut s = self.clone();
        s.coeffs.truncate(order + 1);
        s
    }

    /// Level-n evaluation: block (i,j) of T_ℓ at b is the sum over index
    /// paths i → k₁ → … → j of T_ℓ(b_{i k₁} ⊗ … ⊗ b_{k_{ℓ−1} j}).
    pub fn eval(&self, b: &LevelMatrix) -> LevelMatrix {
        assert_eq!(b.d, self.d);
        let d = self.d;
        let dd = d * d;
        let n = b.n();
        let mut out = LevelMatrix::zeros(d, n);
        let t0 = self.coeffs[0].column_value(0);
        for i in 0..n {
            out.set_block(i, i, &t0);
        }
        let bs: Vec<Vec<SparseVec>> =
            (0..n).map(|i| (0..n).map(|j| sparse_of(&b.block(i, j))).collect()).collect();
        let top = self.coeffs.iter().rposition(|c| !c.is_zero()).unwrap_or(0);
        let mut w = bs.clone();
        for l in 1..=top {
            if l > 1 {
                let mut next = vec![vec![Vec::new(); n]; n];
                for (i, row) in next.iter_mut().enumerate() {
                    for (j, cell) in row.iter_mut().enumerate() {
                        let mut acc = Vec::new();
                        for k in 0..n {
                            if !w[i][k].is_empty() && !bs[k][j].is_empty() {
                                acc.extend(kron_sparse(&w[i][k], &bs[k][j], dd));
                            }
                        }
                        *cell = merge_sparse(acc);
                    }
                }
                w = next;
            }
            if w.iter().all(|r| r.iter().all(|v| v.is_empty())) {
                break;
            }
            let t = &self.coeffs[l];
            if t.is_zero() {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    if w[i][j].is_empty() {
                        continue;
                    }
                    let v = t.apply_sparse(&w[i][j]);
                    let cur = out.block(i, j);
                    out.set_block(i, j, &(cur + v));
                }
            }
        }
        out
    }

    /// Evaluation at a single element of B.
    pub fn eval_b(&self, b: &BElement) -> BElement {
        self.eval(&LevelMatrix::new(self.d, b.clone())).mat
    }

    pub fn add(&self, o: &Self) -> Self {
        let l = self.order().min(o.order());
        Self::new(self.d, (0..=l).map(|k| self.coeffs[k].add(&o.coeffs[k])).collect())
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-ONE))
    }

    pub fn scale(&self, z: C) -> Self {
        Self::new(self.d, self.coeffs.iter().map(|c| c.scale(z)).collect())
    }

    /// Cauchy product: arity-ℓ coefficient Σ_{j+k=ℓ} T_j(x)·U_k(y).
    pub fn multiply(&self, o: &Self) -> Self {
        let order = self.order().min(o.order());
        let coeffs = (0..=order)
            .into_par_iter()
            .map(|n| {
                let mut acc = MultilinearMap::zero(self.d, n);
                for j in 0..=n {
                    let (a, b) = (&self.coeffs[j], &o.coeffs[n - j]);
                    if !a.is_zero() && !b.is_zero() {
                        acc = acc.add(&a.product(b));
                    }
                }
                acc
            })
            .collect();
        Self::new(self.d, coeffs)
    }

    fn regular_inverse(&self, t0_inv: &BElement) -> Self {
        let left = MultilinearMap::constant(&(-t0_inv));
        let mut u = vec![MultilinearMap::constant(t0_inv)];
        for n in 1..=self.order() {
            let mut acc = MultilinearMap::zero(self.d, n);
            for j in 1..=n {
                let (a, b) = (&self.coeffs[j], &u[n - j]);
                if !a.is_zero() && !b.is_zero() {
                    acc = acc.add(&a.product(b));
                }
            }
            u.push(left.product(&acc));
        }
        Self::new(self.d, u)
    }

    /// If the series has the form w + w·v(w)·w, returns the coefficients of v
    /// (arities 0..L−2).
    pub fn cauchy_shape(&self, tol: f64) -> Option<Vec<MultilinearMap>> {
        let d = self.d;
        if self.order() < 1 || self.coeffs[0].max_abs() > tol {
            return None;
        }
        if self.coeffs[1].sub(&MultilinearMap::identity(d)).max_abs() > tol {
            return None;
        }
        let one = Mat::identity(d, d);
        let id = MultilinearMap::identity(d);
        let mut v = Vec::new();
        for k in 2..=self.order() {
            let s = &self.coeffs[k];
            let vk = s.fix_slot(k - 1, &one).fix_slot(0, &one);
            let rebuilt = id.product(&vk).product(&id);
            if rebuilt.sub(s).max_abs() > tol * (1.0 + s.max_abs()) {
                return None;
            }
            v.push(vk);
        }
        Some(v)
    }

    /// Multiplicative inverse. Invertible constant term gives an ordinary
    /// series; the shape w + w·v(w)·w gives w⁻¹ − Φ(w).
    pub fn mult_inverse(&self) -> Result<SeriesInverse> {
        let t0 = self.coeffs[0].column_value(0);
        if let Some(inv) = invert(&t0) {
            if op_norm(&inv) * op_norm(&t0) < 1e12 {
                return Ok(SeriesInverse::Series(self.regular_inverse(&inv)));
            }
        }
        let v = self.cauchy_shape(1e-12).ok_or(Error::SingularLeadingTerm)?;
        Ok(SeriesInverse::AtInfinity(phi_from_shape(self.d, &v)))
    }

    /// s ∘ t; requires t to have zero constant term.
    pub fn compose(&self, t: &Self) -> Result<Self> {
        if !t.coeffs[0].is_zero() {
            return Err(Error::NotNormalized);
        }
        let order = self.order().min(t.order());
        let coeffs = (0..=order)
            .into_par_iter()
            .map(|n| {
                if n == 0 {
                    return self.coeffs[0].clone();
                }
                let mut acc = MultilinearMap::zero(self.d, n);
                for l in 1..=n {
                    if !self.coeffs[l].is_zero() {
                        acc = acc.add(&substitute_all(&self.coeffs[l], &t.coeffs, n));
                    }
                }
                acc
            })
            .collect();
        Ok(Self::new(self.d, coeffs))
    }

    /// Compositional inverse of a series with T₀ = 0 and T₁ = id.
    pub fn comp_inverse(&self) -> Result<Self> {
        let d = self.d;
        let tol = 1e-12;
        if self.order() < 1
            || self.coeffs[0].max_abs() > tol
            || self.coeffs[1].sub(&MultilinearMap::identity(d)).max_abs() > tol
        {
            return Err(Error::NotNormalized);
        }
        let mut t = vec![MultilinearMap::zero(d, 0), MultilinearMap::identity(d)];
        for n in 2..=self.order() {
            // t_{n-1} is still unknown only inside S_1, which is the identity
            t.push(MultilinearMap::zero(d, n));
            let mut acc = MultilinearMap::zero(d, n);
            for l in 2..=n {
                if !self.coeffs[l].is_zero() {
                    acc = acc.add(&substitute_all(&self.coeffs[l], &t, n));
                }
            }
            t[n] = acc.scale(-ONE);
        }
        Ok(Self::new(d, t))
    }
}

/// Σ over compositions n = j₁ + … + j_ℓ of S(t_{j₁}, …, t_{j_ℓ}).
fn substitute_all(s: &MultilinearMap, t: &[MultilinearMap], n: usize) -> MultilinearMap {
    let l = s.ell;
    let mut acc = MultilinearMap::zero(s.d, n);
    let mut parts = Vec::with_capacity(l);
    compositions(n, l, &mut parts, &mut |parts| {
        if parts.iter().any(|&j| t[j].is_zero()) {
            return;
        }
        let mut cur = s.clone();
        for (slot, &j) in parts.iter().enumerate().rev() {
            cur = cur.compose_slot(slot, &t[j]);
        }
        acc = acc.add(&cur);
    });
    acc
}

fn compositions(n: usize, parts: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if parts == 0 {
        if n == 0 {
            f(cur);
        }
        return;
    }
    if n < parts {
        return;
    }
    for first in 1..=(n - parts + 1) {
        cur.push(first);
        compositions(n - first, parts - 1, cur, f);
        cur.pop();
    }
}

/// Φ = (1 + v(w)·w)⁻¹ v(w), the correction in (w + w v(w) w)⁻¹ = w⁻¹ − Φ(w).
fn phi_from_shape(d: usize, v: &[MultilinearMap]) -> NCSeries {
    let order = v.len().saturating_sub(1);
    if v.is_empty() {
        return NCSeries::zero(d, 0);
    }
    let id = MultilinearMap::identity(d);
    let mut one_plus = vec![MultilinearMap::constant(&Mat::identity(d, d))];
    for vj in v.iter().take(order) {
        one_plus.push(vj.product(&id));
    }
    let denom = NCSeries::new(d, one_plus).regular_inverse(&Mat::identity(d, d));
    denom.multiply(&NCSeries::new(d, v.to_vec()))
}

/// A graded function on M_n(B), n ≥ 1, that may reject points.
pub trait NcFunction: Sync {
    fn dim(&self) -> usize;
    fn call(&self, b: &LevelMatrix) -> Result<LevelMatrix>;
}

impl NcFunction for NCSeries {
    fn dim(&self) -> usize {
        self.d
    }
    fn call(&self, b: &LevelMatrix) -> Result<LevelMatrix> {
        Ok(self.eval(b))
    }
}

/// Adapter turning a closure into an [`NcFunction`].
pub struct FnOracle<F> {
    pub d: usize,
    pub f: F,
}

impl<F: Fn(&LevelMatrix) -> Result<LevelMatrix> + Sync> NcFunction for FnOracle<F> {
    fn dim(&self) -> usize {
        self.d
    }
    fn call(&self, b: &LevelMatrix) -> Result<LevelMatrix> {
        (self.f)(b)
    }
}

/// Corner block of f([[X, Z], [0, Y]]).
pub fn delta_r_eval(
    f: &dyn NcFunction,
    x: &LevelMatrix,
    y: &LevelMatrix,
    z: &Mat,
) -> Result<Mat> {
    let (p, q) = (x.mat.nrows(), y.mat.nrows());
    if z.nrows() != p || z.ncols() != q || x.d != y.d {
        return Err(Error::DimensionMismatch("corner block shape".into()));
    }
    let mut m = Mat::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).copy_from(&x.mat);
    m.view_mut((0, p), (p, q)).copy_from(z);
    m.view_mut((p, p), (q, q)).copy_from(&y.mat);
    let v = f.call(&LevelMatrix::new(x.d, m))?;
    Ok(v.mat.view((0, p), (p, q)).into_owned())
}

const REG_DELTAS: [f64; 2] = [1e-3, 5e-4];

fn corner_at(f: &dyn NcFunction, units: &[usize], shift: C) -> Result<BElement> {
    let d = f.dim();
    let l = units.len();
    let mut b = LevelMatrix::zeros(d, l + 1);
    for (k, &a) in units.iter().enumerate() {
        b.set_block(k, k + 1, &unit(d, a));
    }
    if shift != ZERO {
        b.mat += Mat::identity((l + 1) * d, (l + 1) * d).map(|z| z * shift);
    }
    Ok(f.call(&b)?.block(0, l))
}

fn corner(f: &dyn NcFunction, units: &[usize]) -> Result<BElement> {
    match corner_at(f, units, ZERO) {
        Err(Error::DomainError(_)) => {
            let v1 = corner_at(f, units, I * REG_DELTAS[0])?;
            let v2 = corner_at(f, units, I * REG_DELTAS[1])?;
            Ok(v2.map(|z| z * 2.0) - v1)
        }
        r => r,
    }
}

/// Taylor coefficients of f at 0 to order L, read off from block bidiagonal
/// evaluations with matrix units on the superdiagonal.
pub fn extract_coefficients(f: &dyn NcFunction, order: usize) -> Result<NCSeries> {
    let d = f.dim();
    let dd = d * d;
    let mut coeffs = Vec::with_capacity(order + 1);
    for l in 0..=order {
        let cols = dd.pow(l as u32);
        let values: Vec<BElement> = (0..cols)
            .into_par_iter()
            .map(|col| corner(f, &digits(col, dd, l)))
            .collect::<Result<_>>()?;
        let mut op = Mat::zeros(dd, cols);
        for (col, v) in values.iter().enumerate() {
            op.set_column(col, &nalgebra::DVector::from_vec(vec_of(v)));
        }
        coeffs.push(MultilinearMap::new(d, l, op));
    }
    Ok(NCSeries::new(d, coeffs))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultilinearMapJson {
    pub ell: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NCSeriesJson {
    pub d: usize,
    #[serde(rename = "L")]
    pub order: usize,
    pub coeffs: Vec<MultilinearMapJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_bound: Option<f64>,
}

impl MultilinearMap {
    pub fn to_json(&self) -> MultilinearMapJson {
        let (re, im) = to_nested(&self.op);
        MultilinearMapJson { ell: self.ell, re, im }
    }

    pub fn from_json(d: usize, j: &MultilinearMapJson) -> Result<Self> {
        if d == 0 || d > MAX_D || j.ell > MAX_ARITY {
            return Err(Error::Parse(format!("unsupported d = {d}, ell = {}", j.ell)));
        }
        let cols = (d * d)
            .checked_pow(j.ell as u32)
            .filter(|&c| c <= MAX_COLUMNS)
            .ok_or_else(|| Error::Parse("coefficient too large".into()))?;
        Ok(Self::new(d, j.ell, from_nested(&j.re, &j.im, d * d, cols)?))
    }
}

impl NCSeries {
    pub fn to_json(&self) -> NCSeriesJson {
        NCSeriesJson {
            d: self.d,
            order: self.order(),
            coeffs: self.coeffs.iter().map(|c| c.to_json()).collect(),
            tail_bound: self.tail_bound,
        }
    }

    pub fn from_json(j: &NCSeriesJson) -> Result<Self> {
        if j.coeffs.len().checked_sub(1) != Some(j.order) {
            return Err(Error::Parse("need coefficients of arity 0..=L".into()));
        }
        let mut coeffs = Vec::with_capacity(j.coeffs.len());
        for (l, c) in j.coeffs.iter().enumerate() {
            if c.ell != l {
                return Err(Error::Parse(format!("coefficient {l} has arity {}", c.ell)));
            }
            coeffs.push(MultilinearMap::from_json(j.d, c)?);
        }
        let mut s = Self::new(j.d, coeffs);
        if let Some(m) = j.tail_bound {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::Parse("tail_bound must be finite and non-negative".into()));
            }
        }
        s.tail_bound = j.tail_bound;
        Ok(s)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let j: NCSeriesJson =
            serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json(&j)
    }
}
