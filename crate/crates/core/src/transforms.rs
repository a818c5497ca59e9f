//! G, F and h at matrix levels, directional asymptotics, Stieltjes inversion
//! and the Cauchy-transform certifier.

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{
    half_plane_margin, min_eig_hermitian, op_norm, spectrum_floor, BElement, LevelMatrix, Mat, C, I,
};
use crate::distribution::{empirical_bound, independent_diagonal, Distribution, Realization, DEFAULT_ORDER};
use crate::error::{Error, Result};
use crate::gram::{full_basis, gram_min_eig, MonomialFunctional};
use crate::inversion::{earle_hamilton, EhConfig};
use crate::ncseries::{extract_coefficients, FnOracle, MultilinearMap, NCSeries, NcFunction, SeriesInverse};

/// (id_n ⊗ E)[(b − a ⊗ 1_n)⁻¹].
pub fn cauchy_eval_realization(r: &Realization, b: &LevelMatrix) -> Result<LevelMatrix> {
    if b.d != r.d {
        return Err(Error::DimensionMismatch(format!("level matrix over M_{} for M_{} model", b.d, r.d)));
    }
    r.resolvent(b)
}

/// Truncated series value with a bound on the omitted terms.
#[derive(Debug, Clone)]
pub struct SeriesValue {
    pub value: LevelMatrix,
    pub error_bound: f64,
}

/// Fixed-point iteration budget when G is computed from finitely many
/// cumulants close to the real axis.
pub const EH_DENSITY_MAX_ITER: usize = 100_000;

/// Evaluation context for one distribution; caches the h- and R-series.
pub struct Evaluator<'a> {
    pub mu: &'a Distribution,
    h: NCSeries,
    r: NCSeries,
    floor_constant: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(mu: &'a Distribution) -> Self {
        let r = NCSeries::new(mu.d, mu.cumulants.clone());
        let floor_constant = if mu.finite_cumulants { eh_floor_constant(&r, mu.bound) } else { f64::INFINITY };
        Self { mu, h: mu.h_series(), r, floor_constant }
    }

    pub fn r_series(&self) -> &NCSeries {
        &self.r
    }

    /// Σ_{k ≤ L} μ((b⁻¹X)^k b⁻¹) with tail Σ_{k > L} ‖b⁻¹‖^{k+1} M^k.
    pub fn g_series(&self, b: &LevelMatrix) -> Result<SeriesValue> {
        let binv = b.inverse().ok_or(Error::OutsideConvergence(f64::INFINITY))?;
        let r = binv.norm();
        let q = r * self.mu.bound;
        if !(q < 1.0) {
            return Err(Error::OutsideConvergence(q));
        }
        let value = self.h.eval(&binv);
        let error_bound = r * q.powi(self.mu.order as i32 + 1) / (1.0 - q);
        Ok(SeriesValue { value, error_bound })
    }

    fn finite_route(&self, b: &LevelMatrix) -> bool {
        self.mu.finite_cumulants
            && (half_plane_margin(b) > 0.0 || spectrum_floor(b) > self.floor_constant)
    }

    /// F(b) from w + R(w⁻¹) = b when the cumulants are finite.
    fn f_fixed_point(&self, b: &LevelMatrix) -> Result<LevelMatrix> {
        let phi = FnOracle {
            d: self.mu.d,
            f: |w: &LevelMatrix| w.inverse().map(|wi| self.r.eval(&wi)).ok_or(Error::SingularValue),
        };
        let cfg = EhConfig {
            max_iter: EH_DENSITY_MAX_ITER,
            floor_constant: Some(self.floor_constant),
            ..EhConfig::default()
        };
        Ok(earle_hamilton(&phi, b, &cfg)?.w)
    }

    /// G(b) by the realization, then the finite-cumulant fixed point, then the
    /// moment series.
    pub fn g(&self, b: &LevelMatrix) -> Result<LevelMatrix> {
        if let Some(r) = &self.mu.realization {
            return cauchy_eval_realization(r, b);
        }
        if self.finite_route(b) {
            return self.f_fixed_point(b)?.inverse().ok_or(Error::SingularValue);
        }
        Ok(self.g_series(b)?.value)
    }

    /// F(b) = G(b)⁻¹.
    pub fn f(&self, b: &LevelMatrix) -> Result<LevelMatrix> {
        if self.mu.realization.is_none() && self.finite_route(b) {
            return self.f_fixed_point(b);
        }
        self.g(b)?.inverse().ok_or(Error::SingularValue)
    }
}

/// C = ‖b₀‖ + C₀ + δ with C₀ = 4M, b₀ the constant term of R and δ the size
/// of the rest of R on the ball of radius 1/C₀.
pub fn eh_floor_constant(r: &NCSeries, bound: f64) -> f64 {
    let c0 = 4.0 * bound.max(f64::MIN_POSITIVE);
    let b0 = op_norm(&r.coeffs[0].column_value(0));
    let delta: f64 = r
        .coeffs
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| !c.is_zero())
        .map(|(l, c)| c.unit_sum_bound() / c0.powi(l as i32))
        .sum();
    b0 + c0 + delta
}

/// Series route for G with its tail bound.
pub fn cauchy_eval_series(mu: &Distribution, b: &LevelMatrix) -> Result<SeriesValue> {
    Evaluator::new(mu).g_series(b)
}

/// G(b) by the preferred route.
pub fn cauchy_eval(mu: &Distribution, b: &LevelMatrix) -> Result<LevelMatrix> {
    Evaluator::new(mu).g(b)
}

/// F(b) = G(b)⁻¹, checked against Im F(b) ≥ Im b.
pub fn f_transform_eval(mu: &Distribution, b: &LevelMatrix) -> Result<LevelMatrix> {
    let f = Evaluator::new(mu).f(b)?;
    let (mb, mf) = (half_plane_margin(b), half_plane_margin(&f));
    if mb > 0.0 && mf < mb - 1e-8 * (1.0 + b.norm()) {
        return Err(Error::DomainError(format!("Im F(b) ≥ Im b violated: {mf:.3e} < {mb:.3e}")));
    }
    Ok(f)
}

/// Residuals ‖(iyQ)·g(iyQ) − 1‖ along a ray.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsReport {
    pub y: Vec<f64>,
    pub residual: Vec<f64>,
    pub pass: bool,
}

/// PASS when the residuals end below `tol` and are non-increasing over the
/// last two grid points. Points where g fails are recorded as NaN.
pub fn asymptotics_check(
    g: &dyn NcFunction,
    q: &LevelMatrix,
    y_grid: &[f64],
    tol: f64,
) -> Result<AsymptoticsReport> {
    if min_eig_hermitian(&q.mat) <= 0.0 || op_norm(&(&q.mat - q.mat.adjoint())) > 1e-12 {
        return Err(Error::DomainError("direction must be positive definite".into()));
    }
    if y_grid.is_empty() || y_grid.windows(2).any(|w| !(w[0] < w[1])) || !(y_grid[0] > 0.0) {
        return Err(Error::DomainError("y grid must be positive and increasing".into()));
    }
    let one = LevelMatrix::identity(q.d, q.n());
    let residual: Vec<f64> = y_grid
        .par_iter()
        .map(|&y| {
            let b = q.scale(I * y);
            g.call(&b).map(|v| b.mul(&v).sub(&one).norm()).unwrap_or(f64::NAN)
        })
        .collect();
    let k = residual.len();
    let last = residual[k - 1];
    let pass = last < tol && (k < 2 || residual[k - 2] >= last);
    Ok(AsymptoticsReport { y: y_grid.to_vec(), residual, pass })
}

/// H(b) = b − F_a(b) for a = diag(s₁, s₂) with independent semicircular
/// entries, evaluated as Φ(b⁻¹) from the expansion of F_a at infinity.
pub struct Counterexample {
    phi: NCSeries,
    bound: f64,
}

impl Counterexample {
    pub fn new(order: usize) -> Self {
        let mu = independent_diagonal(order);
        let phi = match mu.h_series().mult_inverse() {
            Ok(SeriesInverse::AtInfinity(phi)) => phi,
            _ => unreachable!("h-series of a distribution has the Cauchy shape"),
        };
        Self { phi, bound: mu.bound }
    }

    /// K(w) = H(w⁻¹) as a series at 0.
    pub fn k_series(&self) -> &NCSeries {
        &self.phi
    }

    pub fn h(&self, b: &LevelMatrix) -> Result<LevelMatrix> {
        let bi = b.inverse().ok_or(Error::OutsideConvergence(f64::INFINITY))?;
        let q = 2.0 * self.bound * bi.norm();
        if q >= 1.0 {
            return Err(Error::OutsideConvergence(q));
        }
        Ok(self.phi.eval(&bi))
    }
}

impl Default for Counterexample {
    fn default() -> Self {
        Self::new(DEFAULT_ORDER)
    }
}

impl NcFunction for Counterexample {
    fn dim(&self) -> usize {
        2
    }
    fn call(&self, b: &LevelMatrix) -> Result<LevelMatrix> {
        self.h(b)
    }
}

pub fn counterexample_h(b: &LevelMatrix) -> Result<LevelMatrix> {
    Counterexample::default().h(b)
}

/// Report of [`certify_cauchy`], serialized as is.
#[derive(Debug, Clone, Serialize)]
pub struct CauchyReport {
    pub identity_ok: bool,
    #[serde(rename = "bound_M")]
    pub bound_m: f64,
    pub gram_min_eig: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct CauchyCertificate {
    pub report: CauchyReport,
    /// Deviation of the extracted map b ↦ μ(b) from the identity.
    pub identity_defect: f64,
    pub distribution: Option<Distribution>,
}

/// μ(b₀ X b₁ ⋯ X b_k) := T_{k+1}(b₀, …, b_k) for the Taylor coefficients T of h.
struct Extracted<'a>(&'a NCSeries);

impl MonomialFunctional for Extracted<'_> {
    fn dim(&self) -> usize {
        self.0.d
    }
    fn eval(&self, c: &[BElement]) -> BElement {
        self.0.coeffs[c.len()].apply(c)
    }
}

/// Reads a candidate distribution off the Taylor coefficients of h at 0 and
/// tests μ|_B = id, the growth bound and positivity up to degree D.
pub fn certify_cauchy(h: &dyn NcFunction, degree: usize, tol: f64) -> Result<CauchyCertificate> {
    let d = h.dim();
    let h0 = h.call(&LevelMatrix::zeros(d, 1))?;
    if h0.norm() > tol {
        return Err(Error::DomainError(format!("h(0) has norm {:.3e}", h0.norm())));
    }
    let order = 2 * degree + 1;
    let t = extract_coefficients(h, order)?;
    let identity_defect = t.coeffs[1].sub(&MultilinearMap::identity(d)).max_abs();
    let identity_ok = identity_defect <= tol;
    let f = Extracted(&t);
    let bound_m = empirical_bound(&f, 2 * degree, 20, 0);
    let gram = gram_min_eig(&f, &full_basis(d, degree));
    let pass = identity_ok && bound_m.is_finite() && gram >= -tol;
    let distribution = pass.then(|| {
        let one = Mat::identity(d, d);
        let moments = (1..=2 * degree)
            .map(|k| t.coeffs[k + 1].fix_slot(k, &one).fix_slot(0, &one))
            .collect();
        Distribution::from_moments(moments, bound_m)
    });
    Ok(CauchyCertificate {
        report: CauchyReport { identity_ok, bound_m, gram_min_eig: gram, pass },
        identity_defect,
        distribution,
    })
}

/// h(b) = G(b⁻¹) of a realization as an oracle defined near 0.
pub fn realization_h(r: &Realization) -> impl NcFunction + '_ {
    FnOracle { d: r.d, f: move |b: &LevelMatrix| r.h_value(b) }
}

pub const DEFAULT_DENSITY_Y: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityPoint {
    pub x: f64,
    pub density: f64,
    pub y_reg: f64,
}

/// Grid on [xmin, xmax] with spacing at most y/2.
pub fn density_grid(xmin: f64, xmax: f64, y: f64) -> Vec<f64> {
    let steps = (((xmax - xmin) / (y / 2.0)).ceil() as usize).max(1);
    (0..=steps).map(|k| xmin + (xmax - xmin) * k as f64 / steps as f64).collect()
}

/// −(1/π)·Im tr_d G((x + iy)·1) on the grid.
pub fn stieltjes_density(mu: &Distribution, xs: &[f64], y: f64) -> Result<Vec<DensityPoint>> {
    if !(y > 0.0) {
        return Err(Error::DomainError("regularization y must be positive".into()));
    }
    let ev = Evaluator::new(mu);
    let d = mu.d;
    xs.par_iter()
        .map(|&x| {
            let b = LevelMatrix::new(d, Mat::identity(d, d).map(|z| z * C::new(x, y)));
            let g = ev.g(&b)?;
            let tr = g.mat.trace() / d as f64;
            Ok(DensityPoint { x, density: -tr.im / std::f64::consts::PI, y_reg: y })
        })
        .collect()
}

pub fn density_csv(points: &[DensityPoint]) -> String {
    let mut s = String::from("x,density,y_reg\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.x, p.density, p.y_reg));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{amplify, direct_sum, scalar, ONE};
    use crate::distribution::{point_mass, random_realization, semicircular_var};
    use crate::sampling::{rng, upper_half_plane};

    fn sc_g(z: C) -> C {
        // root of G² − zG + 1 = 0 with Im G ≤ 0 for Im z > 0
        let s = (z * z - 4.0).sqrt();
        let g = (z - s) / 2.0;
        if g.im > 0.0 { (z + s) / 2.0 } else { g }
    }

    fn lm(z: C) -> LevelMatrix {
        LevelMatrix::new(1, Mat::from_element(1, 1, z))
    }

    #[test]
    fn point_mass_resolvent() {
        let b0 = Mat::from_row_slice(2, 2, &[ONE, C::new(0.5, 0.0), C::new(0.5, 0.0), -ONE]);
        let mu = point_mass(&b0, 6);
        let mut g = rng(3);
        let b = upper_half_plane(&mut g, 2, 2, 0.5);
        let want = b.sub(&amplify(&b0, 2)).inverse().unwrap();
        let got = cauchy_eval_realization(mu.realization.as_ref().unwrap(), &b).unwrap();
        assert!(got.sub(&want).norm() < 1e-12);
        let f = f_transform_eval(&mu, &b).unwrap();
        assert!(f.sub(&b.sub(&amplify(&b0, 2))).norm() < 1e-12);
    }

    #[test]
    fn semicircle_at_2i() {
        let mu = semicircular_var(1, 1.0, 6);
        let g = cauchy_eval(&mu, &lm(2.0 * I)).unwrap().mat[(0, 0)];
        assert!((g - I * (1.0 - 2f64.sqrt())).norm() < 1e-11);
        assert!((g - sc_g(2.0 * I)).norm() < 1e-11);
        let f = f_transform_eval(&mu, &lm(2.0 * I)).unwrap().mat[(0, 0)];
        assert!((f - I * (1.0 + 2f64.sqrt())).norm() < 1e-11);
    }

    #[test]
    fn range_inclusion_and_f_growth() {
        let r = random_realization(2, 3, 1.0, 11);
        let mu = Distribution::from_realization(r, 6);
        let mut g = rng(5);
        for k in 0..100 {
            let eps = 0.05 + (k % 5) as f64 * 0.2;
            let b = upper_half_plane(&mut g, 2, 1 + k % 3, eps);
            let gv = cauchy_eval(&mu, &b).unwrap();
            assert!(half_plane_margin(&gv.scale(-ONE)) >= -1e-12);
            let f = f_transform_eval(&mu, &b).unwrap();
            let eps = half_plane_margin(&b);
            let m = mu.bound;
            assert!(f.sub(&b).norm() < 4.0 * m * (1.0 + 2.0 * m / eps));
        }
    }

    #[test]
    fn nc_function_axioms() {
        let mu = Distribution::from_realization(random_realization(2, 2, 1.0, 4), 4);
        let mut g = rng(9);
        let b = upper_half_plane(&mut g, 2, 1, 0.3);
        let c = upper_half_plane(&mut g, 2, 2, 0.3);
        let gs = cauchy_eval(&mu, &direct_sum(&b, &c)).unwrap();
        let want = direct_sum(&cauchy_eval(&mu, &b).unwrap(), &cauchy_eval(&mu, &c).unwrap());
        assert!(gs.sub(&want).norm() < 1e-12);
        let s = Mat::from_row_slice(2, 2, &[ONE, C::new(2.0, 0.0), ZERO_C, C::new(1.0, 1.0)]);
        let big = LevelMatrix::new(2, s.kronecker(&Mat::identity(2, 2)));
        let conj = big.mul(&c).mul(&big.inverse().unwrap());
        let lhs = cauchy_eval(&mu, &conj).unwrap();
        let rhs = big.mul(&cauchy_eval(&mu, &c).unwrap()).mul(&big.inverse().unwrap());
        assert!(lhs.sub(&rhs).norm() < 1e-10);
    }
    const ZERO_C: C = C::new(0.0, 0.0);

    #[test]
    fn series_within_tail_bound() {
        let r = random_realization(2, 3, 1.0, 2);
        let mu = Distribution::from_realization(r.clone(), 6);
        let mut g = rng(8);
        for n in 1..=3 {
            let b = upper_half_plane(&mut g, 2, n, 5.0);
            let s = cauchy_eval_series(&mu, &b).unwrap();
            let exact = cauchy_eval_realization(&r, &b).unwrap();
            assert!(s.value.sub(&exact).norm() <= s.error_bound);
        }
        let tiny = LevelMatrix::identity(2, 1).scale(C::new(0.5, 0.0));
        assert!(matches!(cauchy_eval_series(&mu, &tiny), Err(Error::OutsideConvergence(_))));
    }

    #[test]
    fn point_mass_series_is_geometric() {
        let b0 = scalar(1, C::new(0.3, 0.0));
        let mu = point_mass(&b0, 6);
        let b = lm(C::new(4.0, 1.0));
        let s = cauchy_eval_series(&mu, &b).unwrap();
        let want = 1.0 / (C::new(4.0, 1.0) - 0.3);
        assert!((s.value.mat[(0, 0)] - want).norm() <= s.error_bound + 1e-15);
    }

    #[test]
    fn counterexample_asymptotics() {
        let h = Counterexample::default();
        let grid = [20.0, 100.0, 1000.0];
        let id = LevelMatrix::identity(2, 1);
        assert!(asymptotics_check(&h, &id, &grid, 1e-2).unwrap().pass);
        let diag = LevelMatrix::new(2, Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, C::new(2.0, 0.)])));
        assert!(asymptotics_check(&h, &diag, &grid, 1e-2).unwrap().pass);
        let q = LevelMatrix::new(2, Mat::from_row_slice(2, 2, &[C::new(2.0, 0.), ONE, ONE, ONE]));
        let rep = asymptotics_check(&h, &q, &grid, 1e-2).unwrap();
        assert!(!rep.pass);
        // Q·E′(Q⁻¹) − 1 = [[1, 2], [1, 1]]
        let limit = op_norm(&Mat::from_row_slice(2, 2, &[ONE, C::new(2.0, 0.), ONE, ONE]));
        assert!((rep.residual[2] - limit).abs() < 1e-2);
    }

    #[test]
    fn certify_identity_series() {
        let id = NCSeries::identity(2, 5);
        let c = certify_cauchy(&id, 2, 1e-10).unwrap();
        assert!(c.report.pass);
        let mu = c.distribution.unwrap();
        assert!(mu.moments.iter().all(|m| m.max_abs() < 1e-14));
    }

    #[test]
    fn certify_counterexample_fails_identity() {
        let k = Counterexample::default();
        let c = certify_cauchy(k.k_series(), 2, 1e-10).unwrap();
        assert!(!c.report.identity_ok && !c.report.pass);
        assert!(c.distribution.is_none());
    }

    #[test]
    fn certify_semicircle_round_trip() {
        let mu = semicircular_var(2, 1.0, 6);
        let c = certify_cauchy(&mu.h_series(), 2, 1e-10).unwrap();
        assert!(c.report.pass, "{:?}", c.report);
        let got = c.distribution.unwrap();
        for k in 0..4 {
            assert!(got.moments[k].sub(&mu.moments[k]).max_abs() < 1e-12);
            assert!(got.cumulants[k].sub(&mu.cumulants[k]).max_abs() < 1e-12);
        }
    }

    #[test]
    fn semicircle_density() {
        let mu = semicircular_var(1, 1.0, 6);
        let xs = [0.0, 1.0, 1.8];
        let pts = stieltjes_density(&mu, &xs, 1e-2).unwrap();
        for p in &pts {
            let want = (4.0 - p.x * p.x).sqrt() / (2.0 * std::f64::consts::PI);
            assert!((p.density - want).abs() < 5e-3, "{p:?}");
        }
        let csv = density_csv(&pts);
        assert!(csv.starts_with("x,density,y_reg\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn point_mass_density_has_unit_mass() {
        let mu = point_mass(&Mat::zeros(1, 1), 6);
        let y = 1e-2;
        let xs = density_grid(-20.0, 20.0, y);
        let pts = stieltjes_density(&mu, &xs, y).unwrap();
        let h = xs[1] - xs[0];
        let mass: f64 = pts.iter().map(|p| p.density * h).sum();
        // tails of the Lorentzian beyond ±20 carry 2y/(20π)
        assert!((mass - 1.0).abs() < 1e-3);
    }

    #[test]
    fn independent_diagonal_density_is_smoothed_semicircle() {
        let mu = independent_diagonal(4);
        let y = 0.3;
        let pts = stieltjes_density(&mu, &[-1.0, 0.0, 0.5, 1.5], y).unwrap();
        for p in pts {
            let want = -sc_g(C::new(p.x, y)).im / std::f64::consts::PI;
            assert!((p.density - want).abs() < 1e-3, "{p:?}");
        }
    }
}
