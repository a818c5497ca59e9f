//! Infinite divisibility through positivity of ρ_μ, completely positive maps,
//! the semigroup μ^{⊞ρ}, free additive convolution and convolution roots.

use serde::{Deserialize, Serialize};

use crate::algebra::{
    from_nested, half_plane_margin, imag_part, max_eig_hermitian, min_eig_hermitian, op_norm,
    to_nested, unit, unvec, vec_of, BElement, LevelMatrix, Mat, C, MAX_D, PSD_TOL,
};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::gram::{gram_min_eig, reduced_basis, MonomialFunctional};
use crate::inversion::voiculescu_path;
use crate::ncseries::MultilinearMap;
use crate::transforms::Evaluator;

/// Linear map ρ: B → B acting on row-major vectorizations, with its Choi
/// matrix Σ e_ij ⊗ ρ(e_ij).
#[derive(Debug, Clone, PartialEq)]
pub struct CPMap {
    pub d: usize,
    pub op: Mat,
    pub choi: Mat,
    pub choi_min_eig: f64,
    pub completely_positive: bool,
}

impl CPMap {
    pub fn new(d: usize, op: Mat) -> Result<Self> {
        let dd = d * d;
        if d == 0 || op.nrows() != dd || op.ncols() != dd {
            return Err(Error::DimensionMismatch(format!("CP map on M_{d} needs a {dd}×{dd} matrix")));
        }
        let mut choi = Mat::zeros(dd, dd);
        for i in 0..d {
            for j in 0..d {
                let img = unvec(d, op.column(i * d + j).as_slice());
                choi.view_mut((i * d, j * d), (d, d)).copy_from(&img);
            }
        }
        let choi_min_eig = min_eig_hermitian(&choi);
        let hermitian = op_norm(&(&choi - choi.adjoint())) <= PSD_TOL;
        let completely_positive = hermitian && choi_min_eig >= -PSD_TOL;
        Ok(Self { d, op, choi, choi_min_eig, completely_positive })
    }

    pub fn from_fn(d: usize, f: impl Fn(&BElement) -> BElement) -> Self {
        let dd = d * d;
        let mut op = Mat::zeros(dd, dd);
        for a in 0..dd {
            let v = vec_of(&f(&unit(d, a)));
            for (r, z) in v.into_iter().enumerate() {
                op[(r, a)] = z;
            }
        }
        Self::new(d, op).expect("square by construction")
    }

    pub fn identity(d: usize) -> Self {
        Self::scaled(d, 1.0)
    }

    pub fn scaled(d: usize, t: f64) -> Self {
        Self::new(d, Mat::identity(d * d, d * d).map(|z| z * t)).unwrap()
    }

    pub fn apply(&self, b: &BElement) -> BElement {
        let v = &self.op * nalgebra::DVector::from_vec(vec_of(b));
        unvec(self.d, v.as_slice())
    }

    /// self ∘ inner.
    pub fn compose(&self, inner: &CPMap) -> CPMap {
        Self::new(self.d, &self.op * &inner.op).unwrap()
    }
}

/// ρ_μ extended bimodularly: b₀ X b₁ ⋯ X b_N ↦ b₀·c^{(N)}(b₁, …, b_{N−1})·b_N,
/// and 0 on constants.
pub struct RhoFunctional {
    pub d: usize,
    /// `maps[ℓ]` is c^{(ℓ+1)}, of arity ℓ.
    pub maps: Vec<MultilinearMap>,
}

impl RhoFunctional {
    pub fn new(mu: &Distribution) -> Self {
        Self { d: mu.d, maps: mu.cumulants.clone() }
    }
}

impl MonomialFunctional for RhoFunctional {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, c: &[BElement]) -> BElement {
        let n = c.len() - 1;
        if n == 0 {
            return Mat::zeros(self.d, self.d);
        }
        &c[0] * self.maps[n - 1].apply(&c[1..n]) * &c[n]
    }
}

/// Growth constant read off the cumulants: ‖c^{(1)}‖ + 2·max_ℓ C_ℓ^{1/(ℓ+1)}
/// with C_ℓ the unit-sum norm of c^{(ℓ+1)}. Exact for scalar semicircular laws.
pub fn derived_bound(cumulants: &[MultilinearMap]) -> f64 {
    let mean = op_norm(&cumulants[0].column_value(0));
    let spread = cumulants
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| !c.is_zero())
        .map(|(l, c)| c.unit_sum_bound().powf(1.0 / (l + 1) as f64))
        .fold(0.0, f64::max);
    mean + 2.0 * spread
}

/// μ ⊞ ν: cumulants add; M = M_μ + M_ν.
pub fn convolve(mu: &Distribution, nu: &Distribution) -> Result<Distribution> {
    if mu.d != nu.d {
        return Err(Error::DimensionMismatch(format!("d = {} and d = {}", mu.d, nu.d)));
    }
    let order = mu.order.min(nu.order);
    let cum = (0..order).map(|l| mu.cumulants[l].add(&nu.cumulants[l])).collect();
    Ok(Distribution::from_cumulants(
        cum,
        mu.bound + nu.bound,
        mu.finite_cumulants && nu.finite_cumulants && mu.order == nu.order,
    ))
}

/// Gram degree used when none is given.
pub const ID_DEGREE: usize = 3;

pub fn default_degree(mu: &Distribution) -> usize {
    ID_DEGREE.min(mu.order / 2)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdReport {
    pub degree: usize,
    pub gram_min_eig: f64,
    pub pass: bool,
}

/// Gram matrix of ρ_μ over constant-free monomials of degree ≤ D.
pub fn is_infinitely_divisible(mu: &Distribution, degree: usize, tol: f64) -> Result<IdReport> {
    if degree == 0 || 2 * degree > mu.order {
        return Err(Error::InsufficientOrder { needed: 2 * degree.max(1), available: mu.order });
    }
    let g = gram_min_eig(&RhoFunctional::new(mu), &reduced_basis(mu.d, degree, false));
    Ok(IdReport { degree, gram_min_eig: g, pass: g >= -tol })
}

fn require_id(mu: &Distribution) -> Result<()> {
    let rep = is_infinitely_divisible(mu, default_degree(mu), PSD_TOL)?;
    if !rep.pass {
        return Err(Error::NotInfinitelyDivisible(rep.gram_min_eig));
    }
    Ok(())
}

/// μ^{⊞ρ}: every cumulant is post-composed with ρ.
pub fn semigroup_apply(mu: &Distribution, rho: &CPMap) -> Result<Distribution> {
    if rho.d != mu.d {
        return Err(Error::DimensionMismatch("CP map and distribution differ in d".into()));
    }
    if !rho.completely_positive {
        return Err(Error::NotCP(rho.choi_min_eig));
    }
    require_id(mu)?;
    if rho.op == Mat::identity(mu.d * mu.d, mu.d * mu.d) {
        return Ok(mu.clone());
    }
    let cum: Vec<MultilinearMap> = mu.cumulants.iter().map(|c| c.post(&rho.op)).collect();
    let bound = derived_bound(&cum);
    Ok(Distribution::from_cumulants(cum, bound, mu.finite_cumulants))
}

/// ν with ν^{⊞k} = μ: cumulants divided by k.
pub fn convolution_root(mu: &Distribution, k: usize) -> Result<Distribution> {
    if k == 0 {
        return Err(Error::DomainError("root index must be positive".into()));
    }
    require_id(mu)?;
    if k == 1 {
        return Ok(mu.clone());
    }
    let s = C::new(1.0 / k as f64, 0.0);
    let cum: Vec<MultilinearMap> = mu.cumulants.iter().map(|c| c.scale(s)).collect();
    let bound = derived_bound(&cum);
    Ok(Distribution::from_cumulants(cum, bound, mu.finite_cumulants))
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiPoint {
    pub margin: f64,
    pub certified: bool,
    pub phi_norm: f64,
    /// Largest eigenvalue of Im φ(b); ≤ 0 on the closed lower half-plane.
    pub im_phi_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiExtensionReport {
    pub infinitely_divisible: bool,
    pub points: Vec<PhiPoint>,
    /// Every point certified with Im φ ≤ tol.
    pub extends: bool,
    /// First point where the certified inversion did not reach b.
    pub witness: Option<usize>,
}

/// Evaluates φ_μ at the given points of the upper half-plane. Finite-cumulant
/// ID laws use φ(b) = R(b⁻¹) directly; otherwise F is inverted along the path
/// b + it·1, t ↓ 0, with a Kantorovich certificate at every step.
pub fn phi_extension_check(mu: &Distribution, points: &[LevelMatrix], tol: f64) -> Result<PhiExtensionReport> {
    let degree = default_degree(mu);
    let id = degree > 0 && is_infinitely_divisible(mu, degree, PSD_TOL)?.pass;
    let ev = Evaluator::new(mu);
    let mut out = Vec::with_capacity(points.len());
    for b in points {
        let margin = half_plane_margin(b);
        let phi = if id && mu.finite_cumulants {
            b.inverse().map(|bi| ev.r_series().eval(&bi))
        } else {
            two_sided_phi(&ev, b)
        };
        out.push(match phi {
            Some(p) if p.is_finite() => PhiPoint {
                margin,
                certified: true,
                phi_norm: p.norm(),
                im_phi_max: max_eig_hermitian(&imag_part(&p).mat),
            },
            _ => PhiPoint { margin, certified: false, phi_norm: f64::NAN, im_phi_max: f64::NAN },
        });
    }
    let witness = out.iter().position(|p| !p.certified);
    let extends = witness.is_none() && out.iter().all(|p| p.im_phi_max <= tol);
    Ok(PhiExtensionReport { infinitely_divisible: id, points: out, extends, witness })
}

/// φ(b) continued from infinity on both sides of b; a single-valued extension
/// requires both certified values to agree.
fn two_sided_phi(ev: &Evaluator, b: &LevelMatrix) -> Option<LevelMatrix> {
    let shift = b.norm() + 4.0 * ev.mu.bound + 1.0;
    let left = voiculescu_path(ev, b, -shift).ok()?.phi;
    let right = voiculescu_path(ev, b, shift).ok()?.phi;
    (left.sub(&right).norm() <= 1e-8 * (1.0 + left.norm())).then_some(left)
}

/// Scalar Hankel test [κ_{i+j+2}]_{i,j<D} ⪰ 0 for d = 1.
pub fn scalar_hankel_min_eig(kappa: &[f64], degree: usize) -> f64 {
    let h = Mat::from_fn(degree, degree, |i, j| C::new(kappa[i + j + 2], 0.0));
    min_eig_hermitian(&h)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CPMapJson {
    pub d: usize,
    pub op_re: Vec<Vec<f64>>,
    pub op_im: Vec<Vec<f64>>,
}

impl CPMap {
    pub fn to_json(&self) -> CPMapJson {
        let (op_re, op_im) = to_nested(&self.op);
        CPMapJson { d: self.d, op_re, op_im }
    }

    pub fn from_json(j: &CPMapJson) -> Result<Self> {
        if j.d == 0 || j.d > MAX_D {
            return Err(Error::Parse(format!("d must be in 1..={MAX_D}")));
        }
        let dd = j.d * j.d;
        Self::new(j.d, from_nested(&j.op_re, &j.op_im, dd, dd)?)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let j: CPMapJson = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json(&j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{bernoulli_scalar, point_mass, semicircular, semicircular_var};
    use crate::sampling::{random_map, rng};
    use crate::algebra::{ONE, I};

    fn transpose_map(d: usize) -> CPMap {
        CPMap::from_fn(d, |b| b.transpose())
    }

    fn moments_close(a: &Distribution, b: &Distribution, tol: f64) -> bool {
        a.moments.iter().zip(&b.moments).all(|(x, y)| x.sub(y).max_abs() < tol)
    }

    #[test]
    fn choi_criterion() {
        assert!(CPMap::identity(2).completely_positive);
        let t = transpose_map(2);
        assert!(!t.completely_positive);
        assert!((t.choi_min_eig + 1.0).abs() < 1e-12);
        let conj = Mat::from_row_slice(2, 2, &[ONE, C::new(2.0, 0.0), I, -ONE]);
        let ad = CPMap::from_fn(2, |b| &conj * b * conj.adjoint());
        assert!(ad.completely_positive);
        let b = Mat::from_row_slice(2, 2, &[ONE, I, C::new(3.0, 0.0), ONE]);
        assert!((ad.apply(&b) - &conj * &b * conj.adjoint()).norm() < 1e-12);
        let comp = ad.compose(&t);
        assert!((comp.apply(&b) - ad.apply(&t.apply(&b))).norm() < 1e-12);
    }

    #[test]
    fn semicircles_convolve() {
        let mut g = rng(1);
        let e1 = CPMap::from_fn(2, |b| b.clone());
        let e2 = CPMap::from_fn(2, |b| Mat::from_diagonal(&b.diagonal()));
        let s1 = semicircular(&MultilinearMap::new(2, 1, e1.op.clone()), 6);
        let s2 = semicircular(&MultilinearMap::new(2, 1, e2.op.clone()), 6);
        let sum = convolve(&s1, &s2).unwrap();
        let want = semicircular(&MultilinearMap::new(2, 1, &e1.op + &e2.op), 6);
        assert!(moments_close(&sum, &want, 1e-12));
        let b0 = crate::sampling::hermitian(&mut g, 2);
        let shifted = convolve(&point_mass(&b0, 6), &s1).unwrap();
        assert!((shifted.cumulants[0].column_value(0) - &b0).norm() < 1e-12);
        for l in 1..6 {
            assert!(shifted.cumulants[l].sub(&s1.cumulants[l]).max_abs() < 1e-12);
        }
        assert!(convolve(&s1, &semicircular_var(1, 1.0, 6)).is_err());
    }

    #[test]
    fn bernoulli_square_is_arcsine() {
        let b = bernoulli_scalar(6);
        let a = convolve(&b, &b).unwrap();
        let m: Vec<f64> = a.moments.iter().map(|x| x.column_value(0)[(0, 0)].re).collect();
        // arcsine on [−2, 2]: m₂ = 2, m₄ = 6, m₆ = 20
        assert!((m[1] - 2.0).abs() < 1e-12 && (m[3] - 6.0).abs() < 1e-12 && (m[5] - 20.0).abs() < 1e-11);
        assert!(m[0].abs() < 1e-14 && m[2].abs() < 1e-14);
    }

    #[test]
    fn id_verdicts() {
        let s = semicircular_var(2, 1.0, 6);
        assert!(is_infinitely_divisible(&s, 3, 1e-10).unwrap().pass);
        let b = is_infinitely_divisible(&bernoulli_scalar(6), 3, 1e-10).unwrap();
        assert!(!b.pass && b.gram_min_eig <= -0.5);
        let mut g = rng(2);
        let p = point_mass(&crate::sampling::hermitian(&mut g, 2), 6);
        let r = is_infinitely_divisible(&p, 3, 1e-10).unwrap();
        assert!(r.pass && r.gram_min_eig.abs() < 1e-12);
        assert!(matches!(
            is_infinitely_divisible(&s.truncate(4), 3, 1e-10),
            Err(Error::InsufficientOrder { needed: 6, available: 4 })
        ));
    }

    #[test]
    fn hankel_agrees_on_scalars() {
        // semicircle, Bernoulli, point mass, free Poisson(λ = 2)
        let poisson: Vec<MultilinearMap> =
            (0..6).map(|l| MultilinearMap::new(1, l, Mat::from_element(1, 1, C::new(2.0, 0.0)))).collect();
        let fixtures = vec![
            semicircular_var(1, 1.0, 6),
            bernoulli_scalar(6),
            point_mass(&Mat::from_element(1, 1, C::new(0.7, 0.0)), 6),
            Distribution::from_cumulants(poisson, (1.0 + 2f64.sqrt()).powi(2), false),
        ];
        for mu in fixtures {
            let kappa: Vec<f64> = mu.cumulants.iter().map(|c| c.column_value(0)[(0, 0)].re).collect();
            let hankel = scalar_hankel_min_eig(&kappa, 2) >= -1e-10;
            assert_eq!(is_infinitely_divisible(&mu, 2, 1e-10).unwrap().pass, hankel);
        }
    }

    #[test]
    fn semigroup_laws() {
        let mut g = rng(6);
        let eta = CPMap::from_fn(2, |b| {
            let a = Mat::from_row_slice(2, 2, &[ONE, C::new(0.5, 0.), C::new(0.5, 0.), C::new(2.0, 0.)]);
            &a * b * &a
        });
        let mu = convolve(
            &semicircular(&MultilinearMap::new(2, 1, eta.op.clone()), 6),
            &point_mass(&crate::sampling::hermitian(&mut g, 2), 6),
        )
        .unwrap();
        assert_eq!(semigroup_apply(&mu, &CPMap::identity(2)).unwrap(), mu);
        let half = semigroup_apply(&mu, &CPMap::scaled(2, 0.5)).unwrap();
        assert!(moments_close(&convolve(&half, &half).unwrap(), &mu, 1e-9));
        let r1 = CPMap::from_fn(2, |b| Mat::from_diagonal(&b.diagonal()));
        let r2 = eta.clone();
        let two_step = semigroup_apply(&semigroup_apply(&mu, &r1).unwrap(), &r2).unwrap();
        let one_step = semigroup_apply(&mu, &r2.compose(&r1)).unwrap();
        for (a, b) in two_step.cumulants.iter().zip(&one_step.cumulants) {
            assert!(a.sub(b).max_abs() < 1e-12);
        }
        assert!(is_infinitely_divisible(&two_step, 3, 1e-10).unwrap().pass);
        assert!(matches!(semigroup_apply(&mu, &transpose_map(2)), Err(Error::NotCP(_))));
        assert!(matches!(
            semigroup_apply(&bernoulli_scalar(6), &CPMap::identity(1)),
            Err(Error::NotInfinitelyDivisible(_))
        ));
        let s = semicircular(&MultilinearMap::new(2, 1, eta.op.clone()), 6);
        let pushed = semigroup_apply(&s, &r1).unwrap();
        let want = semicircular(&MultilinearMap::new(2, 1, &r1.op * &eta.op), 6);
        assert!(moments_close(&pushed, &want, 1e-12));
    }

    #[test]
    fn roots() {
        let s = semicircular_var(2, 1.0, 6);
        assert_eq!(convolution_root(&s, 1).unwrap(), s);
        let q = convolution_root(&s, 4).unwrap();
        assert!(moments_close(&q, &semicircular_var(2, 0.25, 6), 1e-12));
        // true bound 2·‖η(1)‖^{1/2} = 1; the unit-sum norm overestimates for d > 1
        assert!(q.bound >= 1.0 - 1e-12 && q.bound <= 2.0 + 1e-12);
        let mut g = rng(4);
        let eta = random_map(&mut g, 2, 1, 1.0);
        let cp = CPMap::new(2, eta.op.clone()).unwrap();
        let eta = if cp.completely_positive {
            eta
        } else {
            // η(b) = v b v* + diag(b) is completely positive
            let v = crate::sampling::gaussian(&mut g, 2, 2);
            MultilinearMap::new(2, 1, CPMap::from_fn(2, |b| &v * b * v.adjoint() + Mat::from_diagonal(&b.diagonal())).op)
        };
        let mu = convolve(&semicircular(&eta, 6), &point_mass(&crate::sampling::hermitian(&mut g, 2), 6)).unwrap();
        let r = convolution_root(&mu, 3).unwrap();
        let back = convolve(&convolve(&r, &r).unwrap(), &r).unwrap();
        assert!(moments_close(&back, &mu, 1e-9));
        assert!(convolution_root(&bernoulli_scalar(6), 2).is_err());
    }

    #[test]
    fn phi_extension() {
        let one = LevelMatrix::identity(1, 1);
        let pts: Vec<LevelMatrix> = [C::new(0.0, 0.5), C::new(1.0, 0.5), C::new(-2.0, 0.5)]
            .iter()
            .map(|&z| one.scale(z))
            .collect();
        let s = phi_extension_check(&semicircular_var(1, 1.0, 6), &pts, 1e-10).unwrap();
        assert!(s.infinitely_divisible && s.extends);
        for (p, b) in s.points.iter().zip(&pts) {
            // φ(z) = 1/z
            assert!((p.phi_norm - 1.0 / b.mat[(0, 0)].norm()).abs() < 1e-12);
        }
        let b0 = Mat::from_element(1, 1, C::new(0.3, 0.0));
        let pm = phi_extension_check(&point_mass(&b0, 6), &pts, 1e-10).unwrap();
        assert!(pm.extends && pm.points.iter().all(|p| (p.phi_norm - 0.3).abs() < 1e-12));
        // at the branch point 2i and below it
        for z in [C::new(0.0, 2.0), C::new(0.0, 0.5)] {
            let bern = phi_extension_check(&bernoulli_scalar(6), &[one.scale(z)], 1e-10).unwrap();
            assert!(!bern.infinitely_divisible && !bern.extends);
            assert_eq!(bern.witness, Some(0));
        }
    }

    #[test]
    fn bernoulli_phi_far_from_branch_point() {
        // φ(z) = (−z + √(z² + 4))/2 is analytic away from ±2i
        let z = C::new(0.0, 5.0);
        let b = LevelMatrix::identity(1, 1).scale(z);
        let rep = phi_extension_check(&bernoulli_scalar(6), &[b], 1e-10).unwrap();
        let want = (-z + (z * z + 4.0).sqrt()) / 2.0;
        assert!(rep.points[0].certified);
        assert!((rep.points[0].phi_norm - want.norm()).abs() < 1e-9);
        assert!(rep.points[0].im_phi_max < 0.0);
    }

    #[test]
    fn cpmap_json() {
        let t = transpose_map(2);
        let s = serde_json::to_vec(&t.to_json()).unwrap();
        assert_eq!(CPMap::parse(&s).unwrap(), t);
        assert!(CPMap::parse(b"{\"d\":2,\"op_re\":[[1]],\"op_im\":[[0]]}").is_err());
    }
}
