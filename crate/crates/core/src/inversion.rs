//! Inverting F-type maps: Earle–Hamilton fixed points, Newton's method with
//! Kantorovich certificates, the Voiculescu transform and Nevanlinna data.

use nalgebra::DVector;
use serde::Serialize;

use crate::algebra::{half_plane_margin, spectrum_floor, BElement, LevelMatrix, Mat, C};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::gram::{full_basis, gram_min_eig, MonomialFunctional};
use crate::ncseries::{delta_r_eval, FnOracle, MultilinearMap, NCSeries, NcFunction, SeriesInverse};
use crate::transforms::Evaluator;

pub const EH_TOL: f64 = 1e-12;
pub const EH_MAX_ITER: usize = 500;

/// Stopping rule and domain data for [`earle_hamilton`].
#[derive(Debug, Clone, Copy)]
pub struct EhConfig {
    /// Successive-difference tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Constant C of the large-|b| domain: points with margin ≤ 0 are accepted
    /// when spectrum_floor(b) > C.
    pub floor_constant: Option<f64>,
}

impl Default for EhConfig {
    fn default() -> Self {
        Self { tol: EH_TOL, max_iter: EH_MAX_ITER, floor_constant: None }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub w: LevelMatrix,
    pub iterations: usize,
}

/// Solves w + φ(w) = b by iterating w ↦ b − φ(w) from w = b.
pub fn earle_hamilton(phi: &dyn NcFunction, b: &LevelMatrix, cfg: &EhConfig) -> Result<FixedPoint> {
    let margin = half_plane_margin(b);
    let by_margin = margin > 0.0;
    if !by_margin {
        match cfg.floor_constant {
            Some(c) if spectrum_floor(b) > c => {}
            _ => {
                return Err(Error::NoContraction(format!(
                    "margin {margin:.3e} and no large-|b| domain applies"
                )))
            }
        }
    }
    let mut w = b.clone();
    for it in 1..=cfg.max_iter {
        let p = phi.call(&w).map_err(|e| Error::NoContraction(e.to_string()))?;
        let next = b.sub(&p);
        if !next.is_finite() || (by_margin && half_plane_margin(&next) <= 0.0) {
            return Err(Error::NoContraction(format!("iterate {it} left the domain")));
        }
        let diff = next.sub(&w).norm();
        w = next;
        if diff <= cfg.tol {
            return Ok(FixedPoint { w, iterations: it });
        }
    }
    Err(Error::MaxIterations(cfg.max_iter))
}

/// Newton–Kantorovich constants. `t_star_star` is infinite when K = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KantorovichCertificate {
    pub eta: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub h: f64,
    pub t_star: f64,
    pub t_star_star: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl KantorovichCertificate {
    pub fn from_constants(eta: f64, k: f64) -> Self {
        let h = k * eta;
        let s = (1.0 - 2.0 * h).sqrt();
        Self {
            eta,
            k,
            h,
            t_star: 2.0 * eta / (1.0 + s),
            t_star_star: (1.0 + s) / k,
            converged: false,
            iterations: 0,
        }
    }
}

/// The map handed to [`newton_invert`].
pub enum NewtonMap<'a> {
    /// Polynomial map; derivatives are exact and K comes from the coefficient
    /// norms.
    Series(&'a NCSeries),
    /// Analytic map with ‖f(x) − ℓ(x)‖ ≤ `local_bound` on the ball of radius
    /// `radius` around x₀, for some affine ℓ.
    Oracle { f: &'a dyn NcFunction, local_bound: f64, radius: f64 },
}

impl NewtonMap<'_> {
    fn func(&self) -> &dyn NcFunction {
        match self {
            NewtonMap::Series(s) => *s,
            NewtonMap::Oracle { f, .. } => *f,
        }
    }

    /// Size of the corner block used to read off f′(x); exact for any size, so
    /// only the domain of the oracle matters.
    fn corner_scale(&self, x: &LevelMatrix) -> f64 {
        match self {
            NewtonMap::Series(_) => 1.0,
            NewtonMap::Oracle { .. } => 1e-3 * (1.0 + x.norm()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub root: LevelMatrix,
    pub first_iterate: LevelMatrix,
    pub certificate: KantorovichCertificate,
}

pub const NEWTON_MAX_ITER: usize = 60;

fn flatten(x: &LevelMatrix) -> DVector<C> {
    let n = x.mat.nrows();
    DVector::from_fn(n * n, |k, _| x.mat[(k / n, k % n)])
}

fn unflatten(d: usize, n: usize, v: &DVector<C>) -> LevelMatrix {
    LevelMatrix::new(d, Mat::from_fn(n, n, |r, c| v[r * n + c]))
}

/// Matrix of h ↦ f′(x)[h] on the entries of M_n(B), one corner evaluation of
/// f([[x, s·e_pq], [0, x]]) per direction.
pub fn jacobian(f: &dyn NcFunction, x: &LevelMatrix, s: f64) -> Result<Mat> {
    let n = x.mat.nrows();
    let mut j = Mat::zeros(n * n, n * n);
    for p in 0..n {
        for q in 0..n {
            let mut z = Mat::zeros(n, n);
            z[(p, q)] = C::new(s, 0.0);
            let col = delta_r_eval(f, x, x, &z)?;
            for r in 0..n {
                for c in 0..n {
                    j[(r * n + c, p * n + q)] = col[(r, c)] / s;
                }
            }
        }
    }
    Ok(j)
}

/// Σ_{ℓ ≥ 2} ℓ(ℓ−1)·C_ℓ·r^{ℓ−2} with C_ℓ the unit-sum norm bound of T_ℓ; bounds
/// the second derivative on the ball of radius r.
fn second_derivative_bound(s: &NCSeries, r: f64) -> f64 {
    s.coeffs
        .iter()
        .enumerate()
        .skip(2)
        .filter(|(_, c)| !c.is_zero())
        .map(|(l, c)| (l * (l - 1)) as f64 * c.unit_sum_bound() * r.powi(l as i32 - 2))
        .sum()
}

struct Linearization {
    inv: Mat,
    /// Bound on ‖J⁻¹‖ as an operator on (M_n(B), ‖·‖).
    inv_norm: f64,
}

fn linearize(k: &NewtonMap, x: &LevelMatrix) -> Result<Linearization> {
    let j = jacobian(k.func(), x, k.corner_scale(x))?;
    let sv = j.clone().svd(false, false).singular_values;
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
    if !(lo > 1e-14 * hi) || !hi.is_finite() {
        return Err(Error::SingularDerivative);
    }
    let inv = j.try_inverse().ok_or(Error::SingularDerivative)?;
    // ‖v‖_op ≤ ‖v‖_F ≤ √N‖v‖_op for N×N matrices
    let inv_norm = (x.mat.nrows() as f64).sqrt() / lo;
    Ok(Linearization { inv, inv_norm })
}

fn newton_step(k: &NewtonMap, lin: &Linearization, x: &LevelMatrix, target: &LevelMatrix) -> Result<LevelMatrix> {
    let fx = k.func().call(x)?.sub(target);
    Ok(unflatten(x.d, x.mat.nrows(), &(&lin.inv * flatten(&fx))))
}

/// Solves k(x) = target by Newton's method from x₀, after certifying
/// convergence with the Kantorovich constants computed at x₀.
pub fn newton_invert(
    k: &NewtonMap,
    target: &LevelMatrix,
    x0: &LevelMatrix,
    tol: f64,
) -> Result<NewtonResult> {
    let lin0 = linearize(k, x0)?;
    let delta0 = newton_step(k, &lin0, x0, target)?;
    let eta = delta0.norm();
    let rho = 3.0 * eta;
    let lip = match k {
        NewtonMap::Series(s) => second_derivative_bound(s, x0.norm() + rho),
        NewtonMap::Oracle { local_bound, radius, .. } => {
            let denom = radius / 2.0 - 4.0 * rho;
            if denom <= 0.0 {
                return Err(Error::CertificateFailed(f64::INFINITY));
            }
            // Cauchy estimate for f′ on the half ball, then the Lipschitz bound
            2.0 * (local_bound / (radius / 2.0)) / denom
        }
    };
    let mut cert = KantorovichCertificate::from_constants(eta, lin0.inv_norm * lip);
    if !(cert.h <= 0.5) {
        return Err(Error::CertificateFailed(cert.h));
    }
    let first_iterate = x0.sub(&delta0);
    let mut x = x0.clone();
    let mut delta = delta0;
    loop {
        let small = delta.norm() <= tol.max(1e-15 * (1.0 + x.norm()));
        x = x.sub(&delta);
        if small {
            cert.converged = true;
            break;
        }
        cert.iterations += 1;
        if cert.iterations >= NEWTON_MAX_ITER {
            break;
        }
        let lin = linearize(k, &x)?;
        delta = newton_step(k, &lin, &x, target)?;
    }
    Ok(NewtonResult { root: x, first_iterate, certificate: cert })
}

/// R-transform series: arity-ℓ coefficient c^{(ℓ+1)}, so φ(b) = R(b⁻¹).
pub fn r_series(mu: &Distribution) -> NCSeries {
    NCSeries::new(mu.d, mu.cumulants.clone())
}

#[derive(Debug, Clone)]
pub struct PhiValue {
    pub phi: LevelMatrix,
    pub certificate: KantorovichCertificate,
}

/// Newton data for inverting F near x₀: on the ball of radius ε = margin/2,
/// ‖F(x) − x‖ < 4M(1 + 2M/ε).
pub(crate) fn f_newton_bounds(bound: f64, x0: &LevelMatrix) -> Result<(f64, f64)> {
    let eps = half_plane_margin(x0) / 2.0;
    if !(eps > 0.0) {
        return Err(Error::DomainError("Newton start must lie in the upper half-plane".into()));
    }
    Ok((4.0 * bound * (1.0 + 2.0 * bound / eps), eps))
}

/// Solves F(x) = b from `x0` and returns φ(b) = x − b with its certificate.
pub fn voiculescu_eval_from(ev: &Evaluator, b: &LevelMatrix, x0: &LevelMatrix) -> Result<PhiValue> {
    let oracle = FnOracle { d: b.d, f: |x: &LevelMatrix| ev.f(x) };
    let (local_bound, radius) = f_newton_bounds(ev.mu.bound, x0)?;
    let map = NewtonMap::Oracle { f: &oracle, local_bound, radius };
    let res = newton_invert(&map, b, x0, 1e-13 * (1.0 + b.norm()))?;
    Ok(PhiValue { phi: res.root.sub(b), certificate: res.certificate })
}

/// Starting guess b + R(b⁻¹), used when the R-series converges at b⁻¹.
pub fn voiculescu_guess(ev: &Evaluator, b: &LevelMatrix) -> LevelMatrix {
    match b.inverse() {
        Some(bi) if bi.norm() * 4.0 * ev.mu.bound < 1.0 => b.add(&ev.r_series().eval(&bi)),
        _ => b.clone(),
    }
}

/// Certified φ(b): Newton from b + R(b⁻¹), or after continuation from far up
/// the imaginary direction when that start is too crude to certify.
pub fn voiculescu_eval_certified(mu: &Distribution, b: &LevelMatrix) -> Result<PhiValue> {
    let ev = Evaluator::new(mu);
    voiculescu_eval_from(&ev, b, &voiculescu_guess(&ev, b)).or_else(|_| voiculescu_path(&ev, b, 0.0))
}

/// φ(b) = F^{⟨−1⟩}(b) − b.
pub fn voiculescu_eval(mu: &Distribution, b: &LevelMatrix) -> Result<LevelMatrix> {
    Ok(voiculescu_eval_certified(mu, b)?.phi)
}

/// F(b) = α + b − Σ_{ℓ ≥ 1} σ(b⁻¹ X b⁻¹ ⋯ X b⁻¹) with ℓ factors b⁻¹.
#[derive(Debug, Clone)]
pub struct NevanlinnaRep {
    pub alpha: BElement,
    /// Arity-ℓ maps (w₁, …, w_ℓ) ↦ σ(w₁ X w₂ ⋯ X w_ℓ), ℓ = 1, 2, ….
    pub sigma_coeffs: Vec<MultilinearMap>,
    pub gram_min_eig: f64,
    pub valid: bool,
}

struct SigmaFunctional<'a>(&'a [MultilinearMap]);

impl MonomialFunctional for SigmaFunctional<'_> {
    fn dim(&self) -> usize {
        self.0[0].d
    }
    fn eval(&self, c: &[BElement]) -> BElement {
        self.0[c.len() - 1].apply(c)
    }
}

impl NevanlinnaRep {
    /// The F-series reconstructed from (α, σ).
    pub fn f_eval(&self, b: &LevelMatrix) -> Result<LevelMatrix> {
        let d = self.alpha.nrows();
        let bi = b.inverse().ok_or(Error::SingularValue)?;
        let mut coeffs = vec![MultilinearMap::constant(&self.alpha.map(|z| -z))];
        coeffs.extend(self.sigma_coeffs.iter().cloned());
        let s = NCSeries::new(d, coeffs);
        Ok(b.sub(&s.eval(&bi)))
    }
}

pub const NEVANLINNA_DEGREE: usize = 2;

/// (α, σ) from the expansion F(b) = b − Φ(b⁻¹) at infinity: α = −Φ₀ and the
/// σ coefficients are the higher Φ_ℓ.
pub fn nevanlinna_extract(mu: &Distribution, tol: f64) -> Result<NevanlinnaRep> {
    let phi = match mu.h_series().mult_inverse()? {
        SeriesInverse::AtInfinity(phi) => phi,
        SeriesInverse::Series(_) => return Err(Error::SingularLeadingTerm),
    };
    let alpha = phi.coeffs[0].column_value(0).map(|z| -z);
    let defect = (&alpha - alpha.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if defect > tol * (1.0 + alpha.iter().fold(0.0f64, |m, z| m.max(z.norm()))) {
        return Err(Error::NonSelfAdjointAlpha(defect));
    }
    let sigma_coeffs: Vec<MultilinearMap> = phi.coeffs[1..].to_vec();
    let degree = NEVANLINNA_DEGREE.min(sigma_coeffs.len().saturating_sub(1) / 2);
    let gram = if sigma_coeffs.is_empty() {
        0.0
    } else {
        gram_min_eig(&SigmaFunctional(&sigma_coeffs), &full_basis(mu.d, degree))
    };
    Ok(NevanlinnaRep { alpha, sigma_coeffs, gram_min_eig: gram, valid: gram >= -tol })
}

/// Smallest relative step of a continuation segment before giving up.
pub const PATH_MIN_STEP: f64 = 1e-9;

/// Plain Newton for F(x) = w from a nearby root; None unless it settles
/// within a few corrections of the predictor step.
fn newton_polish(map: &NewtonMap, w: &LevelMatrix, x: &LevelMatrix) -> Option<LevelMatrix> {
    let mut x = x.clone();
    let mut first = None;
    for _ in 0..8 {
        let lin = linearize(map, &x).ok()?;
        let delta = newton_step(map, &lin, &x, w).ok()?;
        let step = delta.norm();
        x = x.sub(&delta);
        if !x.is_finite() {
            return None;
        }
        let first = *first.get_or_insert(step);
        if step > 2.0 * first + 1e-12 {
            return None;
        }
        if step <= 1e-10 * (1.0 + x.norm()) {
            return Some(x);
        }
    }
    None
}

/// Follows the root of F(x) = w along the polygon through `nodes`, starting
/// from the root `x` at `nodes[0]`.
pub fn continue_root(ev: &Evaluator, nodes: &[LevelMatrix], x: &LevelMatrix) -> Result<LevelMatrix> {
    let oracle = FnOracle { d: x.d, f: |y: &LevelMatrix| ev.f(y) };
    let map = NewtonMap::Oracle { f: &oracle, local_bound: 0.0, radius: 0.0 };
    let mut x = x.clone();
    for seg in nodes.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let dir = b.sub(a);
        let (mut s, mut h) = (0.0, 1.0 / 16.0);
        while s < 1.0 {
            if h < PATH_MIN_STEP {
                return Err(Error::SingularDerivative);
            }
            let sn = (s + h).min(1.0);
            match newton_polish(&map, &a.add(&dir.scale(C::new(sn, 0.0))), &x) {
                Some(xn) => {
                    x = xn;
                    s = sn;
                    h *= 1.5;
                }
                None => h /= 2.0,
            }
        }
    }
    Ok(x)
}

/// φ(b) by continuation of F^{⟨−1⟩} from b + s + iT down to b + s and then
/// horizontally to b, followed by a certified Newton solve at b.
pub fn voiculescu_path(ev: &Evaluator, b: &LevelMatrix, shift: f64) -> Result<PhiValue> {
    let one = LevelMatrix::identity(b.d, b.n());
    let at = |s: f64, t: f64| b.add(&one.scale(C::new(s, t)));
    let mut t = (8.0 * ev.mu.bound).max(4.0);
    let start = loop {
        let top = at(shift, t);
        match voiculescu_eval_from(ev, &top, &voiculescu_guess(ev, &top)) {
            Ok(v) => break top.add(&v.phi),
            Err(_) if t < 1e6 => t *= 4.0,
            Err(e) => return Err(e),
        }
    };
    let mut nodes = vec![at(shift, t), at(shift, 0.0)];
    if shift != 0.0 {
        nodes.push(b.clone());
    }
    let x = continue_root(ev, &nodes, &start)?;
    voiculescu_eval_from(ev, b, &x)
}

/// Report of [`certify_voiculescu`].
#[derive(Debug, Clone, Serialize)]
pub struct VoiculescuReport {
    pub self_adjoint_defect: f64,
    pub sigma0_gram_min_eig: f64,
    pub sigma0_pass: bool,
    pub id_gram_min_eig: f64,
    pub id_pass: bool,
    /// max ‖φ_μ(b) − R(b⁻¹)‖ over the sample points, when (i) and (ii) pass.
    pub phi_defect: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct VoiculescuCertificate {
    pub report: VoiculescuReport,
    pub distribution: Option<Distribution>,
}

/// max ‖T_ℓ(x_ℓ*, …, x₁*) − T_ℓ(x₁, …, x_ℓ)*‖ over unit tuples.
pub fn self_adjointness_defect(r: &NCSeries) -> f64 {
    let d = r.d;
    let dd = d * d;
    let mut worst: f64 = 0.0;
    for t in &r.coeffs {
        let l = t.ell;
        for col in 0..dd.pow(l as u32) {
            let a = crate::ncseries::digits(col, dd, l);
            let rev = a.iter().rev().fold(0usize, |acc, &x| acc * dd + (x % d) * d + x / d);
            let diff = t.column_value(rev) - t.column_value(col).adjoint();
            worst = worst.max(diff.iter().fold(0.0f64, |m, z| m.max(z.norm())));
        }
    }
    worst
}

pub const VOICULESCU_SAMPLES: usize = 4;

/// Builds μ with the coefficients of R as cumulants (all higher ones zero) and
/// checks μ ∈ Σ₀, infinite divisibility and φ_μ(b) = R(b⁻¹) at sample points.
pub fn certify_voiculescu(r: &NCSeries, degree: usize, tol: f64) -> Result<VoiculescuCertificate> {
    let defect = self_adjointness_defect(r);
    if defect > tol {
        return Err(Error::SelfAdjointnessViolated(defect));
    }
    let d = r.d;
    let degree = degree.max(1);
    let order = r.coeffs.len().max(2 * degree);
    let cum: Vec<MultilinearMap> = (0..order)
        .map(|l| r.coeffs.get(l).cloned().unwrap_or_else(|| MultilinearMap::zero(d, l)))
        .collect();
    let bound = crate::divisibility::derived_bound(&cum);
    let mu = Distribution::from_cumulants(cum, bound, true);
    let s0 = crate::distribution::certify_sigma0(&mu, degree, tol)?;
    let id = crate::divisibility::is_infinitely_divisible(&mu, degree, tol)?;
    let phi_defect = if s0.pass && id.pass {
        let ev = Evaluator::new(&mu);
        let mut g = crate::sampling::rng(0);
        let mut worst: f64 = 0.0;
        for k in 0..VOICULESCU_SAMPLES {
            let b = crate::sampling::upper_half_plane(&mut g, d, 1 + k % 2, 10.0 * (1.0 + bound));
            let phi = voiculescu_eval_from(&ev, &b, &voiculescu_guess(&ev, &b))?.phi;
            let want = ev.r_series().eval(&b.inverse().ok_or(Error::SingularValue)?);
            worst = worst.max(phi.sub(&want).norm());
        }
        Some(worst)
    } else {
        None
    };
    let pass = s0.pass && id.pass && phi_defect.is_some_and(|x| x <= 1e-8);
    let report = VoiculescuReport {
        self_adjoint_defect: defect,
        sigma0_gram_min_eig: s0.gram_min_eig,
        sigma0_pass: s0.pass,
        id_gram_min_eig: id.gram_min_eig,
        id_pass: id.pass,
        phi_defect,
        pass,
    };
    Ok(VoiculescuCertificate { report, distribution: pass.then_some(mu) })
}
