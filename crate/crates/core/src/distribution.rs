//! B-valued distributions: moment and cumulant data, matrix-model
//! realizations, positivity certificates and standard fixtures.

use serde::{Deserialize, Serialize};

use crate::algebra::{
    from_nested, invert, op_norm, to_nested, unit, BElement, LevelMatrix, Mat, C, ONE, ZERO,
};
use crate::error::{Error, Result};
use crate::gram::{gram_min_eig, reduced_basis, MonomialFunctional};
use crate::ncseries::{MultilinearMap, MultilinearMapJson, NCSeries, MAX_ARITY};
use crate::partitions;
use crate::sampling::{rng, unit_norm};

/// Operator model for the variable X inside M_d ⊗ M_m.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Self-adjoint dm×dm matrix, index (r, s) ↦ r·m + s.
    Dense(Mat),
    /// a = Σ_s A_s ⊗ e_ss: one self-adjoint d×d block per s.
    Commuting(Vec<Mat>),
}

/// X realized as a self-adjoint a ∈ M_d ⊗ M_m with E = id_d ⊗ ω,
/// ω(Y) = Σ_s w_s Y_ss.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub d: usize,
    pub m: usize,
    pub model: Model,
    pub weights: Vec<f64>,
}

fn hermitian_defect(a: &Mat) -> f64 {
    (a - a.adjoint()).iter().fold(0.0, |m, z| m.max(z.norm()))
}

impl Realization {
    pub fn new(d: usize, m: usize, a: Mat) -> Result<Self> {
        Self::weighted(d, m, a, vec![1.0 / m as f64; m])
    }

    pub fn weighted(d: usize, m: usize, a: Mat, weights: Vec<f64>) -> Result<Self> {
        if d == 0 || m == 0 || a.nrows() != d * m || a.ncols() != d * m {
            return Err(Error::DimensionMismatch(format!("a must be {0}×{0}", d * m)));
        }
        if hermitian_defect(&a) > 1e-12 * (1.0 + op_norm(&a)) {
            return Err(Error::DomainError("realization must be self-adjoint".into()));
        }
        check_weights(&weights, m)?;
        let model = match commuting_parts(d, m, &a) {
            Some(parts) => Model::Commuting(parts),
            None => Model::Dense(a),
        };
        Ok(Self { d, m, model, weights })
    }

    pub fn commuting(parts: Vec<Mat>, weights: Vec<f64>) -> Result<Self> {
        let m = parts.len();
        if m == 0 {
            return Err(Error::DimensionMismatch("no blocks".into()));
        }
        let d = parts[0].nrows();
        for p in &parts {
            if p.nrows() != d || p.ncols() != d || hermitian_defect(p) > 1e-12 * (1.0 + op_norm(p)) {
                return Err(Error::DomainError("blocks must be self-adjoint d×d".into()));
            }
        }
        check_weights(&weights, m)?;
        Ok(Self { d, m, model: Model::Commuting(parts), weights })
    }

    /// Dense dm×dm matrix of the model.
    pub fn a(&self) -> Mat {
        match &self.model {
            Model::Dense(a) => a.clone(),
            Model::Commuting(parts) => {
                let (d, m) = (self.d, self.m);
                let mut a = Mat::zeros(d * m, d * m);
                for (s, p) in parts.iter().enumerate() {
                    for r in 0..d {
                        for c in 0..d {
                            a[(r * m + s, c * m + s)] = p[(r, c)];
                        }
                    }
                }
                a
            }
        }
    }

    /// ‖a‖.
    pub fn norm(&self) -> f64 {
        match &self.model {
            Model::Dense(a) => op_norm(a),
            Model::Commuting(parts) => parts.iter().map(op_norm).fold(0.0, f64::max),
        }
    }

    /// (id ⊗ E) on a matrix of size k·m with index p·m + s.
    pub fn expect(&self, big: &Mat) -> Mat {
        let k = big.nrows() / self.m;
        let m = self.m;
        Mat::from_fn(k, k, |p, q| {
            (0..m).map(|s| big[(p * m + s, q * m + s)] * self.weights[s]).sum()
        })
    }

    /// ω-weighted sum of f(A_s, s) for commuting models; None otherwise.
    fn sum_parts(&self, f: impl Fn(&Mat) -> Option<Mat>) -> Option<Option<Mat>> {
        let Model::Commuting(parts) = &self.model else { return None };
        let mut acc: Option<Mat> = None;
        for (p, w) in parts.iter().zip(&self.weights) {
            let Some(v) = f(p) else { return Some(None) };
            let v = v.map(|z| z * *w);
            acc = Some(match acc {
                Some(a) => a + v,
                None => v,
            });
        }
        Some(acc)
    }

    /// (id_n ⊗ E)[(b − a ⊗ 1_n)⁻¹].
    pub fn resolvent(&self, b: &LevelMatrix) -> Result<LevelMatrix> {
        let n = b.n();
        if let Some(r) = self.sum_parts(|p| invert(&(&b.mat - Mat::identity(n, n).kronecker(p)))) {
            return r.map(|m| LevelMatrix::new(self.d, m)).ok_or(Error::SingularResolvent);
        }
        let big = b.mat.kronecker(&Mat::identity(self.m, self.m))
            - Mat::identity(n, n).kronecker(&self.a());
        let inv = invert(&big).ok_or(Error::SingularResolvent)?;
        Ok(LevelMatrix::new(self.d, self.expect(&inv)))
    }

    /// (id_n ⊗ E)[b(1 − (a ⊗ 1_n) b)⁻¹], which equals G(b⁻¹) and is defined
    /// near b = 0.
    pub fn h_value(&self, b: &LevelMatrix) -> Result<LevelMatrix> {
        let n = b.n();
        let k = b.mat.nrows();
        if let Some(r) = self.sum_parts(|p| {
            let amp = Mat::identity(n, n).kronecker(p);
            invert(&(Mat::identity(k, k) - amp * &b.mat)).map(|inv| &b.mat * inv)
        }) {
            return r.map(|m| LevelMatrix::new(self.d, m)).ok_or(Error::SingularResolvent);
        }
        let bb = b.mat.kronecker(&Mat::identity(self.m, self.m));
        let amp = Mat::identity(n, n).kronecker(&self.a());
        let km = k * self.m;
        let inv = invert(&(Mat::identity(km, km) - amp * &bb)).ok_or(Error::SingularResolvent)?;
        Ok(LevelMatrix::new(self.d, self.expect(&(bb * inv))))
    }

    /// E(a (b₁ ⊗ 1) a ⋯ (b_k ⊗ 1) a).
    pub fn moment(&self, args: &[BElement]) -> BElement {
        match &self.model {
            Model::Commuting(parts) => {
                let mut acc = Mat::zeros(self.d, self.d);
                for (p, w) in parts.iter().zip(&self.weights) {
                    let mut cur = p.clone();
                    for b in args {
                        cur = cur * b * p;
                    }
                    acc += cur.map(|z| z * *w);
                }
                acc
            }
            Model::Dense(a) => {
                let id = Mat::identity(self.m, self.m);
                let mut cur = a.clone();
                for b in args {
                    cur = cur * b.kronecker(&id) * a;
                }
                self.expect(&cur)
            }
        }
    }

    /// Moment maps m_ℓ, ℓ = 1..=L.
    pub fn moments(&self, order: usize) -> Vec<MultilinearMap> {
        (1..=order)
            .map(|l| {
                MultilinearMap::from_units(self.d, l - 1, |a| {
                    let args: Vec<BElement> = a.iter().map(|&x| unit(self.d, x)).collect();
                    self.moment(&args)
                })
            })
            .collect()
    }
}

fn check_weights(w: &[f64], m: usize) -> Result<()> {
    let sum: f64 = w.iter().sum();
    if w.len() != m || w.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::DomainError("weights must be a probability vector of length m".into()));
    }
    Ok(())
}

fn commuting_parts(d: usize, m: usize, a: &Mat) -> Option<Vec<Mat>> {
    for r in 0..d * m {
        for c in 0..d * m {
            if r % m != c % m && a[(r, c)] != ZERO {
                return None;
            }
        }
    }
    Some((0..m).map(|s| Mat::from_fn(d, d, |r, c| a[(r * m + s, c * m + s)])).collect())
}

/// Truncated B-valued distribution. `moments[ℓ−1]` is the arity-(ℓ−1) map
/// (b₁, …) ↦ μ(X b₁ X ⋯ b_{ℓ−1} X); `cumulants` is indexed the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub d: usize,
    pub order: usize,
    /// Bound constant M.
    pub bound: f64,
    pub moments: Vec<MultilinearMap>,
    pub cumulants: Vec<MultilinearMap>,
    pub realization: Option<Realization>,
    /// Cumulants beyond `order` are known to vanish.
    pub finite_cumulants: bool,
}

impl Distribution {
    pub fn from_moments(moments: Vec<MultilinearMap>, bound: f64) -> Self {
        let cumulants = partitions::cumulants_from_moments(&moments);
        Self {
            d: moments[0].d,
            order: moments.len(),
            bound,
            moments,
            cumulants,
            realization: None,
            finite_cumulants: false,
        }
    }

    pub fn from_cumulants(cumulants: Vec<MultilinearMap>, bound: f64, finite: bool) -> Self {
        let moments = partitions::moments_from_cumulants(&cumulants);
        Self {
            d: cumulants[0].d,
            order: cumulants.len(),
            bound,
            moments,
            cumulants,
            realization: None,
            finite_cumulants: finite,
        }
    }

    /// Moments of a matrix model to order L, with M = ‖a‖.
    pub fn from_realization(r: Realization, order: usize) -> Self {
        let mut mu = Self::from_moments(r.moments(order), r.norm());
        mu.realization = Some(r);
        mu
    }

    /// μ(X b₁ X ⋯ b_k X).
    pub fn moment(&self, args: &[BElement]) -> BElement {
        self.moments[args.len()].apply(args)
    }

    /// h(w) = Σ w μ((X w)^k), i.e. G(b) = h(b⁻¹); order L + 1.
    pub fn h_series(&self) -> NCSeries {
        h_from_moments(&self.moments)
    }

    pub fn truncate(&self, order: usize) -> Self {
        let mut mu = self.clone();
        mu.order = order.min(self.order);
        mu.moments.truncate(mu.order);
        mu.cumulants.truncate(mu.order);
        mu.finite_cumulants = self.finite_cumulants && order >= self.order;
        mu
    }
}

impl MonomialFunctional for Distribution {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, c: &[BElement]) -> BElement {
        let n = c.len() - 1;
        if n == 0 {
            return c[0].clone();
        }
        &c[0] * self.moment(&c[1..n]) * &c[n]
    }
}

/// H₁ = id and H_k(x₁, …, x_k) = x₁·m_{k−1}(x₂, …, x_{k−1})·x_k.
pub fn h_from_moments(moments: &[MultilinearMap]) -> NCSeries {
    let d = moments[0].d;
    let id = MultilinearMap::identity(d);
    let mut coeffs = vec![MultilinearMap::zero(d, 0), id.clone()];
    for m in moments {
        coeffs.push(id.product(m).product(&id));
    }
    NCSeries::new(d, coeffs)
}

/// Cumulants obtained from compositional inversion of the h-series: with
/// k = h^{⟨−1⟩} and R(w) = Σ_j c^{(j+1)}(w, …, w), the relation
/// w·R(w)·k(w) = w − k(w) is solved degree by degree.
pub fn cumulants_via_series_inversion(moments: &[MultilinearMap]) -> Result<Vec<MultilinearMap>> {
    let d = moments[0].d;
    let order = moments.len();
    let h = h_from_moments(moments);
    let k = h.comp_inverse()?;
    let id = MultilinearMap::identity(d);
    let one = Mat::identity(d, d);
    let mut r: Vec<MultilinearMap> = Vec::with_capacity(order);
    for j in 0..order {
        let n = j + 2;
        let mut q = k.coeffs[n].scale(-ONE);
        for (jp, rj) in r.iter().enumerate() {
            q = q.sub(&id.product(rj).product(&k.coeffs[n - 1 - jp]));
        }
        r.push(q.fix_slot(n - 1, &one).fix_slot(0, &one));
    }
    Ok(r)
}

/// Result of [`certify_sigma0`].
#[derive(Debug, Clone, Serialize)]
pub struct Sigma0Report {
    pub gram_min_eig: f64,
    pub identity_defect: f64,
    pub empirical_bound: f64,
    pub pass: bool,
}

/// Largest observed ‖f(b₁ X b₂ ⋯ X b_{n+1})‖^{1/n} over seeded unit-norm
/// samples, n = 1..=max_n.
pub fn empirical_bound(f: &dyn MonomialFunctional, max_n: usize, samples: usize, seed: u64) -> f64 {
    let d = f.dim();
    let mut g = rng(seed);
    let mut best: f64 = 0.0;
    for n in 1..=max_n {
        for _ in 0..samples {
            let c: Vec<BElement> = (0..=n).map(|_| unit_norm(&mut g, d)).collect();
            best = best.max(op_norm(&f.eval(&c)).powf(1.0 / n as f64));
        }
    }
    best
}

/// Positivity of the Gram matrix over monomials of degree ≤ D, μ|_B = id and
/// the empirical bound constant.
pub fn certify_sigma0(mu: &Distribution, degree: usize, tol: f64) -> Result<Sigma0Report> {
    if 2 * degree > mu.order {
        return Err(Error::InsufficientOrder { needed: 2 * degree, available: mu.order });
    }
    let d = mu.d;
    let identity_defect = (0..d * d)
        .map(|a| op_norm(&(mu.eval(&[unit(d, a)]) - unit(d, a))))
        .fold(0.0, f64::max);
    let gram = gram_min_eig(mu, &reduced_basis(d, degree, true));
    let emp = empirical_bound(mu, mu.order, 20, 0);
    Ok(Sigma0Report {
        gram_min_eig: gram,
        identity_defect,
        empirical_bound: emp,
        pass: gram >= -tol && identity_defect == 0.0,
    })
}

// ---------------------------------------------------------------- fixtures

pub const DEFAULT_ORDER: usize = 6;

/// Semicircular distribution with variance map η: c^{(2)} = η, all other
/// cumulants zero, M = 2‖η(1)‖^{1/2}.
pub fn semicircular(eta: &MultilinearMap, order: usize) -> Distribution {
    let d = eta.d;
    let mut cum: Vec<MultilinearMap> = (0..order).map(|l| MultilinearMap::zero(d, l)).collect();
    if order >= 2 {
        cum[1] = eta.clone();
    }
    let bound = 2.0 * op_norm(&eta.apply(&[Mat::identity(d, d)])).sqrt();
    Distribution::from_cumulants(cum, bound, true)
}

/// Semicircular with η = v·id.
pub fn semicircular_var(d: usize, v: f64, order: usize) -> Distribution {
    semicircular(&MultilinearMap::identity(d).scale(C::new(v, 0.0)), order)
}

/// δ_{b₀}: first cumulant b₀, the rest zero.
pub fn point_mass(b0: &BElement, order: usize) -> Distribution {
    let d = b0.nrows();
    let mut cum: Vec<MultilinearMap> = (0..order).map(|l| MultilinearMap::zero(d, l)).collect();
    cum[0] = MultilinearMap::constant(b0);
    let mut mu = Distribution::from_cumulants(cum, op_norm(b0), true);
    if hermitian_defect(b0) == 0.0 {
        mu.realization = Realization::commuting(vec![b0.clone()], vec![1.0]).ok();
    }
    mu
}

/// Scalar symmetric Bernoulli, X = diag(1, −1) with the normalized trace.
pub fn bernoulli_scalar(order: usize) -> Distribution {
    let one = Mat::from_element(1, 1, ONE);
    let r = Realization::commuting(vec![one.clone(), -one], vec![0.5, 0.5]).unwrap();
    Distribution::from_realization(r, order)
}

/// Number of Gauss nodes per variable in the independent-diagonal model.
pub const QUADRATURE_NODES: usize = 32;

fn catalan_moment(p: usize) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    (0..p / 2).fold(1.0, |c, k| c * 2.0 * (2 * k + 1) as f64 / (k + 2) as f64)
}

/// d = 2 variable a = diag(s₁, s₂) with s₁, s₂ classically independent
/// standard semicirculars and E = expectation ⊗ id₂. Moments come from the
/// path sum over index sequences; the attached realization is a product
/// Gauss quadrature of the semicircle law, exact for moments of degree < 64.
pub fn independent_diagonal(order: usize) -> Distribution {
    let moments: Vec<MultilinearMap> = (1..=order)
        .map(|l| MultilinearMap::from_units(2, l - 1, |a| {
            let args: Vec<BElement> = a.iter().map(|&x| unit(2, x)).collect();
            path_sum_moment(&args)
        }))
        .collect();
    let mut mu = Distribution::from_moments(moments, 2.0);
    mu.realization = Some(quadrature_model(QUADRATURE_NODES));
    mu
}

/// E(a b₁ a ⋯ b_k a) for a = diag(s₁, s₂), summing over index paths
/// i₀ → … → i_k with E(s₁^p s₂^q) = C_{p/2} C_{q/2}.
pub fn path_sum_moment(args: &[BElement]) -> BElement {
    let k = args.len();
    let mut out = Mat::zeros(2, 2);
    for path in 0..(1usize << (k + 1)) {
        let idx: Vec<usize> = (0..=k).map(|t| (path >> (k - t)) & 1).collect();
        let mut coef = ONE;
        for t in 0..k {
            coef *= args[t][(idx[t], idx[t + 1])];
        }
        if coef == ZERO {
            continue;
        }
        let p = idx.iter().filter(|&&i| i == 0).count();
        let e = catalan_moment(p) * catalan_moment(k + 1 - p);
        out[(idx[0], idx[k])] += coef * e;
    }
    out
}

fn quadrature_model(n: usize) -> Realization {
    let theta = |k: usize| k as f64 * std::f64::consts::PI / (n + 1) as f64;
    let nodes: Vec<f64> = (1..=n).map(|k| 2.0 * theta(k).cos()).collect();
    let w: Vec<f64> = (1..=n).map(|k| 2.0 / (n + 1) as f64 * theta(k).sin().powi(2)).collect();
    let mut parts = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut p = Mat::zeros(2, 2);
            p[(0, 0)] = C::new(nodes[i], 0.0);
            p[(1, 1)] = C::new(nodes[j], 0.0);
            parts.push(p);
            weights.push(w[i] * w[j]);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|x| *x /= total);
    Realization::commuting(parts, weights).unwrap()
}

/// Random self-adjoint matrix model with ‖a‖ = `norm`, uniform weights.
pub fn random_realization(d: usize, m: usize, norm: f64, seed: u64) -> Realization {
    let mut g = rng(seed);
    let h = crate::sampling::hermitian(&mut g, d * m);
    let s = norm / op_norm(&h);
    let mut a = h.map(|z| z * s);
    // exact self-adjointness after scaling
    a = (&a + a.adjoint()).map(|z| z * 0.5);
    Realization::new(d, m, a).unwrap()
}

/// Parameters accepted by [`fixture`].
#[derive(Debug, Clone)]
pub struct FixtureParams {
    pub order: usize,
    pub d: usize,
    pub var: f64,
    pub b0: Option<BElement>,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self { order: DEFAULT_ORDER, d: 1, var: 1.0, b0: None }
    }
}

pub fn fixture(name: &str, p: &FixtureParams) -> Result<Distribution> {
    match name {
        "semicircular" => Ok(semicircular_var(p.d, p.var, p.order)),
        "point_mass" => {
            let b0 = p.b0.clone().unwrap_or_else(|| Mat::zeros(p.d, p.d));
            Ok(point_mass(&b0, p.order))
        }
        "bernoulli_scalar" | "bernoulli" => Ok(bernoulli_scalar(p.order)),
        "independent_diagonal" => Ok(independent_diagonal(p.order)),
        other => Err(Error::UnknownFixture(other.into())),
    }
}

// -------------------------------------------------------------------- JSON

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizationJson {
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_re: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_im: Option<Vec<Vec<f64>>>,
    /// Compact form for commuting models: m blocks of size d×d.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks_re: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks_im: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionJson {
    pub d: usize,
    #[serde(rename = "L")]
    pub order: usize,
    #[serde(rename = "M")]
    pub bound: f64,
    #[serde(default)]
    pub moments: Vec<MultilinearMapJson>,
    #[serde(default)]
    pub cumulants: Vec<MultilinearMapJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realization: Option<RealizationJson>,
    #[serde(default)]
    pub finite_cumulants: bool,
}

const MAX_M: usize = 4096;

impl Realization {
    pub fn to_json(&self) -> RealizationJson {
        let uniform = self.weights.iter().all(|w| (w - 1.0 / self.m as f64).abs() < 1e-15);
        let weights = (!uniform).then(|| self.weights.clone());
        match &self.model {
            Model::Dense(a) => {
                let (re, im) = to_nested(a);
                RealizationJson { m: self.m, a_re: Some(re), a_im: Some(im), blocks_re: None, blocks_im: None, weights }
            }
            Model::Commuting(parts) => {
                let (re, im): (Vec<_>, Vec<_>) = parts.iter().map(to_nested).unzip();
                RealizationJson { m: self.m, a_re: None, a_im: None, blocks_re: Some(re), blocks_im: Some(im), weights }
            }
        }
    }

    pub fn from_json(d: usize, j: &RealizationJson) -> Result<Self> {
        if j.m == 0 || j.m > MAX_M || d * j.m > 2048 {
            return Err(Error::Parse(format!("unsupported m = {}", j.m)));
        }
        let weights = j.weights.clone().unwrap_or_else(|| vec![1.0 / j.m as f64; j.m]);
        let wrap = |e: Error| Error::Parse(e.to_string());
        match (&j.a_re, &j.a_im, &j.blocks_re, &j.blocks_im) {
            (Some(re), Some(im), None, None) => {
                Self::weighted(d, j.m, from_nested(re, im, d * j.m, d * j.m)?, weights).map_err(wrap)
            }
            (None, None, Some(re), Some(im)) => {
                if re.len() != j.m || im.len() != j.m {
                    return Err(Error::Parse("need m blocks".into()));
                }
                let parts = re
                    .iter()
                    .zip(im)
                    .map(|(r, i)| from_nested(r, i, d, d))
                    .collect::<Result<Vec<_>>>()?;
                Self::commuting(parts, weights).map_err(wrap)
            }
            _ => Err(Error::Parse("realization needs a_re/a_im or blocks_re/blocks_im".into())),
        }
    }
}

impl Distribution {
    pub fn to_json(&self) -> DistributionJson {
        DistributionJson {
            d: self.d,
            order: self.order,
            bound: self.bound,
            moments: self.moments.iter().map(|m| m.to_json()).collect(),
            cumulants: self.cumulants.iter().map(|m| m.to_json()).collect(),
            realization: self.realization.as_ref().map(|r| r.to_json()),
            finite_cumulants: self.finite_cumulants,
        }
    }

    /// Accepts moments, cumulants or both; a missing list is computed from
    /// the other one.
    pub fn from_json(j: &DistributionJson) -> Result<Self> {
        if j.d == 0 || j.d > 4 || j.order == 0 || j.order > MAX_ARITY {
            return Err(Error::Parse(format!("unsupported d = {}, L = {}", j.d, j.order)));
        }
        if (j.d * j.d).pow(j.order as u32 - 1) > crate::ncseries::MAX_COLUMNS {
            return Err(Error::Parse("order too large for this d".into()));
        }
        if !j.bound.is_finite() || j.bound < 0.0 {
            return Err(Error::Parse("M must be finite and non-negative".into()));
        }
        let maps = |list: &[MultilinearMapJson]| -> Result<Vec<MultilinearMap>> {
            if list.len() != j.order {
                return Err(Error::Parse(format!("expected {} maps, got {}", j.order, list.len())));
            }
            list.iter()
                .enumerate()
                .map(|(l, m)| {
                    if m.ell != l {
                        return Err(Error::Parse(format!("map {l} has arity {}", m.ell)));
                    }
                    MultilinearMap::from_json(j.d, m)
                })
                .collect()
        };
        let mut mu = match (j.moments.is_empty(), j.cumulants.is_empty()) {
            (true, true) => return Err(Error::Parse("need moments or cumulants".into())),
            (false, true) => Self::from_moments(maps(&j.moments)?, j.bound),
            (true, false) => Self::from_cumulants(maps(&j.cumulants)?, j.bound, j.finite_cumulants),
            (false, false) => Self {
                d: j.d,
                order: j.order,
                bound: j.bound,
                moments: maps(&j.moments)?,
                cumulants: maps(&j.cumulants)?,
                realization: None,
                finite_cumulants: j.finite_cumulants,
            },
        };
        mu.finite_cumulants = j.finite_cumulants;
        if let Some(r) = &j.realization {
            mu.realization = Some(Realization::from_json(j.d, r)?);
        }
        Ok(mu)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let j: DistributionJson =
            serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json(&j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{matrix_unit, scalar};
    use crate::sampling::{gaussian, hermitian, random_map};
    use rand::Rng;

    fn max_diff(a: &Mat, b: &Mat) -> f64 {
        (a - b).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    fn maps_close(a: &[MultilinearMap], b: &[MultilinearMap], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.sub(y).max_abs() < tol)
    }

    fn scalar_values(maps: &[MultilinearMap]) -> Vec<f64> {
        maps.iter().map(|m| m.op[(0, 0)].re).collect()
    }

    /// Scalar free cumulants from moments by m_n = Σ_s κ_s Σ_{i₁+…+i_s = n−s} m_{i₁}⋯m_{i_s}.
    fn scalar_cumulants(m: &[f64]) -> Vec<f64> {
        let n_max = m.len();
        let mom = |k: usize| if k == 0 { 1.0 } else { m[k - 1] };
        // conv[s][t] = Σ over s-tuples summing to t of products of moments
        let mut kappa = vec![0.0; n_max + 1];
        for n in 1..=n_max {
            let mut rest = 0.0;
            for s in 1..n {
                rest += kappa[s] * tuple_sum(s, n - s, &mom);
            }
            kappa[n] = mom(n) - rest;
        }
        kappa[1..].to_vec()
    }

    fn tuple_sum(s: usize, t: usize, mom: &dyn Fn(usize) -> f64) -> f64 {
        if s == 0 {
            return if t == 0 { 1.0 } else { 0.0 };
        }
        (0..=t).map(|i| mom(i) * tuple_sum(s - 1, t - i, mom)).sum()
    }

    fn random_distribution(seed: u64, d: usize, order: usize) -> Distribution {
        let mut g = rng(seed);
        let moments = (0..order).map(|l| random_map(&mut g, d, l, 0.5)).collect();
        Distribution::from_moments(moments, 1.0)
    }

    #[test]
    fn constant_realization_is_deterministic() {
        let mut g = rng(1);
        let b0 = hermitian(&mut g, 2);
        let a = b0.kronecker(&Mat::identity(3, 3));
        let r = Realization::new(2, 3, a).unwrap();
        let b1 = gaussian(&mut g, 2, 2);
        let b2 = gaussian(&mut g, 2, 2);
        let got = r.moment(&[b1.clone(), b2.clone()]);
        assert!(max_diff(&got, &(&b0 * &b1 * &b0 * &b2 * &b0)) < 1e-12);
    }

    #[test]
    fn bernoulli_moments_and_cumulants() {
        let mu = bernoulli_scalar(8);
        let m = scalar_values(&mu.moments);
        assert_eq!(m, vec![0., 1., 0., 1., 0., 1., 0., 1.]);
        let k = scalar_values(&mu.cumulants);
        let expect = scalar_cumulants(&m);
        for (a, b) in k.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((k[1] - 1.0).abs() < 1e-12 && (k[3] + 1.0).abs() < 1e-12);
        // R(z) = (√(1+4z²) − 1)/(2z): κ_{2n} = (−1)^{n−1} C_{n−1}
        assert!((k[5] - 2.0).abs() < 1e-12 && (k[7] + 5.0).abs() < 1e-12);
    }

    #[test]
    fn expectation_is_bimodular_and_unital() {
        let r = random_realization(2, 3, 1.0, 2);
        let mut g = rng(3);
        let big = gaussian(&mut g, 6, 6);
        let (b1, b2) = (gaussian(&mut g, 2, 2), gaussian(&mut g, 2, 2));
        let id = Mat::identity(3, 3);
        let lhs = r.expect(&(b1.kronecker(&id) * &big * b2.kronecker(&id)));
        assert!(max_diff(&lhs, &(&b1 * r.expect(&big) * &b2)) < 1e-12);
        assert!(max_diff(&r.expect(&Mat::identity(6, 6)), &Mat::identity(2, 2)) < 1e-15);
    }

    #[test]
    fn semicircle_moments_are_catalan() {
        let mu = semicircular_var(1, 1.0, 6);
        let m = scalar_values(&mu.moments);
        let catalan = |p: usize| catalan_moment(p);
        for (l, v) in m.iter().enumerate() {
            assert!((v - catalan(l + 1)).abs() < 1e-12);
        }
        assert_eq!(m[1..].iter().map(|x| x.round() as i64).collect::<Vec<_>>(), vec![1, 0, 2, 0, 5]);
    }

    #[test]
    fn point_mass_moments_collapse() {
        let mut g = rng(4);
        let b0 = gaussian(&mut g, 2, 2);
        let mu = point_mass(&b0, 5);
        let args: Vec<Mat> = (0..3).map(|_| gaussian(&mut g, 2, 2)).collect();
        let mut expect = b0.clone();
        for a in &args {
            expect = expect * a * &b0;
        }
        assert!(max_diff(&mu.moment(&args), &expect) < 1e-12);
        let zero = point_mass(&Mat::zeros(2, 2), 4);
        assert!(zero.moments.iter().all(|m| m.is_zero()));
    }

    #[test]
    fn dual_cumulant_routes_agree() {
        for seed in 0..3 {
            let mu = random_distribution(seed, 2, 5);
            let alt = cumulants_via_series_inversion(&mu.moments).unwrap();
            assert!(maps_close(&mu.cumulants, &alt, 1e-10));
            let back = partitions::moments_from_cumulants(&mu.cumulants);
            assert!(maps_close(&back, &mu.moments, 1e-10));
        }
    }

    #[test]
    fn series_inversion_examples() {
        let mut g = rng(5);
        let b0 = gaussian(&mut g, 2, 2);
        let mu = point_mass(&b0, 5);
        let r = cumulants_via_series_inversion(&mu.moments).unwrap();
        assert!(max_diff(&r[0].column_value(0), &b0) < 1e-12);
        assert!(r[1..].iter().all(|c| c.max_abs() < 1e-12));

        let v = 0.7;
        let mu = semicircular_var(1, v, 6);
        let r = cumulants_via_series_inversion(&mu.moments).unwrap();
        let vals = scalar_values(&r);
        for (l, x) in vals.iter().enumerate() {
            let e = if l == 1 { v } else { 0.0 };
            assert!((x - e).abs() < 1e-12, "{l}: {x}");
        }
    }

    #[test]
    fn sigma0_examples() {
        let rep = certify_sigma0(&semicircular_var(2, 1.0, 6), 3, 1e-10).unwrap();
        assert!(rep.pass && rep.gram_min_eig >= -1e-10);

        let neg = Distribution::from_moments(
            vec![MultilinearMap::zero(1, 0), MultilinearMap::identity(1).scale(-ONE)],
            1.0,
        );
        let rep = certify_sigma0(&neg, 1, 1e-10).unwrap();
        assert!(!rep.pass && rep.gram_min_eig <= -1.0);

        let b0 = hermitian(&mut rng(6), 2);
        assert!(certify_sigma0(&point_mass(&b0, 4), 2, 1e-10).unwrap().pass);
        assert_eq!(
            certify_sigma0(&point_mass(&b0, 4), 3, 1e-10).unwrap_err(),
            Error::InsufficientOrder { needed: 6, available: 4 }
        );
    }

    #[test]
    fn realizations_lie_in_sigma0() {
        let mu = Distribution::from_realization(random_realization(2, 3, 1.0, 7), 6);
        let rep = certify_sigma0(&mu, 3, 1e-10).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.empirical_bound <= mu.bound + 1e-12);
    }

    #[test]
    fn moment_and_cumulant_bounds() {
        let mu = Distribution::from_realization(random_realization(2, 3, 1.3, 8), 6);
        let m = mu.bound;
        let mut g = rng(9);
        for _ in 0..200 {
            let n = g.random_range(1..=6usize);
            let c: Vec<Mat> = (0..=n).map(|_| unit_norm(&mut g, 2)).collect();
            assert!(op_norm(&mu.eval(&c)) <= m.powi(n as i32) * (1.0 + 1e-12));
            let l = n - 1;
            let args = &c[..l];
            let cum = mu.cumulants[l].apply(args);
            assert!(op_norm(&cum) <= (4.0 * m).powi(l as i32 + 1));
        }
    }

    #[test]
    fn independent_diagonal_examples() {
        let mu = independent_diagonal(6);
        let b = Mat::from_fn(2, 2, |r, c| C::new(1.0 + r as f64, 2.0 * c as f64 - 0.5));
        let mut expect = Mat::zeros(2, 2);
        expect[(0, 0)] = b[(0, 0)];
        expect[(1, 1)] = b[(1, 1)];
        assert!(max_diff(&mu.moment(&[b]), &expect) < 1e-14);

        let e = |i, j| matrix_unit(2, i, j);
        // E(s₁⁴) = 2, E(s₁ s₂² s₁) = 1, E(s₁ s₂ s₁ s₂) = 1
        assert!((mu.moment(&[e(0, 0), e(0, 0), e(0, 0)])[(0, 0)].re - 2.0).abs() < 1e-14);
        assert!((mu.moment(&[e(0, 1), e(1, 1), e(1, 0)])[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!((mu.moment(&[e(0, 1), e(1, 0), e(0, 1)])[(0, 1)].re - 1.0).abs() < 1e-14);

        // the quadrature model reproduces the path-sum moments
        let r = mu.realization.as_ref().unwrap();
        assert!(maps_close(&r.moments(6), &mu.moments, 1e-12));
        assert!(r.norm() < 2.0);
    }

    #[test]
    fn resolvent_routes_agree_for_commuting_and_dense() {
        let r = quadrature_model(4);
        let dense = Realization::weighted(2, r.m, r.a(), r.weights.clone()).unwrap();
        assert!(matches!(dense.model, Model::Commuting(_)));
        let forced = Realization { model: Model::Dense(r.a()), ..r.clone() };
        let b = crate::sampling::upper_half_plane(&mut rng(10), 2, 2, 0.5);
        let x = r.resolvent(&b).unwrap();
        let y = forced.resolvent(&b).unwrap();
        assert!(max_diff(&x.mat, &y.mat) < 1e-12);
        let hx = r.h_value(&b).unwrap();
        let hy = forced.h_value(&b).unwrap();
        assert!(max_diff(&hx.mat, &hy.mat) < 1e-10);
    }

    #[test]
    fn fixtures_by_name() {
        let p = FixtureParams { d: 2, var: 0.5, ..Default::default() };
        let mu = fixture("semicircular", &p).unwrap();
        assert!((mu.bound - 2.0 * 0.5f64.sqrt()).abs() < 1e-14);
        assert!(mu.finite_cumulants);
        assert_eq!(fixture("cauchy", &p).unwrap_err(), Error::UnknownFixture("cauchy".into()));
        let b0 = scalar(2, C::new(0.5, 0.0));
        let pm = fixture("point_mass", &FixtureParams { b0: Some(b0), d: 2, ..Default::default() }).unwrap();
        assert!(pm.realization.is_some());
    }

    #[test]
    fn json_round_trip_and_rejects() {
        let mu = Distribution::from_realization(random_realization(2, 2, 1.0, 11), 3);
        let bytes = serde_json::to_vec(&mu.to_json()).unwrap();
        assert_eq!(Distribution::parse(&bytes).unwrap(), mu);
        let ind = independent_diagonal(2);
        let bytes = serde_json::to_vec(&ind.to_json()).unwrap();
        assert_eq!(Distribution::parse(&bytes).unwrap(), ind);
        assert!(Distribution::parse(br#"{"d":1,"L":1,"M":1}"#).is_err());
        assert!(Distribution::parse(br#"{"d":1,"L":1,"M":-1,"moments":[{"ell":0,"re":[[0]],"im":[[0]]}]}"#).is_err());
        assert!(Distribution::parse(br#"{"d":1,"L":1,"M":1,"moments":[{"ell":0,"re":[[0]],"im":[[0]]}],"realization":{"m":2,"a_re":[[0,1],[0,0]],"a_im":[[0,0],[0,0]]}}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(6))]

            #[test]
            fn moment_cumulant_round_trip(seed in 0u64..10_000, d in 1usize..3) {
                let mu = random_distribution(seed, d, 6);
                let back = partitions::moments_from_cumulants(&mu.cumulants);
                prop_assert!(maps_close(&back, &mu.moments, 1e-10));
            }

            #[test]
            fn dual_routes_agree(seed in 0u64..10_000) {
                let mu = random_distribution(seed, 2, 5);
                let alt = cumulants_via_series_inversion(&mu.moments).unwrap();
                prop_assert!(maps_close(&mu.cumulants, &alt, 1e-10));
            }
        }
    }
}
