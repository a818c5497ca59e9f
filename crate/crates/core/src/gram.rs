//! Monomials b₀ X b₁ ⋯ X b_k in B⟨X⟩ and Gram matrices of functionals on them.

use rayon::prelude::*;

use crate::algebra::{min_eig_hermitian, unit, BElement, Mat};
use crate::ncseries::digits;

/// Coefficient list [b₀, …, b_k] of b₀ X b₁ X ⋯ X b_k (degree k).
pub type Monomial = Vec<BElement>;

/// A B-valued linear functional on B⟨X⟩, evaluated on monomials.
pub trait MonomialFunctional: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, coeffs: &[BElement]) -> BElement;
}

pub fn adjoint(p: &[BElement]) -> Monomial {
    p.iter().rev().map(|b| b.adjoint()).collect()
}

/// Product P·Q, merging the touching coefficients.
pub fn product(p: &[BElement], q: &[BElement]) -> Monomial {
    let mut out: Monomial = p[..p.len() - 1].to_vec();
    out.push(&p[p.len() - 1] * &q[0]);
    out.extend_from_slice(&q[1..]);
    out
}

fn unit_tuples(d: usize, len: usize) -> impl Iterator<Item = Vec<BElement>> {
    let dd = d * d;
    (0..dd.pow(len as u32)).map(move |c| digits(c, dd, len).into_iter().map(|a| unit(d, a)).collect())
}

/// All e_{α₀} X e_{α₁} ⋯ X e_{α_k}, k ≤ D.
pub fn full_basis(d: usize, degree: usize) -> Vec<Monomial> {
    (0..=degree).flat_map(|k| unit_tuples(d, k + 1)).collect()
}

/// Monomials ending in X: e_{α₀} X ⋯ e_{α_{k−1}} X for 1 ≤ k ≤ D, plus the
/// constant 1 when `with_constant`. For right B-linear functionals the trailing
/// coefficient factors out of the Gram matrix by congruence, so this basis
/// decides positivity as well as the full one.
pub fn reduced_basis(d: usize, degree: usize, with_constant: bool) -> Vec<Monomial> {
    let one = Mat::identity(d, d);
    let mut out = Vec::new();
    if with_constant {
        out.push(vec![one.clone()]);
    }
    for k in 1..=degree {
        for mut t in unit_tuples(d, k) {
            t.push(one.clone());
            out.push(t);
        }
    }
    out
}

/// Block matrix [f(P_i* P_j)]_{i,j}.
pub fn gram_matrix(f: &dyn MonomialFunctional, basis: &[Monomial]) -> Mat {
    let d = f.dim();
    let n = basis.len();
    let adj: Vec<Monomial> = basis.iter().map(|p| adjoint(p)).collect();
    let rows: Vec<Vec<BElement>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| f.eval(&product(&adj[i], &basis[j]))).collect())
        .collect();
    let mut g = Mat::zeros(n * d, n * d);
    for (i, row) in rows.iter().enumerate() {
        for (off, blk) in row.iter().enumerate() {
            let j = i + off;
            g.view_mut((i * d, j * d), (d, d)).copy_from(blk);
            if j != i {
                g.view_mut((j * d, i * d), (d, d)).copy_from(&blk.adjoint());
            }
        }
    }
    g
}

/// Smallest eigenvalue of the Hermitian part of the Gram matrix.
pub fn gram_min_eig(f: &dyn MonomialFunctional, basis: &[Monomial]) -> f64 {
    min_eig_hermitian(&gram_matrix(f, basis))
}
