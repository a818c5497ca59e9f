//! Non-crossing partitions and the nested moment/cumulant sums over them.

use std::sync::OnceLock;

use crate::algebra::{BElement, Mat};
use crate::ncseries::MultilinearMap;

/// Blocks of positions 0..n, each ascending, blocks ordered by first element.
pub type Partition = Vec<Vec<usize>>;

const MEMO_MAX: usize = 12;
static TABLE: [OnceLock<Vec<Partition>>; MEMO_MAX + 1] = [const { OnceLock::new() }; MEMO_MAX + 1];

/// NC(n), memoized for n ≤ 12.
pub fn nc_partitions(n: usize) -> std::borrow::Cow<'static, [Partition]> {
    if n <= MEMO_MAX {
        std::borrow::Cow::Borrowed(TABLE[n].get_or_init(|| build(n)).as_slice())
    } else {
        std::borrow::Cow::Owned(build(n))
    }
}

fn shifted(p: &Partition, by: usize) -> Partition {
    p.iter().map(|b| b.iter().map(|&x| x + by).collect()).collect()
}

// The block containing 0 splits the remaining positions into independent gaps.
fn build(n: usize) -> Vec<Partition> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << (n - 1)) {
        let mut first = vec![0];
        first.extend((1..n).filter(|&k| mask >> (k - 1) & 1 == 1));
        let mut gaps = Vec::new();
        for w in first.windows(2) {
            if w[1] > w[0] + 1 {
                gaps.push((w[0] + 1, w[1] - w[0] - 1));
            }
        }
        let last = *first.last().unwrap();
        if last + 1 < n {
            gaps.push((last + 1, n - last - 1));
        }
        let mut partial: Vec<Partition> = vec![vec![first.clone()]];
        for &(start, len) in &gaps {
            let subs = nc_partitions(len);
            let mut next = Vec::with_capacity(partial.len() * subs.len());
            for p in &partial {
                for s in subs.iter() {
                    let mut q = p.clone();
                    q.extend(shifted(s, start));
                    next.push(q);
                }
            }
            partial = next;
        }
        for mut p in partial {
            p.sort_by_key(|b| b[0]);
            out.push(p);
        }
    }
    out
}

/// Nested evaluation of one partition: the cumulant of each block receives,
/// between consecutive block elements, the interior value of the enclosed gap.
/// `args[k]` sits between X_k and X_{k+1}; `cum[s-1]` is the s-th cumulant.
pub fn nested_eval(p: &Partition, args: &[BElement], cum: &[MultilinearMap]) -> BElement {
    let n = args.len() + 1;
    let mut owner = vec![0; n];
    for (bi, b) in p.iter().enumerate() {
        for &x in b {
            owner[x] = bi;
        }
    }
    interval(p, &owner, 0, n - 1, args, cum)
}

fn interval(
    p: &Partition,
    owner: &[usize],
    lo: usize,
    hi: usize,
    args: &[BElement],
    cum: &[MultilinearMap],
) -> BElement {
    let block = &p[owner[lo]];
    let mut inner = Vec::with_capacity(block.len() - 1);
    for w in block.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v == u + 1 {
            inner.push(args[u].clone());
        } else {
            let mid = interval(p, owner, u + 1, v - 1, args, cum);
            inner.push(&args[u] * mid * &args[v - 1]);
        }
    }
    let val = cum[block.len() - 1].apply(&inner);
    let last = *block.last().unwrap();
    if last < hi {
        val * &args[last] * interval(p, owner, last + 1, hi, args, cum)
    } else {
        val
    }
}

fn uses_only_nonzero(p: &Partition, zero: &[bool]) -> bool {
    p.iter().all(|b| !zero[b.len() - 1])
}

/// Σ_{π ∈ NC(n)} c_π(args), skipping partitions with a vanishing block cumulant.
pub fn moment_sum(args: &[BElement], cum: &[MultilinearMap], zero: &[bool]) -> BElement {
    let n = args.len() + 1;
    let d = cum[0].d;
    let mut acc = Mat::zeros(d, d);
    for p in nc_partitions(n).iter() {
        if uses_only_nonzero(p, zero) {
            acc += nested_eval(p, args, cum);
        }
    }
    acc
}

/// m_ℓ = Σ_{π ∈ NC(ℓ)} c_π for ℓ = 1..=L; `cum[ℓ-1]` has arity ℓ−1.
pub fn moments_from_cumulants(cum: &[MultilinearMap]) -> Vec<MultilinearMap> {
    let zero: Vec<bool> = cum.iter().map(|c| c.is_zero()).collect();
    let d = cum[0].d;
    (1..=cum.len())
        .map(|l| {
            MultilinearMap::from_units(d, l - 1, |a| {
                let args: Vec<BElement> = a.iter().map(|&x| crate::algebra::unit(d, x)).collect();
                moment_sum(&args, &cum[..l], &zero[..l])
            })
        })
        .collect()
}

/// Inverse of [`moments_from_cumulants`]: c^{(n)} = m_n − Σ_{π ≠ 1_n} c_π.
pub fn cumulants_from_moments(mom: &[MultilinearMap]) -> Vec<MultilinearMap> {
    let d = mom[0].d;
    let mut cum: Vec<MultilinearMap> = Vec::with_capacity(mom.len());
    for l in 1..=mom.len() {
        let mut zero: Vec<bool> = cum.iter().map(|c| c.is_zero()).collect();
        // the full block is excluded below, so its placeholder is never read
        zero.push(true);
        let mut all = cum.clone();
        all.push(MultilinearMap::zero(d, l - 1));
        let lower = MultilinearMap::from_units(d, l - 1, |a| {
            let args: Vec<BElement> = a.iter().map(|&x| crate::algebra::unit(d, x)).collect();
            let mut acc = Mat::zeros(d, d);
            for p in nc_partitions(l).iter() {
                if p.len() > 1 && uses_only_nonzero(p, &zero) {
                    acc += nested_eval(p, &args, &all);
                }
            }
            acc
        });
        cum.push(mom[l - 1].sub(&lower));
    }
    cum
}
