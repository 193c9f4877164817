//! The symmetric subspace of `(C^d)^{⊗k}` and its occupation-number basis.
//!
//! A basis vector `|m>` is the normalized symmetrization of any tensor index
//! whose digits form the multiset `m`. Operators supported on the symmetric
//! subspace are stored as `D x D` matrices in this basis, `D = C(d+k-1, k)`.
//! Tensor indices put replica 0 in the most significant digit, so the dense
//! form of `a ⊗ b` is `kron(a, b)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, ZERO};

pub struct SymmetricBasis {
    d: usize,
    k: usize,
    multisets: Vec<Vec<u16>>,
    multiplicity: Vec<f64>,
    lookup: HashMap<Vec<u16>, usize>,
    tensor_map: OnceLock<Vec<usize>>,
}

impl std::fmt::Debug for SymmetricBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SymmetricBasis(d={}, k={}, D={})", self.d, self.k, self.dim())
    }
}

impl SymmetricBasis {
    fn new(d: usize, k: usize) -> Self {
        let mut multisets = Vec::new();
        let mut current = Vec::with_capacity(k);
        nondecreasing(d, k, 0, &mut current, &mut multisets);
        let fact = |n: usize| (1..=n).map(|x| x as f64).product::<f64>();
        let multiplicity = multisets
            .iter()
            .map(|m| {
                let mut denom = 1.0;
                let mut run = 1;
                for w in 1..=m.len() {
                    if w < m.len() && m[w] == m[w - 1] {
                        run += 1;
                    } else {
                        denom *= fact(run);
                        run = 1;
                    }
                }
                fact(k) / denom
            })
            .collect();
        let lookup = multisets.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        Self { d, k, multisets, multiplicity, lookup, tensor_map: OnceLock::new() }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Dimension of the symmetric subspace.
    pub fn dim(&self) -> usize {
        self.multisets.len()
    }

    /// Dimension `d^k` of the full replicated space.
    pub fn tensor_dim(&self) -> usize {
        self.d.pow(self.k as u32)
    }

    /// Sorted single-copy indices of basis vector `i`.
    pub fn multiset(&self, i: usize) -> &[u16] {
        &self.multisets[i]
    }

    pub fn occupation(&self, i: usize) -> Vec<usize> {
        let mut occ = vec![0; self.d];
        for &x in &self.multisets[i] {
            occ[x as usize] += 1;
        }
        occ
    }

    /// Number of tensor indices that symmetrize to basis vector `i`.
    pub fn multiplicity(&self, i: usize) -> f64 {
        self.multiplicity[i]
    }

    pub fn index_of(&self, multiset: &[u16]) -> Option<usize> {
        let mut key = multiset.to_vec();
        key.sort_unstable();
        self.lookup.get(&key).copied()
    }

    /// Symmetric basis index of every tensor index.
    pub fn tensor_map(&self) -> &[usize] {
        self.tensor_map.get_or_init(|| {
            let mut digits = vec![0u16; self.k];
            (0..self.tensor_dim())
                .map(|idx| {
                    let mut rest = idx;
                    for r in (0..self.k).rev() {
                        digits[r] = (rest % self.d) as u16;
                        rest /= self.d;
                    }
                    self.index_of(&digits).expect("every multiset is enumerated")
                })
                .collect()
        })
    }

    /// Components of `ψ^{⊗k}`: `sqrt(N_m) ∏ ψ_i^{m_i}`.
    pub fn power_components(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.dim());
        self.power_components_into(psi, &mut out);
        out
    }

    pub fn power_components_into(&self, psi: &[Complex64], out: &mut Vec<Complex64>) {
        debug_assert_eq!(psi.len(), self.d);
        out.clear();
        out.extend(self.multisets.iter().zip(&self.multiplicity).map(|(m, n)| {
            m.iter().fold(Complex64::from(n.sqrt()), |acc, &i| acc * psi[i as usize])
        }));
    }

    /// Restricts a dense `d^k` operator to the symmetric subspace.
    pub fn compress(&self, dense: &CMatrix) -> Result<CMatrix> {
        let n = self.tensor_dim();
        if dense.nrows() != n || dense.ncols() != n {
            return Err(Error::DimensionMismatch(dense.nrows(), n));
        }
        let map = self.tensor_map();
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        for j in 0..n {
            for i in 0..n {
                out[(map[i], map[j])] += dense[(i, j)];
            }
        }
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                out[(i, j)] /= (self.multiplicity[i] * self.multiplicity[j]).sqrt();
            }
        }
        Ok(out)
    }

    /// Embeds a compressed operator into the full `d^k` space.
    pub fn expand(&self, compressed: &CMatrix) -> CMatrix {
        let map = self.tensor_map();
        let n = self.tensor_dim();
        CMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (map[i], map[j]);
            compressed[(a, b)] / (self.multiplicity[a] * self.multiplicity[b]).sqrt()
        })
    }

    /// `Sym^k(u)`: the action of `u^{⊗k}` on the symmetric subspace.
    pub fn lift_unitary(&self, u: &CMatrix) -> CMatrix {
        let map = self.tensor_map();
        let dim = self.dim();
        let mut out = CMatrix::from_element(dim, dim, ZERO);
        let mut digits = vec![0usize; self.k];
        for (col, rep) in self.multisets.iter().enumerate() {
            for (idx, &row) in map.iter().enumerate() {
                let mut rest = idx;
                for r in (0..self.k).rev() {
                    digits[r] = rest % self.d;
                    rest /= self.d;
                }
                let prod = digits.iter().zip(rep).fold(Complex64::from(1.0), |acc, (&i, &j)| acc * u[(i, j as usize)]);
                out[(row, col)] += prod;
            }
        }
        for col in 0..dim {
            for row in 0..dim {
                out[(row, col)] *= (self.multiplicity[col] / self.multiplicity[row]).sqrt();
            }
        }
        out
    }
}

fn nondecreasing(d: usize, k: usize, start: usize, current: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
    if current.len() == k {
        out.push(current.clone());
        return;
    }
    for x in start..d {
        current.push(x as u16);
        nondecreasing(d, k, x, current, out);
        current.pop();
    }
}

/// Cached basis for `(d, k)`.
pub fn symmetric_basis(d: usize, k: usize) -> Arc<SymmetricBasis> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<SymmetricBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().expect("basis cache poisoned");
    guard.entry((d, k)).or_insert_with(|| Arc::new(SymmetricBasis::new(d, k))).clone()
}

/// All permutations of `0..k`.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

/// Operator moving the content of replica `r` to replica `perm[r]`.
pub fn permutation_operator(d: usize, perm: &[usize]) -> CMatrix {
    let k = perm.len();
    let n = d.pow(k as u32);
    let mut m = CMatrix::zeros(n, n);
    let mut digits = vec![0usize; k];
    let mut moved = vec![0usize; k];
    for idx in 0..n {
        let mut rest = idx;
        for r in (0..k).rev() {
            digits[r] = rest % d;
            rest /= d;
        }
        for r in 0..k {
            moved[perm[r]] = digits[r];
        }
        let target = moved.iter().fold(0, |acc, &x| acc * d + x);
        m[(target, idx)] = Complex64::from(1.0);
    }
    m
}

/// `(1/k!) Σ_σ P_σ` on `(C^d)^{⊗k}`, rejecting `d^k` above `budget`.
pub fn symmetric_projector(d: usize, k: usize, budget: usize) -> Result<CMatrix> {
    let n = d.checked_pow(k as u32).unwrap_or(usize::MAX);
    if n > budget {
        return Err(Error::BudgetExceeded { required: n, budget });
    }
    let perms = permutations(k);
    let mut acc = CMatrix::zeros(n, n);
    for p in &perms {
        acc += permutation_operator(d, p);
    }
    Ok(acc.unscale(perms.len() as f64))
}

/// Nonnegative integer vectors of length `parts` summing to `k`, in
/// lexicographic order. Cached.
pub fn type_vectors(k: usize, parts: usize) -> Arc<Vec<Vec<usize>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Vec<Vec<usize>>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().expect("type cache poisoned");
    guard
        .entry((k, parts))
        .or_insert_with(|| {
            fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
                if cur.len() + 1 == parts {
                    cur.push(left);
                    out.push(cur.clone());
                    cur.pop();
                    return;
                }
                for x in 0..=left {
                    cur.push(x);
                    rec(left - x, parts, cur, out);
                    cur.pop();
                }
            }
            let mut out = Vec::new();
            if parts > 0 {
                rec(k, parts, &mut Vec::with_capacity(parts), &mut out);
            } else if k == 0 {
                out.push(Vec::new());
            }
            Arc::new(out)
        })
        .clone()
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// `k! / ∏ t_i!` with `k = Σ t_i`.
pub fn multinomial(t: &[usize]) -> f64 {
    factorial(t.iter().sum()) / t.iter().map(|&x| factorial(x)).product::<f64>()
}

/// Rising factorial `x (x+1) ... (x+l-1)`.
pub fn rising(x: f64, l: usize) -> f64 {
    (0..l).map(|i| x + i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_unitary, haar_vector, kron_power, outer, trace};
    use crate::sectors::binomial;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_dimension_and_multiplicities() {
        for (d, k) in [(2, 1), (2, 2), (4, 3), (3, 4), (16, 2)] {
            let b = symmetric_basis(d, k);
            assert_eq!(b.dim() as u128, binomial((d + k - 1) as i64, k as i64));
            let total: f64 = (0..b.dim()).map(|i| b.multiplicity(i)).sum();
            assert_eq!(total, (d as f64).powi(k as i32));
            for i in 0..b.dim() {
                assert_eq!(b.occupation(i).iter().sum::<usize>(), k);
            }
        }
    }

    #[test]
    fn projector_traces() {
        let p = symmetric_projector(2, 1, 4096).unwrap();
        assert!((p - CMatrix::identity(2, 2)).norm() < 1e-15);
        assert!((trace(&symmetric_projector(2, 2, 4096).unwrap()).re - 3.0).abs() < 1e-12);
        let p = symmetric_projector(4, 3, 4096).unwrap();
        assert!((trace(&p).re - 20.0).abs() < 1e-12);
        assert!((&p * &p - &p).norm() < 1e-12);
        assert!(matches!(symmetric_projector(16, 4, 4096), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn expanded_identity_is_the_projector() {
        for (d, k) in [(2, 2), (4, 2), (3, 3), (2, 4)] {
            let b = symmetric_basis(d, k);
            let p = symmetric_projector(d, k, 4096).unwrap();
            assert!((b.expand(&CMatrix::identity(b.dim(), b.dim())) - &p).norm() < 1e-12);
            assert!((b.compress(&p).unwrap() - CMatrix::identity(b.dim(), b.dim())).norm() < 1e-12);
        }
    }

    #[test]
    fn power_components_match_dense_tensor_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (d, k) in [(4, 2), (3, 3), (2, 4)] {
            let b = symmetric_basis(d, k);
            let psi = haar_vector(&mut rng, d);
            let c = b.power_components(&psi);
            let dense = kron_power(&outer(&psi), k);
            assert!((b.expand(&outer(&c)) - &dense).norm() < 1e-12);
            assert!((b.compress(&dense).unwrap() - outer(&c)).norm() < 1e-12);
        }
    }

    #[test]
    fn lifted_unitary_matches_dense_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (d, k) in [(2, 2), (4, 2), (3, 3)] {
            let b = symmetric_basis(d, k);
            let u = haar_unitary(&mut rng, d);
            let psi = haar_vector(&mut rng, d);
            let upsi: Vec<Complex64> = (&u * nalgebra::DVector::from_column_slice(&psi)).iter().copied().collect();
            let lifted = b.lift_unitary(&u);
            let direct = nalgebra::DVector::from_vec(b.power_components(&upsi));
            let via = &lifted * nalgebra::DVector::from_vec(b.power_components(&psi));
            assert!((direct - via).norm() < 1e-12);
            assert!((lifted.adjoint() * &lifted - CMatrix::identity(b.dim(), b.dim())).norm() < 1e-12);
        }
    }

    #[test]
    fn permutation_operators_compose() {
        let p = permutation_operator(3, &[1, 2, 0]);
        let identity = &p * &p * &p;
        assert!((identity - CMatrix::identity(27, 27)).norm() < 1e-15);
        assert_eq!(permutations(4).len(), 24);
    }

    #[test]
    fn type_vector_enumeration() {
        for (k, n_a) in [(0, 2), (2, 2), (3, 1), (4, 4)] {
            let types = type_vectors(k, n_a + 1);
            assert_eq!(types.len() as u128, binomial((k + n_a) as i64, n_a as i64));
            assert!(types.windows(2).all(|w| w[0] < w[1]));
            assert!(types.iter().all(|t| t.iter().sum::<usize>() == k));
        }
        assert_eq!(multinomial(&[2, 1, 1]), 12.0);
        assert_eq!(rising(3.0, 2), 12.0);
        assert_eq!(rising(3.0, 0), 1.0);
    }
}
