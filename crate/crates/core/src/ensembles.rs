//! Projected ensembles and their moment operators.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigenvalues, kron, max_asymmetry, trace, CMatrix, ZERO};
use crate::simulator::{BlochAxis, StateVector};
use crate::symmetric::{symmetric_basis, SymmetricBasis};

/// Outcomes with Born weight below this are dropped.
pub const ZERO_WEIGHT_CUTOFF: f64 = 1e-14;

pub const DEFAULT_BUDGET: usize = 4096;

/// Product measurement frame on the bath.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementBasis {
    Z,
    X,
    /// One axis per bath qubit, or a single axis shared by all of them.
    Axes(Vec<BlochAxis>),
}

impl MeasurementBasis {
    pub fn bath_axes(&self, n_b: usize) -> Result<Vec<BlochAxis>> {
        match self {
            MeasurementBasis::Z => Ok(vec![BlochAxis::Z; n_b]),
            MeasurementBasis::X => Ok(vec![BlochAxis::X; n_b]),
            MeasurementBasis::Axes(a) if a.len() == 1 => Ok(vec![a[0]; n_b]),
            MeasurementBasis::Axes(a) if a.len() == n_b => Ok(a.clone()),
            MeasurementBasis::Axes(a) => Err(invalid(format!("{} axes for {n_b} bath qubits", a.len()))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MeasurementBasis::Z => "z",
            MeasurementBasis::X => "x",
            MeasurementBasis::Axes(_) => "axes",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProjectedEnsemble {
    n_a: usize,
    weights: Vec<f64>,
    /// One normalized column per retained outcome.
    states: CMatrix,
    outcomes: Vec<usize>,
    bath_charges: Vec<usize>,
    dropped_weight: f64,
}

impl ProjectedEnsemble {
    /// Builds an ensemble from explicit weights and (not necessarily
    /// normalized) states.
    pub fn from_parts(n_a: usize, weights: Vec<f64>, states: Vec<Vec<Complex64>>) -> Result<Self> {
        let d = 1usize << n_a;
        if weights.len() != states.len() {
            return Err(Error::DimensionMismatch(weights.len(), states.len()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(invalid("ensemble weights must be nonnegative and sum to 1"));
        }
        let mut cols = CMatrix::zeros(d, states.len());
        for (j, s) in states.iter().enumerate() {
            if s.len() != d {
                return Err(Error::DimensionMismatch(s.len(), d));
            }
            let norm = s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(invalid("ensemble state has zero norm"));
            }
            for (i, z) in s.iter().enumerate() {
                cols[(i, j)] = z / norm;
            }
        }
        let n = weights.len();
        Ok(Self { n_a, weights, states: cols, outcomes: (0..n).collect(), bath_charges: vec![0; n], dropped_weight: 0.0 })
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn states(&self) -> &CMatrix {
        &self.states
    }

    pub fn state(&self, j: usize) -> Vec<Complex64> {
        self.states.column(j).iter().copied().collect()
    }

    /// Bath bitstring of each retained outcome, in the rotated frame.
    pub fn outcomes(&self) -> &[usize] {
        &self.outcomes
    }

    pub fn bath_charges(&self) -> &[usize] {
        &self.bath_charges
    }

    pub fn dropped_weight(&self) -> f64 {
        self.dropped_weight
    }

    /// `Σ_b p(b)|ψ_b><ψ_b|`.
    pub fn first_moment(&self) -> CMatrix {
        let scaled = self.sqrt_weighted_columns(|j| self.states.column(j).iter().copied().collect());
        &scaled * scaled.adjoint()
    }

    fn sqrt_weighted_columns(&self, column: impl Fn(usize) -> Vec<Complex64>) -> CMatrix {
        let cols: Vec<Vec<Complex64>> = (0..self.len()).map(&column).collect();
        let rows = cols.first().map_or(0, |c| c.len());
        CMatrix::from_fn(rows, self.len(), |r, c| cols[c][r] * self.weights[c].sqrt())
    }
}

/// Measures the bath qubits `n_a..N` of `state` in `basis`.
pub fn project(state: &StateVector, n_a: usize, basis: &MeasurementBasis) -> Result<ProjectedEnsemble> {
    let n = state.n_qubits();
    if n_a >= n {
        return Err(invalid(format!("subsystem size {n_a} must be smaller than {n}")));
    }
    let mut rotated = state.clone();
    let bath: Vec<usize> = (n_a..n).collect();
    rotated.rotate_measurement_frame(&bath, &basis.bath_axes(n - n_a)?)?;
    let amps = rotated.amplitudes();
    let d_a = 1usize << n_a;
    let d_b = 1usize << (n - n_a);

    let mut weights = Vec::new();
    let mut outcomes = Vec::new();
    let mut columns: Vec<Complex64> = Vec::new();
    let mut dropped = 0.0;
    for b in 0..d_b {
        let col = &amps[b * d_a..(b + 1) * d_a];
        let p: f64 = col.iter().map(|z| z.norm_sqr()).sum();
        if p < ZERO_WEIGHT_CUTOFF {
            dropped += p;
            continue;
        }
        let norm = p.sqrt();
        columns.extend(col.iter().map(|z| z / norm));
        weights.push(p);
        outcomes.push(b);
    }
    let states = CMatrix::from_column_slice(d_a, weights.len(), &columns);
    let bath_charges = outcomes.iter().map(|b| b.count_ones() as usize).collect();
    Ok(ProjectedEnsemble { n_a, weights, states, outcomes, bath_charges, dropped_weight: dropped })
}

/// Partial trace over qubits `n_a..N`.
pub fn reduced_density_matrix(state: &StateVector, n_a: usize) -> Result<CMatrix> {
    let n = state.n_qubits();
    if n_a > n {
        return Err(invalid(format!("subsystem size {n_a} exceeds {n}")));
    }
    let a = DMatrix::from_column_slice(1 << n_a, 1 << (n - n_a), state.amplitudes());
    Ok(&a * a.adjoint())
}

/// Hermitian, PSD, unit-trace operator on `k` replicas of a `2^{n_a}`
/// dimensional space, supported on the symmetric subspace and stored in its
/// occupation basis.
#[derive(Clone, Debug)]
pub struct MomentOperator {
    n_a: usize,
    k: usize,
    basis: Arc<SymmetricBasis>,
    matrix: CMatrix,
}

impl MomentOperator {
    pub fn from_compressed(n_a: usize, k: usize, matrix: CMatrix) -> Result<Self> {
        if k == 0 {
            return Err(invalid("moment order must be at least 1"));
        }
        let basis = symmetric_basis(1 << n_a, k);
        if matrix.nrows() != basis.dim() || matrix.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch(matrix.nrows(), basis.dim()));
        }
        Ok(Self { n_a, k, basis, matrix })
    }

    pub fn diagonal(n_a: usize, k: usize, values: &[f64]) -> Result<Self> {
        Self::from_compressed(n_a, k, crate::linalg::diag(values))
    }

    /// Compresses a dense `d^k` operator, rejecting weight outside the
    /// symmetric subspace above `1e-10`.
    pub fn from_dense(n_a: usize, k: usize, dense: &CMatrix) -> Result<Self> {
        let basis = symmetric_basis(1 << n_a, k);
        let compressed = basis.compress(dense)?;
        let leak = (basis.expand(&compressed) - dense).norm();
        if leak > 1e-10 {
            return Err(Error::Failed(format!("operator leaves the symmetric subspace (residual {leak:.3e})")));
        }
        Self::from_compressed(n_a, k, compressed)
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Single-copy dimension.
    pub fn d(&self) -> usize {
        1 << self.n_a
    }

    /// Dimension `d^k` of the replicated space.
    pub fn dim(&self) -> usize {
        self.basis.tensor_dim()
    }

    pub fn basis(&self) -> &SymmetricBasis {
        &self.basis
    }

    pub fn compressed(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_compressed(self) -> CMatrix {
        self.matrix
    }

    pub fn to_dense(&self, budget: usize) -> Result<CMatrix> {
        check_budget(self.dim(), budget)?;
        Ok(self.basis.expand(&self.matrix))
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }

    pub fn same_shape(&self, other: &MomentOperator) -> bool {
        self.n_a == other.n_a && self.k == other.k
    }

    pub fn scaled(&self, s: f64) -> MomentOperator {
        Self { matrix: self.matrix.scale(s), ..self.clone() }
    }

    pub fn add_scaled(&mut self, other: &MomentOperator, s: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        self.matrix += other.matrix.scale(s);
        Ok(())
    }

    /// Conjugation by `u^{⊗k}` for a single-copy unitary `u`.
    pub fn conjugate(&self, u: &CMatrix) -> Result<MomentOperator> {
        if u.nrows() != self.d() || u.ncols() != self.d() {
            return Err(Error::DimensionMismatch(u.nrows(), self.d()));
        }
        let lifted = self.basis.lift_unitary(u);
        Ok(Self { matrix: &lifted * &self.matrix * lifted.adjoint(), ..self.clone() })
    }

    /// Partial trace over all replicas but the first, via the dense form.
    pub fn first_marginal(&self, budget: usize) -> Result<CMatrix> {
        let dense = self.to_dense(budget)?;
        let d = self.d();
        let rest = self.dim() / d;
        Ok(CMatrix::from_fn(d, d, |i, j| (0..rest).map(|r| dense[(i * rest + r, j * rest + r)]).sum()))
    }

    /// Hermitian within `tol`, eigenvalues above `-tol`, trace 1 within `tol`.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let asym = max_asymmetry(&self.matrix);
        if asym > tol {
            return Err(Error::NotHermitian(asym));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > tol {
            return Err(Error::InvalidTrace(tr));
        }
        let min = hermitian_eigenvalues(&crate::linalg::hermitian_part(&self.matrix, f64::INFINITY)?)[0];
        if min < -tol {
            return Err(Error::NotPsd(min));
        }
        Ok(())
    }
}

pub(crate) fn check_budget(required: usize, budget: usize) -> Result<()> {
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(())
}

/// `Σ_b p(b) (|ψ_b><ψ_b|)^{⊗k}` over outcomes in ascending order.
pub fn moment(ensemble: &ProjectedEnsemble, k: usize, budget: usize) -> Result<MomentOperator> {
    if k == 0 {
        return Err(invalid("moment order must be at least 1"));
    }
    let d = 1usize << ensemble.n_a;
    check_budget(d.checked_pow(k as u32).unwrap_or(usize::MAX), budget)?;
    let basis = symmetric_basis(d, k);
    let mut buf = Vec::with_capacity(basis.dim());
    let mut psi = vec![ZERO; d];
    let mut cols = CMatrix::zeros(basis.dim(), ensemble.len());
    for j in 0..ensemble.len() {
        psi.iter_mut().zip(ensemble.states.column(j).iter()).for_each(|(a, b)| *a = *b);
        basis.power_components_into(&psi, &mut buf);
        let w = ensemble.weights[j].sqrt();
        for (i, c) in buf.iter().enumerate() {
            cols[(i, j)] = c * w;
        }
    }
    MomentOperator::from_compressed(ensemble.n_a, k, &cols * cols.adjoint())
}

/// `Σ_b p(b) <ψ_b|O|ψ_b>^2 - Tr(O ρ)^2`.
pub fn conditional_variance(ensemble: &ProjectedEnsemble, observable: &CMatrix) -> Result<f64> {
    let o = crate::linalg::hermitian_part(observable, crate::linalg::HERMITIAN_TOL)?;
    let d = 1usize << ensemble.n_a;
    if o.nrows() != d {
        return Err(Error::DimensionMismatch(o.nrows(), d));
    }
    let mut second = 0.0;
    let mut first = 0.0;
    for j in 0..ensemble.len() {
        let col = ensemble.states.column(j);
        let e = (col.adjoint() * &o * col)[(0, 0)].re;
        second += ensemble.weights[j] * e * e;
        first += ensemble.weights[j] * e;
    }
    Ok(second - first * first)
}

/// The same quantity as `Tr[(ρ^{(2)} - ρ⊗ρ) O⊗O]`.
pub fn conditional_variance_from_moments(ensemble: &ProjectedEnsemble, observable: &CMatrix) -> Result<f64> {
    let o = crate::linalg::hermitian_part(observable, crate::linalg::HERMITIAN_TOL)?;
    let rho2 = moment(ensemble, 2, usize::MAX)?.to_dense(usize::MAX)?;
    let rho = ensemble.first_moment();
    let oo = kron(&o, &o);
    Ok((trace(&((rho2 - kron(&rho, &rho)) * oo))).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, kron_power, outer, ONE};
    use crate::simulator::{haar_random_state, prepare_bitstring_state};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn bell() -> StateVector {
        let h = Complex64::from(FRAC_1_SQRT_2);
        StateVector::from_amplitudes(vec![h, ZERO, ZERO, h]).unwrap()
    }

    #[test]
    fn bell_projection() {
        let e = project(&bell(), 1, &MeasurementBasis::Z).unwrap();
        assert_eq!(e.len(), 2);
        assert_abs_diff_eq!(e.weights()[0], 0.5, epsilon = 1e-15);
        assert_eq!(e.state(0), vec![ONE, ZERO]);
        assert_eq!(e.state(1), vec![ZERO, ONE]);
        assert_eq!(e.dropped_weight(), 0.0);

        let m = moment(&e, 2, DEFAULT_BUDGET).unwrap().to_dense(DEFAULT_BUDGET).unwrap();
        assert!((m - diag(&[0.5, 0.0, 0.0, 0.5])).norm() < 1e-15);

        let z = diag(&[1.0, -1.0]);
        assert_abs_diff_eq!(conditional_variance(&e, &z).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(conditional_variance_from_moments(&e, &z).unwrap(), 1.0, epsilon = 1e-14);
        assert!((reduced_density_matrix(&bell(), 1).unwrap() - diag(&[0.5, 0.5])).norm() < 1e-15);
    }

    #[test]
    fn product_state_projects_to_a_single_outcome() {
        let h = Complex64::from(FRAC_1_SQRT_2);
        let psi = StateVector::from_amplitudes(vec![h, h, ZERO, ZERO]).unwrap();
        let e = project(&psi, 1, &MeasurementBasis::Z).unwrap();
        assert_eq!(e.len(), 1);
        assert_abs_diff_eq!(e.weights()[0], 1.0, epsilon = 1e-15);
        assert!((e.state(0)[0] - h).norm() < 1e-15 && (e.state(0)[1] - h).norm() < 1e-15);
        assert_abs_diff_eq!(conditional_variance(&e, &diag(&[1.0, -1.0])).unwrap(), 0.0, epsilon = 1e-15);
        let rho = reduced_density_matrix(&psi, 1).unwrap();
        assert!((rho - outer(&[h, h])).norm() < 1e-15);
    }

    #[test]
    fn ghz_in_the_x_basis() {
        let h = Complex64::from(FRAC_1_SQRT_2);
        let mut amps = vec![ZERO; 8];
        amps[0] = h;
        amps[7] = h;
        let ghz = StateVector::from_amplitudes(amps).unwrap();
        let e = project(&ghz, 1, &MeasurementBasis::X).unwrap();
        assert_eq!(e.len(), 4);
        for j in 0..4 {
            assert_abs_diff_eq!(e.weights()[j], 0.25, epsilon = 1e-14);
            let s = e.state(j);
            // bath parity of the outcome fixes the relative sign
            let sign = if e.outcomes()[j].count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            let ratio = s[1] / s[0];
            assert!((ratio - Complex64::from(sign)).norm() < 1e-12, "{ratio}");
        }
    }

    #[test]
    fn singleton_moment() {
        let e = ProjectedEnsemble::from_parts(1, vec![1.0], vec![vec![ONE, ZERO]]).unwrap();
        let m = moment(&e, 2, DEFAULT_BUDGET).unwrap().to_dense(DEFAULT_BUDGET).unwrap();
        assert!((m - diag(&[1.0, 0.0, 0.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn first_moment_is_reduced_density_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = haar_random_state(6, &mut rng);
        let rho = reduced_density_matrix(&psi, 2).unwrap();
        for basis in [MeasurementBasis::Z, MeasurementBasis::X, MeasurementBasis::Axes(vec![BlochAxis { polar: 0.4, azimuth: 1.9 }])] {
            let e = project(&psi, 2, &basis).unwrap();
            let m1 = moment(&e, 1, DEFAULT_BUDGET).unwrap().to_dense(DEFAULT_BUDGET).unwrap();
            assert!((m1 - &rho).norm() < 1e-12);
            assert!((e.first_moment() - &rho).norm() < 1e-12);
        }
    }

    #[test]
    fn moment_matches_dense_sum_and_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = haar_random_state(5, &mut rng);
        let e = project(&psi, 2, &MeasurementBasis::X).unwrap();
        for k in 1..=3 {
            let m = moment(&e, k, DEFAULT_BUDGET).unwrap();
            m.check_invariants(1e-10).unwrap();
            let mut dense = CMatrix::zeros(4usize.pow(k as u32), 4usize.pow(k as u32));
            for j in 0..e.len() {
                dense += kron_power(&outer(&e.state(j)), k).scale(e.weights()[j]);
            }
            assert!((m.to_dense(DEFAULT_BUDGET).unwrap() - dense).norm() < 1e-12);
        }
        let obs = diag(&[0.3, -1.0, 2.0, 0.5]);
        let a = conditional_variance(&e, &obs).unwrap();
        let b = conditional_variance_from_moments(&e, &obs).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }

    #[test]
    fn budget_and_argument_errors() {
        let psi = prepare_bitstring_state("0101").unwrap();
        let e = project(&psi, 2, &MeasurementBasis::Z).unwrap();
        assert!(matches!(moment(&e, 7, DEFAULT_BUDGET), Err(Error::BudgetExceeded { .. })));
        assert!(project(&psi, 4, &MeasurementBasis::Z).is_err());
        assert!(project(&psi, 1, &MeasurementBasis::Axes(vec![BlochAxis::X; 2])).is_err());
    }
}
