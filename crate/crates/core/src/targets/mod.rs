//! Universal target ensembles, as moment operators on the subsystem.

mod replica;
mod scrooge;

pub use replica::{
    fp_exact_integer_n, fp_mc, fp_mc_cells, fp_replica_limit_x, fp_replica_limit_z, replica_moment_z, replica_sum_dense, sector_superposition_moment,
    sector_superposition_moment_dense, FpEstimate,
};
pub use scrooge::{
    gse_moment_analytic, gse_moment_analytic_with_defect, gse_moment_mc, gse_rho_bar, scrooge_moment_exact,
    scrooge_moment_mc, scrooge_sample, ScroogeSampler,
};

use crate::ensembles::MomentOperator;
use crate::error::{invalid, Result};
use crate::linalg::{diag, CMatrix};
use crate::sectors::{binomial, binomial_f64, sector_prior, ChargeDistribution};
use crate::symmetric::symmetric_basis;

/// Multiplicities of each subsystem charge across the `k` replicas.
pub type TypeVector = Vec<usize>;

pub use crate::symmetric::type_vectors;

/// `Π_sym / C(d+k-1, k)` with `d = 2^{n_a}`.
pub fn haar_moment(n_a: usize, k: usize) -> Result<MomentOperator> {
    let basis = symmetric_basis(1 << n_a, k);
    let dim = basis.dim();
    MomentOperator::diagonal(n_a, k, &vec![1.0 / dim as f64; dim])
}

/// Haar moment on the charge-`q_a` sector of the subsystem, embedded in the
/// full replicated space.
pub fn sector_haar_moment(n_a: usize, q_a: usize, k: usize) -> Result<MomentOperator> {
    if q_a > n_a {
        return Err(invalid(format!("sector {q_a} exceeds subsystem size {n_a}")));
    }
    let mut weights = vec![0.0; n_a + 1];
    weights[q_a] = 1.0;
    sector_diagonal_mixture(n_a, k, &weights)
}

/// `Σ_{Q_A} w(Q_A) · sector_haar_moment(Q_A)`. Both are diagonal in the
/// occupation basis.
fn sector_diagonal_mixture(n_a: usize, k: usize, weights: &[f64]) -> Result<MomentOperator> {
    let basis = symmetric_basis(1 << n_a, k);
    let values: Vec<f64> = (0..basis.dim())
        .map(|i| {
            let m = basis.multiset(i);
            let q = m[0].count_ones() as usize;
            if m.iter().all(|x| x.count_ones() as usize == q) {
                let d_s = binomial(n_a as i64, q as i64);
                weights[q] / binomial((d_s as i64) + k as i64 - 1, k as i64) as f64
            } else {
                0.0
            }
        })
        .collect();
    MomentOperator::diagonal(n_a, k, &values)
}

/// Direct sum of sector Haar moments weighted by `π(Q_A|Q0)`.
pub fn direct_sum_moment(n: usize, n_a: usize, q0: usize, k: usize) -> Result<MomentOperator> {
    if q0 > n {
        return Err(invalid(format!("charge {q0} exceeds {n} qubits")));
    }
    sector_diagonal_mixture(n_a, k, &sector_prior(n, n_a, q0)?)
}

/// `Σ_{Q_A} w(Q_A) Π_{Q_A} / Tr Π_{Q_A}` on `n_a` qubits.
pub fn sector_block_density(n_a: usize, weights: &[f64]) -> CMatrix {
    let values: Vec<f64> = (0..1usize << n_a)
        .map(|a| {
            let q = a.count_ones() as usize;
            weights[q] / binomial_f64(n_a as i64, q as i64)
        })
        .collect();
    diag(&values)
}

/// Density matrix of the Scrooge target for a definite-charge state measured
/// in the x basis.
pub fn xbasis_scrooge_rho(n: usize, n_a: usize, q0: usize) -> Result<CMatrix> {
    if q0 > n || n_a > n {
        return Err(invalid(format!("bad sizes n={n}, n_a={n_a}, q0={q0}")));
    }
    Ok(sector_block_density(n_a, &sector_prior(n, n_a, q0)?))
}

/// Same density matrix under the name used for the size-dependent target.
pub fn finite_n_rho(n: usize, n_a: usize, q0: usize) -> Result<CMatrix> {
    xbasis_scrooge_rho(n, n_a, q0)
}

#[derive(Clone, Debug)]
pub enum TargetSpec {
    Haar,
    SectorHaar { q_a: usize },
    DirectSum { q0: usize },
    Scrooge { rho: CMatrix },
    Gse { p: ChargeDistribution },
    FiniteNScrooge { q0: usize },
    /// Mixture over bath charges of the sector superpositions predicted by
    /// the large-dimension replica formula.
    ReplicaZ { p: ChargeDistribution },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetMethod {
    Analytic,
    MonteCarlo { samples: usize, seed: u64 },
}

impl TargetSpec {
    pub fn label(&self) -> String {
        match self {
            TargetSpec::Haar => "haar".into(),
            TargetSpec::SectorHaar { q_a } => format!("sector_haar({q_a})"),
            TargetSpec::DirectSum { q0 } => format!("direct_sum({q0})"),
            TargetSpec::Scrooge { .. } => "scrooge".into(),
            TargetSpec::Gse { .. } => "gse".into(),
            TargetSpec::FiniteNScrooge { q0 } => format!("finite_n_scrooge({q0})"),
            TargetSpec::ReplicaZ { .. } => "replica_z".into(),
        }
    }

    /// Moment operator on `k` replicas of the first `n_a` of `n` qubits.
    /// Monte Carlo applies to the Scrooge-type targets; the rest are exact.
    pub fn resolve(&self, n: usize, n_a: usize, k: usize, method: TargetMethod) -> Result<MomentOperator> {
        let check_p = |p: &ChargeDistribution| {
            if p.n_qubits() != n {
                Err(invalid(format!("charge distribution is over {} qubits, expected {n}", p.n_qubits())))
            } else {
                Ok(())
            }
        };
        match self {
            TargetSpec::Haar => haar_moment(n_a, k),
            TargetSpec::SectorHaar { q_a } => sector_haar_moment(n_a, *q_a, k),
            TargetSpec::DirectSum { q0 } => direct_sum_moment(n, n_a, *q0, k),
            TargetSpec::Scrooge { rho } => match method {
                TargetMethod::Analytic => scrooge_moment_exact(rho, k),
                TargetMethod::MonteCarlo { samples, seed } => scrooge_moment_mc(rho, k, samples, seed),
            },
            TargetSpec::FiniteNScrooge { q0 } => {
                let rho = finite_n_rho(n, n_a, *q0)?;
                TargetSpec::Scrooge { rho }.resolve(n, n_a, k, method)
            }
            TargetSpec::Gse { p } => {
                check_p(p)?;
                match method {
                    TargetMethod::Analytic => gse_moment_analytic(p, n_a, k),
                    TargetMethod::MonteCarlo { samples, seed } => gse_moment_mc(p, n_a, k, samples, seed),
                }
            }
            TargetSpec::ReplicaZ { p } => {
                check_p(p)?;
                replica_moment_z(p, n_a, k)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_vector, kron_power, outer};
    use crate::metrics::{trace_distance, trace_distance_matrices};
    use crate::symmetric::symmetric_projector;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sector_projector(n_a: usize, q: usize) -> CMatrix {
        diag(&(0..1usize << n_a).map(|a| if a.count_ones() as usize == q { 1.0 } else { 0.0 }).collect::<Vec<_>>())
    }

    #[test]
    fn haar_moment_examples() {
        let m = haar_moment(1, 1).unwrap().to_dense(4096).unwrap();
        assert!((m - diag(&[0.5, 0.5])).norm() < 1e-15);
        let m = haar_moment(1, 2).unwrap().to_dense(4096).unwrap();
        assert!((m - symmetric_projector(2, 2, 4096).unwrap().unscale(3.0)).norm() < 1e-14);
        for (n_a, k) in [(2, 3), (3, 2), (1, 4)] {
            let d = 1usize << n_a;
            let p = symmetric_projector(d, k, 4096).unwrap();
            let dim = crate::symmetric::symmetric_basis(d, k).dim() as f64;
            assert!((haar_moment(n_a, k).unwrap().to_dense(4096).unwrap() - p.unscale(dim)).norm() < 1e-12);
        }
    }

    #[test]
    fn haar_moment_matches_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 100_000;
        let basis = symmetric_basis(4, 2);
        let mut cols = CMatrix::zeros(basis.dim(), draws);
        for j in 0..draws {
            let c = basis.power_components(&haar_vector(&mut rng, 4));
            cols.column_mut(j).iter_mut().zip(c).for_each(|(a, b)| *a = b);
        }
        let mc = MomentOperator::from_compressed(2, 2, (&cols * cols.adjoint()).unscale(draws as f64)).unwrap();
        let dist = trace_distance(&mc, &haar_moment(2, 2).unwrap()).unwrap();
        assert!(dist < 5.0 / (draws as f64).sqrt(), "{dist}");
    }

    #[test]
    fn sector_haar_examples() {
        let m = sector_haar_moment(2, 1, 1).unwrap().to_dense(4096).unwrap();
        assert!((m - diag(&[0.0, 0.5, 0.5, 0.0])).norm() < 1e-15);

        let pi = sector_projector(2, 1);
        let expected = (kron_power(&pi, 2) * symmetric_projector(4, 2, 4096).unwrap() * kron_power(&pi, 2)).unscale(3.0);
        let m = sector_haar_moment(2, 1, 2).unwrap().to_dense(4096).unwrap();
        assert!((m - expected).norm() < 1e-12);

        for k in 1..=4 {
            let m = sector_haar_moment(2, 0, k).unwrap().to_dense(4096).unwrap();
            assert!((m - kron_power(&diag(&[1.0, 0.0, 0.0, 0.0]), k)).norm() < 1e-14);
        }

        // permutation-sum oracle on the 3-dim sector of 3 qubits
        let pi = sector_projector(3, 1);
        let k = 3;
        let sym = symmetric_projector(8, k, 1 << 9).unwrap();
        let p = kron_power(&pi, k);
        let expected = (&p * sym * &p).unscale(10.0);
        let m = sector_haar_moment(3, 1, k).unwrap().to_dense(1 << 9).unwrap();
        assert!((m - expected).norm() < 1e-12);
    }

    #[test]
    fn direct_sum_examples() {
        let m = direct_sum_moment(4, 2, 2, 1).unwrap().to_dense(4096).unwrap();
        assert!((m - diag(&[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0])).norm() < 1e-15);
        let m = direct_sum_moment(6, 2, 0, 2).unwrap().to_dense(4096).unwrap();
        assert!((m - kron_power(&diag(&[1.0, 0.0, 0.0, 0.0]), 2)).norm() < 1e-15);
        for (n, q0, k) in [(8, 4, 2), (10, 3, 3), (12, 6, 4)] {
            let m = direct_sum_moment(n, 2, q0, k).unwrap();
            m.check_invariants(1e-12).unwrap();
        }
    }

    #[test]
    fn xbasis_rho_examples() {
        let rho = xbasis_scrooge_rho(4, 2, 2).unwrap();
        assert!((rho - diag(&[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0])).norm() < 1e-15);
        assert_eq!(finite_n_rho(8, 2, 2).unwrap(), xbasis_scrooge_rho(8, 2, 2).unwrap());
        // quarter filling at N = 8: π(Q_A|2) = [15, 12, 1]/28 spread over sector sizes 1, 2, 1
        let expected = diag(&[15.0 / 28.0, 6.0 / 28.0, 6.0 / 28.0, 1.0 / 28.0]);
        assert!((finite_n_rho(8, 2, 2).unwrap() - expected).norm() < 1e-15);

        let mut previous = f64::INFINITY;
        for n in [8usize, 16, 32, 64] {
            let rho = xbasis_scrooge_rho(n, 2, n / 2).unwrap();
            let worst = (0..4).map(|i| (4.0 * rho[(i, i)].re - 1.0).abs()).fold(0.0, f64::max);
            assert!(worst < 4.0 / n as f64, "n={n}: {worst}");
            assert!(worst < previous);
            previous = worst;
        }
    }

    #[test]
    fn target_spec_resolution_satisfies_invariants() {
        let p = crate::sectors::product_state_charge_distribution(&crate::sectors::theta_state_excitations(8, 0.3)).unwrap();
        let specs = [
            TargetSpec::Haar,
            TargetSpec::SectorHaar { q_a: 1 },
            TargetSpec::DirectSum { q0: 4 },
            TargetSpec::Scrooge { rho: xbasis_scrooge_rho(8, 2, 3).unwrap() },
            TargetSpec::Gse { p: p.clone() },
            TargetSpec::FiniteNScrooge { q0: 2 },
            TargetSpec::ReplicaZ { p },
        ];
        for spec in &specs {
            for k in 1..=3 {
                let m = spec.resolve(8, 2, k, TargetMethod::Analytic).unwrap();
                m.check_invariants(1e-10).unwrap_or_else(|e| panic!("{}: {e}", spec.label()));
            }
        }
        assert!(TargetSpec::Gse { p: ChargeDistribution::definite(6, 3).unwrap() }
            .resolve(8, 2, 2, TargetMethod::Analytic)
            .is_err());
    }

    #[test]
    fn sector_block_density_is_a_state() {
        let rho = sector_block_density(3, &[0.1, 0.2, 0.3, 0.4]);
        assert_abs_diff_eq!(crate::linalg::trace(&rho).re, 1.0, epsilon = 1e-15);
        let pure = outer(&[num_complex::Complex64::from(1.0), num_complex::Complex64::from(0.0)]);
        assert!(trace_distance_matrices(&sector_block_density(1, &[1.0, 0.0]), &pure).unwrap() < 1e-15);
    }
}
