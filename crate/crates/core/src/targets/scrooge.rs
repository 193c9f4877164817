//! Scrooge ensembles and their mixtures over bath charges.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::ensembles::MomentOperator;
use crate::error::{invalid, Error, Result};
use crate::linalg::{haar_vector, hermitian_eigen, psd_sqrt, validate_density, CMatrix};
use crate::rng::{domain, stream};
use crate::sectors::{bath_charge_distribution, posterior_subsystem_charge, ChargeDistribution};
use crate::symmetric::{factorial, symmetric_basis, SymmetricBasis};

use super::sector_block_density;

const CHUNK: usize = 4096;
const QUAD_STEP: f64 = 0.1;
const ZERO_EIGENVALUE: f64 = 1e-14;

/// Draws from the ρ-distortion of the Haar measure by rejection against the
/// envelope `λ_max(ρ)`.
#[derive(Clone, Debug)]
pub struct ScroogeSampler {
    rho: CMatrix,
    sqrt_rho: CMatrix,
    lambda_max: f64,
}

impl ScroogeSampler {
    pub fn new(rho: &CMatrix) -> Result<Self> {
        let rho = validate_density(rho)?;
        let sqrt_rho = psd_sqrt(&rho)?;
        let lambda_max = *crate::linalg::psd_eigen(&rho)?.0.last().expect("nonempty matrix");
        Ok(Self { rho, sqrt_rho, lambda_max })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        let d = self.dim();
        loop {
            let psi = haar_vector(rng, d);
            let v = nalgebra::DVector::from_vec(psi);
            let overlap = (v.adjoint() * &self.rho * &v)[(0, 0)].re;
            if rng.random::<f64>() * self.lambda_max < overlap {
                let out = &self.sqrt_rho * v;
                let norm = out.norm();
                return out.iter().map(|z| z / norm).collect();
            }
        }
    }
}

pub fn scrooge_sample<R: Rng + ?Sized>(rho: &CMatrix, rng: &mut R) -> Result<Vec<Complex64>> {
    Ok(ScroogeSampler::new(rho)?.sample(rng))
}

fn n_qubits_of(d: usize) -> Result<usize> {
    if d == 0 || !d.is_power_of_two() {
        return Err(invalid(format!("dimension {d} is not a power of two")));
    }
    Ok(d.trailing_zeros() as usize)
}

/// Averages `(|ψ><ψ|)^{⊗k}` over `samples` draws. Samples come in fixed-size
/// chunks, each with its own stream, and chunk sums are added in order.
fn mc_moment(
    n_a: usize,
    k: usize,
    samples: usize,
    seed: u64,
    draw: impl Fn(&mut rand_chacha::ChaCha8Rng) -> Vec<Complex64> + Sync,
) -> Result<MomentOperator> {
    if samples == 0 {
        return Err(invalid("sample count must be positive"));
    }
    if k == 0 {
        return Err(invalid("moment order must be at least 1"));
    }
    let basis = symmetric_basis(1 << n_a, k);
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<CMatrix> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, &[domain::TARGET_MC, c as u64]);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut cols = CMatrix::zeros(basis.dim(), count);
            let mut buf = Vec::with_capacity(basis.dim());
            for j in 0..count {
                basis.power_components_into(&draw(&mut rng), &mut buf);
                cols.column_mut(j).iter_mut().zip(&buf).for_each(|(a, b)| *a = *b);
            }
            &cols * cols.adjoint()
        })
        .collect();
    let mut total = CMatrix::zeros(basis.dim(), basis.dim());
    for p in partial {
        total += p;
    }
    MomentOperator::from_compressed(n_a, k, total.unscale(samples as f64))
}

pub fn scrooge_moment_mc(rho: &CMatrix, k: usize, samples: usize, seed: u64) -> Result<MomentOperator> {
    let sampler = ScroogeSampler::new(rho)?;
    let n_a = n_qubits_of(sampler.dim())?;
    mc_moment(n_a, k, samples, seed, |rng| sampler.sample(rng))
}

/// Exact Scrooge moment. In the eigenbasis of ρ it is diagonal in the
/// occupation basis with entries
/// `N_m λ^m ∏ m_i! / (k-2)! ∫_0^∞ t^{k-2} ∏_i (1 + t λ_i)^{-(m_i+1)} dt`,
/// evaluated by the trapezoid rule in `u = ln(t λ_max)`.
pub fn scrooge_moment_exact(rho: &CMatrix, k: usize) -> Result<MomentOperator> {
    if k == 0 {
        return Err(invalid("moment order must be at least 1"));
    }
    let rho = validate_density(rho)?;
    let d = rho.nrows();
    let n_a = n_qubits_of(d)?;
    let basis = symmetric_basis(d, k);
    let off_diagonal = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).filter(|(i, j)| i != j).any(|(i, j)| rho[(i, j)].norm() > 0.0);
    if !off_diagonal {
        let lambdas: Vec<f64> = (0..d).map(|i| rho[(i, i)].re.max(0.0)).collect();
        return MomentOperator::diagonal(n_a, k, &scrooge_diagonal(&lambdas, &basis));
    }
    let (values, vectors) = hermitian_eigen(&rho);
    let lambdas: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let inner = MomentOperator::diagonal(n_a, k, &scrooge_diagonal(&lambdas, &basis))?;
    inner.conjugate(&vectors)
}

fn scrooge_diagonal(lambdas: &[f64], basis: &SymmetricBasis) -> Vec<f64> {
    let k = basis.k();
    if k == 1 {
        return (0..basis.dim()).map(|i| lambdas[basis.multiset(i)[0] as usize]).collect();
    }
    let lmax = lambdas.iter().copied().fold(0.0, f64::max);
    let positive: Vec<usize> = (0..lambdas.len()).filter(|&i| lambdas[i] > ZERO_EIGENVALUE * lmax).collect();
    let ratios: Vec<f64> = positive.iter().map(|&i| lambdas[i] / lmax).collect();
    let lmin = ratios.iter().copied().fold(1.0, f64::min);
    let (lo, hi) = (-40.0, 45.0 - lmin.ln());
    let steps = ((hi - lo) / QUAD_STEP).ceil() as usize;
    let grid: Vec<f64> = (0..=steps).map(|s| lo + s as f64 * QUAD_STEP).collect();
    // log1p(e^u r_i) for every node and positive eigenvalue
    let table: Vec<Vec<f64>> = grid.iter().map(|&u| ratios.iter().map(|r| (u.exp() * r).ln_1p()).collect()).collect();
    let base: Vec<f64> = table.iter().zip(&grid).map(|(row, &u)| (k as f64 - 1.0) * u - row.iter().sum::<f64>()).collect();
    let mut slot = vec![usize::MAX; lambdas.len()];
    for (s, &i) in positive.iter().enumerate() {
        slot[i] = s;
    }
    let ln_fact_k2 = factorial(k - 2).ln();

    (0..basis.dim())
        .map(|m| {
            let occ = basis.occupation(m);
            if occ.iter().enumerate().any(|(i, &c)| c > 0 && slot[i] == usize::MAX) {
                return 0.0;
            }
            let active: Vec<(usize, f64)> = occ.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (slot[i], c as f64)).collect();
            let log_pref = active.iter().map(|&(s, c)| c * ratios[s].ln() + factorial(c as usize).ln()).sum::<f64>()
                + lmax.ln()
                + basis.multiplicity(m).ln()
                - ln_fact_k2;
            let exponents: Vec<f64> = table.iter().zip(&base).map(|(row, b)| b - active.iter().map(|&(s, c)| c * row[s]).sum::<f64>()).collect();
            let peak = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let n = exponents.len();
            let sum: f64 = exponents.iter().enumerate().map(|(i, e)| if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * (e - peak).exp()).sum();
            (log_pref + peak + (sum * QUAD_STEP).ln()).exp()
        })
        .collect()
}

/// `ρ̄(Q_B) = Σ_{Q_A} π_p(Q_A+Q_B|Q_B) Π_{Q_A} / Tr Π_{Q_A}`.
pub fn gse_rho_bar(p: &ChargeDistribution, n_a: usize, q_b: usize) -> Result<CMatrix> {
    Ok(sector_block_density(n_a, &posterior_subsystem_charge(p, n_a, q_b)?))
}

/// `Σ_{Q_B} π_p(Q_B) ρ^{(k)}_Scrooge[ρ̄(Q_B)]` from the exact Scrooge moments.
pub fn gse_moment_analytic(p: &ChargeDistribution, n_a: usize, k: usize) -> Result<MomentOperator> {
    Ok(gse_moment_analytic_with_defect(p, n_a, k)?.0)
}

/// As [`gse_moment_analytic`], also returning the trace defect `|Tr - 1|`
/// removed by the final renormalization.
pub fn gse_moment_analytic_with_defect(p: &ChargeDistribution, n_a: usize, k: usize) -> Result<(MomentOperator, f64)> {
    let bath = bath_charge_distribution(p, n_a)?;
    let mut total: Option<MomentOperator> = None;
    for (q_b, &w) in bath.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let part = scrooge_moment_exact(&gse_rho_bar(p, n_a, q_b)?, k)?;
        match total.as_mut() {
            None => total = Some(part.scaled(w)),
            Some(t) => t.add_scaled(&part, w)?,
        }
    }
    let total = total.ok_or_else(|| Error::Failed("no bath charge has positive probability".into()))?;
    let tr = total.trace();
    Ok((total.scaled(1.0 / tr), (tr - 1.0).abs()))
}

/// Samples `Q_B ~ π_p(Q_B)`, then a state from the Scrooge ensemble of
/// `ρ̄(Q_B)`.
pub fn gse_moment_mc(p: &ChargeDistribution, n_a: usize, k: usize, samples: usize, seed: u64) -> Result<MomentOperator> {
    let bath = bath_charge_distribution(p, n_a)?;
    let samplers: Vec<Option<ScroogeSampler>> = bath
        .iter()
        .enumerate()
        .map(|(q_b, &w)| if w > 0.0 { gse_rho_bar(p, n_a, q_b).and_then(|r| ScroogeSampler::new(&r)).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    let cumulative: Vec<f64> = bath
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let last = bath.iter().rposition(|&w| w > 0.0).expect("bath distribution is normalized");
    mc_moment(n_a, k, samples, seed, |rng| {
        let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
        let q_b = cumulative.iter().position(|&c| u < c).unwrap_or(last);
        let q_b = if samplers[q_b].is_some() { q_b } else { last };
        samplers[q_b].as_ref().expect("positive-weight sampler").sample(rng)
    })
}
