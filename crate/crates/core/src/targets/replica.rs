//! Replica coefficients and the moment operators built from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{check_budget, MomentOperator};
use crate::error::{invalid, Error, Result};
use crate::linalg::{complex_normal, kron, kron_power, CMatrix};
use crate::rng::{domain, stream};
use crate::sectors::{
    bath_charge_distribution, binomial, binomial_f64, posterior_subsystem_charge, sector_prior, ChargeDistribution,
    SectorTable,
};
use crate::symmetric::{factorial, multinomial, rising, symmetric_basis, symmetric_projector, type_vectors};

const CHUNK: usize = 4096;
const MAX_TYPES: usize = 1_000_000;

fn charge_of_multiset(m: &[u16], n_a: usize) -> Vec<usize> {
    let mut t = vec![0; n_a + 1];
    for &x in m {
        t[x.count_ones() as usize] += 1;
    }
    t
}

/// Exact `k`-th moment of `ψ = Σ_{Q_A} sqrt(w(Q_A)) φ_{Q_A}` with independent
/// Haar states `φ_{Q_A}` on the subsystem charge sectors. Diagonal in the
/// occupation basis with entries `k! ∏ w^{T} / rising(d_{Q_A}, T)` where `T`
/// counts the replicas in each sector.
pub fn sector_superposition_moment(n_a: usize, weights: &[f64], k: usize) -> Result<MomentOperator> {
    if weights.len() != n_a + 1 {
        return Err(Error::DimensionMismatch(weights.len(), n_a + 1));
    }
    let basis = symmetric_basis(1 << n_a, k);
    let kf = factorial(k);
    let values: Vec<f64> = (0..basis.dim())
        .map(|i| {
            let t = charge_of_multiset(basis.multiset(i), n_a);
            t.iter()
                .enumerate()
                .map(|(q, &l)| if l == 0 { 1.0 } else { weights[q].powi(l as i32) / rising(binomial_f64(n_a as i64, q as i64), l) })
                .product::<f64>()
                * kf
        })
        .collect();
    MomentOperator::diagonal(n_a, k, &values)
}

/// The same operator from the literal replica expression
/// `Π_sym [Σ_T multinomial(k,T)^2 ⊗_{Q_A} w^{T} ρ^{(T)}_{Haar,Q_A}] Π_sym`,
/// built densely from permutation sums.
pub fn sector_superposition_moment_dense(n_a: usize, weights: &[f64], k: usize, budget: usize) -> Result<CMatrix> {
    if weights.len() != n_a + 1 {
        return Err(Error::DimensionMismatch(weights.len(), n_a + 1));
    }
    replica_sum_dense(n_a, k, budget, |t| t.iter().zip(weights).map(|(&l, &w)| w.powi(l as i32)).product())
}

/// `Π_sym [Σ_T multinomial(k,T)^2 f(T) ⊗_{Q_A} ρ^{(T)}_{Haar,Q_A}] Π_sym` with
/// empty tensor factors omitted.
pub fn replica_sum_dense(n_a: usize, k: usize, budget: usize, f: impl Fn(&[usize]) -> f64) -> Result<CMatrix> {
    let d = 1usize << n_a;
    let dim = d.checked_pow(k as u32).unwrap_or(usize::MAX);
    check_budget(dim, budget)?;
    let projector = |q: usize| {
        crate::linalg::diag(&(0..d).map(|a| if a.count_ones() as usize == q { 1.0 } else { 0.0 }).collect::<Vec<_>>())
    };
    let sector_haar = |q: usize, l: usize| -> Result<CMatrix> {
        let p = kron_power(&projector(q), l);
        let sym = symmetric_projector(d, l, budget)?;
        let d_q = binomial(n_a as i64, q as i64) as i64;
        Ok((&p * sym * &p).unscale(binomial(d_q + l as i64 - 1, l as i64) as f64))
    };
    let mut inner = CMatrix::zeros(dim, dim);
    for t in type_vectors(k, n_a + 1).iter() {
        let coeff = f(t) * multinomial(t).powi(2);
        if coeff == 0.0 {
            continue;
        }
        let mut term: Option<CMatrix> = None;
        for (q, &l) in t.iter().enumerate() {
            if l == 0 {
                continue;
            }
            let factor = sector_haar(q, l)?;
            term = Some(match term {
                None => factor,
                Some(acc) => kron(&acc, &factor),
            });
        }
        inner += term.ok_or_else(|| invalid("moment order must be at least 1"))?.scale(coeff);
    }
    let sym = symmetric_projector(d, k, budget)?;
    Ok(&sym * inner * &sym)
}

/// `Σ_{Q_B} π_p(Q_B)` times the sector superposition with weights
/// `π_p(Q_A+Q_B|Q_B)`: the moment assembled from the replica-limit
/// coefficients.
pub fn replica_moment_z(p: &ChargeDistribution, n_a: usize, k: usize) -> Result<MomentOperator> {
    let bath = bath_charge_distribution(p, n_a)?;
    let mut total: Option<MomentOperator> = None;
    for (q_b, &w) in bath.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let part = sector_superposition_moment(n_a, &posterior_subsystem_charge(p, n_a, q_b)?, k)?;
        match total.as_mut() {
            None => total = Some(part.scaled(w)),
            Some(t) => t.add_scaled(&part, w)?,
        }
    }
    let total = total.ok_or_else(|| Error::Failed("no bath charge has positive probability".into()))?;
    let tr = total.trace();
    Ok(total.scaled(1.0 / tr))
}

fn check_type(t: &[usize], n_a: usize) -> Result<()> {
    if t.len() != n_a + 1 {
        return Err(Error::DimensionMismatch(t.len(), n_a + 1));
    }
    Ok(())
}

/// Exact coefficient for a positive integer power `n` of the outcome
/// probability, `E[(Σ_{Q_A} p(Q_A,z))^n ∏ p(Q_A,z)^{T}]`, for a bath string
/// `z` of charge `q_b`.
pub fn fp_exact_integer_n(p: &ChargeDistribution, t: &[usize], n_a: usize, q_b: usize, n: usize) -> Result<f64> {
    let big_n = p.n_qubits();
    check_type(t, n_a)?;
    if n_a >= big_n || q_b > big_n - n_a {
        return Err(invalid(format!("bad sizes N={big_n}, n_a={n_a}, q_b={q_b}")));
    }
    let count = binomial((n + n_a) as i64, n_a as i64);
    if count > MAX_TYPES as u128 {
        return Err(Error::BudgetExceeded { required: count as usize, budget: MAX_TYPES });
    }
    let mut total = 0.0;
    for tp in type_vectors(n, n_a + 1).iter() {
        let mut term = multinomial(tp);
        for q_a in 0..=n_a {
            let l = t[q_a] + tp[q_a];
            if l == 0 {
                continue;
            }
            let q = q_a + q_b;
            let d_a = binomial_f64(n_a as i64, q_a as i64);
            let d_n = binomial_f64(big_n as i64, q as i64);
            term *= p.probs()[q].powi(l as i32) * (0..l).map(|i| (d_a + i as f64) / (d_n + i as f64)).product::<f64>();
        }
        total += term;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of [`fp_exact_integer_n`] for several `(T, n)`
/// cells sharing the same Haar draws. The bath string is the one with the
/// lowest `q_b` bath qubits set.
pub fn fp_mc_cells(
    p: &ChargeDistribution,
    n_a: usize,
    q_b: usize,
    cells: &[(Vec<usize>, usize)],
    samples: usize,
    seed: u64,
) -> Result<Vec<FpEstimate>> {
    let big_n = p.n_qubits();
    if samples == 0 {
        return Err(invalid("sample count must be positive"));
    }
    if n_a >= big_n || q_b > big_n - n_a {
        return Err(invalid(format!("bad sizes N={big_n}, n_a={n_a}, q_b={q_b}")));
    }
    for (t, _) in cells {
        check_type(t, n_a)?;
    }
    let table = SectorTable::new(big_n);
    let z = ((1usize << q_b) - 1) << n_a;
    let bath_mask = !((1usize << n_a) - 1);
    // per subsystem charge: sector size and the positions that carry bath string z
    let sectors: Vec<Option<(usize, Vec<usize>, f64)>> = (0..=n_a)
        .map(|q_a| {
            let q = q_a + q_b;
            let pq = p.probs()[q];
            (pq > 0.0).then(|| {
                let idx = table.sector(q);
                let marked = idx.iter().enumerate().filter(|(_, &i)| i & bath_mask == z).map(|(pos, _)| pos).collect();
                (idx.len(), marked, pq)
            })
        })
        .collect();

    let chunks = samples.div_ceil(CHUNK);
    let stats: Vec<Vec<(f64, f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, &[domain::REPLICA, c as u64]);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut acc = vec![(0.0, 0.0, 0.0); cells.len()];
            let mut joint = vec![0.0; n_a + 1];
            let mut g = Vec::new();
            for _ in 0..count {
                for (q_a, s) in sectors.iter().enumerate() {
                    joint[q_a] = match s {
                        None => 0.0,
                        Some((dim, marked, pq)) => {
                            g.clear();
                            g.extend((0..*dim).map(|_| complex_normal(&mut rng).norm_sqr()));
                            let norm: f64 = g.iter().sum();
                            pq * marked.iter().map(|&m| g[m]).sum::<f64>() / norm
                        }
                    };
                }
                let marginal: f64 = joint.iter().sum();
                for (cell, (t, n)) in acc.iter_mut().zip(cells) {
                    let v = marginal.powi(*n as i32)
                        * t.iter().zip(&joint).map(|(&l, &x)| if l == 0 { 1.0 } else { x.powi(l as i32) }).product::<f64>();
                    // Welford update: (count, mean, M2)
                    cell.0 += 1.0;
                    let delta = v - cell.1;
                    cell.1 += delta / cell.0;
                    cell.2 += delta * (v - cell.1);
                }
            }
            acc
        })
        .collect();

    let mut merged = vec![(0.0f64, 0.0f64, 0.0f64); cells.len()];
    for chunk in stats {
        for (m, s) in merged.iter_mut().zip(chunk) {
            let total = m.0 + s.0;
            let delta = s.1 - m.1;
            m.2 += s.2 + delta * delta * m.0 * s.0 / total;
            m.1 += delta * s.0 / total;
            m.0 = total;
        }
    }
    Ok(merged
        .into_iter()
        .map(|(cnt, mean, m2)| {
            let var = if cnt > 1.0 { m2 / (cnt - 1.0) } else { 0.0 };
            FpEstimate { mean, stderr: (var / cnt).sqrt(), samples }
        })
        .collect())
}

pub fn fp_mc(
    p: &ChargeDistribution,
    t: &[usize],
    n_a: usize,
    q_b: usize,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<FpEstimate> {
    Ok(fp_mc_cells(p, n_a, q_b, &[(t.to_vec(), n)], samples, seed)?[0])
}

/// Large-dimension replica limit for z-basis measurements:
/// `C(N_B,Q_B)^{-1} π_p(Q_B) ∏ π_p(Q_A+Q_B|Q_B)^{T}`.
pub fn fp_replica_limit_z(p: &ChargeDistribution, t: &[usize], n_a: usize, q_b: usize) -> Result<f64> {
    check_type(t, n_a)?;
    let n_b = p.n_qubits() - n_a;
    let bath = bath_charge_distribution(p, n_a)?;
    let post = posterior_subsystem_charge(p, n_a, q_b)?;
    let prod: f64 = t.iter().zip(&post).map(|(&l, &w)| if l == 0 { 1.0 } else { w.powi(l as i32) }).product();
    Ok(bath[q_b] / binomial_f64(n_b as i64, q_b as i64) * prod)
}

/// Replica limit for x-basis measurements of a definite-charge state:
/// `2^{-N_B} ∏ π(Q_A|Q0)^{T}`.
pub fn fp_replica_limit_x(n: usize, n_a: usize, q0: usize, t: &[usize]) -> Result<f64> {
    check_type(t, n_a)?;
    if n_a > n {
        return Err(invalid(format!("subsystem size {n_a} exceeds {n}")));
    }
    let prior = sector_prior(n, n_a, q0)?;
    let prod: f64 = t.iter().zip(&prior).map(|(&l, &w)| if l == 0 { 1.0 } else { w.powi(l as i32) }).product();
    Ok(prod * (-((n - n_a) as f64)).exp2())
}
