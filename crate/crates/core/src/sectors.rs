//! U(1) charge-sector combinatorics.
//!
//! Charge is the Hamming weight of a computational basis index. Qubit `i`
//! is bit `i` of the index (qubit 0 least significant) and the subsystem
//! `A` is qubits `0..n_a`, so a basis index factors as
//! `index_a + 2^n_a * index_b`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const NORM_TOL: f64 = 1e-12;

/// Exact binomial coefficient; zero outside `0 <= k <= n`.
pub fn try_binomial(n: i64, k: i64) -> Result<u128> {
    if n < 0 {
        return Err(invalid(format!("binomial with negative n = {n}")));
    }
    if k < 0 || k > n {
        return Ok(0);
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc
            .checked_mul(n - i)
            .ok_or_else(|| Error::Overflow(format!("C({n},{k})")))?
            / (i + 1);
    }
    Ok(acc)
}

/// Exact binomial coefficient. Panics on overflow, which cannot happen for
/// `n <= 64`.
pub fn binomial(n: i64, k: i64) -> u128 {
    try_binomial(n, k).expect("binomial coefficient out of range")
}

pub fn binomial_f64(n: i64, k: i64) -> f64 {
    binomial(n, k) as f64
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy_base2(sigma: f64) -> Result<f64> {
    Ok(binary_entropy_nats(sigma)? / std::f64::consts::LN_2)
}

/// Binary entropy in nats.
pub fn binary_entropy_nats(sigma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(invalid(format!("binary entropy argument {sigma} outside [0, 1]")));
    }
    let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    Ok(term(sigma) + term(1.0 - sigma))
}

/// Probability distribution of the total charge `Q = 0..=n_qubits`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeDistribution {
    n_qubits: usize,
    probs: Vec<f64>,
}

impl ChargeDistribution {
    /// Validates nonnegativity and normalization, then clamps tiny negative
    /// roundoff to zero.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("empty charge distribution"));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < -NORM_TOL) {
            return Err(invalid(format!("charge probability {p} is negative or not finite")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("charge distribution sums to {total}")));
        }
        let probs = probs.into_iter().map(|p| p.max(0.0) / total).collect::<Vec<_>>();
        Ok(Self { n_qubits: probs.len() - 1, probs })
    }

    /// `p(Q) = δ_{Q,q0}`.
    pub fn definite(n_qubits: usize, q0: usize) -> Result<Self> {
        if q0 > n_qubits {
            return Err(invalid(format!("charge {q0} exceeds {n_qubits} qubits")));
        }
        let mut probs = vec![0.0; n_qubits + 1];
        probs[q0] = 1.0;
        Ok(Self { n_qubits, probs })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `p(q)`, zero outside the support range.
    pub fn prob(&self, q: i64) -> f64 {
        if q < 0 || q as usize > self.n_qubits {
            0.0
        } else {
            self.probs[q as usize]
        }
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(q, p)| q as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(q, p)| (q as f64 - mean).powi(2) * p)
            .sum()
    }

    /// The charge value if the distribution is a point mass.
    pub fn definite_charge(&self) -> Option<usize> {
        let (q, p) = self
            .probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))?;
        ((1.0 - p).abs() < 1e-12).then_some(q)
    }
}

/// Computational basis indices grouped by Hamming weight.
#[derive(Clone, Debug)]
pub struct SectorTable {
    n_qubits: usize,
    sectors: Vec<Vec<usize>>,
    // basis index -> (charge, position within sector)
    lookup: Vec<(u32, u32)>,
}

impl SectorTable {
    pub fn new(n_qubits: usize) -> Self {
        assert!(n_qubits < usize::BITS as usize - 1, "too many qubits for a sector table");
        let dim = 1usize << n_qubits;
        let mut sectors = vec![Vec::new(); n_qubits + 1];
        let mut lookup = Vec::with_capacity(dim);
        for index in 0..dim {
            let q = index.count_ones() as usize;
            lookup.push((q as u32, sectors[q].len() as u32));
            sectors[q].push(index);
        }
        Self { n_qubits, sectors, lookup }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn sector(&self, q: usize) -> &[usize] {
        &self.sectors[q]
    }

    pub fn sector_dim(&self, q: usize) -> usize {
        self.sectors.get(q).map_or(0, Vec::len)
    }

    /// `(charge, position within sector)` of a basis index.
    pub fn locate(&self, index: usize) -> (usize, usize) {
        let (q, pos) = self.lookup[index];
        (q as usize, pos as usize)
    }
}

/// `π(Q_A | Q0) = C(N_A,Q_A) C(N-N_A, Q0-Q_A) / C(N,Q0)` for `Q_A = 0..=n_a`.
pub fn sector_prior(n: usize, n_a: usize, q0: usize) -> Result<Vec<f64>> {
    if n_a > n || q0 > n {
        return Err(invalid(format!("sector prior needs n_a <= n and q0 <= n (n={n}, n_a={n_a}, q0={q0})")));
    }
    let (n, n_a, q0) = (n as i64, n_a as i64, q0 as i64);
    let total = try_binomial(n, q0)?;
    (0..=n_a)
        .map(|qa| {
            let count = try_binomial(n_a, qa)?
                .checked_mul(try_binomial(n - n_a, q0 - qa)?)
                .ok_or_else(|| Error::Overflow("sector prior numerator".into()))?;
            Ok(count as f64 / total as f64)
        })
        .collect()
}

/// `π(Q_B | Q) = C(N_A, Q-Q_B) C(N_B, Q_B) / C(N, Q)`.
pub fn bath_given_total(n: usize, n_a: usize, q: usize, q_b: usize) -> f64 {
    let (n, n_a, q, q_b) = (n as i64, n_a as i64, q as i64, q_b as i64);
    let n_b = n - n_a;
    let num = binomial(n_a, q - q_b) * binomial(n_b, q_b);
    if num == 0 {
        return 0.0;
    }
    num as f64 / binomial(n, q) as f64
}

/// Marginal bath-charge distribution `π_p(Q_B)` for `Q_B = 0..=N-n_a`.
pub fn bath_charge_distribution(p: &ChargeDistribution, n_a: usize) -> Result<Vec<f64>> {
    let n = p.n_qubits();
    if n_a >= n {
        return Err(invalid(format!("subsystem size {n_a} must be smaller than {n}")));
    }
    let n_b = n - n_a;
    let mut out: Vec<f64> = (0..=n_b)
        .map(|q_b| {
            (q_b..=q_b + n_a)
                .map(|q| p.prob(q as i64) * if q <= n { bath_given_total(n, n_a, q, q_b) } else { 0.0 })
                .sum()
        })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}

/// Posterior `π_p(Q | Q_B)` over total charge `Q = 0..=N`.
pub fn posterior_charge_distribution(p: &ChargeDistribution, n_a: usize, q_b: usize) -> Result<Vec<f64>> {
    let n = p.n_qubits();
    if n_a >= n || q_b > n - n_a {
        return Err(invalid(format!("bath charge {q_b} out of range for n={n}, n_a={n_a}")));
    }
    let joint: Vec<f64> = (0..=n)
        .map(|q| p.probs()[q] * bath_given_total(n, n_a, q, q_b))
        .collect();
    let marginal: f64 = joint.iter().sum();
    if marginal <= 0.0 {
        return Err(Error::ZeroProbability(q_b));
    }
    Ok(joint.into_iter().map(|x| x / marginal).collect())
}

/// Posterior over the subsystem charge, `π_p(Q_A + Q_B | Q_B)` for
/// `Q_A = 0..=n_a`.
pub fn posterior_subsystem_charge(p: &ChargeDistribution, n_a: usize, q_b: usize) -> Result<Vec<f64>> {
    let post = posterior_charge_distribution(p, n_a, q_b)?;
    Ok((0..=n_a).map(|qa| post[qa + q_b]).collect())
}

/// Thermal charge distribution `p(Q) = z^Q C(N,Q) / (1+z)^N`.
pub fn equilibrium_distribution(z: f64, n: usize) -> Result<ChargeDistribution> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(invalid(format!("fugacity must be positive, got {z}")));
    }
    // work with x = z/(1+z) to avoid overflow in z^Q
    let x = z / (1.0 + z);
    let probs = (0..=n)
        .map(|q| binomial_f64(n as i64, q as i64) * x.powi(q as i32) * (1.0 - x).powi((n - q) as i32))
        .collect();
    ChargeDistribution::new(probs)
}

/// Poisson-binomial distribution of the number of excitations for
/// independent qubits with the given excitation probabilities.
pub fn product_state_charge_distribution(excitation_probs: &[f64]) -> Result<ChargeDistribution> {
    if let Some(q) = excitation_probs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(invalid(format!("excitation probability {q} outside [0, 1]")));
    }
    let mut dist = vec![1.0];
    for &q in excitation_probs {
        let mut next = vec![0.0; dist.len() + 1];
        for (k, &w) in dist.iter().enumerate() {
            next[k] += w * (1.0 - q);
            next[k + 1] += w * q;
        }
        dist = next;
    }
    ChargeDistribution::new(dist)
}

/// Per-qubit excitation probabilities of the alternating theta product state
/// `[(cos θ|0> + sin θ|1>)(sin θ|0> + cos θ|1>)]^{N/2}`.
pub fn theta_state_excitations(n: usize, theta: f64) -> Vec<f64> {
    let (s, c) = theta.sin_cos();
    (0..n).map(|i| if i % 2 == 0 { s * s } else { c * c }).collect()
}
