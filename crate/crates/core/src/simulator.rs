//! Dense state-vector simulation of U(1)-symmetric brickwork circuits.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{complex_normal, norm_sqr, CMatrix, ONE, ZERO};
use crate::rng::CircuitStreams;
use crate::sectors::ChargeDistribution;

const NORM_TOL: f64 = 1e-10;

/// Normalized amplitudes over the `2^n` computational basis states. Qubit `i`
/// is bit `i` of the index.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Wraps amplitudes of unit norm.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(invalid(format!("amplitude count {dim} is not a power of two")));
        }
        let norm = norm_sqr(&amps).sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(invalid(format!("state has norm {norm}")));
        }
        Ok(Self { n_qubits: dim.trailing_zeros() as usize, amps })
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(mut amps: Vec<Complex64>) -> Result<Self> {
        let norm = norm_sqr(&amps).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid("cannot normalize a null vector"));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Self::from_amplitudes(amps)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[index] = ONE;
        Self { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    pub fn overlap(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// Applies `gate` on qubits `(i, j)`; `i` is the low bit of the gate's
    /// local two-bit index.
    pub fn apply_two_qubit_gate(&mut self, gate: &U1Gate, i: usize, j: usize) -> Result<()> {
        if i == j || i >= self.n_qubits || j >= self.n_qubits {
            return Err(invalid(format!("bad gate qubits ({i}, {j}) on {} qubits", self.n_qubits)));
        }
        let (bi, bj) = (1usize << i, 1usize << j);
        let (lo, hi) = (i.min(j), i.max(j));
        let e0 = Complex64::from_polar(1.0, gate.phi0);
        let e1 = Complex64::from_polar(1.0, gate.phi1);
        let u = gate.u;
        for r in 0..self.amps.len() >> 2 {
            let base = insert_zero_bit(insert_zero_bit(r, lo), hi);
            let (i00, i10, i01, i11) = (base, base | bi, base | bj, base | bi | bj);
            self.amps[i00] *= e0;
            self.amps[i11] *= e1;
            let (a, b) = (self.amps[i10], self.amps[i01]);
            self.amps[i10] = u[0][0] * a + u[0][1] * b;
            self.amps[i01] = u[1][0] * a + u[1][1] * b;
        }
        Ok(())
    }

    pub fn apply_single_qubit(&mut self, m: &[[Complex64; 2]; 2], q: usize) {
        let bit = 1usize << q;
        for r in 0..self.amps.len() >> 1 {
            let i0 = insert_zero_bit(r, q);
            let i1 = i0 | bit;
            let (a, b) = (self.amps[i0], self.amps[i1]);
            self.amps[i0] = m[0][0] * a + m[0][1] * b;
            self.amps[i1] = m[1][0] * a + m[1][1] * b;
        }
    }

    /// Rotates each listed qubit so that a subsequent z measurement is a
    /// measurement along its axis. A z axis is left untouched.
    pub fn rotate_measurement_frame(&mut self, qubits: &[usize], axes: &[BlochAxis]) -> Result<()> {
        if qubits.len() != axes.len() {
            return Err(invalid(format!("{} qubits but {} axes", qubits.len(), axes.len())));
        }
        for (&q, axis) in qubits.iter().zip(axes) {
            if q >= self.n_qubits {
                return Err(invalid(format!("qubit {q} out of range")));
            }
            if !axis.is_z() {
                self.apply_single_qubit(&axis.frame_rotation(), q);
            }
        }
        Ok(())
    }

    /// One time step of the brickwork circuit: an even half-layer of fresh
    /// random gates followed by an odd half-layer.
    pub fn brickwork_step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let schedule = CircuitSchedule::new(self.n_qubits);
        for parity in [0, 1] {
            for (i, j) in schedule.half_layer(parity) {
                let gate = U1Gate::random(rng);
                self.apply_two_qubit_gate(&gate, i, j).expect("schedule pairs are in range");
            }
        }
    }

    /// Brickwork step `t` with every gate drawn from its own substream keyed on
    /// `(t, left qubit)`.
    pub fn brickwork_step_keyed(&mut self, streams: &CircuitStreams, t: u64) {
        let schedule = CircuitSchedule::new(self.n_qubits);
        for parity in [0, 1] {
            for (i, j) in schedule.half_layer(parity) {
                let gate = U1Gate::random(&mut streams.gate(t, i as u64));
                self.apply_two_qubit_gate(&gate, i, j).expect("schedule pairs are in range");
            }
        }
    }

    pub fn charge_distribution(&self) -> ChargeDistribution {
        let mut probs = vec![0.0; self.n_qubits + 1];
        for (idx, a) in self.amps.iter().enumerate() {
            probs[idx.count_ones() as usize] += a.norm_sqr();
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        ChargeDistribution::new(probs).expect("state norm is one")
    }
}

fn insert_zero_bit(x: usize, pos: usize) -> usize {
    let low = x & ((1 << pos) - 1);
    ((x >> pos) << (pos + 1)) | low
}

/// Two-qubit gate, block-diagonal in the local charge: phases on `|00>` and
/// `|11>`, a 2x2 unitary on the one-excitation block. In the block, the first
/// basis vector has the excitation on the gate's first qubit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct U1Gate {
    pub phi0: f64,
    pub phi1: f64,
    pub u: [[Complex64; 2]; 2],
}

impl U1Gate {
    pub fn identity() -> Self {
        Self { phi0: 0.0, phi1: 0.0, u: [[ONE, ZERO], [ZERO, ONE]] }
    }

    /// Uniform phases and a Haar-random 2x2 block (Gram-Schmidt on a complex
    /// Gaussian pair, which fixes the R factor's diagonal to be positive).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let phi0 = rng.random::<f64>() * TAU;
        let phi1 = rng.random::<f64>() * TAU;
        let a = [complex_normal(rng), complex_normal(rng)];
        let b = [complex_normal(rng), complex_normal(rng)];
        let na = (a[0].norm_sqr() + a[1].norm_sqr()).sqrt();
        let c0 = [a[0] / na, a[1] / na];
        let proj = c0[0].conj() * b[0] + c0[1].conj() * b[1];
        let r = [b[0] - proj * c0[0], b[1] - proj * c0[1]];
        let nr = (r[0].norm_sqr() + r[1].norm_sqr()).sqrt();
        let c1 = [r[0] / nr, r[1] / nr];
        Self { phi0, phi1, u: [[c0[0], c1[0]], [c0[1], c1[1]]] }
    }

    /// Full 4x4 matrix on the local index `b_first + 2 b_second`.
    pub fn matrix(&self) -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = Complex64::from_polar(1.0, self.phi0);
        m[(3, 3)] = Complex64::from_polar(1.0, self.phi1);
        for r in 0..2 {
            for c in 0..2 {
                m[(r + 1, c + 1)] = self.u[r][c];
            }
        }
        m
    }
}

/// Open-boundary brickwork on a chain. Parity-0 half-layers pair
/// `(0,1), (2,3), ...`; parity-1 half-layers pair `(1,2), (3,4), ...`.
#[derive(Clone, Copy, Debug)]
pub struct CircuitSchedule {
    n_qubits: usize,
}

impl CircuitSchedule {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits }
    }

    pub fn half_layer(&self, parity: usize) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n_qubits;
        (parity..n.saturating_sub(1)).step_by(2).map(|i| (i, i + 1))
    }
}

/// Measurement direction on the Bloch sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochAxis {
    pub polar: f64,
    pub azimuth: f64,
}

impl BlochAxis {
    pub const Z: BlochAxis = BlochAxis { polar: 0.0, azimuth: 0.0 };
    pub const X: BlochAxis = BlochAxis { polar: std::f64::consts::FRAC_PI_2, azimuth: 0.0 };
    pub const Y: BlochAxis = BlochAxis { polar: std::f64::consts::FRAC_PI_2, azimuth: std::f64::consts::FRAC_PI_2 };

    pub fn is_z(&self) -> bool {
        self.polar == 0.0
    }

    /// Reflection through the bisector of this axis and z: maps the `+`
    /// eigenstate of the axis to `|0>` and the `-` eigenstate to `|1>`.
    /// Hermitian and unitary, hence an involution.
    pub fn frame_rotation(&self) -> [[Complex64; 2]; 2] {
        let (s, c) = (self.polar / 2.0).sin_cos();
        let e = Complex64::from_polar(1.0, self.azimuth);
        [[Complex64::from(c), e.conj() * s], [e * s, Complex64::from(-c)]]
    }
}

/// `[(cos θ|0> + sin θ|1>)(sin θ|0> + cos θ|1>)]^{N/2}`.
pub fn prepare_theta_state(n: usize, theta: f64) -> Result<StateVector> {
    if n == 0 || n % 2 != 0 {
        return Err(invalid(format!("theta states need an even qubit count, got {n}")));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(invalid(format!("theta {theta} outside [0, pi/2)")));
    }
    let (s, c) = theta.sin_cos();
    let single = |q: usize| if q % 2 == 0 { [c, s] } else { [s, c] };
    product_state(n, single)
}

fn product_state(n: usize, single: impl Fn(usize) -> [f64; 2]) -> Result<StateVector> {
    let factors: Vec<[f64; 2]> = (0..n).map(single).collect();
    let amps = (0..1usize << n)
        .map(|idx| {
            let a: f64 = factors.iter().enumerate().map(|(q, f)| f[idx >> q & 1]).product();
            Complex64::from(a)
        })
        .collect();
    StateVector::normalized(amps)
}

/// Computational basis state; character `i` of the pattern is qubit `i`.
pub fn prepare_bitstring_state(pattern: &str) -> Result<StateVector> {
    let n = pattern.len();
    if n == 0 || n >= 40 {
        return Err(invalid(format!("bit pattern length {n} unsupported")));
    }
    let mut index = 0usize;
    for (q, ch) in pattern.chars().enumerate() {
        match ch {
            '0' => {}
            '1' => index |= 1 << q,
            other => return Err(invalid(format!("bit pattern contains {other:?}"))),
        }
    }
    Ok(StateVector::basis(n, index))
}

/// Repeats `unit` to length `n`.
pub fn tile_pattern(unit: &str, n: usize) -> Result<String> {
    if unit.is_empty() || n % unit.len() != 0 {
        return Err(invalid(format!("pattern {unit:?} does not tile {n} qubits")));
    }
    Ok(unit.repeat(n / unit.len()))
}

/// Haar-random state supported on the charge-`q0` sector.
pub fn haar_random_sector_state<R: Rng + ?Sized>(n: usize, q0: usize, rng: &mut R) -> Result<StateVector> {
    if q0 > n {
        return Err(invalid(format!("charge {q0} exceeds {n} qubits")));
    }
    let amps = (0..1usize << n)
        .map(|idx| if idx.count_ones() as usize == q0 { complex_normal(rng) } else { ZERO })
        .collect();
    StateVector::normalized(amps)
}

/// Haar-random state on all `n` qubits, without definite charge.
pub fn haar_random_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> StateVector {
    let amps = (0..1usize << n).map(|_| complex_normal(rng)).collect();
    StateVector::normalized(amps).expect("gaussian vector is nonzero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, kron};
    use crate::sectors::{product_state_charge_distribution, theta_state_excitations};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn gate_commutes_with_local_charge() {
        let mut r = rng(1);
        let charge = diag(&[0.0, 1.0, 1.0, 2.0]);
        for _ in 0..100 {
            let g = U1Gate::random(&mut r).matrix();
            assert!((&g * &charge - &charge * &g).norm() < 1e-12);
            assert!((g.adjoint() * &g - CMatrix::identity(4, 4)).norm() < 1e-12);
        }
    }

    #[test]
    fn haar_block_first_moment() {
        // E[u X u†] = Tr(X)/2 I for Haar u
        let mut r = rng(2);
        let x = [[Complex64::new(0.7, 0.0), Complex64::new(0.2, -0.4)], [Complex64::new(0.1, 0.3), Complex64::new(-0.3, 0.0)]];
        let tr = x[0][0] + x[1][1];
        let mut acc = [[ZERO; 2]; 2];
        let draws = 100_000;
        for _ in 0..draws {
            let u = U1Gate::random(&mut r).u;
            for a in 0..2 {
                for b in 0..2 {
                    let mut s = ZERO;
                    for c in 0..2 {
                        for d in 0..2 {
                            s += u[a][c] * x[c][d] * u[b][d].conj();
                        }
                    }
                    acc[a][b] += s / draws as f64;
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                let expected = if a == b { tr / 2.0 } else { ZERO };
                assert!((acc[a][b] - expected).norm() < 0.01, "{a}{b}: {}", acc[a][b]);
            }
        }
    }

    #[test]
    fn gate_examples() {
        let mut psi = prepare_bitstring_state("0110").unwrap();
        let before = psi.clone();
        psi.apply_two_qubit_gate(&U1Gate::identity(), 1, 2).unwrap();
        assert_eq!(psi, before);

        let swap = U1Gate { phi0: 0.0, phi1: 0.0, u: [[ZERO, ONE], [ONE, ZERO]] };
        let mut psi = prepare_bitstring_state("01").unwrap();
        psi.apply_two_qubit_gate(&swap, 0, 1).unwrap();
        assert_eq!(psi, prepare_bitstring_state("10").unwrap());

        let g = U1Gate::random(&mut rng(5));
        let mut psi = prepare_bitstring_state("000").unwrap();
        psi.apply_two_qubit_gate(&g, 0, 2).unwrap();
        assert!((psi.amplitudes()[0] - Complex64::from_polar(1.0, g.phi0)).norm() < 1e-15);

        assert!(psi.apply_two_qubit_gate(&g, 1, 1).is_err());
        assert!(psi.apply_two_qubit_gate(&g, 0, 3).is_err());
    }

    #[test]
    fn gate_application_matches_dense_matrix() {
        let mut r = rng(9);
        let g = U1Gate::random(&mut r);
        let psi = haar_random_state(3, &mut r);
        // qubits (0, 1): the local index is bits 0 and 1 of the basis index
        let mut fast = psi.clone();
        fast.apply_two_qubit_gate(&g, 0, 1).unwrap();
        let full = kron(&CMatrix::identity(2, 2), &g.matrix());
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        let dense = full * v;
        for (a, b) in fast.amplitudes().iter().zip(dense.iter()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn brickwork_conserves_charge_and_norm() {
        let mut r = rng(4);
        let mut psi = prepare_theta_state(12, PI / 7.0).unwrap();
        let p0 = psi.charge_distribution();
        for _ in 0..100 {
            psi.brickwork_step(&mut r);
        }
        assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-10);
        for (a, b) in psi.charge_distribution().probs().iter().zip(p0.probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }

        let mut neel = prepare_bitstring_state(&tile_pattern("01", 4).unwrap()).unwrap();
        neel.brickwork_step(&mut r);
        for (idx, a) in neel.amplitudes().iter().enumerate() {
            if idx.count_ones() != 2 {
                assert_eq!(a.norm(), 0.0);
            }
        }
    }

    #[test]
    fn keyed_steps_are_deterministic() {
        let streams = CircuitStreams::new(42, 3);
        let mut a = prepare_theta_state(8, 0.3).unwrap();
        let mut b = a.clone();
        for t in 0..5 {
            a.brickwork_step_keyed(&streams, t);
            b.brickwork_step_keyed(&streams, t);
        }
        assert_eq!(a, b);
        let mut c = prepare_theta_state(8, 0.3).unwrap();
        let other = CircuitStreams::new(42, 4);
        for t in 0..5 {
            c.brickwork_step_keyed(&other, t);
        }
        assert_ne!(a, c);
    }

    #[test]
    fn schedule_pairs() {
        let s = CircuitSchedule::new(5);
        assert_eq!(s.half_layer(0).collect::<Vec<_>>(), vec![(0, 1), (2, 3)]);
        assert_eq!(s.half_layer(1).collect::<Vec<_>>(), vec![(1, 2), (3, 4)]);
        assert_eq!(CircuitSchedule::new(1).half_layer(0).count(), 0);
    }

    #[test]
    fn theta_state_special_cases() {
        let neel = prepare_theta_state(6, 0.0).unwrap();
        assert_eq!(neel, prepare_bitstring_state("010101").unwrap());
        let plus = prepare_theta_state(4, FRAC_PI_4).unwrap();
        for a in plus.amplitudes() {
            assert_abs_diff_eq!(a.re, 0.25, epsilon = 1e-15);
        }
        for theta in [0.0, 0.1, PI / 20.0, 0.7, 1.2] {
            let p = prepare_theta_state(8, theta).unwrap().charge_distribution();
            assert_abs_diff_eq!(p.mean(), 4.0, epsilon = 1e-12);
            let q = product_state_charge_distribution(&theta_state_excitations(8, theta)).unwrap();
            for (a, b) in p.probs().iter().zip(q.probs()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
        assert!(prepare_theta_state(5, 0.1).is_err());
    }

    #[test]
    fn plus_state_charge_is_binomial() {
        let p = prepare_theta_state(6, FRAC_PI_4).unwrap().charge_distribution();
        for (q, v) in p.probs().iter().enumerate() {
            assert_abs_diff_eq!(*v, crate::sectors::binomial_f64(6, q as i64) / 64.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn bitstring_states() {
        let s = prepare_bitstring_state(&tile_pattern("0001", 8).unwrap()).unwrap();
        assert_eq!(s.charge_distribution().definite_charge(), Some(2));
        let z = prepare_bitstring_state("0000").unwrap();
        assert_eq!(z.amplitudes()[0], ONE);
        assert!(tile_pattern("0001", 6).is_err());
        assert!(prepare_bitstring_state("01a").is_err());
    }

    #[test]
    fn sector_state_support_and_first_moment() {
        let mut r = rng(6);
        let (n, q0) = (4usize, 2usize);
        let dim_q = 6.0;
        let draws = 10_000;
        let mut mean = CMatrix::zeros(16, 16);
        for _ in 0..draws {
            let psi = haar_random_sector_state(n, q0, &mut r).unwrap();
            assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-12);
            assert_eq!(psi.charge_distribution().definite_charge(), Some(q0));
            mean += crate::linalg::outer(psi.amplitudes()).scale(1.0 / draws as f64);
        }
        let proj = diag(&(0..16usize).map(|i| if i.count_ones() == 2 { 1.0 / dim_q } else { 0.0 }).collect::<Vec<_>>());
        let dist = crate::metrics::trace_distance_matrices(&mean, &proj).unwrap();
        assert!(dist < 5.0 / dim_q.sqrt() / (draws as f64).sqrt() * 10.0, "{dist}");
    }

    #[test]
    fn frame_rotations() {
        let x = BlochAxis::X.frame_rotation();
        let mut psi = haar_random_state(2, &mut rng(8));
        let before = psi.clone();
        psi.apply_single_qubit(&x, 1);
        psi.apply_single_qubit(&x, 1);
        assert!((psi.overlap(&before).norm() - 1.0).abs() < 1e-12);

        let mut plus = StateVector::normalized(vec![ONE, ONE]).unwrap();
        plus.rotate_measurement_frame(&[0], &[BlochAxis::X]).unwrap();
        assert_abs_diff_eq!(plus.amplitudes()[0].norm(), 1.0, epsilon = 1e-15);

        let mut psi2 = before.clone();
        psi2.rotate_measurement_frame(&[0, 1], &[BlochAxis::Z, BlochAxis::Z]).unwrap();
        assert_eq!(psi2, before);

        // the + eigenstate of an arbitrary axis maps to |0>
        let axis = BlochAxis { polar: 1.1, azimuth: 2.3 };
        let (s, c) = (axis.polar / 2.0).sin_cos();
        let mut up = StateVector::normalized(vec![Complex64::from(c), Complex64::from_polar(s, axis.azimuth)]).unwrap();
        up.rotate_measurement_frame(&[0], &[axis]).unwrap();
        assert_abs_diff_eq!(up.amplitudes()[0].norm(), 1.0, epsilon = 1e-14);
    }
}
