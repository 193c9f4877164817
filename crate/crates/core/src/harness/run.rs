use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FitKind, TargetConfig};
use crate::ensembles::{moment, project, MeasurementBasis, MomentOperator};
use crate::error::{invalid, Error, Result};
use crate::metrics::{exponential_fit, plateau_average, power_fit, trace_distance, Fit, Plateau, TimeSeries};
use crate::rng::{domain, stream, CircuitStreams};
use crate::sectors::{bath_charge_distribution, product_state_charge_distribution, ChargeDistribution};
use crate::simulator::{haar_random_sector_state, StateVector};
use crate::symmetric::type_vectors;
use crate::targets::{direct_sum_moment, fp_exact_integer_n, fp_mc_cells, TargetMethod, TargetSpec};

/// Resolved target moments keyed on everything that determines them.
#[derive(Default)]
pub struct TargetCache {
    map: Mutex<HashMap<String, Arc<MomentOperator>>>,
    hits: AtomicUsize,
}

impl TargetCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn resolve(&self, spec: &TargetSpec, n: usize, n_a: usize, k: usize, method: TargetMethod) -> Result<Arc<MomentOperator>> {
        let key = format!("{spec:?}|{n}|{n_a}|{k}|{method:?}");
        if let Some(m) = self.map.lock().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(spec.resolve(n, n_a, k, method)?);
        self.map.lock().expect("cache lock").insert(key, Arc::clone(&m));
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSeries {
    pub label: String,
    /// Distance averaged over realizations at each time.
    pub mean: Vec<f64>,
    /// `None` when the series is too short for a window.
    pub plateau: Option<Plateau>,
    /// Indexed `[realization][time]`, successful realizations only.
    #[serde(default, skip_serializing)]
    pub per_realization: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationFailure {
    pub realization: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub fingerprint: String,
    pub times: Vec<usize>,
    pub realizations: Vec<usize>,
    pub failures: Vec<RealizationFailure>,
    pub targets: Vec<TargetSeries>,
    /// Largest outcome weight dropped below the cutoff in any ensemble.
    pub max_dropped_weight: f64,
}

impl RunRecord {
    pub fn target(&self, label: &str) -> Option<&TargetSeries> {
        self.targets.iter().find(|t| t.label == label || t.label.starts_with(&format!("{label}(")))
    }
}

/// Trace distance from the projected ensemble of `state` to each target, and
/// the weight dropped below the cutoff.
pub fn distances_to_targets(
    state: &StateVector,
    n_a: usize,
    k: usize,
    basis: &MeasurementBasis,
    budget: usize,
    targets: &[Arc<MomentOperator>],
) -> Result<(Vec<f64>, f64)> {
    let ensemble = project(state, n_a, basis)?;
    let m = moment(&ensemble, k, budget)?;
    let d = targets.iter().map(|t| trace_distance(&m, t)).collect::<Result<Vec<_>>>()?;
    Ok((d, ensemble.dropped_weight()))
}

/// Mean over realizations of per-realization series, summed in index order.
pub fn aggregate_realizations(series: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = series.first().ok_or_else(|| invalid("no realizations to aggregate"))?;
    let mut total = vec![0.0; first.len()];
    for s in series {
        if s.len() != total.len() {
            return Err(Error::DimensionMismatch(s.len(), total.len()));
        }
        total.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    let n = series.len() as f64;
    Ok(total.into_iter().map(|v| v / n).collect())
}

fn run_realization(cfg: &ExperimentConfig, r: usize, targets: &[Arc<MomentOperator>]) -> Result<(Vec<Vec<f64>>, f64)> {
    let mut rng = stream(cfg.seed, &[domain::INITIAL_STATE, r as u64]);
    let mut state = cfg.initial_state.prepare(cfg.n, &mut rng)?;
    let streams = CircuitStreams::new(cfg.seed, r as u64);
    let t_max = cfg.t_max();
    let mut out = vec![Vec::with_capacity(t_max + 1); targets.len()];
    let mut dropped = 0.0f64;
    for t in 0..=t_max {
        if t > 0 {
            state.brickwork_step_keyed(&streams, (t - 1) as u64);
        }
        let (d, w) = distances_to_targets(&state, cfg.n_a, cfg.k, &cfg.basis, cfg.budget, targets)?;
        for (o, v) in out.iter_mut().zip(d) {
            if !v.is_finite() {
                return Err(Error::Failed(format!("non-finite distance at t={t}")));
            }
            o.push(v);
        }
        dropped = dropped.max(w);
    }
    Ok((out, dropped))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    run_experiment_cached(cfg, &TargetCache::new())
}

/// Runs all realizations in parallel and averages distances, not moments.
/// Fails if more than a tenth of the realizations fail.
pub fn run_experiment_cached(cfg: &ExperimentConfig, cache: &TargetCache) -> Result<RunRecord> {
    cfg.validate()?;
    let method = cfg.target_method();
    let specs = cfg.targets.iter().map(|t| cfg.target_spec(t)).collect::<Result<Vec<_>>>()?;
    let targets = specs
        .iter()
        .map(|s| cache.resolve(s, cfg.n, cfg.n_a, cfg.k, method))
        .collect::<Result<Vec<_>>>()?;

    let results: Vec<Result<(Vec<Vec<f64>>, f64)>> =
        (0..cfg.realizations).into_par_iter().map(|r| run_realization(cfg, r, &targets)).collect();

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => ok.push((r, v)),
            Err(e) => failures.push(RealizationFailure { realization: r, error: e.to_string() }),
        }
    }
    if failures.len() * 10 > cfg.realizations {
        return Err(Error::Failed(format!(
            "{} of {} realizations failed; first: {}",
            failures.len(),
            cfg.realizations,
            failures[0].error
        )));
    }

    let times: Vec<usize> = (0..=cfg.t_max()).collect();
    let fingerprint = cfg.fingerprint();
    let max_dropped_weight = ok.iter().map(|(_, (_, w))| *w).fold(0.0, f64::max);
    let mut series = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let per: Vec<Vec<f64>> = ok.iter().map(|(_, (d, _))| d[i].clone()).collect();
        let mean = aggregate_realizations(&per)?;
        let mut ts = TimeSeries::new(times.clone(), mean.clone())?;
        ts.fingerprint = fingerprint.clone();
        let plateau = match plateau_average(&ts, cfg.plateau_window) {
            Ok(p) => Some(p),
            Err(Error::EmptyWindow { .. }) if cfg.plateau_window.is_none() => None,
            Err(e) => return Err(e),
        };
        series.push(TargetSeries { label: spec.label(), mean, plateau, per_realization: per });
    }
    Ok(RunRecord {
        config: cfg.clone(),
        fingerprint,
        times,
        realizations: ok.into_iter().map(|(r, _)| r).collect(),
        failures,
        targets: series,
        max_dropped_weight,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    /// Target kind, shared across sizes.
    pub target: String,
    pub kind: FitKind,
    pub ns: Vec<usize>,
    pub plateaus: Vec<f64>,
    /// `None` when fewer than two sizes were run.
    pub fit: Option<Fit>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub runs: Vec<RunRecord>,
    pub fits: Vec<SweepFit>,
}

impl SweepRecord {
    pub fn fit(&self, target: &str) -> Option<&SweepFit> {
        self.fits.iter().find(|f| f.target == target)
    }
}

pub fn target_kind(t: &TargetConfig) -> &'static str {
    match t {
        TargetConfig::Haar => "haar",
        TargetConfig::SectorHaar { .. } => "sector_haar",
        TargetConfig::DirectSum { .. } => "direct_sum",
        TargetConfig::Gse => "gse",
        TargetConfig::FiniteNScrooge { .. } => "finite_n_scrooge",
        TargetConfig::ReplicaZ => "replica_z",
        TargetConfig::ScroogeDiagonal { .. } => "scrooge",
    }
}

/// Runs `base` at each system size and fits the plateau against `N`, using
/// the kind of fit named in the config.
pub fn run_scaling_sweep(base: &ExperimentConfig, ns: &[usize]) -> Result<SweepRecord> {
    run_scaling_sweep_cached(base, ns, &TargetCache::new())
}

pub fn run_scaling_sweep_cached(base: &ExperimentConfig, ns: &[usize], cache: &TargetCache) -> Result<SweepRecord> {
    if ns.is_empty() {
        return Err(invalid("sweep needs at least one size"));
    }
    let mut runs = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut cfg = base.clone();
        cfg.n = n;
        runs.push(run_experiment_cached(&cfg, cache)?);
    }
    let mut fits = Vec::new();
    for (i, t) in base.targets.iter().enumerate() {
        let plateaus = runs
            .iter()
            .map(|r| {
                r.targets[i]
                    .plateau
                    .map(|p| p.mean)
                    .ok_or_else(|| invalid(format!("no plateau at N={}", r.config.n)))
            })
            .collect::<Result<Vec<_>>>()?;
        let degenerate = ns.len() < 2;
        let fit = if degenerate {
            None
        } else {
            let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
            Some(match base.fit {
                FitKind::Exponential => exponential_fit(&x, &plateaus)?,
                FitKind::Power => power_fit(&x, &plateaus)?,
            })
        };
        fits.push(SweepFit { target: target_kind(t).into(), kind: base.fit, ns: ns.to_vec(), plateaus, fit, degenerate });
    }
    Ok(SweepRecord { runs, fits })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Stats {
    pub n: usize,
    pub n_a: usize,
    pub q0: usize,
    pub k: usize,
    pub samples: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub sector_dim: f64,
    /// `mean · sqrt(C(N, Q0))`, flat in `N` if the distance decays as the
    /// inverse square root of the sector dimension.
    pub scaled_mean: f64,
}

/// Distance from the z-basis projected ensemble of Haar-random charge-`q0`
/// states to the direct-sum target.
pub fn verify_theorem1(n: usize, n_a: usize, q0: usize, k: usize, samples: usize, seed: u64) -> Result<Theorem1Stats> {
    if samples == 0 {
        return Err(invalid("sample count must be positive"));
    }
    if n_a >= n || q0 > n {
        return Err(invalid(format!("bad sizes n={n}, n_a={n_a}, q0={q0}")));
    }
    let target = vec![Arc::new(direct_sum_moment(n, n_a, q0, k)?)];
    let dists = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, &[domain::THEOREM1, s as u64]);
            let state = haar_random_sector_state(n, q0, &mut rng)?;
            Ok(distances_to_targets(&state, n_a, k, &MeasurementBasis::Z, usize::MAX, &target)?.0[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = dists.len() as f64;
    let mean = dists.iter().sum::<f64>() / m;
    let std = if dists.len() > 1 { (dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt() } else { 0.0 };
    let sector_dim = crate::sectors::binomial_f64(n as i64, q0 as i64);
    Ok(Theorem1Stats {
        n,
        n_a,
        q0,
        k,
        samples,
        mean,
        std,
        max: dists.iter().cloned().fold(0.0, f64::max),
        sector_dim,
        scaled_mean: mean * sector_dim.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaCell {
    pub n: usize,
    pub n_a: usize,
    pub distribution: String,
    pub q_b: usize,
    pub t: Vec<usize>,
    pub power: usize,
    pub exact: f64,
    pub mc_mean: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaReport {
    pub samples: usize,
    pub cells: Vec<ReplicaCell>,
    pub max_abs_z: f64,
    pub passed: bool,
}

pub const REPLICA_Z_THRESHOLD: f64 = 4.0;

fn replica_distributions(n: usize) -> Result<Vec<(String, ChargeDistribution)>> {
    let excitations: Vec<f64> = (0..n).map(|i| 0.15 + 0.7 * i as f64 / (n - 1).max(1) as f64).collect();
    Ok(vec![
        (format!("definite({})", n / 2), ChargeDistribution::definite(n, n / 2)?),
        ("product".into(), product_state_charge_distribution(&excitations)?),
    ])
}

/// Compares the closed-form replica coefficients with Monte Carlo over all
/// `N <= max_n`, `N_A <= 2`, integer powers up to `max_power`, type vectors
/// of up to `max_k` replicas, and every bath charge.
pub fn verify_replica(max_n: usize, max_power: usize, max_k: usize, samples: usize, seed: u64) -> Result<ReplicaReport> {
    if samples == 0 {
        return Err(invalid("sample count must be positive"));
    }
    if max_n < 2 || max_power == 0 {
        return Err(invalid("need max_n >= 2 and max_power >= 1"));
    }
    let mut cells = Vec::new();
    let mut group = 0u64;
    for n in 2..=max_n {
        for n_a in 1..=2.min(n - 1) {
            for (label, p) in replica_distributions(n)? {
                let bath = bath_charge_distribution(&p, n_a)?;
                for q_b in 0..=n - n_a {
                    group += 1;
                    if bath[q_b] == 0.0 {
                        continue;
                    }
                    let mut specs = Vec::new();
                    for k in 0..=max_k {
                        for t in type_vectors(k, n_a + 1).iter() {
                            for power in 1..=max_power {
                                specs.push((t.clone(), power));
                            }
                        }
                    }
                    let est = fp_mc_cells(&p, n_a, q_b, &specs, samples, crate::rng::derive_seed(seed, &[group]))?;
                    for ((t, power), e) in specs.into_iter().zip(est) {
                        let exact = fp_exact_integer_n(&p, &t, n_a, q_b, power)?;
                        let diff = e.mean - exact;
                        let z = if e.stderr > 0.0 {
                            diff / e.stderr
                        } else if diff.abs() <= 1e-12 * exact.abs().max(1.0) {
                            0.0
                        } else {
                            f64::INFINITY
                        };
                        cells.push(ReplicaCell {
                            n,
                            n_a,
                            distribution: label.clone(),
                            q_b,
                            t,
                            power,
                            exact,
                            mc_mean: e.mean,
                            stderr: e.stderr,
                            z,
                        });
                    }
                }
            }
        }
    }
    let max_abs_z = cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    Ok(ReplicaReport { samples, cells, max_abs_z, passed: max_abs_z <= REPLICA_Z_THRESHOLD })
}
