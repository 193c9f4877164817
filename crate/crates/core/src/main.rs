use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use u1therm::harness::{
    read_matrix_dump, run_experiment, run_scaling_sweep, verify_replica, verify_theorem1, write_json, write_matrix_dump,
    write_run, write_sweep, ExperimentConfig, TargetCache,
};
use u1therm::metrics::{trace_distance, trace_norm};

#[derive(Parser)]
#[command(name = "u1therm", version, about = "Deep thermalization of U(1)-symmetric random circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time series of distances for one system size.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Plateau scaling over several system sizes.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: u64,
        /// Comma-separated system sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Haar-random definite-charge states against the direct-sum target.
    Theorem1 {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        n_a: usize,
        #[arg(long)]
        q0: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Closed-form replica coefficients against Monte Carlo.
    Replica {
        #[arg(long, default_value_t = 6)]
        max_n: usize,
        #[arg(long, default_value_t = 2)]
        max_power: usize,
        #[arg(long, default_value_t = 2)]
        max_k: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the moment operator of every target in a config.
    Target {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Trace distance between two matrix dumps.
    Distance { a: PathBuf, b: PathBuf },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_a: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    /// analytic or mc
    #[arg(long)]
    target_method: Option<String>,
    /// exponential or power
    #[arg(long)]
    fit: Option<String>,
    /// z or x
    #[arg(long)]
    basis: Option<String>,
    /// Plateau window as START:END.
    #[arg(long)]
    window: Option<String>,
    /// Any other field as KEY=TOML_VALUE, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl ConfigArgs {
    fn load(&self, seed: u64) -> Result<ExperimentConfig> {
        let mut table = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?
                .parse::<toml::Table>()
                .with_context(|| format!("parsing {}", path.display()))?,
            None => toml::Table::new(),
        };
        let mut put = |key: &str, value: toml::Value| {
            table.insert(key.to_string(), value);
        };
        let int = |v: usize| toml::Value::Integer(v as i64);
        if let Some(v) = self.n {
            put("n", int(v));
        }
        if let Some(v) = self.n_a {
            put("n_a", int(v));
        }
        if let Some(v) = self.k {
            put("k", int(v));
        }
        if let Some(v) = self.t_max {
            put("t_max", int(v));
        }
        if let Some(v) = self.realizations {
            put("realizations", int(v));
        }
        if let Some(v) = self.mc_samples {
            put("mc_samples", int(v));
        }
        if let Some(v) = self.budget {
            put("budget", int(v));
        }
        if let Some(v) = &self.target_method {
            put("target_method", toml::Value::String(v.clone()));
        }
        if let Some(v) = &self.fit {
            put("fit", toml::Value::String(v.clone()));
        }
        if let Some(v) = &self.basis {
            put("basis", toml::Value::String(v.clone()));
        }
        if let Some(w) = &self.window {
            let (a, b) = w.split_once(':').context("window must be START:END")?;
            put("plateau_window", toml::Value::Array(vec![int(a.trim().parse()?), int(b.trim().parse()?)]));
        }
        for kv in &self.set {
            let (key, value) = kv.split_once('=').with_context(|| format!("--set {kv}: expected KEY=VALUE"))?;
            put(key.trim(), parse_value(value.trim()));
        }
        put("seed", toml::Value::Integer(seed as i64));
        let cfg: ExperimentConfig = toml::Value::Table(table).try_into().context("invalid experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(config: &ConfigArgs, seed: u64, out: &Path) -> Result<()> {
    let cfg = config.load(seed)?;
    let record = run_experiment(&cfg)?;
    let (csv, json) = write_run(&record, out)?;
    println!("fingerprint {}", record.fingerprint);
    for f in &record.failures {
        eprintln!("realization {} failed: {}", f.realization, f.error);
    }
    for t in &record.targets {
        match t.plateau {
            Some(p) => println!("{:<24} plateau {:.6e} ± {:.2e} over t in [{}, {}]", t.label, p.mean, p.spread, p.start, p.end),
            None => println!("{:<24} final {:.6e}", t.label, t.mean.last().copied().unwrap_or(f64::NAN)),
        }
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn sweep(config: &ConfigArgs, seed: u64, sizes: &[usize], out: &Path) -> Result<()> {
    let mut base = config.load(seed)?;
    // validated again per size; n from the file only matters for validation
    if let Some(&n) = sizes.first() {
        base.n = n;
    }
    let record = run_scaling_sweep(&base, sizes)?;
    let (csv, json) = write_sweep(&record, out)?;
    for f in &record.fits {
        let plateaus: Vec<String> = f.ns.iter().zip(&f.plateaus).map(|(n, p)| format!("N={n}: {p:.4e}")).collect();
        println!("{:<18} {}", f.target, plateaus.join(", "));
        match f.fit {
            Some(fit) => println!("{:<18} {:?} rate {:.4} (prefactor {:.4e}, rms {:.3e})", "", f.kind, fit.rate, fit.prefactor, fit.residual),
            None => println!("{:<18} single size, no fit", ""),
        }
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn targets(config: &ConfigArgs, seed: u64, out: &Path) -> Result<()> {
    let cfg = config.load(seed)?;
    std::fs::create_dir_all(out)?;
    let cache = TargetCache::new();
    for t in &cfg.targets {
        let spec = cfg.target_spec(t)?;
        let m = cache.resolve(&spec, cfg.n, cfg.n_a, cfg.k, cfg.target_method())?;
        let path = out.join(format!("{}.mat", spec.label().replace(['(', ')'], "_").trim_end_matches('_')));
        write_matrix_dump(&m, cfg.budget, &path)?;
        println!("{} -> {}", spec.label(), path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => run(&config, seed, &out),
        Command::Sweep { config, seed, sizes, out } => sweep(&config, seed, &sizes, &out),
        Command::Target { config, seed, out } => targets(&config, seed, &out),
        Command::Theorem1 { n, n_a, q0, k, samples, seed } => {
            let s = verify_theorem1(n, n_a, q0, k, samples, seed)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            Ok(())
        }
        Command::Replica { max_n, max_power, max_k, samples, seed, out } => {
            let r = verify_replica(max_n, max_power, max_k, samples, seed)?;
            println!("{} cells, max |z| = {:.3}", r.cells.len(), r.max_abs_z);
            if let Some(path) = out {
                write_json(&r, &path)?;
            }
            if !r.passed {
                bail!("replica check failed");
            }
            println!("PASS");
            Ok(())
        }
        Command::Distance { a, b } => {
            let ma = read_matrix_dump(&a)?;
            let mb = read_matrix_dump(&b)?;
            println!("trace distance {:.12e}", trace_distance(&ma, &mb)?);
            println!("trace norm     {:.12e}", trace_norm(&ma, &mb)?);
            Ok(())
        }
    }
}
