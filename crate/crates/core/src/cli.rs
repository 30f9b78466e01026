//! Command-line front end: experiment configuration, subcommands and CSV
//! output.
//!
//! A run is described by an [`ExperimentConfig`]. It can be read from a
//! plain `key=value` file (`--config`), with command-line flags overriding
//! individual keys. Keys use the long flag names without the leading dashes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::alpha_opt::{compare_homogeneous, sweep, sweep_population, SweepAxis};
use crate::analytic::ergodic_sum_rate;
use crate::beamforming::BeamformerId;
use crate::channel::{
    default_gains, path_loss_from_distances, sigma2_from_snr_db, UserPopulation, DEFAULT_D0_KM,
    DEFAULT_PATH_LOSS_EXPONENT, DEFAULT_PT,
};
use crate::error::{Error, Result};
use crate::montecarlo::{simulate_ergodic, SimConfig};
use crate::numerics::QuadratureSpec;
use crate::schedulers::SchemeId;

#[derive(Debug, Parser)]
#[command(
    name = "sosched",
    version,
    about = "Ergodic sum-rate of semi-orthogonal user selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic rate breakdown over an alpha grid.
    Analytic(RunArgs),
    /// Monte-Carlo estimate over an alpha grid.
    Simulate(RunArgs),
    /// Optimal alpha over an SNR or user-count axis.
    Optimize(RunArgs),
    /// Per-user selection frequencies and rates.
    Fairness(RunArgs),
    /// Quick numerical self-checks.
    Selftest(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key=value file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub bf: Option<String>,
    #[arg(long, conflicts_with = "alpha_grid", allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// LO:STEP:HI
    #[arg(long)]
    pub alpha_grid: Option<String>,
    #[arg(long)]
    pub users: Option<String>,
    /// Comma-separated distances in km.
    #[arg(long, conflicts_with = "gains")]
    pub distances: Option<String>,
    /// Comma-separated linear path gains.
    #[arg(long)]
    pub gains: Option<String>,
    #[arg(long, conflicts_with = "sigma2", allow_hyphen_values = true)]
    pub snr_db: Option<String>,
    #[arg(long)]
    pub sigma2: Option<String>,
    #[arg(long)]
    pub trials: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report rates in bits instead of nats.
    #[arg(long)]
    pub bits: bool,
    #[arg(long)]
    pub compare_homogeneous: bool,
    #[arg(long)]
    pub abs_tol: Option<String>,
    #[arg(long)]
    pub rel_tol: Option<String>,
    /// Sweep axis for `optimize`: snr-db or users.
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, allow_hyphen_values = true)]
    pub values: Option<String>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write the resolved configuration as key=value to this path.
    #[arg(long)]
    pub echo_config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSpec {
    Single(f64),
    Grid { lo: f64, step: f64, hi: f64 },
}

impl AlphaSpec {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            AlphaSpec::Single(a) => vec![a],
            AlphaSpec::Grid { lo, step, hi } => {
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=n).map(|i| (lo + i as f64 * step).min(hi)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainSource {
    Layout,
    Distances(Vec<f64>),
    Gains(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    SnrDb(f64),
    Sigma2(f64),
}

/// Fully resolved description of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: SchemeId,
    pub bf: BeamformerId,
    pub alpha: AlphaSpec,
    pub users: usize,
    pub gains: GainSource,
    pub noise: NoiseSpec,
    pub trials: u64,
    pub seed: u64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub out: Option<PathBuf>,
    pub bits: bool,
    pub compare_homogeneous: bool,
    pub axis: SweepAxis,
    pub values: Option<Vec<f64>>,
}

const KNOWN_KEYS: &[&str] = &[
    "scheme",
    "bf",
    "alpha",
    "alpha-grid",
    "users",
    "distances",
    "gains",
    "snr-db",
    "sigma2",
    "trials",
    "seed",
    "out",
    "bits",
    "compare-homogeneous",
    "abs-tol",
    "rel-tol",
    "axis",
    "values",
];

/// Mutually exclusive key groups: setting one on the command line drops the
/// others inherited from a config file.
const EXCLUSIVE: &[(&str, &str)] = &[("alpha", "alpha-grid"), ("distances", "gains"), ("snr-db", "sigma2")];

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", n + 1)))?;
        let k = k.trim().to_string();
        if !KNOWN_KEYS.contains(&k.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key '{k}'", n + 1)));
        }
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", n + 1)));
        }
    }
    Ok(map)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| num(key, s)).collect()
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

/// `%.17g`-style formatting: shortest exact round-trip for integers, 17
/// significant digits otherwise.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.fract() == 0.0 && x.abs() < 1e15 {
        return format!("{x:.0}");
    }
    format!("{x:.16e}")
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Build from a key map, applying defaults for missing keys.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        for (a, b) in EXCLUSIVE {
            if map.contains_key(*a) && map.contains_key(*b) {
                return Err(Error::Config(format!("only one of '{a}' and '{b}' may be given")));
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let scheme = get("scheme").unwrap_or("mus").parse()?;
        let bf = get("bf").unwrap_or("zf").parse()?;
        let alpha = match (get("alpha"), get("alpha-grid")) {
            (Some(a), _) => AlphaSpec::Single(num("alpha", a)?),
            (None, Some(g)) => parse_grid(g)?,
            (None, None) => AlphaSpec::Grid {
                lo: 0.0,
                step: 0.02,
                hi: 1.0,
            },
        };
        for a in alpha.values() {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha values must lie in [0, 1], got {a}")));
            }
        }
        let gains = match (get("distances"), get("gains")) {
            (Some(d), _) => GainSource::Distances(list("distances", d)?),
            (None, Some(g)) => GainSource::Gains(list("gains", g)?),
            (None, None) => GainSource::Layout,
        };
        let explicit_users = get("users").map(|u| num::<usize>("users", u)).transpose()?;
        let users = match (&gains, explicit_users) {
            (GainSource::Layout, u) => u.unwrap_or(10),
            (GainSource::Distances(v) | GainSource::Gains(v), None) => v.len(),
            (GainSource::Distances(v) | GainSource::Gains(v), Some(u)) => {
                if u != v.len() {
                    return Err(Error::Config(format!(
                        "users = {u} but {} gains/distances given",
                        v.len()
                    )));
                }
                u
            }
        };
        if users == 0 {
            return Err(Error::Config("users must be at least 1".into()));
        }
        let noise = match (get("snr-db"), get("sigma2")) {
            (Some(s), _) => NoiseSpec::SnrDb(num("snr-db", s)?),
            (None, Some(s)) => NoiseSpec::Sigma2(num("sigma2", s)?),
            (None, None) => NoiseSpec::SnrDb(10.0),
        };
        let trials = get("trials").map(|v| num("trials", v)).transpose()?.unwrap_or(100_000);
        if trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let defaults = QuadratureSpec::default();
        let abs_tol = get("abs-tol")
            .map(|v| num("abs-tol", v))
            .transpose()?
            .unwrap_or(defaults.abs_tol);
        let rel_tol = get("rel-tol")
            .map(|v| num("rel-tol", v))
            .transpose()?
            .unwrap_or(defaults.rel_tol);
        QuadratureSpec::new(abs_tol, rel_tol, defaults.max_subdivisions).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = Self {
            scheme,
            bf,
            alpha,
            users,
            gains,
            noise,
            trials,
            seed: get("seed").map(|v| num("seed", v)).transpose()?.unwrap_or(1),
            abs_tol,
            rel_tol,
            out: get("out").map(PathBuf::from),
            bits: get("bits").map(|v| flag("bits", v)).transpose()?.unwrap_or(false),
            compare_homogeneous: get("compare-homogeneous")
                .map(|v| flag("compare-homogeneous", v))
                .transpose()?
                .unwrap_or(false),
            axis: get("axis").unwrap_or("snr-db").parse()?,
            values: get("values").map(|v| list("values", v)).transpose()?,
        };
        cfg.population()?;
        Ok(cfg)
    }

    /// Canonical `key=value` form; parsing it gives back an identical config.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("scheme", self.scheme.to_string());
        put("bf", self.bf.to_string());
        match &self.alpha {
            AlphaSpec::Single(a) => put("alpha", fmt_f64(*a)),
            AlphaSpec::Grid { lo, step, hi } => put(
                "alpha-grid",
                format!("{}:{}:{}", fmt_f64(*lo), fmt_f64(*step), fmt_f64(*hi)),
            ),
        }
        put("users", self.users.to_string());
        match &self.gains {
            GainSource::Layout => {}
            GainSource::Distances(d) => put("distances", fmt_list(d)),
            GainSource::Gains(g) => put("gains", fmt_list(g)),
        }
        match self.noise {
            NoiseSpec::SnrDb(x) => put("snr-db", fmt_f64(x)),
            NoiseSpec::Sigma2(x) => put("sigma2", fmt_f64(x)),
        }
        put("trials", self.trials.to_string());
        put("seed", self.seed.to_string());
        put("abs-tol", fmt_f64(self.abs_tol));
        put("rel-tol", fmt_f64(self.rel_tol));
        if let Some(o) = &self.out {
            put("out", o.display().to_string());
        }
        put("bits", self.bits.to_string());
        put("compare-homogeneous", self.compare_homogeneous.to_string());
        put("axis", self.axis.to_string());
        if let Some(v) = &self.values {
            put("values", fmt_list(v));
        }
        s
    }

    pub fn population(&self) -> Result<UserPopulation> {
        let gains = match &self.gains {
            GainSource::Layout => default_gains(self.users),
            GainSource::Distances(d) => path_loss_from_distances(d, DEFAULT_D0_KM, DEFAULT_PATH_LOSS_EXPONENT)
                .map_err(|e| Error::Config(e.to_string()))?,
            GainSource::Gains(g) => g.clone(),
        };
        let sigma2 = match self.noise {
            NoiseSpec::SnrDb(x) => sigma2_from_snr_db(x, DEFAULT_PT),
            NoiseSpec::Sigma2(x) => x,
        };
        UserPopulation::new(gains, sigma2, DEFAULT_PT).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            ..QuadratureSpec::default()
        }
    }

    fn rate_unit(&self) -> f64 {
        if self.bits {
            std::f64::consts::LN_2
        } else {
            1.0
        }
    }
}

fn parse_grid(g: &str) -> Result<AlphaSpec> {
    let parts: Vec<&str> = g.split(':').collect();
    let [lo, step, hi] = parts[..] else {
        return Err(Error::Config(format!("alpha-grid must be LO:STEP:HI, got '{g}'")));
    };
    let (lo, step, hi) = (num("alpha-grid", lo)?, num("alpha-grid", step)?, num("alpha-grid", hi)?);
    if !(step > 0.0) || hi < lo {
        return Err(Error::Config(format!(
            "alpha-grid needs STEP > 0 and HI >= LO, got '{g}'"
        )));
    }
    Ok(AlphaSpec::Grid { lo, step, hi })
}

impl RunArgs {
    /// Overlay the flags on `map`.
    fn apply(&self, map: &mut BTreeMap<String, String>) {
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                for (a, b) in EXCLUSIVE {
                    if k == *a {
                        map.remove(*b);
                    } else if k == *b {
                        map.remove(*a);
                    }
                }
                map.insert(k.to_string(), v);
            }
        };
        set("scheme", self.scheme.clone());
        set("bf", self.bf.clone());
        set("alpha", self.alpha.clone());
        set("alpha-grid", self.alpha_grid.clone());
        set("users", self.users.clone());
        set("distances", self.distances.clone());
        set("gains", self.gains.clone());
        set("snr-db", self.snr_db.clone());
        set("sigma2", self.sigma2.clone());
        set("trials", self.trials.clone());
        set("seed", self.seed.clone());
        set("out", self.out.as_ref().map(|p| p.display().to_string()));
        set("bits", self.bits.then(|| "true".to_string()));
        set(
            "compare-homogeneous",
            self.compare_homogeneous.then(|| "true".to_string()),
        );
        set("abs-tol", self.abs_tol.clone());
        set("rel-tol", self.rel_tol.clone());
        set("axis", self.axis.clone());
        set("values", self.values.clone());
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut map = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                parse_kv(&text)?
            }
            None => BTreeMap::new(),
        };
        self.apply(&mut map);
        ExperimentConfig::from_map(&map)
    }
}

/// Plain CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

pub fn cmd_analytic(cfg: &ExperimentConfig) -> Result<Table> {
    let pop = cfg.population()?;
    let spec = cfg.quadrature();
    let unit = cfg.rate_unit();
    let mut t = Table::new(&["alpha", "lambda", "r_s", "r_m1", "r_m2", "sum_rate"]);
    let alphas = cfg.alpha.values();
    let rows: Vec<_> = {
        use rayon::prelude::*;
        alphas
            .par_iter()
            .map(|&a| ergodic_sum_rate(cfg.scheme, cfg.bf, a, &pop, &spec))
            .collect::<Result<_>>()?
    };
    for (a, r) in alphas.iter().zip(rows) {
        t.rows.push(vec![
            fmt_f64(*a),
            fmt_f64(r.lambda),
            fmt_f64(r.r_s / unit),
            fmt_f64(r.r_m1 / unit),
            fmt_f64(r.r_m2 / unit),
            fmt_f64(r.sum_rate / unit),
        ]);
    }
    Ok(t)
}

fn joined(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter().map(fmt_f64).collect::<Vec<_>>().join(";")
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Table> {
    let pop = cfg.population()?;
    let unit = cfg.rate_unit();
    if cfg.trials == 1 {
        log::warn!("a single trial gives no spread estimate; stderr reported as 0");
    }
    let mut t = Table::new(&[
        "alpha",
        "mean",
        "stderr",
        "trials",
        "su_frac",
        "redrawn",
        "pi1_freq",
        "pi2_freq",
        "user_rate",
    ]);
    for a in cfg.alpha.values() {
        let est = simulate_ergodic(&SimConfig {
            trials: cfg.trials,
            seed: cfg.seed,
            scheme: cfg.scheme,
            bf: cfg.bf,
            alpha: a,
            pop: pop.clone(),
        })?;
        let n = est.trials as f64;
        t.rows.push(vec![
            fmt_f64(a),
            fmt_f64(est.mean / unit),
            fmt_f64(est.stderr / unit),
            est.trials.to_string(),
            fmt_f64(est.su_fraction()),
            est.redrawn.to_string(),
            joined(est.pi1_counts.iter().map(|&c| c as f64 / n)),
            joined(est.pi2_counts.iter().map(|&c| c as f64 / n)),
            joined(est.per_user_rate.iter().map(|&r| r / unit)),
        ]);
    }
    Ok(t)
}

pub fn cmd_optimize(cfg: &ExperimentConfig) -> Result<Table> {
    let template = cfg.population()?;
    let spec = cfg.quadrature();
    let unit = cfg.rate_unit();
    let values = match (&cfg.values, cfg.axis) {
        (Some(v), _) => v.clone(),
        (None, SweepAxis::SnrDb) => vec![template.transmit_snr_db()],
        (None, SweepAxis::Users) => vec![cfg.users as f64],
    };
    let mut header = vec!["axis_value", "alpha_star", "rate", "expected_candidates"];
    if cfg.compare_homogeneous {
        header.extend(["alpha_star_homo", "rate_homo"]);
    }
    let mut t = Table::new(&header);
    let rows = sweep(cfg.axis, &values, cfg.scheme, cfg.bf, &template, &spec)?;
    for row in rows {
        let mut r = vec![
            fmt_f64(row.value),
            fmt_f64(row.star.alpha),
            fmt_f64(row.star.rate / unit),
            fmt_f64(row.expected_candidates),
        ];
        if cfg.compare_homogeneous {
            let pop = sweep_population(cfg.axis, row.value, &template)?;
            let cmp = compare_homogeneous(cfg.scheme, cfg.bf, &pop, &spec)?;
            r.push(fmt_f64(cmp.alpha_star_homo));
            r.push(fmt_f64(cmp.rate_at_homo / unit));
        }
        t.rows.push(r);
    }
    Ok(t)
}

pub fn cmd_fairness(cfg: &ExperimentConfig) -> Result<Table> {
    let pop = cfg.population()?;
    let unit = cfg.rate_unit();
    let alpha = match cfg.alpha {
        AlphaSpec::Single(a) => a,
        AlphaSpec::Grid { .. } => {
            return Err(Error::Config("fairness needs a single --alpha".into()));
        }
    };
    let est = simulate_ergodic(&SimConfig {
        trials: cfg.trials,
        seed: cfg.seed,
        scheme: cfg.scheme,
        bf: cfg.bf,
        alpha,
        pop: pop.clone(),
    })?;
    let n = est.trials as f64;
    let mut t = Table::new(&["user", "g", "pi1_freq", "pi2_freq", "mean_rate"]);
    for k in 0..pop.users() {
        t.rows.push(vec![
            k.to_string(),
            fmt_f64(pop.gains()[k]),
            fmt_f64(est.pi1_counts[k] as f64 / n),
            fmt_f64(est.pi2_counts[k] as f64 / n),
            fmt_f64(est.per_user_rate[k] / unit),
        ]);
    }
    t.rows.push(vec![
        "all".into(),
        String::new(),
        fmt_f64(est.pi1_counts.iter().sum::<u64>() as f64 / n),
        fmt_f64(est.pi2_counts.iter().sum::<u64>() as f64 / n),
        fmt_f64(est.mean / unit),
    ]);
    Ok(t)
}

/// Fast invariant checks; one `check,result,detail` row each. Fails with a
/// numeric error if any check fails.
pub fn cmd_selftest(cfg: &ExperimentConfig) -> Result<Table> {
    use crate::numerics::{g_function, lower_gamma2, upper_gamma2};
    let spec = cfg.quadrature();
    let mut t = Table::new(&["check", "result", "detail"]);
    let mut failed = 0;
    let mut record = |name: &str, ok: bool, detail: String| {
        if !ok {
            failed += 1;
        }
        t.rows
            .push(vec![name.into(), if ok { "pass" } else { "fail" }.into(), detail]);
    };

    let worst = (0..200)
        .map(|i| 10f64.powf(-3.0 + 5.0 * i as f64 / 199.0))
        .map(|x| (lower_gamma2(x).unwrap_or(f64::NAN) + upper_gamma2(x).unwrap_or(f64::NAN) - 1.0).abs())
        .fold(0.0, f64::max);
    record("gamma_complementarity", worst <= 1e-15, fmt_f64(worst));

    let g1 = g_function(1.0)?;
    let err = (g1 + 0.596_347_362_323_194_1).abs();
    record("g_function_at_one", err <= 1e-13, fmt_f64(err));

    let one = UserPopulation::new(vec![1.0], 1.0, DEFAULT_PT)?;
    let zf = crate::analytic::rus_rate_mu(BeamformerId::Zf, 1.0, &one)?;
    record("rus_zf_closed_form", (zf + g1).abs() <= 1e-12, fmt_f64((zf + g1).abs()));

    let mut worst = 0.0f64;
    for users in 2..=4 {
        let pop = UserPopulation::homogeneous(users, 1.0, 0.5, DEFAULT_PT)?;
        for bf in BeamformerId::ALL {
            let (rs, r1, r2) = crate::analytic::mus_rates_homogeneous(bf, 0.7, 1.0, users, 0.5, &spec)?;
            worst = worst
                .max((crate::analytic::mus_rate_su(&pop, &spec)? - rs).abs())
                .max((crate::analytic::mus_rate_mu_first(bf, 0.7, &pop, &spec)? - r1).abs())
                .max((crate::analytic::mus_rate_mu_second(bf, 0.7, &pop, &spec)? - r2).abs());
        }
    }
    record("homogeneous_reduction", worst <= 1e-8, fmt_f64(worst));

    let pop = UserPopulation::from_snr_db(default_gains(3), 10.0)?;
    for scheme in SchemeId::ALL {
        let exact = ergodic_sum_rate(scheme, BeamformerId::Zf, 0.5, &pop, &spec)?.sum_rate;
        let est = simulate_ergodic(&SimConfig {
            trials: 200_000,
            seed: cfg.seed,
            scheme,
            bf: BeamformerId::Zf,
            alpha: 0.5,
            pop: pop.clone(),
        })?;
        let z = (est.mean - exact).abs() / est.stderr;
        record(
            &format!("mc_equivalence_{scheme}"),
            z < 4.0,
            format!("z={}", fmt_f64(z)),
        );
    }
    if failed > 0 {
        log::error!("{failed} self-test checks failed");
        print!("{}", t.to_csv());
        return Err(Error::NonConvergence {
            estimate: failed as f64,
            error: f64::NAN,
            tolerance: 0.0,
            subdivisions: 0,
        });
    }
    Ok(t)
}

fn emit(cfg: &ExperimentConfig, table: &Table) -> Result<()> {
    let csv = table.to_csv();
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, csv).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(csv.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Config(format!("cannot write output: {e}")))
        }
    }
}

/// Execute one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let args = match &cli.command {
        Command::Analytic(a)
        | Command::Simulate(a)
        | Command::Optimize(a)
        | Command::Fairness(a)
        | Command::Selftest(a) => a,
    };
    let cfg = args.resolve()?;
    if let Some(path) = &args.echo_config {
        std::fs::write(path, cfg.to_kv_string())
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    let body = || -> Result<Table> {
        match &cli.command {
            Command::Analytic(_) => cmd_analytic(&cfg),
            Command::Simulate(_) => cmd_simulate(&cfg),
            Command::Optimize(_) => cmd_optimize(&cfg),
            Command::Fairness(_) => cmd_fairness(&cfg),
            Command::Selftest(_) => cmd_selftest(&cfg),
        }
    };
    let table = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(body)?,
        None => body()?,
    };
    emit(&cfg, &table)
}
