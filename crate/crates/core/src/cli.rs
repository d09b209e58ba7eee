//! Command-line experiments.
//!
//! Every command takes its settings from an optional JSON config
//! (`--config`), overridden field by field by command-line flags. The seed
//! is resolved as `--seed`, then the config's `seed`, then `AFDOF_SEED`,
//! then 0.
//!
//! Exit status is 0 when every embedded check passes, 1 when a check fails
//! or the experiment errors (details in `error.json`), 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::af_scheme::{
    analytic_noise_variances, baseline_tdma_rate, rates_from_variances, AfAlphabet, AfPair,
    AfSchedule, PhasePlan,
};
use crate::channel_model::{ChannelRealization, DEFAULT_REL_TOL};
use crate::error::{Error, Result};
use crate::link_simulator::{estimate_dof_slope, sweep, write_rates_csv, SimConfig, SlopeFit, DEFAULT_POWER_GRID};
use crate::outer_bound::{
    bound_constants, check_lemma2, classify_schedule, evaluate_bounds, min_census_fraction,
    random_lemma2_instance, write_census_csv, Lemma2Instance, StateCensus, STATE_REL_TOL,
};

pub const SEED_ENV: &str = "AFDOF_SEED";

/// Acceptance bands for fitted slopes.
pub const SCHEME_SLOPE_BAND: (f64, f64) = (1.27, 1.40);
pub const PER_USER_SLOPE_BAND: (f64, f64) = (0.62, 0.72);
pub const BASELINE_SLOPE_BAND: (f64, f64) = (0.95, 1.05);

const USAGE_EXIT: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "afdof",
    about = "Two-hop interference channel with time-varying amplify-forward relays",
    after_help = "Settings come from --config (JSON), overridden by flags. \
                  Seed precedence: --seed, config seed, AFDOF_SEED, 0."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate the three-phase scheme over a power grid and fit DoF slopes.
    RunAchievability(CommonArgs),
    /// Census a schedule, evaluate the three outer bounds, fuzz the pigeonhole step.
    VerifyBounds(BoundsArgs),
    /// Check the Gaussian entropy inequality on random instances.
    CheckLemma2(Lemma2Args),
    /// Sample channels and count genericity failures.
    SampleConditions(ConditionsArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated powers; mantissa and exponent may both be fractional, e.g. "1e3,1e4.5,1e6".
    #[arg(long)]
    pub grid: Option<String>,
    /// Inline channel gains "s1u,s2u,s1v,s2v,ud1,vd1,ud2,vd2".
    #[arg(long, allow_hyphen_values = true)]
    pub gains: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub n_triples: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of random schedules for the pigeonhole fuzz.
    #[arg(long)]
    pub fuzz: Option<usize>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleKind>,
    /// Slots in the censused schedule.
    #[arg(long)]
    pub slots: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct Lemma2Args {
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 4)]
    pub max_dim: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run the fixed scalar case M = M' = 1 with independent unit variances.
    #[arg(long)]
    pub identity_case: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ConditionsArgs {
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub gains: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Achievability,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSpec {
    Gains(ChannelRealization),
    Seed(u64),
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rel_tol: Option<f64>,
    pub state_tol: Option<f64>,
    pub slope_margin: Option<f64>,
}

/// Settings shared by all commands; every field is optional in JSON.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: Option<ChannelSpec>,
    pub power_grid: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub n_triples: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub schedule: Option<ScheduleKind>,
    pub slots: Option<usize>,
    pub fuzz: Option<usize>,
}

/// Fully resolved settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub channel: ChannelSpec,
    pub power_grid: Vec<f64>,
    pub trials: usize,
    pub n_triples: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub rel_tol: f64,
    pub state_tol: f64,
    pub slope_margin: f64,
    pub schedule: ScheduleKind,
    pub slots: usize,
    pub fuzz: usize,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("bad config {}: {e}", path.display())))
    }

    pub fn resolve(&self, env_seed: Option<&str>) -> Result<Resolved> {
        let seed = match (self.seed, env_seed) {
            (Some(s), _) => s,
            (None, Some(s)) => s
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}={s} is not an integer")))?,
            (None, None) => 0,
        };
        let power_grid = self.power_grid.clone().unwrap_or_else(|| DEFAULT_POWER_GRID.to_vec());
        validate_grid(&power_grid)?;
        let r = Resolved {
            channel: self.channel.clone().unwrap_or(ChannelSpec::Seed(seed)),
            power_grid,
            trials: self.trials.unwrap_or(8),
            n_triples: self.n_triples.unwrap_or(2500),
            seed,
            output_dir: self.output_dir.clone().unwrap_or_else(|| PathBuf::from("afdof-out")),
            rel_tol: self.tolerances.rel_tol.unwrap_or(DEFAULT_REL_TOL),
            state_tol: self.tolerances.state_tol.unwrap_or(STATE_REL_TOL),
            slope_margin: self.tolerances.slope_margin.unwrap_or(0.05),
            schedule: self.schedule.unwrap_or(ScheduleKind::Achievability),
            slots: self.slots.unwrap_or(300),
            fuzz: self.fuzz.unwrap_or(0),
        };
        if r.trials == 0 || r.n_triples == 0 || r.slots == 0 {
            return Err(Error::InvalidArgument("trials, n_triples and slots must be positive".into()));
        }
        for t in [r.rel_tol, r.state_tol, r.slope_margin] {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidArgument(format!("tolerance {t} must be positive")));
            }
        }
        Ok(r)
    }
}

impl Resolved {
    pub fn channel(&self) -> Result<ChannelRealization> {
        match &self.channel {
            ChannelSpec::Gains(ch) => Ok(*ch),
            ChannelSpec::Seed(s) => ChannelRealization::sample(*s, 100),
        }
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("power grid is empty".into()));
    }
    if let Some(p) = grid.iter().find(|p| !(p.is_finite() && **p >= 1.0)) {
        return Err(Error::InvalidPower(*p));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("power grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Parses one power such as `1e4.5` (= 10^4.5) or `2.5e3`.
pub fn parse_power(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::InvalidArgument(format!("cannot parse power '{s}'"));
    let v = match s.find(['e', 'E']) {
        Some(i) => {
            let mant = if i == 0 { 1.0 } else { s[..i].parse::<f64>().map_err(|_| bad())? };
            let exp: f64 = s[i + 1..].parse().map_err(|_| bad())?;
            mant * 10f64.powf(exp)
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(parse_power).collect()
}

pub fn parse_gains(s: &str) -> Result<ChannelRealization> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad gain '{t}'"))))
        .collect::<Result<_>>()?;
    let gains: [f64; 8] = v
        .try_into()
        .map_err(|v: Vec<f64>| Error::InvalidArgument(format!("expected 8 gains, got {}", v.len())))?;
    ChannelRealization::new(gains)
}

fn apply_common(mut cfg: ExperimentConfig, a: &CommonArgs) -> Result<ExperimentConfig> {
    if let Some(s) = a.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &a.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(g) = &a.grid {
        cfg.power_grid = Some(parse_grid(g)?);
    }
    if let Some(g) = &a.gains {
        cfg.channel = Some(ChannelSpec::Gains(parse_gains(g)?));
    }
    if let Some(t) = a.trials {
        cfg.trials = Some(t);
    }
    if let Some(n) = a.n_triples {
        cfg.n_triples = Some(n);
    }
    Ok(cfg)
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    path.map(ExperimentConfig::load).transpose().map(Option::unwrap_or_default)
}

/// A named invariant check embedded in a command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

fn in_band(x: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&x)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", dir.display())))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display()))
}

/// Result of a command: summary printed to stdout plus its checks.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn cmd_run_achievability(r: &Resolved) -> Result<Outcome> {
    let ch = r.channel()?;
    let plan = PhasePlan::for_channel(&ch)?;
    let analytic = analytic_noise_variances(&ch, &plan)?;
    let base = SimConfig::new(r.power_grid[0], r.n_triples, r.trials, r.seed);
    let rows = sweep(&ch, &plan, &r.power_grid, &base)?;

    create_dir(&r.output_dir)?;
    write_json(&r.output_dir.join("plan.json"), &plan)?;
    let rates_path = r.output_dir.join("rates.csv");
    let file = fs::File::create(&rates_path).map_err(io_err(&rates_path))?;
    write_rates_csv(&rows, BufWriter::new(file)).map_err(io_err(&rates_path))?;

    let fit = |f: &dyn Fn(usize) -> f64| -> Result<SlopeFit> {
        estimate_dof_slope(&rows.iter().enumerate().map(|(i, row)| (row.p, f(i))).collect::<Vec<_>>())
    };
    let baseline: Vec<(f64, f64)> =
        r.power_grid.iter().map(|&p| baseline_tdma_rate(&ch, p)).collect::<Result<_>>()?;
    let (scheme, user1, user2, base_fit) = if r.power_grid.len() >= 4 {
        (
            Some(fit(&|i| rows[i].r_sum)?),
            Some(fit(&|i| rows[i].r1)?.slope),
            Some(fit(&|i| rows[i].r2)?.slope),
            Some(fit(&|i| baseline[i].0 + baseline[i].1)?),
        )
    } else {
        (None, None, None, None)
    };

    let mut checks = Vec::new();
    let [g1, g2, _] = plan.phase_matrices(&ch);
    let null1 = g1.beta1.abs() / g1.max_abs();
    let null2 = g2.alpha2.abs() / g2.max_abs();
    checks.push(Check::new(
        "interference_nulling",
        null1 <= 1e-12 && null2 <= 1e-12,
        format!("|beta11|/max = {null1:e}, |alpha22|/max = {null2:e}"),
    ));
    let samples = (r.trials * r.n_triples) as f64;
    let mse_tol = 5.0 * (2.0 / samples).sqrt();
    let worst_mse = rows
        .iter()
        .flat_map(|row| row.mse.as_array().into_iter().zip(analytic.as_array()))
        .map(|(e, a)| ((e - a) / a).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "mse_matches_analytic",
        worst_mse <= mse_tol,
        format!("worst relative deviation {worst_mse:.4} (limit {mse_tol:.4})"),
    ));
    let infeasible: Vec<f64> = rows.iter().filter(|row| !row.relay.feasible(row.p, 3.0)).map(|row| row.p).collect();
    checks.push(Check::new(
        "relay_power_feasible",
        infeasible.is_empty(),
        format!("powers exceeding P by more than 3 standard errors: {infeasible:?}"),
    ));
    let monotone = rows.windows(2).all(|w| w[1].r_sum >= w[0].r_sum);
    checks.push(Check::new("sum_rate_monotone", monotone, String::new()));
    if let (Some(s), Some(u1), Some(u2), Some(b)) = (&scheme, user1, user2, &base_fit) {
        checks.push(Check::new(
            "scheme_slope",
            in_band(s.slope, SCHEME_SLOPE_BAND),
            format!("{:.4} in {SCHEME_SLOPE_BAND:?}", s.slope),
        ));
        checks.push(Check::new(
            "per_user_slopes",
            in_band(u1, PER_USER_SLOPE_BAND) && in_band(u2, PER_USER_SLOPE_BAND),
            format!("{u1:.4}, {u2:.4} in {PER_USER_SLOPE_BAND:?}"),
        ));
        checks.push(Check::new(
            "baseline_slope",
            in_band(b.slope, BASELINE_SLOPE_BAND) && b.slope < s.slope,
            format!("{:.4} in {BASELINE_SLOPE_BAND:?} and below scheme", b.slope),
        ));
    }

    let slope_doc = json!({
        "scheme": scheme,
        "scheme_per_user": [user1, user2],
        "baseline": base_fit,
        "checks": checks,
    });
    write_json(&r.output_dir.join("slope.json"), &slope_doc)?;
    Ok(Outcome {
        summary: json!({
            "command": "run-achievability",
            "channel": ch,
            "scheme_slope": scheme.as_ref().map(|s| s.slope),
            "baseline_slope": base_fit.as_ref().map(|s| s.slope),
            "output_dir": r.output_dir,
        }),
        checks,
    })
}

/// Random finite alphabet biased towards values that null single entries.
fn random_alphabet<R: Rng>(rng: &mut R, ch: &ChannelRealization) -> AfAlphabet {
    let nu = rng.random_range(1..=3);
    let u: Vec<f64> = (0..nu).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mu = u[0];
    let nulling = [
        -mu * ch.h_ud1 * ch.h_s1u / (ch.h_vd1 * ch.h_s1v),
        -mu * ch.h_ud1 * ch.h_s2u / (ch.h_vd1 * ch.h_s2v),
        -mu * ch.h_ud2 * ch.h_s1u / (ch.h_vd2 * ch.h_s1v),
        -mu * ch.h_ud2 * ch.h_s2u / (ch.h_vd2 * ch.h_s2v),
    ];
    let nv = rng.random_range(1..=4);
    let v: Vec<f64> = (0..nv)
        .map(|_| match rng.random_range(0..6) {
            0 => 0.0,
            1 => rng.random_range(-2.0..2.0),
            k => nulling[k - 2],
        })
        .collect();
    AfAlphabet::new(u, v).expect("finite alphabet")
}

fn random_schedule<R: Rng>(rng: &mut R, alphabet: &AfAlphabet, n: usize) -> AfSchedule {
    let pairs: Vec<AfPair> = alphabet.pairs().collect();
    AfSchedule::new((0..n).map(|_| pairs[rng.random_range(0..pairs.len())]).collect())
}

/// Pigeonhole fuzz over random schedules. Returns `(schedules, violations)`.
pub fn fuzz_pigeonhole(ch: &ChannelRealization, count: usize, slots: usize, seed: u64, tol: f64) -> Result<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x70_69_67);
    let mut violations = 0;
    for _ in 0..count {
        let alphabet = random_alphabet(&mut rng, ch);
        let schedule = random_schedule(&mut rng, &alphabet, slots);
        let labels = classify_schedule(ch, &schedule, tol)?;
        let c = StateCensus::from_labels(&labels);
        if min_census_fraction(&c).1 > 1.0 / 3.0 {
            violations += 1;
        }
    }
    Ok((count, violations))
}

pub fn cmd_verify_bounds(r: &Resolved) -> Result<Outcome> {
    let ch = r.channel()?;
    let plan = PhasePlan::for_channel(&ch)?;
    let (schedule, alphabet) = match r.schedule {
        ScheduleKind::Achievability => (plan.schedule(r.slots)?, plan.alphabet()),
        ScheduleKind::Zero => (AfSchedule::zero(r.slots), AfAlphabet::new(vec![0.0], vec![0.0])?),
    };
    let labels = classify_schedule(&ch, &schedule, r.state_tol)?;
    let census = StateCensus::from_labels(&labels);
    let constants = bound_constants(&ch, &alphabet);
    let (min_set, min_fraction) = min_census_fraction(&census);

    let achieved: Vec<f64> = match r.schedule {
        ScheduleKind::Achievability => {
            let v = analytic_noise_variances(&ch, &plan)?;
            r.power_grid.iter().map(|&p| rates_from_variances(p, &v).map(|x| x.sum())).collect::<Result<_>>()?
        }
        ScheduleKind::Zero => vec![0.0; r.power_grid.len()],
    };
    let evaluations =
        r.power_grid.iter().map(|&p| evaluate_bounds(&census, p, &constants)).collect::<Result<Vec<_>>>()?;
    let achieved_fit = if r.power_grid.len() >= 4 {
        Some(estimate_dof_slope(&r.power_grid.iter().copied().zip(achieved.iter().copied()).collect::<Vec<_>>())?)
    } else {
        None
    };
    let min_bound_dof = evaluations[0].min_dof();

    create_dir(&r.output_dir)?;
    let census_path = r.output_dir.join("census.csv");
    let file = fs::File::create(&census_path).map_err(io_err(&census_path))?;
    write_census_csv(&schedule, &labels, BufWriter::new(file)).map_err(io_err(&census_path))?;

    let mut checks = vec![Check::new(
        "pigeonhole",
        min_fraction <= 1.0 / 3.0,
        format!("min(|A|,|B|,|C|)/n = {min_fraction:.6} ({min_set:?})"),
    )];
    if let Some(f) = &achieved_fit {
        checks.push(Check::new(
            "slope_dominance",
            f.slope <= min_bound_dof + r.slope_margin,
            format!("achieved {:.4} vs min bound {:.4} + {}", f.slope, min_bound_dof, r.slope_margin),
        ));
    }
    let last = evaluations.last().expect("grid is nonempty");
    let top = *achieved.last().expect("grid is nonempty");
    checks.push(Check::new(
        "achieved_below_bounds",
        last.terms().iter().all(|t| top <= t.value),
        format!("sum rate {top:.4} at P = {:e}", last.p),
    ));
    let fuzz = if r.fuzz > 0 {
        let (n, v) = fuzz_pigeonhole(&ch, r.fuzz, r.slots, r.seed, r.state_tol)?;
        checks.push(Check::new("pigeonhole_fuzz", v == 0, format!("{v} violations in {n} schedules")));
        Some(json!({ "schedules": n, "slots": r.slots, "violations": v }))
    } else {
        None
    };

    let doc = json!({
        "census": census,
        "constants": constants,
        "min_fraction": { "set": min_set, "fraction": min_fraction },
        "bounds": evaluations,
        "achieved": { "sum_rates": achieved, "fit": achieved_fit },
        "min_bound_dof": min_bound_dof,
        "fuzz": fuzz,
        "checks": checks,
    });
    write_json(&r.output_dir.join("bounds.json"), &doc)?;
    Ok(Outcome {
        summary: json!({
            "command": "verify-bounds",
            "census": census,
            "min_fraction": min_fraction,
            "achieved_slope": achieved_fit.as_ref().map(|f| f.slope),
            "min_bound_dof": min_bound_dof,
            "output_dir": r.output_dir,
        }),
        checks,
    })
}

pub fn cmd_check_lemma2(count: usize, max_dim: usize, seed: u64, identity_case: bool) -> Result<Outcome> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if !(1..=8).contains(&max_dim) {
        return Err(Error::InvalidArgument(format!("max_dim must be in 1..=8, got {max_dim}")));
    }
    let slack = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut resampled = 0;
    let mut min_margin = f64::INFINITY;
    let mut example = None;
    for i in 0..count {
        let res = loop {
            let inst = if identity_case {
                let one = nalgebra::DMatrix::identity(1, 1);
                Lemma2Instance { m: one.clone(), mp: one.clone(), cov_x: one, cov_yz: nalgebra::DMatrix::identity(2, 2) }
            } else {
                let dim = rng.random_range(1..=max_dim);
                random_lemma2_instance(&mut rng, dim)
            };
            match check_lemma2(&inst, slack) {
                Err(Error::SingularCovariance(_)) | Err(Error::SingularMatrix(_)) if !identity_case => resampled += 1,
                other => break other?,
            }
        };
        if i == 0 {
            example = Some(res);
        }
        min_margin = min_margin.min(res.rhs - res.lhs);
        if !res.holds {
            violations += 1;
        }
    }
    let checks = vec![Check::new(
        "lemma2",
        violations == 0,
        format!("{violations} violations in {count} instances"),
    )];
    Ok(Outcome {
        summary: json!({
            "command": "check-lemma2",
            "count": count,
            "max_dim": max_dim,
            "violations": violations,
            "resampled": resampled,
            "min_margin": min_margin,
            "first": example,
        }),
        checks,
    })
}

pub fn cmd_sample_conditions(samples: usize, seed: u64, inline: Option<ChannelRealization>, rel_tol: f64) -> Result<Outcome> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let mut failures = 0usize;
    let mut by_condition = std::collections::BTreeMap::<&str, usize>::new();
    let mut tally = |ch: &ChannelRealization| {
        let rep = ch.check_conditions(rel_tol);
        if !rep.is_generic() {
            failures += 1;
            for f in rep.failures() {
                *by_condition.entry(f).or_default() += 1;
            }
        }
        rep
    };
    let (n, report) = match inline {
        Some(ch) => (1, Some(tally(&ch))),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..samples {
                tally(&ChannelRealization::draw(&mut rng));
            }
            (samples, None)
        }
    };
    let checks = vec![Check::new("genericity", failures == 0, format!("{failures} of {n} channels non-generic"))];
    Ok(Outcome {
        summary: json!({
            "command": "sample-conditions",
            "samples": n,
            "failures": failures,
            "failure_fraction": failures as f64 / n as f64,
            "failures_by_condition": by_condition,
            "report": report,
        }),
        checks,
    })
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

fn report(outcome: Result<Outcome>, error_dir: Option<&Path>) -> i32 {
    match outcome {
        Ok(o) => {
            println!("{}", serde_json::to_string_pretty(&json!({ "summary": o.summary, "checks": o.checks })).unwrap());
            if o.passed() {
                0
            } else {
                let failed: Vec<&Check> = o.checks.iter().filter(|c| !c.passed).collect();
                let doc = json!({
                    "error": "CheckFailed",
                    "failed_checks": failed.iter().map(|c| &c.name).collect::<Vec<_>>(),
                    "checks": failed,
                });
                emit_error(&doc, error_dir);
                1
            }
        }
        Err(e) => {
            let doc = json!({ "error": e.kind(), "message": e.to_string() });
            emit_error(&doc, error_dir);
            if matches!(e, Error::InvalidArgument(_)) && error_dir.is_none() {
                USAGE_EXIT
            } else {
                1
            }
        }
    }
}

fn emit_error(doc: &serde_json::Value, dir: Option<&Path>) {
    eprintln!("{}", serde_json::to_string_pretty(doc).unwrap());
    if let Some(dir) = dir {
        if fs::create_dir_all(dir).is_ok() {
            let _ = write_json(&dir.join("error.json"), doc);
        }
    }
}

fn resolve_common(a: &CommonArgs, extra: impl FnOnce(&mut ExperimentConfig)) -> (Result<Resolved>, Option<PathBuf>) {
    let cfg = load_config(a.config.as_deref()).and_then(|c| apply_common(c, a)).map(|mut c| {
        extra(&mut c);
        c
    });
    let out_hint = a
        .out
        .clone()
        .or_else(|| cfg.as_ref().ok().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("afdof-out"));
    (cfg.and_then(|c| c.resolve(env_seed().as_deref())), Some(out_hint))
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { USAGE_EXIT } else { 0 };
        }
    };
    match cli.command {
        Command::RunAchievability(a) => {
            let (r, dir) = resolve_common(&a, |_| {});
            report(r.and_then(|r| cmd_run_achievability(&r)), dir.as_deref())
        }
        Command::VerifyBounds(b) => {
            let (r, dir) = resolve_common(&b.common, |c| {
                if let Some(f) = b.fuzz {
                    c.fuzz = Some(f);
                }
                if let Some(s) = b.schedule {
                    c.schedule = Some(s);
                }
                if let Some(s) = b.slots {
                    c.slots = Some(s);
                }
            });
            report(r.and_then(|r| cmd_verify_bounds(&r)), dir.as_deref())
        }
        Command::CheckLemma2(a) => {
            let seed = ExperimentConfig { seed: a.seed, ..Default::default() }.resolve(env_seed().as_deref());
            report(seed.and_then(|r| cmd_check_lemma2(a.count, a.max_dim, r.seed, a.identity_case)), a.out.as_deref())
        }
        Command::SampleConditions(a) => {
            let run = || -> Result<Outcome> {
                let mut cfg = load_config(a.config.as_deref())?;
                if let Some(s) = a.seed {
                    cfg.seed = Some(s);
                }
                if let Some(g) = &a.gains {
                    cfg.channel = Some(ChannelSpec::Gains(parse_gains(g)?));
                }
                let inline = match &cfg.channel {
                    Some(ChannelSpec::Gains(ch)) => Some(*ch),
                    _ => None,
                };
                let r = cfg.resolve(env_seed().as_deref())?;
                cmd_sample_conditions(a.samples, r.seed, inline, r.rel_tol)
            };
            report(run(), a.out.as_deref())
        }
    }
}
