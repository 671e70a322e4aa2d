//! Experiment driver: configuration tables, the suites behind each subcommand, and
//! self-describing records.
//!
//! A configuration is a TOML document with one table per suite plus a top-level `seed`.
//! Every suite deserializes its table into a typed parameter struct with defaults; the
//! resolved struct is the snapshot stored in each record, so replaying a snapshot runs
//! the identical computation. Records serialize with the timestamp as the last field.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gibbs_mcmc::{conditional_estimate, conditional_profile, run_gibbs_chains, GibbsConfig};
use crate::gn_variational::{
    constants_check, density_on, solve_gn_optimizer, standard_grid, tilted_optimizer, IntersectionMode,
};
use crate::grid::{GridField, GridSpec};
use crate::kernel_estimates::{
    check_dirichlet_case, scaling_identity_check, smoothing_moment_study, verify_dirichlet, verify_kernel_bounds,
    verify_riesz_moment, verify_time_increment_bound, MomentConfig, MomentFunctional, RieszSweep, ScalingConfig,
    Sweep,
};
use crate::local_time::{grid_for_paths, mutual_total, power_sum, smoothed_local_time};
use crate::mv_topology::{marginal_additivity_error, metric_axiom_check, profile_battery, test_corpus};
use crate::path_sim::{sample_path, substream, BrownianPath, PathConfig};
use crate::stats::mean_se;

pub const SUBCOMMANDS: [&str; 10] = [
    "gn-solve",
    "constants",
    "simulate",
    "gibbs",
    "conditional",
    "verify-estimates",
    "verify-dirichlet",
    "verify-scaling",
    "verify-moments",
    "metric-suite",
];

pub const DEFAULT_SEED: u64 = 1;

/// Table name of a subcommand's parameters.
pub fn section_of(suite: &str) -> Result<&'static str> {
    Ok(match suite {
        "gn-solve" => "gn",
        "constants" => "constants",
        "simulate" => "simulate",
        "gibbs" => "gibbs",
        "conditional" => "conditional",
        "verify-estimates" => "estimates",
        "verify-dirichlet" => "dirichlet",
        "verify-scaling" => "scaling",
        "verify-moments" => "moments",
        "metric-suite" => "metric",
        other => return Err(Error::Config(format!("unknown subcommand `{other}`"))),
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabConfig {
    table: toml::Table,
}

fn parse_value(text: &str) -> toml::Value {
    // bare words that are not TOML literals are taken as strings
    match format!("v = {text}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

impl LabConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table = text.parse::<toml::Table>().map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// `section.key=value` (or `key=value` at top level); the value is read as a TOML
    /// literal when it parses as one.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
        let value = parse_value(value.trim());
        match key.trim().split_once('.') {
            Some((section, k)) => self.set(section, k, value),
            None => {
                self.table.insert(key.trim().to_string(), value);
                Ok(())
            }
        }
    }

    pub fn set(&mut self, section: &str, key: &str, value: toml::Value) -> Result<()> {
        let entry = self
            .table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(key.to_string(), value);
                Ok(())
            }
            _ => Err(Error::Config(format!("`{section}` is a value, not a section"))),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }

    pub fn seed(&self) -> Result<u64> {
        match self.table.get("seed") {
            None => Ok(DEFAULT_SEED),
            Some(toml::Value::Integer(s)) if *s >= 0 => Ok(*s as u64),
            Some(v) => Err(Error::Config(format!("seed must be a nonnegative integer, got {v}"))),
        }
    }

    /// Typed parameters of `section`, defaults filled in; unknown keys are rejected.
    pub fn section<T: DeserializeOwned + Default>(&self, section: &str) -> Result<T> {
        match self.table.get(section) {
            None => Ok(T::default()),
            Some(toml::Value::Table(t)) => t
                .clone()
                .try_into()
                .map_err(|e| Error::Config(format!("section [{section}]: {e}"))),
            Some(_) => Err(Error::Config(format!("`{section}` must be a table"))),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.table).expect("tables serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<f64>,
    /// Present when the metric is an asserted check.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pass: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    /// Hash of the suite, record name and config snapshot.
    pub id: String,
    pub suite: String,
    pub name: String,
    /// `{ "seed": .., "params": {..} }`, the resolved section.
    pub config: Json,
    pub metrics: BTreeMap<String, MetricValue>,
    pub artifacts: Vec<String>,
    pub version: String,
    pub timestamp: u64,
}

impl ExperimentRecord {
    fn new(suite: &str, name: &str, config: Json) -> Self {
        let mut h = Sha256::new();
        h.update(suite.as_bytes());
        h.update([0]);
        h.update(name.as_bytes());
        h.update([0]);
        h.update(config.to_string().as_bytes());
        let id = hex::encode(&h.finalize()[..8]);
        Self {
            id,
            suite: suite.into(),
            name: name.into(),
            config,
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: 0,
        }
    }

    fn metric(&mut self, name: &str, value: f64) -> &mut Self {
        self.metrics.insert(name.into(), MetricValue { value, error: None, pass: None });
        self
    }

    fn metric_se(&mut self, name: &str, value: f64, error: f64) -> &mut Self {
        self.metrics.insert(name.into(), MetricValue { value, error: Some(error), pass: None });
        self
    }

    fn check(&mut self, name: &str, value: f64, pass: bool) -> &mut Self {
        self.metrics.insert(name.into(), MetricValue { value, error: None, pass: Some(pass) });
        self
    }

    fn check_se(&mut self, name: &str, value: f64, error: f64, pass: bool) -> &mut Self {
        self.metrics.insert(name.into(), MetricValue { value, error: Some(error), pass: Some(pass) });
        self
    }

    pub fn pass(&self) -> bool {
        self.metrics.values().all(|m| m.pass != Some(false))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    /// One line per metric: `name metric = value [± error] [PASS|FAIL]`.
    pub fn summary_lines(&self) -> Vec<String> {
        self.metrics
            .iter()
            .map(|(k, m)| {
                let mut s = format!("{} {} = {:.6e}", self.name, k, m.value);
                if let Some(e) = m.error {
                    s.push_str(&format!(" ± {e:.2e}"));
                }
                match m.pass {
                    Some(true) => s.push_str(" PASS"),
                    Some(false) => s.push_str(" FAIL"),
                    None => {}
                }
                s
            })
            .collect()
    }
}

/// Drops the timestamp field from a serialized record.
pub fn strip_timestamp(line: &str) -> String {
    match line.rfind(",\"timestamp\":") {
        Some(i) => format!("{}}}", &line[..i]),
        None => line.to_string(),
    }
}

/// Everything a suite produces; nothing touches the file system until `write_to`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteOutput {
    pub records: Vec<ExperimentRecord>,
    /// `(file name, contents)` for CSV tables and extra JSONL streams.
    pub tables: Vec<(String, String)>,
    /// `(file name, field)` written in the binary field format.
    pub fields: Vec<(String, GridField)>,
}

impl SuiteOutput {
    pub fn pass(&self) -> bool {
        self.records.iter().all(ExperimentRecord::pass)
    }

    fn table(&mut self, name: &str, contents: String) -> String {
        self.tables.push((name.into(), contents));
        name.into()
    }

    fn field(&mut self, name: &str, field: GridField) -> String {
        self.fields.push((name.into(), field));
        name.into()
    }

    /// Stamps every record with `timestamp` and writes `records.jsonl`, the tables and
    /// the fields into `dir`.
    pub fn write_to(&mut self, dir: &Path, timestamp: u64) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut jsonl = String::new();
        for r in &mut self.records {
            r.timestamp = timestamp;
            jsonl.push_str(&r.to_json_line());
            jsonl.push('\n');
        }
        let path = dir.join("records.jsonl");
        fs::write(&path, jsonl)?;
        written.push(path);
        for (name, contents) in &self.tables {
            let path = dir.join(name);
            fs::write(&path, contents)?;
            written.push(path);
        }
        for (name, field) in &self.fields {
            let path = dir.join(name);
            let mut buf = Vec::new();
            field.write_binary(&mut buf)?;
            fs::write(&path, buf)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn snapshot<T: Serialize>(seed: u64, params: &T) -> Json {
    serde_json::json!({ "seed": seed, "params": params })
}

/// Runs one suite. Parallel sections use the ambient rayon pool and collect in order, so
/// the output does not depend on the number of workers.
pub fn run_suite(suite: &str, cfg: &LabConfig) -> Result<SuiteOutput> {
    let section = section_of(suite)?;
    let seed = cfg.seed()?;
    match suite {
        "gn-solve" => gn_solve(seed, &cfg.section(section)?),
        "constants" => constants(seed, &cfg.section(section)?),
        "simulate" => simulate(seed, &cfg.section(section)?),
        "gibbs" => gibbs(seed, &cfg.section(section)?),
        "conditional" => conditional(seed, &cfg.section(section)?),
        "verify-estimates" => estimates(seed, &cfg.section(section)?),
        "verify-dirichlet" => dirichlet(seed, &cfg.section(section)?),
        "verify-scaling" => scaling(seed, &cfg.section(section)?),
        "verify-moments" => moments(seed, &cfg.section(section)?),
        "metric-suite" => metric(seed, &cfg.section(section)?),
        _ => unreachable!("section_of rejects unknown suites"),
    }
}

/// `run_suite` on a dedicated pool of `workers` threads (the global pool when `None`).
pub fn run_suite_on(suite: &str, cfg: &LabConfig, workers: Option<usize>) -> Result<SuiteOutput> {
    match workers {
        None => run_suite(suite, cfg),
        Some(0) => Err(Error::Config("worker count must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(|| run_suite(suite, cfg)),
    }
}

/// Unset optional parameters serialize as `null`, which TOML lacks; absent keys
/// deserialize to the same `None`.
fn without_nulls(v: Json) -> Json {
    match v {
        Json::Object(m) => Json::Object(
            m.into_iter().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k, without_nulls(v))).collect(),
        ),
        Json::Array(a) => Json::Array(a.into_iter().map(without_nulls).collect()),
        other => other,
    }
}

/// Re-runs the computation described by a record's snapshot.
pub fn replay(record: &ExperimentRecord) -> Result<SuiteOutput> {
    let section = section_of(&record.suite)?;
    let mut cfg = LabConfig::default();
    let seed = record.config["seed"]
        .as_u64()
        .ok_or_else(|| Error::Format("snapshot without a seed".into()))?;
    cfg.set_seed(seed);
    let params: toml::Value = serde_json::from_value(without_nulls(record.config["params"].clone()))
        .map_err(|e| Error::Format(format!("snapshot parameters: {e}")))?;
    cfg.table.insert(section.into(), params);
    run_suite(&record.suite, &cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnParams {
    pub d: usize,
    pub q: f64,
    /// Lattice spacing and half width; the dimension's standard grid when absent.
    pub h: Option<f64>,
    pub half_width: Option<f64>,
    pub tol: Option<f64>,
}

impl Default for GnParams {
    fn default() -> Self {
        Self { d: 1, q: 2.0, h: None, half_width: None, tol: None }
    }
}

impl GnParams {
    fn grid(&self) -> Result<(GridSpec, f64)> {
        let (std, tol) = standard_grid(self.d)?;
        let half = 0.5 * (std.extents[0] - 1) as f64 * std.h;
        let grid = GridSpec::centered(self.d, self.h.unwrap_or(std.h), self.half_width.unwrap_or(half))?;
        Ok((grid, self.tol.unwrap_or(tol)))
    }
}

fn gn_solve(seed: u64, p: &GnParams) -> Result<SuiteOutput> {
    let (grid, tol) = p.grid()?;
    let sol = solve_gn_optimizer(p.d, p.q, &grid, tol)?;
    let mut out = SuiteOutput::default();
    let mut r = ExperimentRecord::new("gn-solve", &format!("gn-d{}-q{}", p.d, p.q), snapshot(seed, p));
    r.metric("kappa", sol.ratio)
        .metric("l2_norm", sol.l2_norm)
        .metric("grad_l2_norm", sol.grad_l2_norm)
        .metric("l2q_norm", sol.l2q_norm)
        .metric("iterations", sol.iterations as f64)
        .check("residual", sol.residual, sol.residual.is_finite());
    let mut csv = Vec::new();
    sol.profile.write_csv(&mut csv)?;
    r.artifacts.push(out.table("gn_profile.csv", String::from_utf8(csv).expect("ascii csv")));
    r.artifacts.push(out.field("gn_profile.bin", sol.profile.clone()));
    out.records.push(r);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsParams {
    pub d: usize,
    pub q: f64,
    pub gammas: Vec<f64>,
    pub h: Option<f64>,
    pub half_width: Option<f64>,
    pub tol: Option<f64>,
    pub theta_rel_tol: f64,
    pub scalar_abs_tol: f64,
    pub grid_rel_tol: f64,
}

impl Default for ConstantsParams {
    fn default() -> Self {
        Self {
            d: 1,
            q: 2.0,
            gammas: vec![0.5, 1.0, 1.5],
            h: None,
            half_width: None,
            tol: None,
            theta_rel_tol: 1e-3,
            scalar_abs_tol: 1e-10,
            grid_rel_tol: 3e-3,
        }
    }
}

fn constants(seed: u64, p: &ConstantsParams) -> Result<SuiteOutput> {
    let gp = GnParams { d: p.d, q: p.q, h: p.h, half_width: p.half_width, tol: p.tol };
    let (grid, tol) = gp.grid()?;
    // inadmissible tilts are skipped rather than failed
    let gammas: Vec<f64> =
        p.gammas.iter().copied().filter(|g| *g > 0.0 && g * p.d as f64 * (p.q - 1.0) < 2.0 * p.q).collect();
    let c = constants_check(p.d, p.q, &gammas, &grid, tol)?;
    let mut out = SuiteOutput::default();
    let mut r = ExperimentRecord::new("constants", &format!("constants-d{}-q{}", p.d, p.q), snapshot(seed, p));
    r.metric("kappa", c.kappa)
        .metric("theta", c.theta)
        .metric("theta_oracle", c.theta_oracle)
        .check("theta_rel_error", c.theta_rel_error, c.theta_rel_error < p.theta_rel_tol);
    let mut csv = String::from("gamma,rho,rho_scalar,scalar_abs_error,rho_grid,grid_rel_error\n");
    for rc in &c.rho {
        let g = rc.gamma;
        r.metric(&format!("rho_g{g}"), rc.rho)
            .check(&format!("rho_g{g}_scalar_abs_error"), rc.scalar_abs_error, rc.scalar_abs_error < p.scalar_abs_tol)
            .check(&format!("rho_g{g}_grid_rel_error"), rc.grid_rel_error, rc.grid_rel_error < p.grid_rel_tol);
        csv.push_str(&format!(
            "{g},{:e},{:e},{:e},{:e},{:e}\n",
            rc.rho, rc.scalar, rc.scalar_abs_error, rc.grid, rc.grid_rel_error
        ));
    }
    r.artifacts.push(out.table("constants.csv", csv));
    r.artifacts.push(out.table("constants.json", serde_json::to_string_pretty(&c).expect("serializable") + "\n"));
    out.records.push(r);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    pub d: usize,
    pub t: f64,
    pub dt: f64,
    /// Number of independent paths per replica; 1 gives self intersections of order `q`.
    pub p: usize,
    pub q: f64,
    pub eps: f64,
    pub h: f64,
    pub replicas: usize,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self { d: 1, t: 1.0, dt: 1e-3, p: 1, q: 2.0, eps: 0.01, h: 0.025, replicas: 200 }
    }
}

fn simulate(seed: u64, p: &SimulateParams) -> Result<SuiteOutput> {
    let pc = PathConfig::new(p.d, p.t, p.dt, seed, p.p)?;
    if p.p > 1 {
        pc.validate_mutual()?;
    }
    if p.replicas < 2 {
        return Err(Error::Config("simulate needs at least two replicas".into()));
    }
    let rows: Vec<(f64, f64)> = (0..p.replicas as u64)
        .into_par_iter()
        .map(|i| {
            let paths: Vec<BrownianPath> =
                (0..p.p as u64).map(|j| sample_path(&pc, i * p.p as u64 + j)).collect::<Result<_>>()?;
            let refs: Vec<&BrownianPath> = paths.iter().collect();
            let spec = grid_for_paths(&refs, p.eps, p.h)?;
            let fields: Vec<GridField> =
                paths.iter().map(|x| smoothed_local_time(x, p.eps, &spec)).collect::<Result<_>>()?;
            let value = if p.p == 1 {
                power_sum(&fields[0], p.q)
            } else {
                mutual_total(&fields.iter().collect::<Vec<_>>())?
            };
            Ok((value, fields[0].mass()))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mass_err = rows.iter().map(|r| (r.1 / p.t - 1.0).abs()).fold(0.0, f64::max);
    let (m, se) = mean_se(&values);
    let mut out = SuiteOutput::default();
    let name = if p.p == 1 { "beta_eps" } else { "alpha_eps" };
    let mut r = ExperimentRecord::new("simulate", &format!("simulate-d{}-p{}", p.d, p.p), snapshot(seed, p));
    r.metric_se(name, m, se).check("local_time_mass_error", mass_err, mass_err < 1e-2);
    let mut csv = format!("replica,{name},mass\n");
    for (i, (v, mass)) in rows.iter().enumerate() {
        csv.push_str(&format!("{i},{v:e},{mass:e}\n"));
    }
    r.artifacts.push(out.table("simulate.csv", csv));
    out.records.push(r);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeParam {
    #[serde(rename = "self")]
    SelfIntersection,
    Mutual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsParams {
    pub mode: ModeParam,
    pub d: usize,
    /// `q` in self mode, `p` in mutual mode.
    pub order: usize,
    pub gamma: f64,
    pub t: f64,
    pub dt: f64,
    pub eps: f64,
    pub h: f64,
    pub burn_in: usize,
    pub samples: usize,
    pub block: f64,
    pub chains: usize,
    pub window: f64,
    pub tilt: bool,
    pub ess_floor: f64,
    /// Self mode only: compare with the tilted optimizer and assert this `L1` bound.
    pub l1_tolerance: Option<f64>,
    /// Extra runs at these mollification scales, reported without assertion.
    pub eps_sweep: Vec<f64>,
}

impl Default for GibbsParams {
    fn default() -> Self {
        Self {
            mode: ModeParam::SelfIntersection,
            d: 1,
            order: 2,
            gamma: 1.0,
            t: 20.0,
            dt: 0.01,
            eps: 0.05,
            h: 0.05,
            burn_in: 800,
            samples: 4000,
            block: 1.0,
            chains: 4,
            window: 8.0,
            tilt: true,
            ess_floor: 50.0,
            l1_tolerance: Some(0.15),
            eps_sweep: Vec::new(),
        }
    }
}

impl GibbsParams {
    pub fn config(&self, seed: u64, eps: f64) -> Result<GibbsConfig> {
        let (mode, p) = match self.mode {
            ModeParam::SelfIntersection => (IntersectionMode::SelfIntersection, 1),
            ModeParam::Mutual => (IntersectionMode::Mutual, self.order),
        };
        let c = GibbsConfig {
            base: PathConfig::new(self.d, self.t, self.dt, seed, p)?,
            mode,
            order: self.order,
            gamma: self.gamma,
            eps,
            h: self.h,
            burn_in: self.burn_in,
            samples: self.samples,
            block: self.block,
            tilt: self.tilt,
            window: self.window,
            ess_floor: self.ess_floor,
        };
        c.validate()?;
        Ok(c)
    }

    fn target(&self) -> Result<Option<crate::gn_variational::GNSolution>> {
        if self.mode != ModeParam::SelfIntersection || !self.tilt {
            return Ok(None);
        }
        let (grid, tol) = standard_grid(self.d)?;
        let base = solve_gn_optimizer(self.d, self.order as f64, &grid, tol)?;
        Ok(Some(tilted_optimizer(self.d, self.order as f64, self.gamma, &base)?))
    }
}

fn gibbs(seed: u64, p: &GibbsParams) -> Result<SuiteOutput> {
    let mut eps_list = vec![p.eps];
    eps_list.extend(p.eps_sweep.iter().copied().filter(|e| *e != p.eps));
    let configs = eps_list.iter().map(|&e| p.config(seed, e)).collect::<Result<Vec<_>>>()?;
    let target = p.target()?;
    let mut out = SuiteOutput::default();
    for (n, (&eps, cfg)) in eps_list.iter().zip(&configs).enumerate() {
        let res = run_gibbs_chains(cfg, p.chains.max(1))?;
        let primary = n == 0;
        let tag = if primary { String::new() } else { format!("-eps{eps}") };
        // a sweep record replays as the primary run plus its own sweep point
        let mut snap = p.clone();
        snap.eps_sweep = if primary { Vec::new() } else { vec![eps] };
        let mut r = ExperimentRecord::new("gibbs", &format!("gibbs{tag}"), snapshot(seed, &snap));
        r.metric("acceptance_rate", res.acceptance_rate)
            .metric("ess", res.ess)
            .metric("low_ess", (res.status != crate::gibbs_mcmc::ChainStatus::Ok) as u8 as f64)
            .metric_se("functional_mean", res.functional_mean, res.functional_se)
            .check(
                "density_mass_error",
                (res.mean_density.mass() / p.t - 1.0).abs(),
                (res.mean_density.mass() / p.t - 1.0).abs() < 1e-2,
            );
        let dens = res.normalized_density();
        if let Some(sol) = &target {
            let l1 = dens.l1_distance(&density_on(sol, &dens.spec))?;
            match (primary, p.l1_tolerance) {
                (true, Some(tol)) => r.check("l1_to_tilted_optimizer", l1, l1 < tol),
                _ => r.metric("l1_to_tilted_optimizer", l1),
            };
        }
        let mut sweeps = String::new();
        for s in &res.records {
            sweeps.push_str(&serde_json::to_string(s).expect("records serialize"));
            sweeps.push('\n');
        }
        r.artifacts.push(out.table(&format!("gibbs_sweeps{tag}.jsonl"), sweeps));
        r.artifacts.push(out.field(&format!("gibbs_density{tag}.bin"), dens));
        out.records.push(r);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionalParams {
    pub gibbs: GibbsParams,
    /// Constraint `beta_eps >= level t^q`.
    pub level: f64,
    pub l1_tolerance: Option<f64>,
}

impl Default for ConditionalParams {
    fn default() -> Self {
        Self {
            gibbs: GibbsParams { window: 12.0, chains: 1, l1_tolerance: None, ..GibbsParams::default() },
            level: 0.3,
            l1_tolerance: Some(0.2),
        }
    }
}

fn conditional(seed: u64, p: &ConditionalParams) -> Result<SuiteOutput> {
    if p.gibbs.mode != ModeParam::SelfIntersection {
        return Err(Error::Config("conditional estimates are implemented in self mode".into()));
    }
    let cfg = p.gibbs.config(seed, p.gibbs.eps)?;
    let res = conditional_estimate(&cfg, p.level)?;
    let (grid, tol) = standard_grid(p.gibbs.d)?;
    let base = solve_gn_optimizer(p.gibbs.d, p.gibbs.order as f64, &grid, tol)?;
    let prof = conditional_profile(&base, p.level)?;
    let dens = res.chain.normalized_density();
    let l1 = dens.l1_distance(&density_on(&prof, &dens.spec))?;
    let mut out = SuiteOutput::default();
    let mut r = ExperimentRecord::new("conditional", &format!("conditional-level{}", p.level), snapshot(seed, p));
    r.metric("constrained_fraction", res.constrained_fraction)
        .metric("weight_ess", res.weight_ess)
        .metric("threshold", res.threshold)
        .metric("acceptance_rate", res.chain.acceptance_rate);
    match p.l1_tolerance {
        Some(tol) => r.check("l1_to_conditional_profile", l1, l1 < tol),
        None => r.metric("l1_to_conditional_profile", l1),
    };
    r.artifacts.push(out.field("conditional_density.bin", dens));
    out.records.push(r);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatesParams {
    pub dims: Vec<usize>,
    pub sweep: Sweep,
    pub increment_eps: Vec<f64>,
    pub riesz: RieszSweep,
    /// Riesz exponent `k = riesz_k_factor * d`.
    pub riesz_k_factor: f64,
    pub riesz_replicas: usize,
    pub slope_tolerance: f64,
}

impl Default for EstimatesParams {
    fn default() -> Self {
        Self {
            dims: vec![1, 2, 3],
            sweep: Sweep::default(),
            increment_eps: vec![1e-3, 1e-1, 10.0],
            riesz: RieszSweep::default(),
            riesz_k_factor: 0.4,
            riesz_replicas: 200_000,
            slope_tolerance: 0.05,
        }
    }
}

fn estimates(seed: u64, p: &EstimatesParams) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let mut csv = String::from("estimate,d,worst_ratio,declared_constant,empirical_constant,pass\n");
    for &d in &p.dims {
        let mut r = ExperimentRecord::new("verify-estimates", &format!("estimates-d{d}"), snapshot(seed, p));
        let mut reports = verify_kernel_bounds(d, &p.sweep)?;
        reports.extend(verify_time_increment_bound(d, &p.sweep, &p.increment_eps)?);
        for e in &reports {
            r.check(&format!("{}_worst_ratio", e.name), e.worst_ratio, e.pass);
            r.metric(&format!("{}_empirical_constant", e.name), e.empirical_constant);
            csv.push_str(&format!(
                "{},{d},{:e},{:e},{:e},{}\n",
                e.name, e.worst_ratio, e.declared_constant, e.empirical_constant, e.pass
            ));
        }
        let k = p.riesz_k_factor * d as f64;
        let rz = verify_riesz_moment(d, k, &p.riesz, p.riesz_replicas, seed)?;
        let tt = -k / 2.0;
        r.check_se("riesz_t_slope", rz.t_slope, rz.t_slope_se, (rz.t_slope - tt).abs() <= p.slope_tolerance)
            .check_se("riesz_r_slope", rz.r_slope, rz.r_slope_se, (rz.r_slope + k).abs() <= p.slope_tolerance)
            .metric_se("riesz_worst_ratio", rz.worst_ratio, rz.worst_ratio_se)
            .metric("riesz_origin_exact", rz.origin_exact)
            .metric_se("riesz_origin_mc", rz.origin_mc.0, rz.origin_mc.1);
        out.records.push(r);
    }
    let name = out.table("estimates.csv", csv);
    out.records.iter_mut().for_each(|r| r.artifacts.push(name.clone()));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirichletParams {
    pub cases: usize,
    pub samples: usize,
    /// With `m` set, every case has `m` exponents (drawn unless `alphas` is given).
    pub m: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub z_tolerance: f64,
}

impl Default for DirichletParams {
    fn default() -> Self {
        Self { cases: 10, samples: 400_000, m: None, alphas: None, t: None, z_tolerance: 3.0 }
    }
}

fn dirichlet(seed: u64, p: &DirichletParams) -> Result<SuiteOutput> {
    let checks = if p.m.is_none() && p.alphas.is_none() && p.t.is_none() {
        verify_dirichlet(p.cases, p.samples, seed)?
    } else {
        (0..p.cases as u64)
            .map(|i| {
                let mut rng = substream(seed, i);
                let alphas = match (&p.alphas, p.m) {
                    (Some(a), _) => a.clone(),
                    (None, m) => {
                        let m = m.unwrap_or_else(|| rng.random_range(1..=4));
                        (0..m).map(|_| rng.random_range(0.6..3.0)).collect()
                    }
                };
                let t = p.t.unwrap_or_else(|| rng.random_range(0.5..2.0));
                check_dirichlet_case(&alphas, t, p.samples, seed, i)
            })
            .collect::<Result<Vec<_>>>()?
    };
    let mut out = SuiteOutput::default();
    let mut csv = String::from("case,alphas,t,exact,mc,se,z\n");
    let mut r = ExperimentRecord::new("verify-dirichlet", "dirichlet", snapshot(seed, p));
    for (i, c) in checks.iter().enumerate() {
        let a: Vec<String> = c.alphas.iter().map(|v| format!("{v}")).collect();
        csv.push_str(&format!("{i},{},{},{:e},{:e},{:e},{}\n", a.join(";"), c.t, c.exact, c.mc, c.se, c.z));
        r.check_se(&format!("case{i:02}_mc"), c.mc, c.se, c.z.abs() <= p.z_tolerance);
        r.metric(&format!("case{i:02}_exact"), c.exact);
    }
    r.artifacts.push(out.table("dirichlet.csv", csv));
    out.records.push(r);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingCase {
    pub mode: ModeParam,
    pub d: usize,
    pub order: usize,
    pub c: f64,
    pub t: f64,
    pub steps: usize,
    pub eps: f64,
    pub h: f64,
}

impl Default for ScalingCase {
    fn default() -> Self {
        Self { mode: ModeParam::SelfIntersection, d: 1, order: 2, c: 2.0, t: 1.0, steps: 1000, eps: 0.01, h: 0.025 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingParams {
    pub replicas: usize,
    pub cases: Vec<ScalingCase>,
}

impl Default for ScalingParams {
    fn default() -> Self {
        Self {
            replicas: 1000,
            cases: vec![
                ScalingCase::default(),
                ScalingCase { c: 4.0, ..ScalingCase::default() },
                ScalingCase { mode: ModeParam::Mutual, d: 2, c: 4.0, steps: 200, ..ScalingCase::default() },
            ],
        }
    }
}

pub fn scaling_config(case: &ScalingCase, replicas: usize, seed: u64) -> ScalingConfig {
    ScalingConfig {
        mode: match case.mode {
            ModeParam::SelfIntersection => IntersectionMode::SelfIntersection,
            ModeParam::Mutual => IntersectionMode::Mutual,
        },
        d: case.d,
        order: case.order,
        c: case.c,
        t: case.t,
        steps: case.steps,
        eps: case.eps,
        h: case.h,
        replicas,
        seed,
    }
}

fn scaling(seed: u64, p: &ScalingParams) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let mut csv = String::from("mode,d,order,c,ratio,ratio_se,expected,pass\n");
    for case in &p.cases {
        let rep = scaling_identity_check(&scaling_config(case, p.replicas, seed))?;
        let mode = match case.mode {
            ModeParam::SelfIntersection => "self",
            ModeParam::Mutual => "mutual",
        };
        let name = format!("scaling-{mode}-d{}-k{}-c{}", case.d, case.order, case.c);
        let single = ScalingParams { replicas: p.replicas, cases: vec![case.clone()] };
        let mut r = ExperimentRecord::new("verify-scaling", &name, snapshot(seed, &single));
        r.check_se("ratio", rep.ratio, rep.ratio_se, rep.pass)
            .metric("expected", rep.expected)
            .metric_se("second_moment_ratio", rep.second_ratio, rep.second_ratio_se)
            .metric("second_moment_expected", rep.second_expected);
        csv.push_str(&format!(
            "{mode},{},{},{},{:e},{:e},{:e},{}\n",
            case.d, case.order, case.c, rep.ratio, rep.ratio_se, rep.expected, rep.pass
        ));
        out.records.push(r);
    }
    let name = out.table("scaling.csv", csv);
    out.records.iter_mut().for_each(|r| r.artifacts.push(name.clone()));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsParams {
    pub replicas: usize,
    pub t: f64,
    pub steps: usize,
    pub h: f64,
    pub eps: Vec<f64>,
    pub moments: Vec<u32>,
    /// Lower bound asserted on the pair-mass second-moment slope.
    pub pair_slope_floor: f64,
}

impl Default for MomentsParams {
    fn default() -> Self {
        let s = MomentConfig::standard(MomentFunctional::LocalTimeNorm, 1000, 0);
        Self {
            replicas: s.replicas,
            t: s.t,
            steps: s.steps,
            h: s.h,
            eps: s.eps,
            moments: s.moments,
            pair_slope_floor: 2.0 / 12.0 - 0.05,
        }
    }
}

fn moments(seed: u64, p: &MomentsParams) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    for f in [MomentFunctional::LocalTimeNorm, MomentFunctional::PairMass] {
        let cfg = MomentConfig {
            functional: f,
            q: 2.0,
            t: p.t,
            steps: p.steps,
            h: p.h,
            eps: p.eps.clone(),
            moments: p.moments.clone(),
            replicas: p.replicas,
            seed,
        };
        let rep = smoothing_moment_study(&cfg)?;
        let tag = match f {
            MomentFunctional::LocalTimeNorm => "local-time-norm",
            MomentFunctional::PairMass => "pair-mass",
        };
        let mut r = ExperimentRecord::new("verify-moments", &format!("moments-{tag}"), snapshot(seed, p));
        for fit in &rep.fits {
            let m = fit.m;
            let slope_ok = match f {
                MomentFunctional::LocalTimeNorm => fit.slope > 0.0,
                MomentFunctional::PairMass if m == 2 => fit.slope >= p.pair_slope_floor,
                MomentFunctional::PairMass => fit.slope > 0.0,
            };
            r.check_se(&format!("m{m}_slope"), fit.slope, fit.slope_se, slope_ok)
                .check(&format!("m{m}_decreasing"), fit.decreasing as u8 as f64, fit.decreasing);
        }
        r.artifacts.push(out.table(&format!("moments_{tag}.csv"), rep.to_csv()));
        out.records.push(r);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub triples: usize,
    pub separations: Vec<usize>,
    pub spread: f64,
    pub axiom_tolerance: f64,
    pub final_distance: f64,
    pub additivity_tolerance: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            triples: 100,
            separations: vec![1, 2, 4, 8],
            spread: 2.0,
            axiom_tolerance: 1e-12,
            final_distance: 1e-2,
            additivity_tolerance: 1e-10,
        }
    }
}

fn metric(seed: u64, p: &MetricParams) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let ax = metric_axiom_check(p.triples, seed)?;
    let mut r = ExperimentRecord::new("metric-suite", "metric-axioms", snapshot(seed, p));
    let tol = p.axiom_tolerance;
    r.check("symmetry", ax.symmetry, ax.symmetry <= tol)
        .check("triangle_excess", ax.triangle, ax.triangle <= tol)
        .check("shift_identity", ax.identity, ax.identity <= tol)
        .check("min_separation", ax.separation, ax.separation > 0.0);
    out.records.push(r);

    let corpus = test_corpus()?;
    let rows = profile_battery(&corpus, &p.separations, p.spread)?;
    let mut csv = String::from("name,n,distance,tail_bound\n");
    let mut r = ExperimentRecord::new("metric-suite", "profile-battery", snapshot(seed, p));
    for row in &rows {
        for ((n, d), t) in row.separations.iter().zip(&row.distances).zip(&row.tail_bounds) {
            csv.push_str(&format!("{},{n},{d:e},{t:e}\n", row.name));
        }
        let last = *row.distances.last().unwrap_or(&f64::INFINITY);
        r.check(&format!("{}_decreasing", row.name), row.decreasing as u8 as f64, row.decreasing)
            .check(&format!("{}_final", row.name), last, last < p.final_distance);
    }
    r.artifacts.push(out.table("metric_battery.csv", csv));
    out.records.push(r);

    let refs: Vec<_> = corpus.iter().map(|c| &c.1).collect();
    let add = marginal_additivity_error(&refs)?;
    let mut r = ExperimentRecord::new("metric-suite", "marginal-additivity", snapshot(seed, p));
    r.check("max_error", add, add <= p.additivity_tolerance);
    out.records.push(r);
    Ok(out)
}
