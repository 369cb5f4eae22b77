//! Command-line entry points driven by a TOML run configuration.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 configuration error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{estimate_report, model_lipschitz_probe, scale_sweep, stability_experiment, Perturbation};
use crate::error::Error;
use crate::model::{
    prostate_to_abstract, validate_hypotheses, AbstractModel, DataSpec, NonlinearitySetSpec, OperatorSpec,
    ProstateInstance, SpaceTimeFormula, StructuralHypotheses,
};
use crate::potentials::{make_potential, PotentialKind};
use crate::solver::{build_run, refine_study, run, Level, SolverConfig};
use crate::spectral::Domain;
use crate::verify::{run_suite, SuiteOptions};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fracphase", version, about = "Fractional phase-field Galerkin solver and verification suites")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base directory for run directories.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomized probe suites.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one configuration and write the trajectory and a summary.
    Simulate,
    /// Run a named verification suite: yosida, lemma41, spectral, energy, stability.
    Verify { suite: String },
    /// Refinement study over the configured levels.
    Refine,
    /// Continuous-dependence experiment with a perturbation sweep.
    Contdep,
    /// Validate the structural hypotheses of the configured model.
    CheckHypotheses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractModelConfig {
    pub domain: Domain,
    pub operator_a: OperatorSpec,
    pub operator_b: OperatorSpec,
    pub rho: f64,
    pub tau: f64,
    pub potential: PotentialKind,
    pub nonlinearities: NonlinearitySetSpec,
    pub m0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Prostate(ProstateInstance),
    Abstract(AbstractModelConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    pub levels: Vec<Level>,
    /// Upper bound on every successive Cauchy ratio.
    #[serde(default)]
    pub max_ratio: Option<f64>,
}

fn default_scales() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}

fn default_spread() -> f64 {
    3.0
}

fn zero_perturbation() -> Perturbation {
    Perturbation {
        phi0: crate::model::FieldFormula::Zero,
        u: crate::model::FieldFormula::Zero,
        s: crate::model::FieldFormula::Zero,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContdepConfig {
    #[serde(default = "zero_perturbation")]
    pub perturbation: Perturbation,
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    /// Largest accepted max/min of the ratios across scales.
    #[serde(default = "default_spread")]
    pub max_spread: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsToggles {
    #[serde(default = "yes")]
    pub estimates: bool,
    #[serde(default)]
    pub lipschitz_probe: bool,
}

impl Default for DiagnosticsToggles {
    fn default() -> Self {
        DiagnosticsToggles {
            estimates: true,
            lipschitz_probe: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    /// Required for abstract models; replaces the derived ones for prostate.
    #[serde(default)]
    pub hypotheses: Option<StructuralHypotheses>,
    #[serde(default)]
    pub data: Option<DataSpec>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub refine: Option<RefineConfig>,
    #[serde(default)]
    pub contdep: Option<ContdepConfig>,
    #[serde(default)]
    pub verify: SuiteOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticsToggles,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// The abstract model and the data description, with the S field of a
    /// prostate instance filled in from its antiangiogenic reduction.
    pub fn model_and_data(&self) -> Result<(AbstractModel, Option<DataSpec>), Error> {
        let model_cfg = self.model.as_ref().ok_or_else(|| Error::config("missing [model] section"))?;
        let mut data = self.data.clone();
        let mut model = match model_cfg {
            ModelConfig::Prostate(inst) => {
                let map = prostate_to_abstract(inst)?;
                if let Some(d) = data.as_mut() {
                    if d.s != SpaceTimeFormula::zero() {
                        return Err(Error::config(
                            "data.s: for the prostate model S is set by model.antiangiogenic",
                        ));
                    }
                    d.s = SpaceTimeFormula::constant(map.s_value);
                }
                map.model
            }
            ModelConfig::Abstract(a) => {
                let hypotheses = self
                    .hypotheses
                    .clone()
                    .ok_or_else(|| Error::config("missing [hypotheses] section (required for abstract models)"))?;
                a.domain.validate()?;
                AbstractModel {
                    domain: a.domain,
                    operator_a: a.operator_a,
                    operator_b: a.operator_b,
                    rho: a.rho,
                    tau: a.tau,
                    potential: make_potential(a.potential)?,
                    nonlinearities: a.nonlinearities.build()?,
                    m0: a.m0,
                    hypotheses,
                }
            }
        };
        if let Some(h) = &self.hypotheses {
            model.hypotheses = h.clone();
        }
        model.check_structure()?;
        Ok((model, data))
    }

    fn solver(&self) -> Result<&SolverConfig, Error> {
        let s = self.solver.as_ref().ok_or_else(|| Error::config("missing [solver] section"))?;
        s.validate()?;
        Ok(s)
    }
}

fn require_data(data: Option<DataSpec>) -> Result<DataSpec, Error> {
    data.ok_or_else(|| Error::config("missing [data] section"))
}

/// Failure of a command, mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Lib(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl Failure {
    fn code(&self) -> (i32, &'static str) {
        match self {
            Failure::Lib(Error::NumericalFailure { .. }) => (EXIT_NUMERICAL, "numerical_failure"),
            Failure::Lib(Error::InvalidInitialDatum(_)) => (EXIT_CONFIG, "invalid_initial_datum"),
            Failure::Lib(Error::InvalidPotential(_)) => (EXIT_CONFIG, "invalid_potential"),
            Failure::Lib(Error::InvalidInput(_)) => (EXIT_CONFIG, "invalid_input"),
            Failure::Lib(Error::InvalidConfiguration(_)) => (EXIT_CONFIG, "invalid_configuration"),
            Failure::Io(_) => (EXIT_CONFIG, "io_error"),
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Io(m) => m.clone(),
        }
    }
}

/// Where a command writes its files.
struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// `<base>/<UTC timestamp>-<hash>`, with a numeric suffix if taken.
    fn create(base: &Path, key: &[u8]) -> Result<Self, Failure> {
        fs::create_dir_all(base)?;
        let hash = hex::encode(Sha256::digest(key));
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        let stem = format!("{stamp}-{}", &hash[..12]);
        for k in 0.. {
            let name = if k == 0 { stem.clone() } else { format!("{stem}-{k}") };
            let path = base.join(name);
            match fs::create_dir(&path) {
                Ok(()) => return Ok(RunDir { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            }
        }
        unreachable!()
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        Ok(fs::write(self.path.join(name), contents)?)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
        s.push('\n');
        self.write(name, &s)
    }
}

struct Context {
    config: Option<(String, RunConfig)>,
    out: PathBuf,
    seed: u64,
}

impl Context {
    fn config(&self) -> Result<&RunConfig, Failure> {
        self.config
            .as_ref()
            .map(|(_, c)| c)
            .ok_or_else(|| Failure::Lib(Error::config("this command needs --config")))
    }

    fn run_dir(&self, command: &str) -> Result<RunDir, Failure> {
        let mut key = command.as_bytes().to_vec();
        key.extend_from_slice(&self.seed.to_le_bytes());
        if let Some((text, _)) = &self.config {
            key.extend_from_slice(text.as_bytes());
        }
        let dir = RunDir::create(&self.out, &key)?;
        if let Some((text, _)) = &self.config {
            dir.write("config.toml", text)?;
        }
        Ok(dir)
    }
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    command: &'static str,
    config: &'a RunConfig,
    initial: crate::solver::InitialProjection,
    final_state: Option<crate::solver::MonitorRow>,
    estimates: Option<crate::diagnostics::EstimateReport>,
    energy_residuals: Residuals,
    lipschitz: Option<Vec<crate::diagnostics::LipschitzReport>>,
    snapshots: usize,
}

#[derive(Serialize)]
struct Residuals {
    phi: f64,
    sigma: f64,
}

fn simulate(ctx: &Context) -> Result<(i32, PathBuf), Failure> {
    let cfg = ctx.config()?;
    let (model, data) = cfg.model_and_data()?;
    let spec = require_data(data)?;
    let solver = cfg.solver()?;
    let (sys, data) = build_run(&model, &spec, solver)?;
    let (init, traj) = run(&sys, &data, solver)?;
    let lipschitz = if cfg.diagnostics.lipschitz_probe {
        Some(model_lipschitz_probe(&model, 100_000, ctx.seed)?)
    } else {
        None
    };
    let summary = SimulateSummary {
        command: "simulate",
        config: cfg,
        initial: init,
        final_state: traj.monitors.last().copied(),
        estimates: cfg.diagnostics.estimates.then(|| estimate_report(&traj)),
        energy_residuals: Residuals {
            phi: traj.max_phi_residual(),
            sigma: traj.max_sigma_residual(),
        },
        lipschitz: lipschitz.clone(),
        snapshots: traj.times.len(),
    };
    let dir = ctx.run_dir("simulate")?;
    dir.write("trajectory.csv", &traj.to_csv())?;
    dir.write_json("summary.json", &summary)?;
    let ok = lipschitz.is_none_or(|v| v.iter().all(|r| r.passed));
    Ok((if ok { EXIT_PASS } else { EXIT_VERIFICATION }, dir.path))
}

fn verify(ctx: &Context, suite: &str) -> Result<(i32, PathBuf), Failure> {
    let opts = match &ctx.config {
        Some((_, c)) => c.verify.clone(),
        None => SuiteOptions::default(),
    };
    let report = run_suite(suite, &opts, ctx.seed)?;
    let dir = ctx.run_dir(&format!("verify {suite}"))?;
    dir.write_json("report.json", &report)?;
    for c in &report.checks {
        println!("{} {}: {:e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value);
    }
    Ok((if report.passed { EXIT_PASS } else { EXIT_VERIFICATION }, dir.path))
}

#[derive(Serialize)]
struct RefineOutput<'a> {
    command: &'static str,
    passed: bool,
    max_ratio: Option<f64>,
    report: &'a crate::solver::RefineReport,
}

fn refine(ctx: &Context) -> Result<(i32, PathBuf), Failure> {
    let cfg = ctx.config()?;
    let (model, data) = cfg.model_and_data()?;
    let spec = require_data(data)?;
    let solver = cfg.solver()?;
    let rc = cfg.refine.as_ref().ok_or_else(|| Error::config("missing [refine] section"))?;
    let report = refine_study(&model, &spec, solver, &rc.levels)?;
    let ratio_ok = rc
        .max_ratio
        .is_none_or(|m| report.cauchy_ratios.iter().all(|r| *r <= m));
    let passed = report.monotone && ratio_ok;
    let dir = ctx.run_dir("refine")?;
    dir.write_json(
        "refine.json",
        &RefineOutput {
            command: "refine",
            passed,
            max_ratio: rc.max_ratio,
            report: &report,
        },
    )?;
    Ok((if passed { EXIT_PASS } else { EXIT_VERIFICATION }, dir.path))
}

#[derive(Serialize)]
struct ContdepOutput {
    command: &'static str,
    passed: bool,
    identical: crate::diagnostics::StabilityReport,
    sweep: crate::diagnostics::ScaleSweep,
    max_spread: f64,
}

fn contdep(ctx: &Context) -> Result<(i32, PathBuf), Failure> {
    let cfg = ctx.config()?;
    let (model, data) = cfg.model_and_data()?;
    let spec = require_data(data)?;
    let solver = cfg.solver()?;
    let cc = cfg.contdep.clone().unwrap_or(ContdepConfig {
        perturbation: zero_perturbation(),
        scales: default_scales(),
        max_spread: default_spread(),
    });
    let (_, data) = build_run(&model, &spec, solver)?;
    let identical = stability_experiment(&model, &data, &data, solver)?;
    let sweep = scale_sweep(&model, &data, &cc.perturbation, &cc.scales, solver)?;
    let passed = identical.lhs == 0.0 && sweep.ratio_spread <= cc.max_spread;
    let dir = ctx.run_dir("contdep")?;
    for (s, r) in sweep.scales.iter().zip(&sweep.ratios) {
        println!("scale {s:e}: ratio {r:e}");
    }
    dir.write_json(
        "contdep.json",
        &ContdepOutput {
            command: "contdep",
            passed,
            identical,
            sweep,
            max_spread: cc.max_spread,
        },
    )?;
    Ok((if passed { EXIT_PASS } else { EXIT_VERIFICATION }, dir.path))
}

fn check_hypotheses(ctx: &Context) -> Result<(i32, PathBuf), Failure> {
    let cfg = ctx.config()?;
    let hyp = match (&cfg.hypotheses, &cfg.model) {
        (Some(h), _) => h.clone(),
        (None, Some(_)) => cfg.model_and_data()?.0.hypotheses,
        (None, None) => return Err(Error::config("missing [hypotheses] or [model] section").into()),
    };
    let report = validate_hypotheses(&hyp);
    let dir = ctx.run_dir("check-hypotheses")?;
    dir.write_json("hypotheses.json", &report)?;
    for c in &report.conditions {
        println!("{} {}", if c.holds { "PASS" } else { "FAIL" }, c.name);
    }
    Ok((if report.accepted { EXIT_PASS } else { EXIT_VERIFICATION }, dir.path))
}

fn load_config(path: &Path) -> Result<(String, RunConfig), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&text)?;
    Ok((text, cfg))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let outcome = (|| {
        let config = cli.config.as_deref().map(load_config).transpose()?;
        let seed = cli
            .seed
            .or_else(|| config.as_ref().and_then(|(_, c)| c.seed))
            .unwrap_or(0);
        let out = cli
            .out
            .clone()
            .or_else(|| config.as_ref().and_then(|(_, c)| c.out.clone()))
            .unwrap_or_else(|| PathBuf::from("runs"));
        let ctx = Context { config, out, seed };
        match &cli.command {
            Command::Simulate => simulate(&ctx),
            Command::Verify { suite } => verify(&ctx, suite),
            Command::Refine => refine(&ctx),
            Command::Contdep => contdep(&ctx),
            Command::CheckHypotheses => check_hypotheses(&ctx),
        }
    })();
    match outcome {
        Ok((code, dir)) => {
            println!("{}", dir.display());
            if code != EXIT_PASS {
                eprintln!("error[verification_failure]: checks failed, see {}", dir.display());
            }
            code
        }
        Err(f) => {
            let (code, tag) = f.code();
            eprintln!("error[{tag}]: {}", f.message());
            code
        }
    }
}
