//! Command-line front end. Every subcommand reads an optional TOML run
//! config, applies command-line overrides on top (flags win over the file,
//! the file wins over built-in defaults) and writes the result to
//! `config.resolved.toml` in its output directory before doing any work.
//!
//! ```toml
//! seed = 7
//! workers = 1
//! out = "runs/matrix"
//!
//! [env]
//! name = "matrix"
//!
//! [roles]
//! name = "svo8"
//!
//! [train]
//! iterations = 400
//!
//! [eval]
//! checkpoint = "runs/matrix/checkpoint_final.json"
//! episodes = 100
//! partners = [{ kind = "scripted", name = "always_share" }]
//!
//! [pretrain]
//! variant = "prosocial"
//!
//! [verify]
//! mdps = 100
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::envs::{AnyEnv, EnvConfig};
use crate::evaluation::{crossplay_all, export_run, spotlight_csv, EpisodeRecord, pretrain_partner_to, role_matrix, EvalError, EvalOptions, Partner, PartnerSpec, ScriptedPartner};
use crate::policy::ActMode;
use crate::predictor::{confusion_csv, confusion_matrix, diagonal_mass};
use crate::roles::RoleSpaceConfig;
use crate::theory::{verify_random, write_reports_csv, TheoryError, VerifyConfig};
use crate::training::{train, RewardVariant, TrainConfig, TrainError, TrainedPolicy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => Self::Usage(m),
            other => runtime(other),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownPartner(_) | EvalError::Mismatch(_) | EvalError::Invalid(_) => Self::Usage(e.to_string()),
            EvalError::Train(t) => t.into(),
            other => runtime(other),
        }
    }
}

impl From<TheoryError> for CliError {
    fn from(e: TheoryError) -> Self {
        match e {
            TheoryError::Usage(m) => Self::Usage(m),
            other => runtime(other),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    Predictor,
    Meta,
}

#[derive(Debug, Parser)]
#[command(name = "roleplay", version, about = "Role-conditioned meta-RL: training, evaluation and theory checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Default, Clone, clap::Args)]
pub struct CommonArgs {
    /// TOML run config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory (the run directory for `export`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluation episodes (per pair for `rolematrix`, per role for `confusion`).
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub mdps: Option<usize>,
    /// Drop a component during training.
    #[arg(long, global = true, value_enum)]
    pub ablate: Vec<Ablation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train a role-conditioned policy.
    Train,
    /// Train a baseline partner under a fixed reward variant.
    Pretrain,
    /// Evaluate a checkpoint's roles against partners.
    Crossplay,
    /// Every role against every role of one checkpoint.
    Rolematrix,
    /// Role predictor confusion matrix on self-play.
    Confusion,
    /// Check the role-perturbation bound on random finite games.
    Verify,
    /// Rebuild CSV/JSON summaries from a run's raw records.
    Export,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Pretrain => "pretrain",
            Self::Crossplay => "crossplay",
            Self::Rolematrix => "rolematrix",
            Self::Confusion => "confusion",
            Self::Verify => "verify",
            Self::Export => "export",
        }
    }
}

/// Evaluation settings shared by crossplay, rolematrix and confusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
    pub episodes: usize,
    /// Episodes per trial; defaults to the checkpoint's trial length.
    pub trial_length: Option<usize>,
    pub mode: ActMode,
    /// Focal role indices; every role when absent.
    pub roles: Option<Vec<usize>>,
    /// Every scripted partner of the environment when empty.
    pub partners: Vec<PartnerSpec>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            episodes: 100,
            trial_length: None,
            mode: ActMode::Sample,
            roles: None,
            partners: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub variant: RewardVariant,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            variant: RewardVariant::Selfish,
        }
    }
}

/// Everything a run needs; serialized back out as the resolved snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand that produced the snapshot; informational on input.
    pub command: Option<String>,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub env: EnvConfig,
    pub roles: RoleSpaceConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub pretrain: PretrainSection,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            workers: 1,
            out: None,
            env: EnvConfig::default(),
            roles: RoleSpaceConfig {
                name: "svo8".into(),
                ..Default::default()
            },
            train: TrainConfig::default(),
            eval: EvalSection::default(),
            pretrain: PretrainSection::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// File (or defaults) plus command-line overrides.
    pub fn resolve(command: Command, args: &CommonArgs) -> Result<Self, CliError> {
        let mut cfg = match &args.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.command = Some(command.name().to_string());
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if let Some(w) = args.workers {
            cfg.workers = w;
        }
        if let Some(o) = &args.out {
            cfg.out = Some(o.clone());
        }
        if let Some(c) = &args.checkpoint {
            cfg.eval.checkpoint = Some(c.clone());
        }
        if let Some(e) = args.episodes {
            cfg.eval.episodes = e;
        }
        if let Some(e) = args.epsilon {
            cfg.verify.epsilon = e;
        }
        if let Some(h) = args.horizon {
            cfg.verify.horizon = h;
        }
        if let Some(m) = args.mdps {
            cfg.verify.mdps = m;
        }
        for a in &args.ablate {
            match a {
                Ablation::Predictor => cfg.train.no_predictor = true,
                Ablation::Meta => cfg.train.no_meta = true,
            }
        }
        if cfg.workers == 0 {
            return Err(CliError::Usage("workers must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            PathBuf::from("runs").join(self.command.as_deref().unwrap_or("run"))
        })
    }

    /// The training config with the top-level fields folded in.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.env = self.env.clone();
        t.roles = self.roles.clone();
        t.seed = self.seed;
        t.workers = self.workers;
        t
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg.out_dir();
    fs::create_dir_all(&out).map_err(|e| runtime(format!("cannot create {}: {e}", out.display())))?;
    write_file(&out.join(RESOLVED_CONFIG), cfg.to_toml().as_bytes())?;
    Ok(out)
}

fn load_policy(cfg: &RunConfig) -> Result<TrainedPolicy, CliError> {
    let path = cfg
        .eval
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Usage("a checkpoint is required (--checkpoint or [eval] checkpoint)".into()))?;
    if !path.exists() {
        return Err(CliError::Usage(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(TrainedPolicy::load(path)?)
}

fn eval_options(cfg: &RunConfig, policy: &TrainedPolicy) -> EvalOptions {
    EvalOptions {
        episodes: cfg.eval.episodes,
        trial_length: cfg.eval.trial_length.unwrap_or(policy.trial_length).max(1),
        seed: cfg.seed,
        mode: cfg.eval.mode,
        workers: cfg.workers,
    }
}

fn default_partners(env: &AnyEnv) -> Vec<PartnerSpec> {
    ScriptedPartner::ALL
        .into_iter()
        .filter(|p| ScriptedPartner::for_env(p.name(), env).is_ok())
        .map(|p| PartnerSpec::Scripted { name: p.name().into() })
        .collect()
}

fn write_records(out: &Path, records: &[EpisodeRecord]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(runtime)?;
        buf.push(b'\n');
    }
    write_file(&out.join("records.jsonl"), &buf)
}

fn run_train(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let tc = cfg.train_config();
    let outcome = train(&tc, Some(out))?;
    let last = outcome.metrics.last();
    Ok(format!(
        "trained {} iterations; final mean raw reward {:.4}; wrote {}",
        outcome.metrics.len(),
        last.map_or(f64::NAN, |m| m.mean_raw_reward),
        out.join("checkpoint_final.json").display()
    ))
}

fn run_pretrain(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let tc = cfg.train_config();
    let outcome = pretrain_partner_to(&cfg.env, cfg.pretrain.variant, &tc, Some(out))?;
    Ok(format!(
        "pretrained {:?} partner for {} iterations; wrote {}",
        cfg.pretrain.variant,
        outcome.metrics.len(),
        out.join("checkpoint_final.json").display()
    ))
}

fn run_crossplay(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let policy = load_policy(cfg)?;
    let env = policy.env.build().map_err(TrainError::from)?;
    let specs = if cfg.eval.partners.is_empty() {
        default_partners(&env)
    } else {
        cfg.eval.partners.clone()
    };
    let partners = specs.iter().map(|s| Partner::load(s, &env)).collect::<Result<Vec<_>, _>>()?;
    let roles: Vec<usize> = cfg.eval.roles.clone().unwrap_or_else(|| (0..policy.space.len()).collect());
    if let Some(bad) = roles.iter().find(|&&r| r >= policy.space.len()) {
        return Err(CliError::Usage(format!("role {bad} outside the checkpoint's {} roles", policy.space.len())));
    }
    let results = crossplay_all(&policy, &roles, &partners, &env, &eval_options(cfg, &policy))?;
    let records: Vec<EpisodeRecord> = results.iter().flat_map(|r| r.records("crossplay")).collect();
    write_records(out, &records)?;
    export_run(out)?;
    Ok(format!("{} role/partner pairs; wrote {}", results.len(), out.join("results.csv").display()))
}

fn run_rolematrix(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let policy = load_policy(cfg)?;
    let env = policy.env.build().map_err(TrainError::from)?;
    let opts = eval_options(cfg, &policy);
    let matrix = role_matrix(&policy, &env, cfg.eval.episodes, &opts)?;
    let records: Vec<EpisodeRecord> = matrix.pairs.iter().flatten().flat_map(|r| r.records("rolematrix")).collect();
    write_records(out, &records)?;
    export_run(out)?;
    write_file(&out.join("spotlight.csv"), spotlight_csv(&matrix).as_bytes())?;
    Ok(format!("{0}x{0} role matrix; wrote {1}", matrix.labels.len(), out.join("role_matrix.csv").display()))
}

fn run_confusion(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let policy = load_policy(cfg)?;
    let env = policy.env.build().map_err(TrainError::from)?;
    let opts = eval_options(cfg, &policy);
    let m = confusion_matrix(&policy, &env, cfg.eval.episodes.max(1), &opts)?;
    write_file(&out.join("confusion.csv"), confusion_csv(policy.space.labels(), &m).as_bytes())?;
    let diag = diagonal_mass(&m);
    let summary = serde_json::json!({
        "diagonal_mass": diag,
        "chance": 1.0 / m.len().max(1) as f64,
        "roles": policy.space.labels(),
    });
    write_file(&out.join("confusion_summary.json"), (serde_json::to_string_pretty(&summary).map_err(runtime)? + "\n").as_bytes())?;
    Ok(format!("diagonal mass {diag:.4}; wrote {}", out.join("confusion.csv").display()))
}

fn run_verify(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    use rand::SeedableRng;
    let v = &cfg.verify;
    if !(v.epsilon > 0.0 && v.epsilon < 1.0) {
        return Err(CliError::Usage(format!("epsilon must lie in (0, 1), got {}", v.epsilon)));
    }
    if v.horizon == 0 || v.mdps == 0 {
        return Err(CliError::Usage("horizon and mdps must be positive".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let reports = verify_random(v, &mut rng)?;
    let mut buf = Vec::new();
    write_reports_csv(&reports, &mut buf)?;
    write_file(&out.join("epsilon_reports.csv"), &buf)?;
    let passed = reports.iter().filter(|r| r.passed()).count();
    let worst = reports.iter().map(|r| r.ratio_deviation).fold(0.0, f64::max);
    let summary = serde_json::json!({
        "mdps": reports.len(),
        "passed": passed,
        "epsilon": v.epsilon,
        "horizon": v.horizon,
        "max_ratio_deviation": worst,
    });
    write_file(&out.join("verify_summary.json"), (serde_json::to_string_pretty(&summary).map_err(runtime)? + "\n").as_bytes())?;
    if passed != reports.len() {
        return Err(runtime(format!("{} of {} games violate the bound", reports.len() - passed, reports.len())));
    }
    Ok(format!("{passed}/{} games within the bound; max |J ratio - 1| = {worst:.3e}", reports.len()))
}

fn run_export(cfg: &RunConfig) -> Result<String, CliError> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("export needs the run directory via --out".into()))?;
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("run directory {} does not exist", dir.display())));
    }
    // the run's own snapshot is what export hashes, so leave it alone when present
    if !dir.join(RESOLVED_CONFIG).exists() {
        write_file(&dir.join(RESOLVED_CONFIG), cfg.to_toml().as_bytes())?;
    }
    let files = export_run(&dir)?;
    Ok(format!("exported {} files into {}", files.len(), dir.display()))
}

/// Runs one parsed command; returns the one-line summary printed on success.
pub fn run(command: Command, args: &CommonArgs) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(command, args)?;
    if command == Command::Export {
        return run_export(&cfg);
    }
    cfg.train_config().validate()?;
    let out = prepare_out(&cfg)?;
    match command {
        Command::Train => run_train(&cfg, &out),
        Command::Pretrain => run_pretrain(&cfg, &out),
        Command::Crossplay => run_crossplay(&cfg, &out),
        Command::Rolematrix => run_rolematrix(&cfg, &out),
        Command::Confusion => run_confusion(&cfg, &out),
        Command::Verify => run_verify(&cfg, &out),
        Command::Export => unreachable!("handled above"),
    }
}

/// Parses `argv` (program name first), runs, and returns the exit code.
pub fn parse_and_dispatch<I, T, O, E>(argv: I, stdout: &mut O, stderr: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
    O: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    match run(cli.command, &cli.common) {
        Ok(msg) => {
            let _ = writeln!(stdout, "{msg}");
            EXIT_OK
        }
        Err(e) => {
            let kind = if e.exit_code() == EXIT_USAGE { "usage error" } else { "error" };
            let _ = writeln!(stderr, "{kind}: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dispatch(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = parse_and_dispatch(std::iter::once("roleplay").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_subcommand_is_usage() {
        let (code, _, err) = dispatch(&["frobnicate"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(!err.is_empty());
    }

    #[test]
    fn unknown_flag_is_usage() {
        assert_eq!(dispatch(&["verify", "--bogus"]).0, EXIT_USAGE);
    }

    #[test]
    fn missing_config_names_the_path() {
        let (code, _, err) = dispatch(&["train", "--config", "/nonexistent/run.toml"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("/nonexistent/run.toml"));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "seed = 3\n[verify]\nmdps = 5\nhorizon = 2\n").unwrap();
        let args = CommonArgs {
            config: Some(p),
            seed: Some(9),
            mdps: Some(7),
            ablate: vec![Ablation::Meta],
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Command::Verify, &args).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.verify.mdps, 7);
        assert_eq!(cfg.verify.horizon, 2);
        assert!(cfg.train.no_meta);
    }

    #[test]
    fn resolved_snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.eval.partners = vec![PartnerSpec::Scripted { name: "always_share".into() }];
        cfg.train.iterations = 3;
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_config_key_is_usage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "sede = 3\n").unwrap();
        let (code, _, _) = dispatch(&["verify", "--config", p.to_str().unwrap()]);
        assert_eq!(code, EXIT_USAGE);
    }
}
