//! The end-to-end learning pipeline: sample, pool, encode, solve, extract,
//! plan and validate, with every intermediate artifact written to disk.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::abstraction::{self, Condition, Literal, QnpModel, VerifyReport};
use crate::encoder::{self, GoalScope, TheoryVars, Variant, WeightedCnf};
use crate::executor::{self, Verdict};
use crate::features::{self, Feature, PoolConfig, Value};
use crate::fond::{self, Policy};
use crate::maxsat::{self, MaxSatOutcome, SolveOptions, SolverMode};
use crate::sampler::{self, SampleSet};
use crate::strips::{self, DomainModel, GroundInstance, ProblemDescription};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Sample,
    Pool,
    Encode,
    Solve,
    Extract,
    Plan,
    Validate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        f.write_str(&name)
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {message}{}", artifact_list(.artifacts))]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
    pub artifacts: Vec<PathBuf>,
}

fn artifact_list(paths: &[PathBuf]) -> String {
    if paths.is_empty() {
        String::new()
    } else {
        let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
        format!(" (see {})", names.join(", "))
    }
}

fn fail(stage: Stage, message: impl fmt::Display) -> PipelineError {
    PipelineError {
        stage,
        message: message.to_string(),
        artifacts: Vec::new(),
    }
}

impl PipelineError {
    fn with(mut self, paths: &[&Path]) -> Self {
        self.artifacts.extend(paths.iter().map(|p| p.to_path_buf()));
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Builtin,
    External,
}

fn default_budget() -> usize {
    500
}
fn default_k() -> u32 {
    8
}
fn default_variant() -> Variant {
    Variant::Marked
}
fn default_scope() -> GoalScope {
    GoalScope::Anchored
}
fn default_policy_cap() -> usize {
    10_000
}
fn default_validation_limit() -> usize {
    2_000_000
}
fn default_max_steps() -> usize {
    100_000
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Declarative pipeline settings, read from TOML. Relative paths are
/// resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    pub domain: PathBuf,
    pub training: Vec<PathBuf>,
    /// Problem files or directories of `.pddl` files.
    #[serde(default)]
    pub validation: Vec<PathBuf>,
    /// Target number of sampled transitions.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_k")]
    pub max_complexity: u32,
    #[serde(default)]
    pub distance: bool,
    /// Adds static `p_G` copies of goal predicates to the grammar.
    #[serde(default)]
    pub goal_predicates: bool,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_scope")]
    pub goal_scope: GoalScope,
    #[serde(default)]
    pub solver: SolverKind,
    /// External solver command line; falls back to the environment variable.
    #[serde(default)]
    pub solver_command: Option<String>,
    #[serde(default)]
    pub solver_timeout_secs: Option<u64>,
    /// Literals of the abstract initial condition; inferred from the
    /// training instances when absent.
    #[serde(default)]
    pub initial: Option<Vec<String>>,
    /// Literals of the abstract goal; learned from goal states when absent.
    #[serde(default)]
    pub goal: Option<Vec<String>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_policy_cap")]
    pub policy_cap: usize,
    /// State limit of exhaustive validation per instance.
    #[serde(default = "default_validation_limit")]
    pub validation_limit: usize,
    /// Step limit of the sampled run used when exhaustive validation
    /// exceeds its limit.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

impl PipelineConfig {
    pub fn new(name: &str, domain: impl Into<PathBuf>, training: Vec<PathBuf>) -> Self {
        PipelineConfig {
            name: name.to_string(),
            domain: domain.into(),
            training,
            validation: Vec::new(),
            budget: default_budget(),
            max_complexity: default_k(),
            distance: false,
            goal_predicates: false,
            variant: default_variant(),
            goal_scope: default_scope(),
            solver: SolverKind::Builtin,
            solver_command: None,
            solver_timeout_secs: None,
            initial: None,
            goal: None,
            seed: 0,
            out_dir: default_out(),
            policy_cap: default_policy_cap(),
            validation_limit: default_validation_limit(),
            max_steps: default_max_steps(),
        }
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| fail(Stage::Config, e))?;
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| fail(Stage::Config, format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| e.with(&[path]))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.domain);
        self.training.iter_mut().for_each(fix);
        self.validation.iter_mut().for_each(fix);
        fix(&mut self.out_dir);
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.training.is_empty() {
            return Err(fail(
                Stage::Config,
                "at least one training instance is required",
            ));
        }
        if self.max_complexity < 1 {
            return Err(fail(Stage::Config, "max_complexity must be at least 1"));
        }
        if self.budget < 1 {
            return Err(fail(Stage::Config, "budget must be at least 1"));
        }
        Ok(())
    }

    fn solve_options(&self) -> Result<SolveOptions, PipelineError> {
        let mode = match self.solver {
            SolverKind::Builtin => SolverMode::Builtin,
            SolverKind::External => match &self.solver_command {
                Some(cmd) => {
                    let mut parts = cmd.split_whitespace().map(str::to_string);
                    let path = parts
                        .next()
                        .ok_or_else(|| fail(Stage::Config, "empty solver_command"))?;
                    SolverMode::External {
                        path: path.into(),
                        args: parts.collect(),
                    }
                }
                None => maxsat::solver_from_env().ok_or_else(|| {
                    fail(
                        Stage::Config,
                        format!(
                            "external solver requested but neither solver_command nor {} is set",
                            maxsat::SOLVER_ENV
                        ),
                    )
                })?,
            },
        };
        Ok(SolveOptions {
            mode,
            timeout: self.solver_timeout_secs.map(Duration::from_secs),
        })
    }
}

/// Paths of every artifact below the output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
    pub fn sample(&self) -> PathBuf {
        self.path("sample.json")
    }
    pub fn features(&self) -> PathBuf {
        self.path("features.json")
    }
    pub fn theory(&self) -> PathBuf {
        self.path("theory.wcnf")
    }
    pub fn vars(&self) -> PathBuf {
        self.path("vars.json")
    }
    pub fn solution(&self) -> PathBuf {
        self.path("solution.json")
    }
    pub fn qnp(&self) -> PathBuf {
        self.path("qnp.json")
    }
    pub fn verify(&self) -> PathBuf {
        self.path("verify.json")
    }
    pub fn policy(&self) -> PathBuf {
        self.path("policy.json")
    }
    pub fn validation(&self) -> PathBuf {
        self.path("validation.json")
    }
    pub fn report(&self) -> PathBuf {
        self.path("report.json")
    }
    fn cache(&self) -> PathBuf {
        self.path("cache.json")
    }
}

fn write_json(path: &Path, stage: Stage, value: &serde_json::Value) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| fail(stage, e))?;
    text.push('\n');
    write_text(path, stage, &text)
}

fn write_text(path: &Path, stage: Stage, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text)
        .map_err(|e| fail(stage, format!("cannot write {}: {e}", path.display())))
}

fn read_json(path: &Path, stage: Stage) -> Result<serde_json::Value, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(stage, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(stage, format!("{}: {e}", path.display())))
}

fn read_file(path: &Path, stage: Stage) -> Result<String, PipelineError> {
    std::fs::read_to_string(path)
        .map_err(|e| fail(stage, format!("cannot read {}: {e}", path.display())))
}

/// Content hashes of completed stages, keyed by stage name.
#[derive(Debug, Default, Serialize, Deserialize)]
struct CacheManifest {
    stages: BTreeMap<String, String>,
}

impl CacheManifest {
    fn load(path: &Path) -> Self {
        std::fs::read_to_string(path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }

    fn hit(&self, stage: Stage, key: &str, files: &[PathBuf]) -> bool {
        self.stages
            .get(&stage.to_string())
            .is_some_and(|k| k == key)
            && files.iter().all(|f| f.exists())
    }

    fn record(&mut self, stage: Stage, key: &str, path: &Path) -> Result<(), PipelineError> {
        self.stages.insert(stage.to_string(), key.to_string());
        let value = serde_json::to_value(&*self).map_err(|e| fail(stage, e))?;
        write_json(path, stage, &value)
    }
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Expands directories into their `.pddl` files, sorted by name.
pub fn expand_problem_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p)
                .map_err(|e| fail(Stage::Config, format!("{}: {e}", p.display())))?;
            let mut files: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "pddl"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Parsed domain (augmented when goal predicates are on) and the grounded
/// training instances.
pub struct Training {
    pub domain: DomainModel,
    pub problems: Vec<ProblemDescription>,
    pub instances: Vec<Arc<GroundInstance>>,
    /// Hash of the domain and problem texts plus the grounding flags.
    pub key: String,
}

pub fn load_training(cfg: &PipelineConfig) -> Result<Training, PipelineError> {
    let domain_text = read_file(&cfg.domain, Stage::Sample)?;
    let base = strips::parse_domain(&domain_text)
        .map_err(|e| fail(Stage::Sample, format!("{}: {e}", cfg.domain.display())))?;
    let mut texts: Vec<String> = Vec::new();
    let mut problems = Vec::new();
    for p in &cfg.training {
        let text = read_file(p, Stage::Sample)?;
        problems.push(
            strips::parse_problem(&text, &base)
                .map_err(|e| fail(Stage::Sample, format!("{}: {e}", p.display())))?,
        );
        texts.push(text);
    }
    let domain = if cfg.goal_predicates {
        features::add_goal_predicates(&base, &problems)
    } else {
        base
    };
    let mut instances = Vec::new();
    for (p, path) in problems.iter().zip(&cfg.training) {
        let gi = strips::ground(&domain, p)
            .map_err(|e| fail(Stage::Sample, format!("{}: {e}", path.display())))?;
        instances.push(Arc::new(gi));
    }
    let mut parts: Vec<&[u8]> = vec![
        domain_text.as_bytes(),
        if cfg.goal_predicates { b"gp" } else { b"" },
    ];
    parts.extend(texts.iter().map(|t| t.as_bytes()));
    Ok(Training {
        key: digest(&parts),
        domain,
        problems,
        instances,
    })
}

/// Grounds a further problem of the training domain.
pub fn load_instance(training: &Training, path: &Path) -> Result<GroundInstance, PipelineError> {
    let text = read_file(path, Stage::Validate)?;
    let p = strips::parse_problem(&text, &training.domain)
        .map_err(|e| fail(Stage::Validate, format!("{}: {e}", path.display())))?;
    strips::ground(&training.domain, &p)
        .map_err(|e| fail(Stage::Validate, format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub sample: f64,
    pub pool: f64,
    pub encode: f64,
    pub sat: f64,
    pub fond: f64,
    pub validate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationVerdict {
    Solves,
    Fails,
    LimitExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub instance: String,
    pub file: String,
    pub verdict: ValidationVerdict,
    /// Explored states (exhaustive) or trace length (failures).
    pub states: usize,
    pub outcome: Option<String>,
    /// False when the instance violates the abstract initial condition,
    /// which voids the guarantee.
    pub initial_condition_holds: bool,
    /// Outcome of one sampled run, recorded when the exhaustive run hit its limit.
    pub sampled_outcome: Option<String>,
}

/// One row of the experiment table plus validation verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub prefix_length: usize,
    pub transitions: usize,
    pub states: usize,
    pub expanded: usize,
    pub marked: usize,
    pub pool_size: usize,
    pub variant: String,
    pub num_vars: u64,
    pub num_clauses: u64,
    pub bound_vars: f64,
    pub bound_clauses: f64,
    pub cost: u64,
    pub features: Vec<String>,
    pub num_actions: usize,
    pub sound: bool,
    pub complete: bool,
    pub policy_size: usize,
    pub policies_enumerated: usize,
    pub timings: Timings,
    pub validation: Vec<ValidationResult>,
}

impl RunReport {
    pub fn within_bound(&self) -> bool {
        self.num_vars as f64 <= self.bound_vars && self.num_clauses as f64 <= self.bound_clauses
    }

    pub fn solved(&self) -> usize {
        self.validation
            .iter()
            .filter(|v| v.verdict == ValidationVerdict::Solves)
            .count()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// Everything a run produced so far, in memory. Later parts are `None`
/// when the run stopped at an earlier stage.
pub struct Progress {
    pub training: Training,
    pub sample: SampleSet,
    pub prefix_length: usize,
    pub pool: Option<features::Pool>,
    /// Variable and clause counts of the theory.
    pub theory_size: Option<(u64, u64)>,
    pub solution: Option<Solution>,
    pub qnp: Option<QnpModel>,
    pub verify: Option<VerifyReport>,
    pub policy: Option<fond::QnpSolution>,
    pub report: Option<RunReport>,
    pub timings: Timings,
}

/// Outcome of the solve stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub cost: u64,
    /// Pool indices of the selected features.
    pub selected: Vec<usize>,
    pub num_vars: u64,
    pub num_clauses: u64,
}

/// Everything produced by a complete run.
pub struct PipelineRun {
    pub training: Training,
    pub sample: SampleSet,
    pub pool: features::Pool,
    pub selected: Vec<usize>,
    pub qnp: QnpModel,
    pub verify: VerifyReport,
    pub policy: Policy,
    pub report: RunReport,
}

/// Runs every stage, reusing cached stages whose inputs are unchanged.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    let p = run_until(cfg, Stage::Validate)?;
    let solution = p.solution.expect("solve stage ran");
    Ok(PipelineRun {
        training: p.training,
        sample: p.sample,
        pool: p.pool.expect("pool stage ran"),
        selected: solution.selected,
        qnp: p.qnp.expect("extract stage ran"),
        verify: p.verify.expect("extract stage ran"),
        policy: p.policy.expect("plan stage ran").policy,
        report: p.report.expect("validate stage ran"),
    })
}

/// Runs the stages up to and including `last`.
pub fn run_until(cfg: &PipelineConfig, last: Stage) -> Result<Progress, PipelineError> {
    cfg.validate()?;
    let art = Artifacts {
        dir: cfg.out_dir.clone(),
    };
    std::fs::create_dir_all(&art.dir).map_err(|e| {
        fail(
            Stage::Config,
            format!("cannot create {}: {e}", art.dir.display()),
        )
    })?;
    let mut cache = CacheManifest::load(&art.cache());
    let mut times = Timings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let clock = Instant::now();
    let training = load_training(cfg)?;
    let sample_key = digest(&[training.key.as_bytes(), &cfg.budget.to_le_bytes()]);
    let (sample, m) = if cache.hit(Stage::Sample, &sample_key, &[art.sample()]) {
        let v = read_json(&art.sample(), Stage::Sample)?;
        let m = v.get("prefix_length").and_then(|m| m.as_u64()).unwrap_or(0) as usize;
        let s = SampleSet::from_json(&v, training.instances.clone())
            .map_err(|e| fail(Stage::Sample, e).with(&[&art.sample()]))?;
        (s, m)
    } else {
        let m = sampler::prefix_for_budget(&training.instances, cfg.budget)
            .map_err(|e| fail(Stage::Sample, e))?;
        let s = sampler::build_sample_set(&training.instances, m)
            .map_err(|e| fail(Stage::Sample, e))?;
        let mut v = s.to_json();
        v["prefix_length"] = serde_json::json!(m);
        write_json(&art.sample(), Stage::Sample, &v)?;
        cache.record(Stage::Sample, &sample_key, &art.cache())?;
        (s, m)
    };
    times.sample = clock.elapsed().as_secs_f64();
    let mut progress = Progress {
        training,
        sample,
        prefix_length: m,
        pool: None,
        theory_size: None,
        solution: None,
        qnp: None,
        verify: None,
        policy: None,
        report: None,
        timings: times.clone(),
    };
    if last <= Stage::Sample {
        return Ok(progress);
    }
    let training = &progress.training;
    let sample = &progress.sample;

    // Values are recomputed from the stored expressions on a cache hit.
    let clock = Instant::now();
    let pool_key = digest(&[
        sample_key.as_bytes(),
        &cfg.max_complexity.to_le_bytes(),
        &[cfg.distance as u8],
    ]);
    let pool = if cache.hit(Stage::Pool, &pool_key, &[art.features()]) {
        let v = read_json(&art.features(), Stage::Pool)?;
        let fs = features::features_from_json(&v)
            .map_err(|e| fail(Stage::Pool, e).with(&[&art.features()]))?;
        let values = features::feature_matrix(&fs, sample);
        features::Pool {
            features: fs,
            values,
            stats: Default::default(),
        }
    } else {
        let pool = features::generate_pool(
            &training.domain,
            sample,
            &PoolConfig {
                max_complexity: cfg.max_complexity,
                distance: cfg.distance,
            },
        );
        write_json(
            &art.features(),
            Stage::Pool,
            &features::features_to_json(&pool.features),
        )?;
        cache.record(Stage::Pool, &pool_key, &art.cache())?;
        pool
    };
    times.pool = clock.elapsed().as_secs_f64();
    if pool.features.is_empty() {
        return Err(fail(Stage::Pool, "the feature pool is empty").with(&[&art.features()]));
    }
    if last <= Stage::Pool {
        progress.pool = Some(pool);
        progress.timings = times;
        return Ok(progress);
    }

    let theory_key = digest(&[
        pool_key.as_bytes(),
        cfg.variant.to_string().as_bytes(),
        format!("{:?}", cfg.goal_scope).as_bytes(),
    ]);
    let options = cfg.solve_options()?;
    let solve_key = digest(&[
        theory_key.as_bytes(),
        format!("{:?}", options.mode).as_bytes(),
    ]);
    let cached = last >= Stage::Solve
        && cache.hit(Stage::Encode, &theory_key, &[art.theory()])
        && cache.hit(Stage::Solve, &solve_key, &[art.solution()]);
    let solved = if cached {
        let s = load_solution(&art)?;
        progress.theory_size = Some((s.num_vars, s.num_clauses));
        s
    } else {
        let clock = Instant::now();
        let (cnf, vars) = encoder::build_theory(
            sample,
            &pool.features,
            &pool.values,
            cfg.variant,
            cfg.goal_scope,
        );
        write_wcnf(&art.theory(), &cnf)?;
        write_json(
            &art.vars(),
            Stage::Encode,
            &vars.names_json(&pool.features, sample),
        )?;
        cache.record(Stage::Encode, &theory_key, &art.cache())?;
        times.encode = clock.elapsed().as_secs_f64();
        progress.theory_size = Some((cnf.num_vars as u64, cnf.num_clauses() as u64));
        if last <= Stage::Encode {
            progress.pool = Some(pool);
            progress.timings = times;
            return Ok(progress);
        }
        let clock = Instant::now();
        let result = solve_theory(&cnf, &vars, &options, &art)?;
        times.sat = clock.elapsed().as_secs_f64();
        write_json(
            &art.solution(),
            Stage::Solve,
            &solution_json(&result, &pool.features),
        )?;
        cache.record(Stage::Solve, &solve_key, &art.cache())?;
        result
    };
    if last <= Stage::Solve {
        progress.pool = Some(pool);
        progress.solution = Some(solved);
        progress.timings = times;
        return Ok(progress);
    }

    let fs: Vec<Feature> = solved
        .selected
        .iter()
        .map(|&f| pool.features[f].clone())
        .collect();
    let vs: Vec<Vec<Value>> = solved
        .selected
        .iter()
        .map(|&f| pool.values[f].clone())
        .collect();
    let marked_only = cfg.variant == Variant::Marked;
    let actions = abstraction::extract_actions(&fs, &vs, sample, marked_only);
    let verify = abstraction::verify_sound_complete(&actions, &fs, &vs, sample, marked_only);
    write_json(&art.verify(), Stage::Extract, &verify_json(&verify))?;
    let qnp = assemble(cfg, training, &fs, &vs, sample, actions)
        .map_err(|e| e.with(&[&art.solution()]))?;
    write_json(&art.qnp(), Stage::Extract, &qnp.to_json())?;
    write_text(&art.path("qnp.txt"), Stage::Extract, &qnp.to_string())?;
    if !verify.sound || !verify.complete {
        return Err(fail(
            Stage::Extract,
            "the extracted abstraction is not sound and complete over the sample",
        )
        .with(&[&art.verify(), &art.qnp()]));
    }
    if last <= Stage::Extract {
        progress.pool = Some(pool);
        progress.solution = Some(solved);
        progress.qnp = Some(qnp);
        progress.verify = Some(verify);
        progress.timings = times;
        return Ok(progress);
    }

    let clock = Instant::now();
    let solution = fond::solve_qnp(&qnp, cfg.policy_cap)
        .map_err(|e| fail(Stage::Plan, e).with(&[&art.qnp()]))?;
    times.fond = clock.elapsed().as_secs_f64();
    write_json(
        &art.policy(),
        Stage::Plan,
        &fond::policy_to_json(&solution.policy, &qnp),
    )?;
    write_text(
        &art.path("policy.txt"),
        Stage::Plan,
        &fond::policy_table(&solution.policy, &qnp),
    )?;
    if last <= Stage::Plan {
        progress.pool = Some(pool);
        progress.solution = Some(solved);
        progress.qnp = Some(qnp);
        progress.verify = Some(verify);
        progress.policy = Some(solution);
        progress.timings = times;
        return Ok(progress);
    }

    let clock = Instant::now();
    let files = expand_problem_paths(&cfg.validation)?;
    let seeds: Vec<u64> = files.iter().map(|_| rng.next_u64()).collect();
    let validation = validate_all(cfg, training, &files, &seeds, &solution.policy, &qnp, &art)?;
    times.validate = clock.elapsed().as_secs_f64();
    write_json(
        &art.validation(),
        Stage::Validate,
        &serde_json::to_value(&validation).map_err(|e| fail(Stage::Validate, e))?,
    )?;

    let (bound_vars, bound_clauses) = encoder::size_bound(sample, pool.features.len());
    let report = RunReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        prefix_length: m,
        transitions: sample.transitions.len(),
        states: sample.states.len(),
        expanded: sample.num_expanded(),
        marked: sample.marked().count(),
        pool_size: pool.features.len(),
        variant: cfg.variant.to_string(),
        num_vars: solved.num_vars,
        num_clauses: solved.num_clauses,
        bound_vars,
        bound_clauses,
        cost: solved.cost,
        features: fs.iter().map(|f| f.to_string()).collect(),
        num_actions: qnp.actions.len(),
        sound: verify.sound,
        complete: verify.complete,
        policy_size: solution.policy.len(),
        policies_enumerated: solution.enumerated,
        timings: times.clone(),
        validation,
    };
    write_json(&art.report(), Stage::Validate, &report.to_json())?;
    write_text(
        &art.path("report.txt"),
        Stage::Validate,
        &report_table(std::slice::from_ref(&report)),
    )?;
    progress.pool = Some(pool);
    progress.solution = Some(solved);
    progress.qnp = Some(qnp);
    progress.verify = Some(verify);
    progress.policy = Some(solution);
    progress.report = Some(report);
    progress.timings = times;
    Ok(progress)
}

fn write_wcnf(path: &Path, cnf: &WeightedCnf) -> Result<(), PipelineError> {
    let file = std::fs::File::create(path).map_err(|e| {
        fail(
            Stage::Encode,
            format!("cannot write {}: {e}", path.display()),
        )
    })?;
    cnf.write_wcnf(std::io::BufWriter::new(file))
        .map_err(|e| fail(Stage::Encode, e))
}

fn solve_theory(
    cnf: &WeightedCnf,
    vars: &TheoryVars,
    options: &SolveOptions,
    art: &Artifacts,
) -> Result<Solution, PipelineError> {
    let outcome = maxsat::solve_max_sat(cnf, options)
        .map_err(|e| fail(Stage::Solve, e).with(&[&art.theory()]))?;
    match outcome {
        MaxSatOutcome::Unsatisfiable => Err(fail(
            Stage::Solve,
            "the theory is unsatisfiable: no feature set in the pool separates the sample",
        )
        .with(&[&art.theory(), &art.vars()])),
        MaxSatOutcome::Optimal(a) => Ok(Solution {
            cost: a.cost,
            selected: vars.selected_features(&a.values),
            num_vars: cnf.num_vars as u64,
            num_clauses: cnf.num_clauses() as u64,
        }),
    }
}

fn solution_json(r: &Solution, pool: &[Feature]) -> serde_json::Value {
    serde_json::json!({
        "cost": r.cost,
        "selected": r.selected,
        "features": r.selected.iter().map(|&f| pool[f].to_string()).collect::<Vec<_>>(),
        "num_vars": r.num_vars,
        "num_clauses": r.num_clauses,
    })
}

fn load_solution(art: &Artifacts) -> Result<Solution, PipelineError> {
    let v = read_json(&art.solution(), Stage::Solve)?;
    let bad = || fail(Stage::Solve, "malformed solution artifact").with(&[&art.solution()]);
    let num = |k: &str| v.get(k).and_then(|x| x.as_u64()).ok_or_else(bad);
    let selected = v
        .get("selected")
        .and_then(|s| s.as_array())
        .ok_or_else(bad)?
        .iter()
        .map(|x| x.as_u64().map(|x| x as usize).ok_or_else(bad))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Solution {
        cost: num("cost")?,
        selected,
        num_vars: num("num_vars")?,
        num_clauses: num("num_clauses")?,
    })
}

fn verify_json(r: &VerifyReport) -> serde_json::Value {
    serde_json::json!({
        "sound": r.sound,
        "complete": r.complete,
        "unsound": r.unsound.iter().map(|&(a, s)| serde_json::json!({"action": a, "state": s})).collect::<Vec<_>>(),
        "uncaptured": r.uncaptured,
    })
}

/// Builds the QNP from configured or inferred initial and goal conditions.
fn assemble(
    cfg: &PipelineConfig,
    training: &Training,
    fs: &[Feature],
    vs: &[Vec<Value>],
    sample: &SampleSet,
    actions: Vec<abstraction::AbstractAction>,
) -> Result<QnpModel, PipelineError> {
    let mut q = abstraction::assemble_qnp(
        fs.to_vec(),
        actions,
        cfg.initial.as_deref().unwrap_or(&[]),
        cfg.goal.as_deref().unwrap_or(&[]),
    )
    .map_err(|e| fail(Stage::Extract, e))?;
    if cfg.initial.is_none() {
        q.initial = common_initial_literals(fs, &training.instances);
    }
    if cfg.goal.is_none() {
        q.goal = Condition::Dnf(
            abstraction::learn_goal_dnf(fs, vs, sample).map_err(|e| fail(Stage::Extract, e))?,
        );
    }
    Ok(q)
}

/// Literals on which every training instance's initial state agrees.
pub fn common_initial_literals(fs: &[Feature], instances: &[Arc<GroundInstance>]) -> Vec<Literal> {
    let inits: Vec<Vec<bool>> = instances
        .iter()
        .map(|i| executor::abstract_state(fs, i, &i.init))
        .collect();
    let Some(first) = inits.first() else {
        return Vec::new();
    };
    (0..fs.len())
        .filter(|&f| inits.iter().all(|v| v[f] == first[f]))
        .map(|f| Literal {
            feature: f,
            value: first[f],
        })
        .collect()
}

/// Validates one instance: exhaustive first, one seeded run if that hits
/// the state limit.
pub fn validate_instance(
    instance: &GroundInstance,
    policy: &Policy,
    q: &QnpModel,
    limit: usize,
    seed: u64,
    max_steps: usize,
) -> (ValidationResult, Option<executor::ExecutionTrace>) {
    let init_ok = executor::initial_condition_holds(q, instance);
    let mut result = ValidationResult {
        instance: instance.name.clone(),
        file: String::new(),
        verdict: ValidationVerdict::Solves,
        states: 0,
        outcome: None,
        initial_condition_holds: init_ok,
        sampled_outcome: None,
    };
    match executor::run_exhaustive(instance, policy, q, limit) {
        Verdict::Solves { states } => {
            result.states = states;
            (result, None)
        }
        Verdict::Fails(trace) => {
            result.verdict = ValidationVerdict::Fails;
            result.states = trace.steps.len();
            result.outcome = Some(format!("{:?}", trace.outcome));
            (result, Some(trace))
        }
        Verdict::LimitExceeded { limit } => {
            let trace = executor::run_one(instance, policy, q, seed, max_steps);
            result.verdict = ValidationVerdict::LimitExceeded;
            result.states = limit;
            result.sampled_outcome = Some(format!("{:?}", trace.outcome));
            (result, None)
        }
    }
}

fn validate_all(
    cfg: &PipelineConfig,
    training: &Training,
    files: &[PathBuf],
    seeds: &[u64],
    policy: &Policy,
    q: &QnpModel,
    art: &Artifacts,
) -> Result<Vec<ValidationResult>, PipelineError> {
    let instances = files
        .iter()
        .map(|f| load_instance(training, f))
        .collect::<Result<Vec<_>, _>>()?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(instances.len().max(1));
    let mut slots: Vec<Option<(ValidationResult, Option<executor::ExecutionTrace>)>> =
        vec![None; instances.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= instances.len() {
                            break done;
                        }
                        done.push((
                            i,
                            validate_instance(
                                &instances[i],
                                policy,
                                q,
                                cfg.validation_limit,
                                seeds[i],
                                cfg.max_steps,
                            ),
                        ));
                    }
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("validation worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    let dir = art.path("traces");
    let mut out = Vec::new();
    for ((slot, file), inst) in slots.into_iter().zip(files).zip(&instances) {
        let (mut result, trace) = slot.expect("every instance validated");
        result.file = file.display().to_string();
        if let Some(trace) = trace {
            std::fs::create_dir_all(&dir).map_err(|e| fail(Stage::Validate, e))?;
            write_json(
                &dir.join(format!("{}.json", inst.name)),
                Stage::Validate,
                &trace.to_json(q, inst),
            )?;
            write_text(
                &dir.join(format!("{}.log", inst.name)),
                Stage::Validate,
                &trace.log(q, inst),
            )?;
        }
        out.push(result);
    }
    Ok(out)
}

/// Row order of the experiment table for the known domains.
const DOMAIN_ORDER: [&str; 4] = ["clear", "on", "gripper", "reward"];

fn domain_rank(name: &str) -> usize {
    let n = name.to_ascii_lowercase();
    DOMAIN_ORDER
        .iter()
        .position(|d| n == *d || n.ends_with(&format!("_{d}")) || n.ends_with(&format!("-{d}")))
        .unwrap_or(DOMAIN_ORDER.len())
}

/// Abbreviates large counts as `7.7K` or `1.2M`.
pub fn abbreviate(n: u64) -> String {
    if n >= 1_000_000 {
        format!("{:.1}M", n as f64 / 1e6)
    } else if n >= 1_000 {
        format!("{:.1}K", n as f64 / 1e3)
    } else {
        n.to_string()
    }
}

/// Experiment table in the fixed domain order, then by name.
pub fn report_table(runs: &[RunReport]) -> String {
    let mut rows: Vec<&RunReport> = runs.iter().collect();
    rows.sort_by(|a, b| {
        domain_rank(&a.name)
            .cmp(&domain_rank(&b.name))
            .then_with(|| a.name.cmp(&b.name))
    });
    let mut out = format!(
        "{:<12} {:>6} {:>6} {:>8} {:>8} {:>9} {:>4} {:>5} {:>5} {:>9} {:>4} {:>10}\n",
        "domain",
        "|S|",
        "pool",
        "np",
        "nc",
        "t_SAT",
        "|F|",
        "cost",
        "|A_F|",
        "t_FOND",
        "|π|",
        "validation"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:>6} {:>6} {:>8} {:>8} {:>9.2} {:>4} {:>5} {:>5} {:>9.3} {:>4} {:>10}\n",
            r.name,
            r.transitions,
            r.pool_size,
            abbreviate(r.num_vars),
            abbreviate(r.num_clauses),
            r.timings.sat,
            r.features.len(),
            r.cost,
            r.num_actions,
            r.timings.fond,
            r.policy_size,
            format!("{}/{}", r.solved(), r.validation.len()),
        ));
    }
    out
}

/// Reads a `report.json` written by [`run_pipeline`].
pub fn load_report(path: &Path) -> Result<RunReport, PipelineError> {
    let v = read_json(path, Stage::Validate)?;
    serde_json::from_value(v).map_err(|e| fail(Stage::Validate, format!("{}: {e}", path.display())))
}
