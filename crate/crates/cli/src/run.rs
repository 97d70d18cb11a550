//! The solve, profile, identity and bounds pipeline.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use fpmeasure::bounds::{
    bound_aa, bound_ab, bound_ac, bound_ba, bound_bb, check_kind, reports_to_csv, reports_to_json, BoundInputs,
    BoundReport, Theorem,
};
use fpmeasure::density::DensityGrid;
use fpmeasure::levelset::{build_profile_with, derivative_check, LevelProfile, LevelSet};
use fpmeasure::problem::{classify, LyapunovClassification};
use fpmeasure::solver::{analytic_density, solve_stationary};
use fpmeasure::verifier::{self, identity_sweep, IdentityReport, Phi};

use crate::config::{CheckConfig, DensitySource, Format, Levels, PhiConfig, RunConfig};
use crate::error::{CliError, EXIT_CHECK, EXIT_OK};

/// How far down the pipeline a subcommand goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Solve,
    Profile,
    Identity,
    Bounds,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Solve => "solve",
            Stage::Profile => "profile",
            Stage::Identity => "identity",
            Stage::Bounds => "bounds",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub stage: Stage,
    pub out: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
    pub density: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: Value,
    pub out_dir: PathBuf,
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(fpmeasure::format::fmt_num(v))
    }
}

#[derive(Default)]
struct Record {
    files: Vec<String>,
    warnings: Vec<String>,
    density: Option<Value>,
    classification: Option<Value>,
    profile_levels: Option<usize>,
    identity: Option<(f64, f64, bool, usize)>,
    derivative: Option<(Option<f64>, f64, bool)>,
    bounds: Vec<BoundReport>,
}

struct Writer {
    dir: PathBuf,
    formats: Vec<Format>,
}

impl Writer {
    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn write(&self, rec: &mut Record, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        })?;
        rec.files.push(name.to_string());
        Ok(())
    }
}

const DENSITY_FILE: &str = "density.csv";
const DENSITY_KEY_FILE: &str = "density.key.json";

/// Identifies the inputs that determine the density, for reuse across stages.
fn density_key(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(&json!({
        "problem": cfg.raw.problem,
        "grid": cfg.raw.grid,
        "density_source": cfg.raw.density_source,
    }))
    .expect("config serializes")
}

fn cached_density(cfg: &RunConfig, dir: &Path) -> Option<DensityGrid> {
    let key = std::fs::read_to_string(dir.join(DENSITY_KEY_FILE)).ok()?;
    if key != density_key(cfg) {
        return None;
    }
    let text = std::fs::read_to_string(dir.join(DENSITY_FILE)).ok()?;
    DensityGrid::from_csv(&text, &cfg.grid).ok()
}

fn obtain_density(cfg: &RunConfig, opts: &RunOptions, w: &Writer, rec: &mut Record) -> Result<DensityGrid, CliError> {
    if let Some(path) = &opts.density {
        let text = std::fs::read_to_string(path).map_err(fpmeasure::Error::from)?;
        let d = DensityGrid::from_csv(&text, &cfg.grid)?;
        rec.density = Some(json!({ "source": "file" }));
        return Ok(d);
    }
    if opts.stage > Stage::Solve {
        if let Some(d) = cached_density(cfg, &w.dir) {
            rec.density = Some(json!({ "source": "cache" }));
            return Ok(d);
        }
    }
    let d = match cfg.raw.density_source {
        DensitySource::Exact => {
            rec.density = Some(json!({ "source": "exact" }));
            analytic_density(&cfg.problem, &cfg.grid)?
        }
        DensitySource::Solve => {
            let r = solve_stationary(&cfg.problem, &cfg.grid)?;
            rec.warnings.extend(r.warnings.iter().map(|s| format!("solver: {s}")));
            rec.density = Some(json!({
                "source": "solve",
                "iterations": r.iterations,
                "residual": num(r.residual),
                "max_peclet": num(r.max_peclet),
            }));
            r.density
        }
    };
    if w.wants(Format::Csv) {
        w.write(rec, DENSITY_FILE, &d.to_csv())?;
        w.write(rec, DENSITY_KEY_FILE, &density_key(cfg))?;
    }
    Ok(d)
}

fn requested_regular(profile: &LevelProfile) -> Vec<f64> {
    profile.requested().iter().filter(|l| l.regular).map(|l| l.rho).collect()
}

fn levels_or(rho: &Option<Levels>, default: impl FnOnce() -> Vec<f64>) -> Vec<f64> {
    rho.as_ref().map_or_else(default, Levels::to_vec)
}

fn run_identity(
    cfg: &RunConfig,
    ls: &LevelSet,
    profile: &LevelProfile,
    w: &Writer,
    rec: &mut Record,
) -> Result<(), CliError> {
    let mut all: Vec<IdentityReport> = Vec::new();
    for c in &cfg.raw.checks {
        let CheckConfig::Identity { phi, rho } = c else {
            continue;
        };
        let phi = match phi {
            None | Some(PhiConfig::Identity) => Phi::Identity,
            Some(PhiConfig::Cutoff { rho_m, rho_0 }) => Phi::Cutoff(fpmeasure::bounds::build_cutoff(*rho_m, *rho_0)?),
        };
        let levels = levels_or(rho, || requested_regular(profile));
        all.extend(identity_sweep(ls, &cfg.problem, &phi, &levels));
    }
    if all.is_empty() {
        return Ok(());
    }
    let mut worst: f64 = 0.0;
    for r in &all {
        match &r.skipped {
            Some(why) => rec.warnings.push(format!("identity at {}: skipped ({why})", r.rho)),
            None => worst = worst.max(r.rel_residual),
        }
    }
    let checked = all.iter().filter(|r| r.skipped.is_none()).count();
    let tol = cfg.raw.tolerances.identity;
    rec.identity = Some((worst, tol, checked > 0 && worst <= tol, checked));
    if w.wants(Format::Csv) {
        w.write(rec, "identity.csv", &verifier::reports_to_csv(&all))?;
    }
    Ok(())
}

fn run_bounds(
    cfg: &RunConfig,
    ls: &LevelSet,
    profile: &LevelProfile,
    class: &LyapunovClassification,
    rec: &mut Record,
) -> Result<(), CliError> {
    let inp = BoundInputs {
        levels: ls,
        profile,
        eps_disc: cfg.raw.tolerances.eps_disc,
    };
    let rho_m = profile.rho_m;
    let above = |lo: f64| -> Vec<f64> {
        profile
            .requested()
            .iter()
            .filter(|l| l.regular && l.rho >= lo)
            .map(|l| l.rho)
            .collect()
    };
    let pick_gamma = |g: Option<f64>, rec: &mut Record, name: &str| -> f64 {
        match g {
            Some(g) => {
                if g > class.gamma * (1.0 + 1e-12) {
                    rec.warnings.push(format!(
                        "{name}: gamma override {g} exceeds the classified gamma {}",
                        class.gamma
                    ));
                }
                g
            }
            None => class.gamma,
        }
    };
    for c in &cfg.raw.checks {
        match c {
            CheckConfig::Aa { rho_0, gamma } => {
                check_kind(Theorem::Aa, class)?;
                let g = pick_gamma(*gamma, rec, "Aa");
                rec.bounds.push(bound_aa(&inp, g, *rho_0)?);
            }
            CheckConfig::Ab { rho, gamma } => {
                check_kind(Theorem::Ab, class)?;
                let g = pick_gamma(*gamma, rec, "Ab");
                for r in levels_or(rho, || above(rho_m).into_iter().filter(|&r| r > rho_m).collect()) {
                    rec.bounds.push(bound_ab(&inp, g, r)?);
                }
            }
            CheckConfig::Ac { rho_0, rho_cap } => {
                check_kind(Theorem::Ac, class)?;
                rec.bounds.push(bound_ac(&inp, *rho_0, *rho_cap)?);
            }
            CheckConfig::Ba { rho_0, rho, gamma } => {
                check_kind(Theorem::Ba, class)?;
                let g = pick_gamma(*gamma, rec, "Ba");
                for r in levels_or(rho, || above(*rho_0)) {
                    rec.bounds.push(bound_ba(&inp, g, *rho_0, r)?);
                }
            }
            CheckConfig::Bb { rho_0, rho } => {
                check_kind(Theorem::Bb, class)?;
                for r in levels_or(rho, || above(*rho_0)) {
                    rec.bounds.push(bound_bb(&inp, *rho_0, r)?);
                }
            }
            CheckConfig::Identity { .. } | CheckConfig::Derivative {} => {}
        }
    }
    Ok(())
}

fn execute(cfg: &RunConfig, opts: &RunOptions, w: &Writer, rec: &mut Record) -> Result<(), CliError> {
    let d = obtain_density(cfg, opts, w, rec)?;
    if opts.stage == Stage::Solve {
        return Ok(());
    }
    let t = &cfg.raw.tolerances;
    let profile = build_profile_with(&d, &cfg.problem, &cfg.u, &cfg.levels, t.regular_tol)?;
    rec.profile_levels = Some(profile.levels.len());
    rec.warnings.extend(profile.warnings.iter().map(|s| format!("profile: {s}")));
    if w.wants(Format::Csv) {
        w.write(rec, "profile.csv", &profile.to_csv())?;
    }
    if cfg.raw.checks.iter().any(|c| matches!(c, CheckConfig::Derivative {})) {
        let gap = derivative_check(&profile);
        rec.derivative = Some((gap, t.derivative, gap.is_some_and(|g| g <= t.derivative)));
    }
    if opts.stage == Stage::Profile {
        return Ok(());
    }
    let ls = LevelSet::new(&d, &cfg.u)?;
    run_identity(cfg, &ls, &profile, w, rec)?;
    if opts.stage == Stage::Identity {
        return Ok(());
    }
    if cfg.raw.checks.iter().any(CheckConfig::is_bound) {
        let samples = cfg.raw.grid.n.iter().copied().max().unwrap_or(2).max(2);
        let class = classify(&cfg.problem, &cfg.u, samples)?;
        rec.classification = Some(json!({
            "kind": class.kind.name(),
            "gamma": num(class.gamma),
            "sup_lu": num(class.sup),
            "inf_lu": num(class.inf),
        }));
        run_bounds(cfg, &ls, &profile, &class, rec)?;
        if w.wants(Format::Csv) {
            w.write(rec, "bounds.csv", &reports_to_csv(&rec.bounds))?;
        }
        if w.wants(Format::Json) {
            let json = reports_to_json(&rec.bounds);
            w.write(rec, "bounds.json", &json)?;
        }
    }
    Ok(())
}

/// Output directory: `--out`, then `output.directory`, then `out`.
pub fn output_dir(cfg: Option<&RunConfig>, opts: &RunOptions) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.raw.output.directory.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs the pipeline up to `opts.stage` and writes `summary.json`.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Outcome {
    let dir = output_dir(Some(cfg), opts);
    let w = Writer {
        dir: dir.clone(),
        formats: opts.formats.clone().unwrap_or_else(|| cfg.raw.output.formats.clone()),
    };
    let mut rec = Record::default();
    let result = std::fs::create_dir_all(&dir)
        .map_err(|source| CliError::Output {
            path: dir.display().to_string(),
            source,
        })
        .and_then(|_| execute(cfg, opts, &w, &mut rec));

    let satisfied = rec.bounds.iter().filter(|r| r.satisfied).count();
    let identity_ok = rec.identity.is_none_or(|i| i.2);
    let derivative_ok = rec.derivative.is_none_or(|d| d.2);
    let exit_code = match &result {
        Err(e) => e.exit_code(),
        Ok(()) if satisfied == rec.bounds.len() && identity_ok && derivative_ok => EXIT_OK,
        Ok(()) => EXIT_CHECK,
    };
    let error = result.as_ref().err().map(|e| json!({ "kind": e.kind(), "message": e.to_string() }));
    let mut files = rec.files.clone();
    files.push("summary.json".into());
    let summary = json!({
        "stage": opts.stage.name(),
        "exit_code": exit_code,
        "checks_run": rec.bounds.len(),
        "checks_satisfied": satisfied,
        "max_identity_residual": rec.identity.map(|i| num(i.0)),
        "identity": rec.identity.map(|(worst, tol, pass, levels)| json!({
            "max_rel_residual": num(worst), "tolerance": num(tol), "passed": pass, "levels": levels,
        })),
        "derivative": rec.derivative.map(|(gap, tol, pass)| json!({
            "max_rel_discrepancy": gap.map(num), "tolerance": num(tol), "passed": pass,
        })),
        "density": rec.density,
        "classification": rec.classification,
        "profile_levels": rec.profile_levels,
        "warnings": rec.warnings,
        "files": files,
        "error": error,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    // the directory may be unusable; the caller still gets the summary
    let _ = std::fs::write(dir.join("summary.json"), text + "\n");
    Outcome {
        exit_code,
        summary,
        out_dir: dir,
    }
}

/// Summary for a run that failed before the pipeline started.
pub fn failure_summary(err: &CliError, stage: Stage, dir: Option<&Path>) -> Value {
    let summary = json!({
        "stage": stage.name(),
        "exit_code": err.exit_code(),
        "checks_run": 0,
        "checks_satisfied": 0,
        "max_identity_residual": null,
        "warnings": [],
        "error": { "kind": err.kind(), "message": err.to_string() },
    });
    if let Some(dir) = dir {
        if std::fs::create_dir_all(dir).is_ok() {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            let _ = std::fs::write(dir.join("summary.json"), text + "\n");
        }
    }
    summary
}
