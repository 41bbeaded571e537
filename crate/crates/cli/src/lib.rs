//! Report-producing commands behind the `rlab` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use rlab_core::ccbp::{assemble_ccbp, check_target};
use rlab_core::flatness::{check_dyadic_equivalence, flatness_table, ScaleLadder};
use rlab_core::measure::{ahlfors_audit, draw_probes, AhlforsConfig, DiscreteSurface};
use rlab_core::parametrize::{
    containment_check, containment_tolerance, reifenberg_audit, run_flow, summarize, ReifenbergConfig,
};
use rlab_core::poincare::{audit_family, keith_form_audit, lip_field, poincare_audit};
use rlab_core::quasiconvex::quasiconvexity_audit;
use rlab_core::zoo::{describe, generate, ZooSpec};
use rlab_core::{Ball, Error, OffendingPair, Vector};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Quadrature points per level for Carleson integrals.
pub const QUAD_PER_LEVEL: usize = 8;
/// Centers audited for two-sided flatness of the flow image.
pub const REIFENBERG_CENTERS: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("computation failed: {0}")]
    Compute(#[from] Error),
    #[error("achieved compatibility {achieved} exceeds target {target}")]
    EpsilonExceeded {
        achieved: f64,
        target: f64,
        worst: OffendingPair,
    },
    #[error("violation detected: {0}")]
    Violation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Compute(_) => 3,
            CliError::EpsilonExceeded { .. } => 4,
            CliError::Violation(_) => 5,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Compute(Error::InvalidInput(format!("{}: {e}", path.display())))
}

/// Everything a pipeline command needs. Echoed into every report.
#[derive(Args, Clone, Debug, Serialize)]
pub struct RunConfig {
    /// Sample CSV with columns x0..xn[,nu0..nun],w.
    #[arg(long, conflicts_with = "shape")]
    pub input: Option<PathBuf>,
    /// Zoo surface, e.g. `sphere:samples=20000,R=1`.
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long, default_value_t = 0.25)]
    pub r_base: f64,
    #[arg(long, default_value_t = 2.0)]
    pub ratio: f64,
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    /// Comma-separated coordinates; defaults to the sample nearest the origin.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub region_center: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.25)]
    pub region_radius: f64,
    #[arg(long, default_value_t = 0.05)]
    pub eps_target: f64,
    #[arg(long, default_value_t = 64)]
    pub probes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<ScaleLadder, CliError> {
        match (&self.input, &self.shape) {
            (None, None) => return Err(CliError::Validation("one of --input or --shape is required".into())),
            (Some(_), Some(_)) => return Err(CliError::Validation("--input and --shape are exclusive".into())),
            _ => {}
        }
        if !(self.region_radius > 0.0 && self.region_radius.is_finite()) {
            return Err(CliError::Validation(format!("region radius {} must be positive", self.region_radius)));
        }
        if !(self.eps_target > 0.0 && self.eps_target.is_finite()) {
            return Err(CliError::Validation(format!("eps target {} must be positive", self.eps_target)));
        }
        if self.probes == 0 {
            return Err(CliError::Validation("--probes must be at least 1".into()));
        }
        if let Some(c) = &self.region_center {
            if c.is_empty() || c.len() > rlab_core::MAX_DIM || c.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Validation("region center must have 1 to 8 finite coordinates".into()));
            }
        }
        ScaleLadder::new(self.r_base, self.ratio, self.depth).map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Reads or generates the surface. Failures here are validation errors.
    pub fn load(&self) -> Result<DiscreteSurface, CliError> {
        if let Some(path) = &self.input {
            if !path.is_file() {
                return Err(CliError::Validation(format!("input file {} not found", path.display())));
            }
            return DiscreteSurface::read_csv(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())));
        }
        let spec: ZooSpec = self
            .shape
            .as_deref()
            .unwrap_or_default()
            .parse()
            .map_err(|e: Error| CliError::Validation(e.to_string()))?;
        generate(&spec).map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn region(&self, s: &DiscreteSurface) -> Result<Ball, CliError> {
        let d = s.ambient_dim();
        let center = match &self.region_center {
            Some(c) if c.len() != d => {
                return Err(CliError::Validation(format!(
                    "region center has {} coordinates, data has {d}",
                    c.len()
                )))
            }
            Some(c) => Vector::from_slice(c),
            None => {
                let (i, _) = s
                    .index()
                    .nearest(&Vector::zeros(d))
                    .ok_or_else(|| CliError::Validation("surface is empty".into()))?;
                s.point(i)
            }
        };
        Ball::new(center, self.region_radius).map_err(|e| CliError::Validation(e.to_string()))
    }
}

/// Common envelope of every JSON report.
#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub result: T,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, command: &str, cfg: &RunConfig, result: T) -> Result<PathBuf, CliError> {
    let report = Report {
        tool: "rlab",
        version: VERSION,
        command,
        seed: cfg.seed,
        config: cfg,
        result,
    };
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))
}

/// Ladder radii `r_0, …, r_J`.
pub fn all_radii(ladder: &ScaleLadder) -> Vec<f64> {
    (0..=ladder.depth).map(|k| ladder.radius(k)).collect()
}

#[derive(Serialize)]
pub struct CarlesonReport {
    pub total: f64,
    pub integral_max: f64,
    pub dyadic: rlab_core::DyadicReport,
}

pub fn analyze_ahlfors(s: &DiscreteSurface, cfg: &RunConfig, ladder: &ScaleLadder, region: &Ball) -> Result<rlab_core::AhlforsAudit, CliError> {
    let mut acfg = AhlforsConfig::new(all_radii(ladder).into_iter().filter(|&r| r < 1.0).collect(), cfg.probes);
    acfg.seed = cfg.seed;
    acfg.probe_region = Some(*region);
    Ok(ahlfors_audit(s, &acfg)?)
}

pub fn analyze_carleson(s: &DiscreteSurface, probes: &[usize], ladder: &ScaleLadder) -> Result<CarlesonReport, CliError> {
    let h = s.h_min();
    let depth = (1..=ladder.depth).take_while(|&j| ladder.radius(j) >= h).count();
    if depth == 0 {
        return Err(CliError::Compute(Error::ResolutionExceeded {
            radius: ladder.radius(1),
            h_min: h,
        }));
    }
    if depth < ladder.depth {
        log::warn!("carleson sums truncated to {depth} resolvable levels");
    }
    let ladder = ScaleLadder::new(ladder.r0, ladder.ratio, depth)?;
    let dyadic = check_dyadic_equivalence(s, probes, &ladder)?;
    Ok(CarlesonReport {
        total: dyadic.records.iter().map(|r| r.dyadic).fold(0.0, f64::max),
        integral_max: dyadic.records.iter().map(|r| r.integral).fold(0.0, f64::max),
        dyadic,
    })
}

/// Writes `ahlfors.json`, `flatness.csv` and `carleson.json`.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let ladder = cfg.validate()?;
    let s = cfg.load()?;
    let region = cfg.region(&s)?;
    prepare_out(&cfg.out_dir)?;
    let probes = draw_probes(&s, cfg.probes, cfg.seed, Some(&region));
    let mut written = Vec::new();

    let ahlfors = analyze_ahlfors(&s, cfg, &ladder, &region)?;
    written.push(write_json(&cfg.out_dir, "ahlfors.json", "analyze", cfg, &ahlfors)?);

    let table = flatness_table(&s, &probes, &all_radii(&ladder))?;
    let path = cfg.out_dir.join("flatness.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    let d = s.ambient_dim();
    let mut header: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    header.extend(["r", "alpha", "beta1", "beta_inf"].map(String::from));
    w.write_record(&header).map_err(|e| io_err(&path, e))?;
    for rec in &table {
        let mut row: Vec<String> = rec.x.as_slice().iter().map(|v| v.to_string()).collect();
        row.extend([rec.r, rec.alpha, rec.beta1, rec.beta_inf].map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    written.push(path);

    let carleson = if s.has_normals() {
        Some(analyze_carleson(&s, &probes, &ladder)?)
    } else {
        log::warn!("surface has no normals; carleson report left empty");
        None
    };
    written.push(write_json(&cfg.out_dir, "carleson.json", "analyze", cfg, &carleson)?);
    Ok(written)
}

#[derive(Serialize)]
pub struct EpsilonFailure<'a> {
    pub error: &'static str,
    pub achieved: f64,
    pub target: f64,
    pub worst: &'a OffendingPair,
}

#[derive(Serialize)]
pub struct ReifenbergReport {
    pub audit: Option<rlab_core::ReifenbergAudit>,
    pub containment: rlab_core::ContainmentReport,
}

/// Writes `ccbp.json`, then (if the target is met) `flow.csv`, `bilip.json` and `reifenberg.json`.
pub fn cmd_parametrize(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let ladder = cfg.validate()?;
    let s = cfg.load()?;
    let region = cfg.region(&s)?;
    if !s.has_normals() {
        return Err(CliError::Validation("parametrize needs sample normals".into()));
    }
    prepare_out(&cfg.out_dir)?;
    let mut written = Vec::new();
    let c = assemble_ccbp(&s, &region, &ladder, cfg.eps_target)?;
    written.push(write_json(&cfg.out_dir, "ccbp.json", "parametrize", cfg, &c)?);
    if let Err(Error::EpsilonExceeded { achieved, target, worst }) = check_target(&c) {
        return Err(CliError::EpsilonExceeded { achieved, target, worst });
    }

    let spacing = 0.25 * ladder.radius(ladder.depth);
    let trace = run_flow(&c, spacing, ladder.depth)?;
    let path = cfg.out_dir.join("flow.csv");
    let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    trace.write_csv(std::io::BufWriter::new(file))?;
    written.push(path);

    let summary = summarize(&trace)?;
    written.push(write_json(&cfg.out_dir, "bilip.json", "parametrize", cfg, &summary)?);

    let interior = Ball::new(c.sigma0.project(&region.center), 0.5 * region.radius)?;
    let radii: Vec<f64> = ladder.radii().into_iter().filter(|&r| r > 2.0 * spacing && r <= interior.radius).collect();
    let audit = if radii.is_empty() {
        None
    } else {
        let mut rcfg = ReifenbergConfig::new(radii, spacing);
        rcfg.interior = Some(interior);
        rcfg.max_centers = Some(REIFENBERG_CENTERS);
        rcfg.seed = cfg.seed;
        Some(reifenberg_audit(trace.image(), &rcfg)?)
    };
    let half = Ball::new(region.center, 0.5 * region.radius)?;
    let containment = containment_check(&s, &half, trace.image(), containment_tolerance(spacing, ladder.radius(ladder.depth)));
    written.push(write_json(&cfg.out_dir, "reifenberg.json", "parametrize", cfg, ReifenbergReport { audit, containment })?);
    Ok(written)
}

#[derive(Serialize)]
pub struct PoincareReport {
    pub functions: Vec<rlab_core::TestFunction>,
    pub radii: Vec<f64>,
    pub c_p: Option<f64>,
    pub audit: rlab_core::PoincareAudit,
    pub keith: Vec<rlab_core::KeithAudit>,
}

/// Radii of the ladder at or above the resolution limit.
pub fn resolvable_radii(s: &DiscreteSurface, ladder: &ScaleLadder) -> Vec<f64> {
    let h = s.h_min();
    ladder.radii().into_iter().filter(|&r| r >= h).collect()
}

pub fn poincare_report(s: &DiscreteSurface, cfg: &RunConfig, ladder: &ScaleLadder, region: &Ball) -> Result<PoincareReport, CliError> {
    let probes = draw_probes(s, cfg.probes, cfg.seed, Some(region));
    let radii = resolvable_radii(s, ladder);
    if radii.is_empty() {
        return Err(CliError::Compute(Error::ResolutionExceeded {
            radius: ladder.radius(1),
            h_min: s.h_min(),
        }));
    }
    let functions = audit_family(s, cfg.seed);
    let audit = poincare_audit(s, &functions, &probes, &radii)?;
    let h = s.median_spacing();
    let lip_radii = [2.0 * h, 3.0 * h, 4.0 * h, 6.0 * h];
    let balls: Vec<(usize, f64)> = probes.iter().flat_map(|&p| radii.iter().map(move |&r| (p, r))).collect();
    let mut keith = Vec::new();
    if !audit.diverged {
        for f in &functions {
            let values = f.values(s);
            let lip = lip_field(s, &values, &lip_radii)?;
            keith.push(keith_form_audit(s, &values, &lip, &balls, audit.c_p, 0.05)?);
        }
    }
    Ok(PoincareReport {
        c_p: (!audit.diverged).then_some(audit.c_p),
        functions,
        radii,
        audit,
        keith,
    })
}

/// Writes `poincare_report.json`; a diverging ratio is a violation.
pub fn cmd_check_poincare(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let ladder = cfg.validate()?;
    let s = cfg.load()?;
    let region = cfg.region(&s)?;
    if !s.has_normals() {
        return Err(CliError::Validation("poincare check needs sample normals".into()));
    }
    prepare_out(&cfg.out_dir)?;
    let report = poincare_report(&s, cfg, &ladder, &region)?;
    let diverged = report.audit.diverged;
    let failures = report.audit.hard_failures.len();
    let path = write_json(&cfg.out_dir, "poincare_report.json", "check poincare", cfg, &report)?;
    if diverged {
        return Err(CliError::Violation(format!("{failures} balls oscillate without tangential gradient")));
    }
    Ok(vec![path])
}

#[derive(Serialize)]
pub struct QuasiconvexReport {
    pub h: f64,
    pub disconnected: bool,
    pub components: usize,
    /// `None` when disconnected.
    pub kappa: Option<f64>,
    pub audit: Option<rlab_core::QuasiconvexAudit>,
}

/// Pairs sampled per probe.
pub const PAIRS_PER_PROBE: usize = 4;

pub fn quasiconvex_report(s: &DiscreteSurface, cfg: &RunConfig) -> Result<QuasiconvexReport, CliError> {
    let h = s.h_min();
    match quasiconvexity_audit(s, h, cfg.probes * PAIRS_PER_PROBE, cfg.seed) {
        Ok(audit) => Ok(QuasiconvexReport {
            h,
            disconnected: false,
            components: audit.components,
            kappa: Some(audit.kappa),
            audit: Some(audit),
        }),
        Err(Error::Disconnected { components }) => Ok(QuasiconvexReport {
            h,
            disconnected: true,
            components,
            kappa: None,
            audit: None,
        }),
        Err(e) => Err(e.into()),
    }
}

/// Writes `quasiconvexity_report.json`; disconnection is a violation.
pub fn cmd_check_quasiconvex(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let s = cfg.load()?;
    prepare_out(&cfg.out_dir)?;
    let report = quasiconvex_report(&s, cfg)?;
    let path = write_json(&cfg.out_dir, "quasiconvexity_report.json", "check quasiconvex", cfg, &report)?;
    if report.disconnected {
        return Err(CliError::Violation(format!("sample graph has {} components", report.components)));
    }
    Ok(vec![path])
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct ZooArgs {
    /// Zoo surface, e.g. `graph-sin:a=0.01,l=0.5`.
    #[arg(long)]
    pub shape: String,
    /// Overrides the seed in the shape string.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct ZooReport<'a> {
    tool: &'static str,
    version: &'static str,
    spec: &'a ZooSpec,
    expectations: rlab_core::Expectations,
    points: usize,
}

/// Writes `surface.csv` and `zoo.json`.
pub fn cmd_zoo_generate(args: &ZooArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut spec: ZooSpec = args.shape.parse().map_err(|e: Error| CliError::Validation(e.to_string()))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let s = generate(&spec).map_err(|e| CliError::Validation(e.to_string()))?;
    prepare_out(&args.out_dir)?;
    let csv_path = args.out_dir.join("surface.csv");
    let file = fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    s.write_csv(std::io::BufWriter::new(file))?;
    let report = ZooReport {
        tool: "rlab",
        version: VERSION,
        spec: &spec,
        expectations: describe(&spec),
        points: s.len(),
    };
    let json_path = args.out_dir.join("zoo.json");
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    fs::write(&json_path, text + "\n").map_err(|e| io_err(&json_path, e))?;
    Ok(vec![csv_path, json_path])
}

/// The JSON printed to stderr when the compatibility target is missed.
pub fn epsilon_failure_json(achieved: f64, target: f64, worst: &OffendingPair) -> String {
    serde_json::to_string(&EpsilonFailure {
        error: "EpsilonExceeded",
        achieved,
        target,
        worst,
    })
    .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RunConfig {
        RunConfig {
            input: None,
            shape: Some("plane:samples=2000".into()),
            r_base: 0.25,
            ratio: 2.0,
            depth: 2,
            region_center: None,
            region_radius: 0.25,
            eps_target: 0.05,
            probes: 8,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }

    #[test]
    fn validation_rejects_bad_settings() {
        assert!(cfg().validate().is_ok());
        let mut c = cfg();
        c.shape = None;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let mut c = cfg();
        c.input = Some("x.csv".into());
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.region_radius = -1.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.region_center = Some(vec![0.0; 9]);
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.ratio = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn region_defaults_to_sample_nearest_origin() {
        let c = cfg();
        let s = c.load().unwrap();
        let region = c.region(&s).unwrap();
        let (i, _) = s.index().nearest(&Vector::zeros(3)).unwrap();
        assert_eq!(region.center, s.point(i));
        let mut c = cfg();
        c.region_center = Some(vec![0.0, 0.0]);
        assert!(matches!(c.region(&s), Err(CliError::Validation(_))));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Compute(Error::EmptyBall { radius: 1.0 }).exit_code(), 3);
        assert_eq!(CliError::Violation("x".into()).exit_code(), 5);
        let worst = OffendingPair {
            condition: "origin".into(),
            level: 0,
            first: 0,
            other_level: 0,
            second: 0,
            value: 0.2,
        };
        let e = CliError::EpsilonExceeded { achieved: 0.2, target: 0.1, worst: worst.clone() };
        assert_eq!(e.exit_code(), 4);
        let v: serde_json::Value = serde_json::from_str(&epsilon_failure_json(0.2, 0.1, &worst)).unwrap();
        assert_eq!(v["error"], "EpsilonExceeded");
        assert_eq!(v["worst"]["condition"], "origin");
    }
}
