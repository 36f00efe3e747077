//! Staged experiment pipeline: config -> certificate -> well -> data ->
//! trajectory -> reports, with bit-stable file output and the exit-code
//! contract 0 (completed/blewup), 1 (config), 2 (numerical), 3 (mms order).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use viscowave::analysis::{blowup_report, fit_decay, DecayFit, RunSeries};
use viscowave::fields::build_profile;
use viscowave::functionals::levine_series;
use viscowave::kernel::KernelCertificate;
use viscowave::mesh::{RadialField, RadialMesh};
use viscowave::mms::{convergence_order, run_mms, ManufacturedSolution, MmsReport};
use viscowave::solver::{run, InitialNorms, RunStatus, SolverConfig, Trajectory};
use viscowave::well::{classify, scale_into, well_depth, Classification, WellReport, WellSet};
use viscowave::Error as CoreError;

use crate::config::ExperimentConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_MMS_ORDER: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure { code: EXIT_NUMERICAL, message: message.into() }
    }
}

pub fn load_config(path: &Path) -> Result<(ExperimentConfig, String), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let sha = hex_sha256(text.as_bytes());
    let config = ExperimentConfig::from_json(&text).map_err(Failure::config)?;
    Ok((config, sha))
}

pub(crate) fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything computed before time stepping.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub config_sha: String,
    pub mesh: RadialMesh,
    pub certificate: KernelCertificate,
    pub ell: f64,
    pub well: WellReport,
    pub u0: RadialField,
    pub v0: RadialField,
    pub classification: Classification,
    pub scaled_amplitude: Option<f64>,
}

pub fn prepare(
    config: ExperimentConfig,
    config_sha: String,
    cli_seed: Option<u64>,
) -> Result<Prepared, Failure> {
    let problem = &config.problem;
    let mesh = RadialMesh::new(problem.dim, config.mesh.cells, problem.radius)
        .map_err(|e| Failure::config(e.to_string()))?;
    let certificate =
        config.kernel.certify(400, 1e3).map_err(|e| Failure::config(e.to_string()))?;
    if !certificate.a1_ok || !certificate.a2_ok {
        return Err(Failure::config(format!(
            "kernel fails admissibility: a1_ok = {}, a2_ok = {}",
            certificate.a1_ok, certificate.a2_ok
        )));
    }
    let ell = config.kernel.ell();
    let opt = config.optimizer_with_seed(cli_seed);
    let well = well_depth(&mesh, problem, ell, &opt)
        .map_err(|e| Failure::numerical(format!("well depth: {e}")))?;

    let initial = &config.initial;
    let profile = build_profile(&mesh, &initial.profile);
    let named_v0 = match &initial.velocity.profile {
        Some(p) => build_profile(&mesh, p).scaled(initial.velocity.amplitude),
        None => RadialField::zeros(mesh.cells),
    };
    let (u0, scaled_amplitude) = match (initial.amplitude, &initial.auto_scale) {
        (Some(a), None) => (profile.scaled(a), None),
        (None, Some(auto)) => {
            let (amp, _) = scale_into(
                &mesh,
                problem,
                ell,
                &well,
                auto.target,
                &profile,
                &named_v0,
                auto.margin,
            )
            .map_err(|e| Failure::numerical(format!("auto_scale: {e}")))?;
            (profile.scaled(amp), Some(amp))
        }
        _ => unreachable!("validated in ExperimentConfig::validate"),
    };
    let v0 = match initial.velocity.proportional {
        Some(c) => u0.scaled(c),
        None => named_v0,
    };
    let classification = classify(&mesh, problem, ell, &u0, &v0, &well);
    Ok(Prepared {
        config,
        config_sha,
        mesh,
        certificate,
        ell,
        well,
        u0,
        v0,
        classification,
        scaled_amplitude,
    })
}

pub fn status_name(status: &RunStatus) -> &'static str {
    match status {
        RunStatus::Completed => "completed",
        RunStatus::BlewUp { .. } => "blewup",
        RunStatus::DtUnderflow { .. } => "dt_underflow",
        RunStatus::NanDetected { .. } => "nan_detected",
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Collects written file names so the manifest can list them.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
    started_ms: u128,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    config_sha256: &'a str,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    status: &'a str,
    outputs: &'a [String],
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutputDir { dir: dir.to_path_buf(), files: Vec::new(), started_ms: now_ms() })
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Failure::numerical(format!("serialize {name}: {e}")))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), Failure> {
        fs::write(self.dir.join(name), text)
            .map_err(|e| Failure::numerical(format!("write {name}: {e}")))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes manifest.json and consumes the directory handle. The manifest
    /// carries the only timestamps, keeping every other file byte-stable.
    pub fn finish(mut self, config_sha: &str, status: &str) -> Result<(), Failure> {
        self.files.push("manifest.json".to_string());
        self.files.sort();
        let manifest = Manifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            config_sha256: config_sha,
            started_unix_ms: self.started_ms,
            finished_unix_ms: now_ms(),
            status,
            outputs: &self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Failure::numerical(format!("serialize manifest: {e}")))?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)
            .map_err(|e| Failure::numerical(format!("write manifest.json: {e}")))
    }
}

fn records_csv(traj: &Trajectory) -> String {
    let mut out = String::from(
        "t,e,kinetic,elastic,memory,source,dissipation_rate,cum_damping,phi,psi,m,g,gp,lambda,l2_norm,grad_norm,linf_norm\n",
    );
    for r in &traj.records {
        let row = [
            r.t,
            r.e,
            r.kinetic,
            r.elastic,
            r.memory,
            r.source,
            r.dissipation_rate,
            r.cum_damping,
            r.phi,
            r.psi,
            r.m,
            r.g,
            r.gp,
            r.lambda,
            r.l2_norm,
            r.grad_norm,
            r.linf_norm,
        ];
        out.push_str(&row.map(num).join(","));
        out.push('\n');
    }
    out
}

fn aux_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,i_of_u,j_of_u,diss_integral,cum_hardy_sq,cum_hardy_cross\n");
    for r in &traj.records {
        let row = [r.t, r.i_of_u, r.j_of_u, r.diss_integral, r.cum_hardy_sq, r.cum_hardy_cross];
        out.push_str(&row.map(num).join(","));
        out.push('\n');
    }
    out
}

fn decay_fit_csv(series: &RunSeries, fit: &DecayFit, q: f64, xi0: f64, t1: f64) -> String {
    let mut out = String::from("t,e,envelope,ratio\n");
    for i in 0..series.t.len() {
        if series.t[i] < t1 {
            continue;
        }
        let dt = series.t[i] - t1;
        let x = match fit.branch {
            viscowave::analysis::DecayBranch::Exponential => xi0 * dt,
            viscowave::analysis::DecayBranch::Polynomial => {
                (1.0 + xi0.powf(2.0 * q - 1.0) * dt).ln()
            }
            viscowave::analysis::DecayBranch::Improved => (1.0 + xi0.powf(q) * dt).ln(),
        };
        let envelope = fit.envelope_constant_c * (fit.envelope_slope * x).exp();
        let ratio = if envelope != 0.0 { series.e[i] / envelope } else { f64::NAN };
        out.push_str(&[series.t[i], series.e[i], envelope, ratio].map(num).join(","));
        out.push('\n');
    }
    out
}

fn convexity_csv(series: &RunSeries, eta: f64, mu: f64, t_cap: f64, p: f64) -> String {
    let (g, gp) = levine_series(
        &series.t,
        &series.l2_sq,
        &series.cum_hardy_sq,
        &series.phi,
        &series.cum_hardy_cross,
        series.init.hardy0,
        eta,
        mu,
        t_cap,
    );
    let mut out = String::from("t,g,gp,combination\n");
    let n = series.t.len();
    for i in 1..n.saturating_sub(1) {
        let gpp = (gp[i + 1] - gp[i - 1]) / (series.t[i + 1] - series.t[i - 1]);
        let comb = g[i] * gpp - (p + 2.0) / 4.0 * gp[i] * gp[i];
        out.push_str(&[series.t[i], g[i], gp[i], comb].map(num).join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Summary<'a> {
    status: &'a RunStatus,
    status_name: &'a str,
    t_obs: f64,
    record_count: usize,
    init: &'a InitialNorms,
    theta: f64,
    set: WellSet,
    d: f64,
    ell: f64,
    e_final: f64,
    scaled_amplitude: Option<f64>,
}

#[derive(Clone, Copy, PartialEq)]
pub enum RunScope {
    /// simulate: all artifacts plus whichever report applies.
    Full,
    /// decay-report: requires a completed run.
    DecayOnly,
    /// blowup-report: requires a blown-up run.
    BlowupOnly,
}

/// Per-run facts the sweep aggregates into one CSV row.
pub struct RunOutcome {
    pub status: RunStatus,
    pub t_obs: f64,
    pub e0: f64,
    pub set: WellSet,
    pub fitted_slope: Option<f64>,
    pub report_error: Option<String>,
}

pub fn cmd_run(
    config_path: &Path,
    out_dir: &Path,
    cli_seed: Option<u64>,
    scope: RunScope,
) -> Result<u8, Failure> {
    let (config, sha) = load_config(config_path)?;
    let outcome = run_to_dir(config, sha, cli_seed, out_dir, scope)?;
    if let Some(message) = outcome.report_error {
        return Err(Failure::numerical(message));
    }
    match (scope, &outcome.status) {
        (RunScope::DecayOnly, RunStatus::Completed) => Ok(EXIT_OK),
        (RunScope::DecayOnly, other) => Err(Failure::numerical(format!(
            "decay report needs a completed run, got {}",
            status_name(other)
        ))),
        (RunScope::BlowupOnly, RunStatus::BlewUp { .. }) => Ok(EXIT_OK),
        (RunScope::BlowupOnly, other) => Err(Failure::numerical(format!(
            "blow-up report needs a blown-up run, got {}",
            status_name(other)
        ))),
        (RunScope::Full, RunStatus::Completed | RunStatus::BlewUp { .. }) => Ok(EXIT_OK),
        (RunScope::Full, other) => {
            Err(Failure::numerical(format!("run ended with {}", status_name(other))))
        }
    }
}

/// Runs one prepared experiment into `out_dir` and reports what happened.
/// Non-completed statuses are data here, not errors: everything observable
/// is still written and the caller decides the exit code.
pub fn run_to_dir(
    config: ExperimentConfig,
    config_sha: String,
    cli_seed: Option<u64>,
    out_dir: &Path,
    scope: RunScope,
) -> Result<RunOutcome, Failure> {
    let prep = prepare(config, config_sha, cli_seed)?;
    let mut out = OutputDir::create(out_dir)?;
    out.write_json("config.json", &prep.config)?;
    if scope == RunScope::Full {
        out.write_json("certificate.json", &prep.certificate)?;
        out.write_json("well.json", &prep.well)?;
        out.write_json("classification.json", &prep.classification)?;
    }

    let solver_cfg: SolverConfig = prep.config.solver;
    let traj =
        run(&prep.mesh, &prep.config.problem, &prep.config.kernel, &prep.u0, &prep.v0, &solver_cfg)
            .map_err(|e| Failure::numerical(format!("solver: {e}")))?;
    if scope == RunScope::Full {
        out.write_text("records.csv", &records_csv(&traj))?;
        out.write_text("aux.csv", &aux_csv(&traj))?;
    }

    let series = RunSeries::from(&traj);
    let analysis = prep.config.analysis;
    let p = prep.config.problem.p;
    let mut report_error: Option<String> = None;
    let mut fitted_slope = None;
    match traj.status {
        RunStatus::Completed if scope != RunScope::BlowupOnly => {
            let report = fit_decay(&series, &prep.config.kernel, &analysis.decay_params())
                .map_err(|e| Failure::numerical(format!("decay fit: {e}")))?;
            fitted_slope = report.fit.as_ref().map(|f| f.fitted_slope);
            out.write_json("decay_report.json", &report)?;
            if let Some(fit) = &report.fit {
                out.write_text(
                    "decay_fit.csv",
                    &decay_fit_csv(&series, fit, report.q, prep.config.kernel.xi0(), report.t1),
                )?;
            }
        }
        RunStatus::BlewUp { .. } if scope != RunScope::DecayOnly => {
            match blowup_report(
                &series,
                &prep.config.problem,
                &prep.config.kernel,
                &prep.well,
                &analysis.eta_mu_search,
            ) {
                Ok(report) => {
                    let eta = report.eta_star.unwrap_or(1.0);
                    let mu = report.mu_star.filter(|&m| m > 0.0).unwrap_or(1.0);
                    out.write_text(
                        "convexity.csv",
                        &convexity_csv(&series, eta, mu, report.t_obs, p),
                    )?;
                    out.write_json("blowup_report.json", &report)?;
                }
                Err(e) => report_error = Some(format!("blow-up report: {e}")),
            }
        }
        _ => {}
    }

    let e_final = traj.records.last().map(|r| r.e).unwrap_or(0.0);
    let summary = Summary {
        status: &traj.status,
        status_name: status_name(&traj.status),
        t_obs: traj.t_obs,
        record_count: traj.records.len(),
        init: &traj.init,
        theta: prep.classification.theta,
        set: prep.classification.set,
        d: prep.well.d,
        ell: prep.ell,
        e_final,
        scaled_amplitude: prep.scaled_amplitude,
    };
    out.write_json("summary.json", &summary)?;
    out.finish(&prep.config_sha, status_name(&traj.status))?;

    Ok(RunOutcome {
        status: traj.status,
        t_obs: traj.t_obs,
        e0: traj.init.e0,
        set: prep.classification.set,
        fitted_slope,
        report_error,
    })
}

pub fn cmd_well_depth(
    config_path: &Path,
    out_dir: &Path,
    cli_seed: Option<u64>,
) -> Result<u8, Failure> {
    let (config, sha) = load_config(config_path)?;
    let prep = prepare(config, sha, cli_seed)?;
    let mut out = OutputDir::create(out_dir)?;
    out.write_json("config.json", &prep.config)?;
    out.write_json("certificate.json", &prep.certificate)?;
    out.write_json("well.json", &prep.well)?;
    let mut csv = String::from("r,value\n");
    for (i, &r) in prep.mesh.nodes.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", num(r), num(prep.well.minimizer[i])));
    }
    out.write_text("minimizer.csv", &csv)?;
    out.finish(&prep.config_sha, "ok")?;
    Ok(EXIT_OK)
}

pub fn cmd_classify(
    config_path: &Path,
    out_dir: &Path,
    cli_seed: Option<u64>,
) -> Result<u8, Failure> {
    let (config, sha) = load_config(config_path)?;
    let prep = prepare(config, sha, cli_seed)?;
    let mut out = OutputDir::create(out_dir)?;
    out.write_json("config.json", &prep.config)?;
    out.write_json("certificate.json", &prep.certificate)?;
    out.write_json("well.json", &prep.well)?;
    out.write_json("classification.json", &prep.classification)?;
    out.finish(&prep.config_sha, "ok")?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MmsSummary {
    coarse: MmsReport,
    fine: MmsReport,
    order: f64,
    pass: bool,
}

pub fn cmd_mms(config_path: &Path, out_dir: Option<&Path>) -> Result<u8, Failure> {
    let (config, sha) = load_config(config_path)?;
    let mms = config
        .mms
        .as_ref()
        .ok_or_else(|| Failure::config("mms command needs an \"mms\" section in the config"))?;
    let problem = &config.problem;
    let ms = ManufacturedSolution {
        amplitude: mms.amplitude,
        omega: mms.omega,
        radial_offset: mms.radial_offset,
    };
    let mut reports = Vec::new();
    for cells in [mms.cells, 2 * mms.cells] {
        let mesh = RadialMesh::new(problem.dim, cells, problem.radius)
            .map_err(|e| Failure::config(e.to_string()))?;
        let mut cfg = config.solver;
        cfg.dt0 = mesh.h * mms.dt_frac;
        cfg.cfl_safety = 1.0;
        cfg.t_end = mms.t_end;
        cfg.first_order_start = mms.first_order_start;
        let report = run_mms(&mesh, problem, &config.kernel, &ms, &cfg).map_err(|e| match e {
            CoreError::InvalidInput(_) => Failure::config(e.to_string()),
            other => Failure::numerical(other.to_string()),
        })?;
        reports.push(report);
    }
    let order = convergence_order(reports[0].rel_l2_error, reports[1].rel_l2_error);
    let pass = order >= 1.8;
    println!(
        "mms: N = {} error {:.6e} | N = {} error {:.6e} | observed L2 order {:.3} ({})",
        reports[0].cells,
        reports[0].rel_l2_error,
        reports[1].cells,
        reports[1].rel_l2_error,
        order,
        if pass { "pass" } else { "below 1.8" },
    );
    if let Some(dir) = out_dir {
        let mut out = OutputDir::create(dir)?;
        out.write_json(
            "mms.json",
            &MmsSummary { coarse: reports[0], fine: reports[1], order, pass },
        )?;
        out.finish(&sha, if pass { "ok" } else { "order_failure" })?;
    }
    Ok(if pass { EXIT_OK } else { EXIT_MMS_ORDER })
}
