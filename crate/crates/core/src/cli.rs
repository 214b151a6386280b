//! Command-line driver: dispatches a resolved [`RunConfig`] to its pipeline
//! and writes `manifest.toml` plus CSV tables into the output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Parser;
use toml::{Table, Value};

use crate::compfunc::{log_space, ComparisonFunction, KlFunction};
use crate::config::{parse_config, RunConfig, Task};
use crate::error::{Error, Result};
use crate::evolution::{close_loop, solve_mild, InputSignal};
use crate::harness::{
    constant_inputs, equivalence_experiment, iss_estimate, iss_falsify, switched_inputs, DivergenceEvidence,
    EquivalenceConfig, FalsifyBudget, FalsifyOutcome, IssOutcome,
};
use crate::lyap_linear::{
    check_dissipation_gamma, check_dissipation_integral, check_gamma_norm, check_lipschitz_constants,
    check_quadratic_bounds, dissipation_samples, v_gamma, v_integral, LinearSystem,
};
use crate::sampling;
use crate::semigroup::State;
use crate::wurs::{simulate_runs, synthesize_feedback, verify_ugas, DisturbanceKind};

/// Default output root when neither `--out` nor `output` is given.
pub const OUT_ENV: &str = "ISSLYAP_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass = 0,
    Error = 1,
    Violated = 2,
    Inconclusive = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn label(self) -> &'static str {
        match self {
            ExitStatus::Pass => "pass",
            ExitStatus::Error => "error",
            ExitStatus::Violated => "violated",
            ExitStatus::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "isslyap",
    version,
    about = "Lyapunov constructions and ISS checks for semilinear systems"
)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to `output` in the config, then `$ISSLYAP_OUT/<task>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `resynthesize` in the config.
    #[arg(long)]
    pub resynthesize: Option<u32>,
    /// Worker thread cap.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

/// Outcome of one run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub status: ExitStatus,
    pub summary: String,
    pub results: Table,
    pub artifacts: Vec<String>,
}

struct Outputs<'a> {
    dir: &'a Path,
    artifacts: Vec<String>,
}

impl Outputs<'_> {
    fn csv(&mut self, name: &str, write: impl FnOnce(BufWriter<File>) -> Result<()>) -> Result<()> {
        let file = File::create(self.dir.join(name))?;
        write(BufWriter::new(file))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn rows(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        self.csv(name, |f| {
            let mut w = csv::Writer::from_writer(f);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        })
    }
}

struct Results(Table);

impl Results {
    fn num(&mut self, key: &str, v: f64) {
        self.0.insert(key.into(), Value::Float(v));
    }

    fn flag(&mut self, key: &str, v: bool) {
        self.0.insert(key.into(), Value::Boolean(v));
    }

    fn text(&mut self, key: &str, v: impl Into<String>) {
        self.0.insert(key.into(), Value::String(v.into()));
    }
}

fn verdict(ok: bool) -> ExitStatus {
    if ok {
        ExitStatus::Pass
    } else {
        ExitStatus::Violated
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

fn sample_states(cfg: &RunConfig, radii: &[f64], with_zero: bool) -> Result<Vec<State>> {
    let gen = cfg.generator()?;
    let mut rng = sampling::rng(cfg.seed);
    let mut out = Vec::new();
    if with_zero {
        out.push(State::zeros(gen.dim()));
    }
    for r in radii {
        for _ in 0..cfg.grids.n_directions {
            out.push(sampling::on_sphere(&mut rng, gen.dim(), *r, gen.norm_kind()));
        }
    }
    Ok(out)
}

fn write_divergence(out: &mut Outputs, ev: &DivergenceEvidence) -> Result<()> {
    out.rows(
        "divergence.csv",
        &["x0_norm", "input", "input_sup", "escape_time", "last_norm", "horizon"],
        [vec![
            f(ev.x0_norm),
            ev.input_label.clone(),
            f(ev.input_sup),
            ev.escape_time.map(f).unwrap_or_default(),
            f(ev.last_norm),
            f(ev.horizon),
        ]],
    )
}

fn linear_system(cfg: &RunConfig) -> Result<LinearSystem> {
    let gen = cfg.generator()?;
    let cert = cfg.certificate(&gen)?;
    LinearSystem::new(gen, cfg.b_matrix()?, cert)
}

fn candidate_pair(cfg: &RunConfig) -> Result<(KlFunction, ComparisonFunction)> {
    match &cfg.candidate {
        Some(c) => {
            let gain = if c.gain_power == 1.0 {
                ComparisonFunction::linear(c.gain)
            } else {
                ComparisonFunction::power(c.gain, c.gain_power)
            };
            Ok((KlFunction::exp_family(c.beta_m, c.beta_lambda), gain))
        }
        None => {
            let sys = linear_system(cfg)?;
            let (m, lambda) = (sys.m(), sys.lambda());
            Ok((
                KlFunction::exp_family(m, lambda),
                ComparisonFunction::linear(m * sys.b_norm() / lambda),
            ))
        }
    }
}

fn task_simulate(cfg: &RunConfig, out: &mut Outputs, res: &mut Results) -> Result<(ExitStatus, String)> {
    let plant = cfg.plant()?;
    let x0 = match &cfg.simulate.x0 {
        Some(v) => State::from_vec(v.clone()),
        None => {
            let mut e = State::zeros(plant.dim());
            e[0] = 1.0;
            let n = plant.norm(&e);
            e / n
        }
    };
    let u = match &cfg.simulate.u {
        Some(v) => InputSignal::constant(State::from_vec(v.clone())),
        None => InputSignal::zero(plant.input_dim()),
    };
    match solve_mild(&plant, &x0, &u, cfg.horizon(), &cfg.solver()) {
        Ok(tr) => {
            out.csv("trajectory.csv", |w| tr.to_csv(w))?;
            res.num("final_time", tr.final_time());
            res.num("final_norm", *tr.norms.last().unwrap());
            res.num("sup_norm", tr.sup_norm());
            res.num("steps", tr.stats.steps as f64);
            Ok((
                ExitStatus::Pass,
                format!("final norm {:.6e} at t = {}", tr.norms.last().unwrap(), tr.final_time()),
            ))
        }
        Err(Error::BlowUp {
            escape_time, last_norm, ..
        }) => {
            res.num("escape_time", escape_time);
            res.num("last_norm", last_norm);
            Ok((ExitStatus::Violated, format!("escape near t = {escape_time}")))
        }
        Err(e) => Err(e),
    }
}

fn task_certify(cfg: &RunConfig, out: &mut Outputs, res: &mut Results) -> Result<(ExitStatus, String)> {
    let gen = cfg.generator()?;
    match gen.certify_decay(&cfg.decay_config()) {
        Ok(c) => {
            out.rows(
                "certificate.csv",
                &["t", "norm", "bound", "slack"],
                c.sample_times
                    .iter()
                    .zip(&c.norms)
                    .zip(&c.slacks)
                    .map(|((t, n), s)| vec![f(*t), f(*n), f(c.bound(*t)), f(*s)]),
            )?;
            res.num("m", c.m);
            res.num("lambda", c.lambda);
            res.num("min_slack", c.min_slack());
            Ok((ExitStatus::Pass, format!("|T_t| <= {:.6} exp(-{:.6} t)", c.m, c.lambda)))
        }
        Err(e @ Error::NoDecay { .. }) => {
            res.text("failure", e.to_string());
            Ok((ExitStatus::Violated, e.to_string()))
        }
        Err(e) => Err(e),
    }
}

fn gamma_of(cfg: &RunConfig, sys: &LinearSystem) -> Result<f64> {
    let gamma = cfg.lyapunov.gamma.unwrap_or(sys.lambda() / 2.0);
    if gamma >= sys.lambda() {
        return Err(Error::Config(format!(
            "lyapunov.gamma = {gamma} must be strictly below the certificate decay rate lambda = {}",
            sys.lambda()
        )));
    }
    Ok(gamma)
}

fn task_build_lyap(cfg: &RunConfig, out: &mut Outputs, res: &mut Results) -> Result<(ExitStatus, String)> {
    let sys = linear_system(cfg)?;
    let gamma = gamma_of(cfg, &sys)?;
    let samples = dissipation_samples(&sys, cfg.grids.n_samples, cfg.seed);
    let mut rows = Vec::new();
    for (i, (x, _)) in samples.iter().enumerate() {
        let v = v_integral(&sys, x, cfg.tolerances.v_tol)?;
        let vg = v_gamma(&sys, gamma, x)?;
        rows.push(vec![i.to_string(), f(sys.norm(x)), f(v.value), f(v.error_bar), f(vg)]);
    }
    out.rows(
        "lyapunov.csv",
        &["sample", "x_norm", "v", "v_error_bar", "v_gamma"],
        rows,
    )?;
    let quad = check_quadratic_bounds(&sys, cfg.grids.n_samples)?;
    let r = cfg.grids.r_grid.iter().cloned().fold(0.0, f64::max);
    let lip = check_lipschitz_constants(&sys, r, cfg.grids.n_pairs, gamma)?;
    let norm_g = check_gamma_norm(&sys, gamma, 20, 20, cfg.seed)?;
    res.num("m", sys.m());
    res.num("lambda", sys.lambda());
    res.num("gamma", gamma);
    res.num("quadratic_upper_constant", quad.upper_constant);
    res.num("quadratic_max_ratio", quad.max_ratio);
    res.num("lipschitz_radius", r);
    res.num("v_lipschitz_sup", lip.v_sup);
    res.num("v_lipschitz_bound", lip.v_bound);
    res.num("vg_lipschitz_sup", lip.vg_sup);
    res.num("vg_lipschitz_bound", lip.vg_bound);
    res.num("vg_max_decay_ratio", norm_g.max_decay_ratio);
    res.num("vg_max_upper_ratio", norm_g.max_upper_ratio);
    let ok = quad.passed && lip.passed && norm_g.passed;
    Ok((
        verdict(ok),
        format!(
            "bounds {}, Lipschitz {}, V^gamma norm {}",
            quad.passed, lip.passed, norm_g.passed
        ),
    ))
}

fn task_dissipation(cfg: &RunConfig, out: &mut Outputs, res: &mut Results) -> Result<(ExitStatus, String)> {
    let sys = linear_system(cfg)?;
    let gamma = gamma_of(cfg, &sys)?;
    let eps = cfg.lyapunov.epsilon.unwrap_or(sys.default_epsilon());
    let samples = dissipation_samples(&sys, cfg.grids.n_samples, cfg.seed);
    let integral = check_dissipation_integral(&sys, &samples, eps)?;
    let weighted = check_dissipation_gamma(&sys, gamma, &samples)?;
    out.csv("dissipation_integral.csv", |w| integral.to_csv(w))?;
    out.csv("dissipation_gamma.csv", |w| weighted.to_csv(w))?;
    res.num("epsilon", eps);
    res.num("gamma", gamma);
    res.num("integral_worst_relative_margin", integral.worst_relative_margin());
    res.num("gamma_worst_relative_margin", weighted.worst_relative_margin());
    res.flag("integral_passed", integral.passed);
    res.flag("gamma_passed", weighted.passed);
    Ok((
        verdict(integral.passed && weighted.passed),
        format!("integral {}, weighted {}", integral.passed, weighted.passed),
    ))
}

fn task_synthesize(cfg: &RunConfig, out: &mut Outputs, res: &mut Results) -> Result<(ExitStatus, String)> {
    let (beta, gamma) = candidate_pair(cfg)?;
    let syn = synthesize_feedback(&beta, &gamma)?;
    let grid = log_space(1e-3, 1e3, 61);
    let mut rows = Vec::new();
    for r in &grid {
        rows.push(vec![
            f(*r),
            f(syn.alpha.eval(*r)?),
            f(syn.sigma.eval_extended(*r)),
            f(syn.psi.eval_extended(*r)),
            f(syn.chi.eval_extended(*r)),
        ]);
    }
    out.rows("synthesis.csv", &["r", "alpha", "sigma", "psi", "chi"], rows)?;
    if let Some(c) = syn.sigma.linear_slope() {
        res.num("sigma_slope", c);
    }
    if let Some(c) = syn.psi.linear_slope() {
        res.num("psi_slope", c);
    }
    Ok((ExitStatus::Pass, format!("psi(1) = {:.6}", syn.psi.eval_extended(1.0))))
}

fn task_ugas(cfg: &RunConfig, out: &mut Outputs, res: &mut Results) -> Result<(ExitStatus, String)> {
    let (beta, gamma) = candidate_pair(cfg)?;
    let mut syn = synthesize_feedback(&beta, &gamma)?;
    let plant = cfg.plant()?;
    let x0s = sample_states(cfg, &cfg.grids.r_grid, true)?;
    let family = DisturbanceKind::standard_family(cfg.grids.n_random, cfg.grids.switch_dt, cfg.seed);
    let mut halvings = 0;
    let (runs, rep) = loop {
        let cls = close_loop(&plant, syn.feedback(plant.generator().norm_kind()));
        let runs = simulate_runs(&cls, &x0s, &family, cfg.horizon(), &cfg.solver())?;
        let rep = verify_ugas(&cls, Some(&syn), &runs, &cfg.grids.r_grid, &cfg.grids.eps_grid)?;
        if rep.passed || halvings >= cfg.resynthesize {
            break (runs, rep);
        }
        syn = syn.shrunk(0.5)?;
        halvings += 1;
    };
    res.num("resyntheses", f64::from(halvings));
    out.csv("ugatt.csv", |w| rep.ugatt.to_csv(w))?;
    out.csv("ugas_fit.csv", |w| rep.fit_to_csv(w))?;
    res.num("runs", runs.len() as f64);
    res.num("m_hat", rep.m_hat);
    res.num("lambda_hat", rep.lambda_hat);
    res.num("coverage", rep.coverage);
    if let Some(m) = rep.ugs.max_small_feedback {
        res.num("max_small_feedback_margin", m);
    }
    res.flag("ugs", rep.ugs.passed);
    res.flag("ugatt", rep.ugatt.passed);
    let unsettled = rep.ugatt.tau.iter().flatten().any(|t| t.is_none());
    let status = if rep.passed {
        ExitStatus::Pass
    } else if rep.ugs.passed && unsettled {
        ExitStatus::Inconclusive
    } else {
        ExitStatus::Violated
    };
    let note = if status == ExitStatus::Inconclusive {
        " (extend grids.horizon)"
    } else {
        ""
    };
    Ok((
        status,
        format!("UGS {}, UGATT {}{note}", rep.ugs.passed, rep.ugatt.passed),
    ))
}

fn task_estimate(cfg: &RunConfig, out: &mut Outputs, res: &mut Results) -> Result<(ExitStatus, String)> {
    let plant = cfg.plant()?;
    let x0s = sample_states(cfg, &cfg.grids.x0_radii, true)?;
    let g = &cfg.grids;
    let mut inputs = constant_inputs(plant.input_dim(), &g.input_levels);
    inputs.extend(switched_inputs(
        plant.input_dim(),
        &g.input_levels,
        1,
        g.switch_dt,
        cfg.horizon(),
        cfg.seed,
    )?);
    match iss_estimate(&plant, &x0s, &inputs, cfg.horizon(), &cfg.solver())? {
        IssOutcome::Estimate(est) => {
            out.csv("iss_gain.csv", |w| est.gain_to_csv(w))?;
            out.csv("iss_residuals.csv", |w| est.residuals_to_csv(w))?;
            res.num("m_hat", est.m_hat);
            res.num("lambda_hat", est.lambda_hat);
            res.num("min_slack", est.min_slack());
            res.flag("degenerate", est.degenerate);
            let ok = est.residual_invariant_holds();
            Ok((
                verdict(ok),
                format!("beta_hat = {:.6} r exp(-{:.6} t)", est.m_hat, est.lambda_hat),
            ))
        }
        IssOutcome::NotIss(ev) => {
            write_divergence(out, &ev)?;
            res.text("evidence", ev.describe());
            Ok((ExitStatus::Violated, ev.describe()))
        }
    }
}

fn task_falsify(cfg: &RunConfig, out: &mut Outputs, res: &mut Results) -> Result<(ExitStatus, String)> {
    let plant = cfg.plant()?;
    let (beta, gamma) = candidate_pair(cfg)?;
    let g = &cfg.grids;
    let mut radii = vec![0.0];
    radii.extend(g.x0_radii.iter().copied());
    let budget = FalsifyBudget {
        x0_radii: radii,
        n_directions: g.n_directions,
        input_levels: g.input_levels.clone(),
        switched_per_level: 2,
        switch_dt: g.switch_dt,
        horizon: cfg.horizon(),
        seed: cfg.seed,
        form: cfg.candidate.as_ref().map(|c| c.form).unwrap_or_default(),
    };
    match iss_falsify(&plant, &beta, &gamma, &budget, &cfg.solver())? {
        FalsifyOutcome::Pass { samples, min_slack } => {
            res.num("samples", samples as f64);
            res.num("min_slack", min_slack);
            Ok((ExitStatus::Pass, format!("no violation in {samples} samples")))
        }
        FalsifyOutcome::Counterexample(c) => {
            out.csv("counterexample.csv", |w| c.to_csv(w))?;
            out.csv("counterexample_input.csv", |w| c.input.to_csv(w))?;
            res.text("input", c.input_label.clone());
            res.num("t", c.t);
            res.num("norm", c.norm);
            res.num("bound", c.bound);
            Ok((
                ExitStatus::Violated,
                format!(
                    "counterexample at t = {} under {}: {:.6} > {:.6}",
                    c.t, c.input_label, c.norm, c.bound
                ),
            ))
        }
    }
}

fn task_equivalence(cfg: &RunConfig, out: &mut Outputs, res: &mut Results) -> Result<(ExitStatus, String)> {
    let gen = cfg.generator()?;
    let ecfg = EquivalenceConfig {
        n_dissipation: cfg.grids.n_samples,
        n_lipschitz_pairs: cfg.grids.n_pairs,
        gamma: cfg.lyapunov.gamma,
        seed: cfg.seed,
        decay: cfg.decay_config(),
        solver: cfg.solver(),
        ..EquivalenceConfig::default()
    };
    let rep = equivalence_experiment(&gen, &cfg.b_matrix()?, &ecfg)?;
    out.csv("equivalence.csv", |w| rep.to_csv(w))?;
    if let Some(ev) = &rep.evidence {
        write_divergence(out, ev)?;
    }
    let mut lines = Vec::new();
    for it in &rep.items {
        res.text(&format!("item_{}", it.item.roman()), it.status.as_str());
        lines.push(format!(
            "({}) {}: {} {}",
            it.item.roman(),
            it.item.name(),
            it.status.as_str(),
            it.detail
        ));
    }
    Ok((verdict(rep.passed()), lines.join("\n")))
}

fn dispatch(cfg: &RunConfig, out: &mut Outputs, res: &mut Results) -> Result<(ExitStatus, String)> {
    match cfg.task {
        Task::Simulate => task_simulate(cfg, out, res),
        Task::CertifyDecay => task_certify(cfg, out, res),
        Task::BuildLyap => task_build_lyap(cfg, out, res),
        Task::VerifyDissipation => task_dissipation(cfg, out, res),
        Task::SynthesizeWurs => task_synthesize(cfg, out, res),
        Task::VerifyUgas => task_ugas(cfg, out, res),
        Task::EstimateIss => task_estimate(cfg, out, res),
        Task::FalsifyIss => task_falsify(cfg, out, res),
        Task::Equivalence => task_equivalence(cfg, out, res),
    }
}

fn module_of(e: &Error) -> &'static str {
    match e {
        Error::OutOfDomain { .. }
        | Error::RangeExceeded { .. }
        | Error::ClassIncompatible { .. }
        | Error::InvalidFunction(_) => "compfunc",
        Error::InvalidGenerator(_) | Error::DimensionMismatch { .. } | Error::NoDecay { .. } => "semigroup",
        Error::InvalidSignal(_) | Error::NonContraction { .. } | Error::BlowUp { .. } => "evolution",
        Error::InvalidLyapunov(_) => "lyap_linear",
        Error::Synthesis(_) => "wurs",
        Error::Harness(_) => "harness",
        Error::Config(_) | Error::Io(_) | Error::Csv(_) => "cli",
    }
}

/// Runs the configured task, writing artifacts and `manifest.toml` into `out_dir`.
///
/// Operational errors are reported with status [`ExitStatus::Error`] and still
/// produce a manifest.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    fs::create_dir_all(out_dir)?;
    let mut out = Outputs {
        dir: out_dir,
        artifacts: Vec::new(),
    };
    let mut res = Results(Table::new());
    let (status, summary) = match dispatch(cfg, &mut out, &mut res) {
        Ok(r) => r,
        Err(e) => {
            let msg = e.to_string();
            res.text("error", msg.clone());
            res.text("error_module", module_of(&e));
            (ExitStatus::Error, msg)
        }
    };
    let mut run = Table::new();
    run.insert("task".into(), Value::String(cfg.task.name().into()));
    run.insert("status".into(), Value::String(status.label().into()));
    run.insert("exit_code".into(), Value::Integer(status.code().into()));
    run.insert("seed".into(), Value::Integer(cfg.seed as i64));
    run.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
    run.insert(
        "artifacts".into(),
        Value::Array(out.artifacts.iter().cloned().map(Value::String).collect()),
    );
    let config: Table = toml::from_str(&cfg.to_toml_string()?).map_err(|e| Error::Config(e.to_string()))?;
    let mut manifest = Table::new();
    manifest.insert("run".into(), Value::Table(run));
    manifest.insert("results".into(), Value::Table(res.0.clone()));
    manifest.insert("config".into(), Value::Table(config));
    fs::write(
        out_dir.join("manifest.toml"),
        toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    Ok(RunReport {
        status,
        summary,
        results: res.0,
        artifacts: out.artifacts,
    })
}

/// Resolves the output directory: `--out`, then `output` in the config, then
/// `$ISSLYAP_OUT/<task>`, then `isslyap-out/<task>`.
pub fn output_dir(cli_out: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output {
        return p.clone();
    }
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("isslyap-out"), PathBuf::from);
    root.join(cfg.task.name())
}

/// Entry point of the `isslyap` binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let mut cfg = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("isslyap: {e}");
            return ExitStatus::Error.code();
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.resynthesize {
        cfg.resynthesize = n;
    }
    let out_dir = output_dir(cli.out.as_deref(), &cfg);
    let go = || run(&cfg, &out_dir);
    let result = match cli.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(go),
            Err(e) => {
                eprintln!("isslyap: cannot start {n} workers: {e}");
                return ExitStatus::Error.code();
            }
        },
        None => go(),
    };
    match result {
        Ok(rep) => {
            if !cli.quiet {
                println!("{} [{}] -> {}", cfg.task.name(), rep.status.label(), out_dir.display());
                println!("{}", rep.summary);
            }
            if rep.status == ExitStatus::Error {
                eprintln!("isslyap: {}", rep.summary);
            }
            rep.status.code()
        }
        Err(e) => {
            eprintln!("isslyap: {e}");
            ExitStatus::Error.code()
        }
    }
}
