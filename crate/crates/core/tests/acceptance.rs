//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test -p iss-lyap --test acceptance -- --nocapture`.

mod common;

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use iss_lyap::compfunc::{ComparisonFunction, KlFunction};
use iss_lyap::evolution::{
    close_loop, solve_mild, DisturbanceSignal, InputSignal, Nonlinearity, SemilinearSystem, SolverConfig, StepRule,
};
use iss_lyap::harness::{constant_inputs, convolution_limit_check, iss_estimate, iss_falsify, switched_inputs};
use iss_lyap::harness::{FalsifyBudget, FalsifyOutcome, IssOutcome};
use iss_lyap::lyap_linear::{
    check_dissipation_gamma, check_dissipation_integral, check_gamma_norm, check_lipschitz_constants, dini_derivative,
    dissipation_samples, v_integral, LinearSystem, LyapunovEvaluator, DEFAULT_REL_TOL,
};
use iss_lyap::sampling;
use iss_lyap::semigroup::{State, TOL_EXP};
use iss_lyap::wurs::{simulate_runs, synthesize_feedback, verify_ugas, DisturbanceKind};
use nalgebra::DMatrix;

/// Checks of one criterion; prints a single line and fails the test if any check failed.
struct Criterion {
    id: u32,
    title: &'static str,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Self {
        Self {
            id,
            title,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn within(&mut self, elapsed: Duration, limit_s: f64, what: &str) {
        self.check(
            elapsed.as_secs_f64() < limit_s,
            format!("{what} {:.2}s < {limit_s}s", elapsed.as_secs_f64()),
        );
    }

    fn finish(self) {
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        let detail = if self.failures.is_empty() {
            self.notes.join("; ")
        } else {
            self.failures.join("; ")
        };
        println!("criterion {} [{status}] {}: {detail}", self.id, self.title);
        assert!(self.failures.is_empty(), "criterion {} failed: {detail}", self.id);
    }
}

fn scalar_plant(a: f64) -> SemilinearSystem {
    SemilinearSystem::linear(scalar_gen(a), DMatrix::from_element(1, 1, 1.0))
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn criterion_1_integral_oracle() {
    let mut c = Criterion::new(1, "integral functional oracles");
    let scalar = certified(scalar_gen(-1.0));
    let start = Instant::now();
    let v = v_integral(&scalar, &s(1.0), DEFAULT_REL_TOL).unwrap().value;
    c.within(start.elapsed(), 1.0, "scalar");
    c.check((v - 0.5).abs() <= 1e-6, format!("scalar V(1) = {v:.12}"));

    let heat = certified(heat_gen(16));
    let mut e1 = State::zeros(16);
    e1[0] = 1.0;
    let start = Instant::now();
    let v = v_integral(&heat, &e1, DEFAULT_REL_TOL).unwrap().value;
    c.within(start.elapsed(), 1.0, "heat");
    let exact = 1.0 / (2.0 * std::f64::consts::PI.powi(2));
    let rel = (v - exact).abs() / exact;
    c.check(rel <= 1e-4, format!("heat V(e1) rel err {rel:.2e}"));
    c.finish();
}

#[test]
fn criterion_2_integral_dissipation() {
    let mut c = Criterion::new(2, "integral dissipation inequality");
    for (name, sys) in exemplars() {
        let samples = dissipation_samples(&sys, 50, 2);
        let rep = check_dissipation_integral(&sys, &samples, sys.default_epsilon()).unwrap();
        let worst = rep
            .records
            .iter()
            .map(|r| r.margin + 1e-6 * r.rhs.abs())
            .fold(f64::INFINITY, f64::min);
        c.check(
            rep.records.len() == 50 && worst >= 0.0,
            format!("{name} min margin {:.3e}", rep.min_margin()),
        );
    }
    let sys = certified(scalar_gen(-1.0));
    let v = LyapunovEvaluator::integral(&sys, DEFAULT_REL_TOL).unwrap();
    let h_seq = [1e-4, 1e-5, 1e-6, 1e-7];
    let h_min = h_seq[3];
    let mut worst: f64 = 0.0;
    for (x, u0) in [(1.0, 0.0), (0.7, 1.3), (-2.0, 0.5), (1.5, -1.5), (0.2, 3.0)] {
        let d = dini_derivative(
            &v,
            &sys.semilinear(),
            &s(x),
            &InputSignal::constant(s(u0)),
            &h_seq,
            &SolverConfig::default(),
        )
        .unwrap();
        worst = worst.max((d.extrapolated - (-x * x + x * u0)).abs());
    }
    c.check(
        worst <= 2.0 * h_min,
        format!("scalar Dini vs -x^2 + x u0 err {worst:.2e}"),
    );
    c.finish();
}

#[test]
fn criterion_3_gamma_functional() {
    let mut c = Criterion::new(3, "weighted sup functional");
    for (name, sys) in exemplars() {
        let gamma = sys.lambda() / 2.0;
        let rep = check_gamma_norm(&sys, gamma, 20, 20, 3).unwrap();
        c.check(
            rep.samples == 400 && rep.max_decay_ratio <= 1.0 + 1e-8,
            format!("{name} decay ratio {:.9}", rep.max_decay_ratio),
        );
        c.check(
            rep.min_lower_ratio >= 1.0 && rep.max_upper_ratio <= 1.0 + 1e-6,
            format!(
                "{name} min V/|x| {:.4}, max V/(M|x|) {:.4}",
                rep.min_lower_ratio, rep.max_upper_ratio
            ),
        );
        let diss = check_dissipation_gamma(&sys, gamma, &dissipation_samples(&sys, 50, 4)).unwrap();
        let ok = diss.records.len() == 50 && diss.records.iter().all(|r| r.margin >= -1e-6 * r.rhs.abs());
        c.check(ok, format!("{name} dissipation min margin {:.3e}", diss.min_margin()));
    }
    c.finish();
}

#[test]
fn criterion_4_lipschitz_constants() {
    let mut c = Criterion::new(4, "Lipschitz constants");
    for (name, sys) in exemplars() {
        let rep = check_lipschitz_constants(&sys, 1.0, 200, sys.lambda() / 2.0).unwrap();
        let v_ok = rep.v_sup <= rep.v_bound * (1.0 + 1e-3);
        let vg_ok = rep.vg_sup <= sys.m() * (1.0 + 1e-3);
        c.check(
            v_ok && vg_ok && rep.pairs_used == 200,
            format!(
                "{name} V {:.4}/{:.4}, Vg {:.4}/{:.4}",
                rep.v_sup,
                rep.v_bound,
                rep.vg_sup,
                sys.m()
            ),
        );
        if name == "scalar" {
            c.check(rep.v_sup >= 0.99, format!("scalar tightness {:.4}", rep.v_sup));
        }
    }
    c.finish();
}

#[test]
fn criterion_5_convolution_limit() {
    let mut c = Criterion::new(5, "input average convergence");
    let sys = certified(scalar_gen(-1.0));
    let rep = convolution_limit_check(&sys, &InputSignal::constant(s(1.0)), &[1e-2, 1e-3, 1e-4]).unwrap();
    for (h, e) in &rep.errors {
        let oracle = (1.0 - (1.0 - (-h).exp()) / h).abs();
        c.check(
            (e - h / 2.0).abs() <= 0.1 * h / 2.0 && (e - oracle).abs() <= 1e-9 * oracle.max(1e-300),
            format!("h={h:e} err {e:.4e}"),
        );
    }
    let order = rep.order.unwrap_or(f64::NAN);
    c.check((0.9..=1.1).contains(&order), format!("order {order:.4}"));
    c.finish();
}

#[test]
fn criterion_6_feedback_synthesis() {
    let mut c = Criterion::new(6, "feedback synthesis and closed loop");
    let start = Instant::now();
    let syn = synthesize_feedback(&KlFunction::exp_family(1.0, 1.0), &ComparisonFunction::identity()).unwrap();
    c.check(syn.sigma.linear_slope() == Some(1.0 / 6.0), "sigma = r/6");

    let plant = scalar_plant(-1.0);
    let cls = close_loop(&plant, syn.feedback(plant.generator().norm_kind()));
    let x0s: Vec<State> = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0].map(s).to_vec();
    let mut family = vec![DisturbanceKind::Plus, DisturbanceKind::Minus];
    family.extend((0..20).map(|k| DisturbanceKind::Random {
        seed: 100 + k,
        switch_dt: 0.2,
    }));
    let cfg = SolverConfig {
        rule: StepRule::ExponentialTrapezoid,
        max_step: 5e-3,
        ..Default::default()
    };
    let runs = simulate_runs(&cls, &x0s, &family, 12.0, &cfg).unwrap();
    let r_grid = [0.5, 1.0, 2.0];
    let eps_grid = [0.01, 0.1, 0.5];
    let rep = verify_ugas(&cls, Some(&syn), &runs, &r_grid, &eps_grid).unwrap();
    let small = rep.ugs.max_small_feedback.unwrap();
    c.check(
        runs.len() == 7 * 22 && small <= 0.0,
        format!("small-feedback max {small:.3e}"),
    );
    let excess = rep.ugs.max_excess_bound.unwrap();
    c.check(excess <= 1e-6, format!("bound excess {excess:.3e}"));
    let env = rep.ugs.max_envelope_ratio.unwrap();
    c.check(env <= 1.0 + 1e-6, format!("envelope ratio {env:.4}"));
    let mut tau_ok = true;
    for r in r_grid {
        for e in eps_grid {
            let oracle = (r / e).ln().max(0.0) / (5.0 / 6.0);
            tau_ok &= rep.ugatt.tau_at(r, e).is_some_and(|t| t <= oracle * 1.05);
        }
    }
    c.check(tau_ok, "attractivity times within oracle");
    c.within(start.elapsed(), 30.0, "runtime");
    c.finish();
}

#[test]
fn criterion_7_equivalence_chain() {
    let mut c = Criterion::new(7, "equivalence experiment");
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    for (file, expected) in [
        ("scalar_equivalence.toml", 0),
        ("heat_equivalence.toml", 0),
        ("jordan_equivalence.toml", 0),
        ("unstable_equivalence.toml", 2),
    ] {
        let out = tmp.path().join(file);
        let code = Command::new(env!("CARGO_BIN_EXE_isslyap"))
            .arg("--config")
            .arg(configs_dir().join(file))
            .arg("--out")
            .arg(&out)
            .arg("--quiet")
            .status()
            .unwrap()
            .code();
        c.check(code == Some(expected), format!("{file} exit {code:?}"));
        if expected == 2 {
            let table = std::fs::read_to_string(out.join("equivalence.csv")).unwrap_or_default();
            let fails_at_ii = table.lines().any(|l| l.starts_with("ii,") && l.contains(",fail,"));
            c.check(
                fails_at_ii && out.join("divergence.csv").exists(),
                "unstable fails at (ii) with evidence",
            );
        }
    }
    c.within(start.elapsed(), 120.0, "total runtime");
    c.finish();
}

#[test]
fn criterion_8_iss_gain() {
    let mut c = Criterion::new(8, "ISS gain estimate and falsifier");
    for lambda in [0.5, 1.0, 2.0] {
        let plant = scalar_plant(-lambda);
        let levels = [0.25, 0.5, 1.0, 2.0];
        let horizon = 20.0 / lambda;
        let mut inputs = constant_inputs(1, &levels);
        inputs.extend(switched_inputs(1, &levels, 2, 0.2, horizon, 8).unwrap());
        let x0s: Vec<State> = [-1.0, 0.0, 0.5, 2.0].map(s).to_vec();
        match iss_estimate(&plant, &x0s, &inputs, horizon, &SolverConfig::default()).unwrap() {
            IssOutcome::Estimate(est) => {
                let ok = levels.iter().all(|s| {
                    let g = est.gain(*s);
                    g >= s / lambda && g <= 1.2 * s / lambda
                });
                c.check(ok, format!("lambda={lambda} gain at 1: {:.4}", est.gain(1.0)));
            }
            IssOutcome::NotIss(ev) => c.check(false, format!("lambda={lambda}: {}", ev.describe())),
        }
        let out = iss_falsify(
            &plant,
            &KlFunction::exp_family(1.0, lambda),
            &ComparisonFunction::linear(0.5 / lambda),
            &FalsifyBudget::default(),
            &SolverConfig::default(),
        )
        .unwrap();
        match out {
            FalsifyOutcome::Counterexample(cex) => c.check(
                cex.input_label.starts_with("const") && cex.norm > cex.bound,
                format!("lambda={lambda} rejected by {}", cex.input_label),
            ),
            FalsifyOutcome::Pass { .. } => c.check(false, format!("lambda={lambda} undersized gain survived")),
        }
    }
    c.finish();
}

#[test]
fn criterion_9_solver_properties() {
    let mut c = Criterion::new(9, "solver properties");
    let systems: Vec<(&str, LinearSystem)> = exemplars();
    let mut rng = sampling::rng(21);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let (_, sys) = &systems[k % 3];
        let g = sys.generator();
        let st: f64 = rand::Rng::random_range(&mut rng, 0.0..3.0);
        let tt: f64 = rand::Rng::random_range(&mut rng, 0.0..3.0);
        let x = sampling::on_sphere(&mut rng, sys.dim(), 1.0, g.norm_kind());
        let lhs = g.apply_semigroup(st + tt, &x).unwrap();
        let rhs = g.apply_semigroup(st, &g.apply_semigroup(tt, &x).unwrap()).unwrap();
        let scale = 1.0 + g.operator_norm(st + tt) + g.operator_norm(st) * g.operator_norm(tt);
        worst = worst.max(g.norm(&(lhs - rhs)) / scale);
    }
    c.check(worst <= 10.0 * TOL_EXP, format!("semigroup defect {worst:.2e}"));

    let f = Nonlinearity::new("u + 0.5 sin x", |x: &State, u: &State| u + x.map(|v| 0.5 * v.sin()))
        .with_lipschitz(|_| (0.5, 1.0));
    let plant = SemilinearSystem::new(scalar_gen(-1.0), f, 1);
    let u = InputSignal::constant(s(1.0));
    let solve = |h: f64| {
        solve_mild(&plant, &s(0.5), &u, 1.0, &SolverConfig::default().with_max_step(h))
            .unwrap()
            .final_state()[0]
    };
    let reference = solve(1e-6);
    let (e1, e2) = ((solve(0.02) - reference).abs(), (solve(0.01) - reference).abs());
    let ratio = e1 / e2;
    c.check((1.5..=2.5).contains(&ratio), format!("step-halving ratio {ratio:.3}"));

    let head = DisturbanceSignal::random(1, 0.1, 0.5, 3).unwrap().into_inner();
    let u1 = head.splice(0.5, &InputSignal::constant(s(2.0))).unwrap();
    let u2 = head.splice(0.5, &InputSignal::constant(s(-7.0))).unwrap();
    let t1 = solve_mild(&plant, &s(0.3), &u1, 1.0, &SolverConfig::default()).unwrap();
    let t2 = solve_mild(&plant, &s(0.3), &u2, 1.0, &SolverConfig::default()).unwrap();
    let k = t1.times.partition_point(|t| *t <= 0.5);
    let same = k > 0
        && k == t2.times.partition_point(|t| *t <= 0.5)
        && (0..k).all(|i| {
            t1.times[i].to_bits() == t2.times[i].to_bits() && t1.states[i][0].to_bits() == t2.states[i][0].to_bits()
        });
    c.check(same, format!("causality bitwise over {k} steps"));
    c.finish();
}
