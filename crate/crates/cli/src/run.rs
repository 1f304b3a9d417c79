//! Subcommand dispatch: wires the configuration into the solver stack and
//! emits text summaries plus CSV files.
//!
//! Exit codes: 0 success, 1 solver/verification/simulation failure, 2
//! configuration error. The last stdout line is always a single
//! machine-parseable `status=...` record.

use std::path::{Path, PathBuf};

use refract_core::{
    barrier, check_assumptions, diffusion::ShapeReport, discounted, hjb, models, sim,
    BarrierPair, BarrierSolution, Barriers, GridSpec, RewardModel, ScaleSpeedCache, SimConfig,
    SolveOpts, TolSpec,
};

use crate::config::{echo, parse_config, RunConfig};
use crate::output::{Csv, Precision};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Check,
    Solve,
    Hjb,
    Simulate,
    Discounted,
    Abelian,
    Sweep,
}

impl Subcommand {
    fn name(&self) -> &'static str {
        match self {
            Subcommand::Check => "check",
            Subcommand::Solve => "solve",
            Subcommand::Hjb => "hjb",
            Subcommand::Simulate => "simulate",
            Subcommand::Discounted => "discounted",
            Subcommand::Abelian => "abelian",
            Subcommand::Sweep => "sweep",
        }
    }
}

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub force: bool,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<refract_core::Error> for Failure {
    fn from(e: refract_core::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(format!("io error: {e}"))
    }
}

/// Run a subcommand against a configuration file; returns the process exit
/// code and prints the status line.
pub fn run(sub: Subcommand, config_path: &Path, overrides: &Overrides) -> i32 {
    let cmd = sub.name();
    match execute(sub, config_path, overrides) {
        Ok(status_fields) => {
            println!("status=ok cmd={cmd} {status_fields}");
            0
        }
        Err(Failure::Config(msg)) => {
            println!("status=error cmd={cmd} kind=config msg=\"{msg}\"");
            2
        }
        Err(Failure::Run(msg)) => {
            println!("status=error cmd={cmd} kind=run msg=\"{msg}\"");
            1
        }
    }
}

struct Session {
    cfg: RunConfig,
    cache: ScaleSpeedCache,
    reward: RewardModel,
    precision: Precision,
    out_dir: PathBuf,
}

impl Session {
    fn shape(&self) -> Result<ShapeReport, Failure> {
        Ok(check_assumptions(&self.cache, &self.reward, 2048)?)
    }

    fn solve(&self) -> Result<(ShapeReport, BarrierSolution), Failure> {
        let shape = self.shape()?;
        let opts = SolveOpts {
            x_tol: self.cfg.solver.x_tol,
            newton_polish: self.cfg.solver.newton_polish,
            force: self.cfg.solver.force,
            ..Default::default()
        };
        let sol = barrier::solve_barriers(&self.cache, &self.reward, &shape, &opts)?;
        Ok((shape, sol))
    }
}

fn execute(sub: Subcommand, config_path: &Path, overrides: &Overrides) -> Result<String, Failure> {
    let mut cfg = parse_config(config_path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(out) = &overrides.out {
        cfg.output.dir = out.display().to_string();
    }
    if let Some(seed) = overrides.seed {
        cfg.sim.seed = seed;
    }
    if overrides.force {
        cfg.solver.force = true;
    }

    // Echo the effective configuration for reproducibility.
    println!("# effective configuration");
    print!("{}", echo(&cfg));
    println!("# end configuration");

    let model = models::make_model(
        &cfg.model.name,
        &cfg.model.params,
        Some(cfg.model.domain_cap),
        cfg.model.exploratory,
    )
    .map_err(|e| Failure::Config(e.to_string()))?;
    let reward = models::make_reward(
        &cfg.reward.name,
        &[
            ("kappa".to_string(), cfg.reward.kappa),
            ("p".to_string(), cfg.reward.p),
        ],
        cfg.reward.c1,
        cfg.reward.c2,
    )
    .map_err(|e| Failure::Config(e.to_string()))?;

    let out_dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&out_dir)?;
    let session = Session {
        precision: Precision(cfg.output.precision),
        cache: ScaleSpeedCache::new(model),
        reward,
        out_dir,
        cfg,
    };

    match sub {
        Subcommand::Check => cmd_check(&session),
        Subcommand::Solve => cmd_solve(&session),
        Subcommand::Hjb => cmd_hjb(&session),
        Subcommand::Simulate => cmd_simulate(&session),
        Subcommand::Discounted => cmd_discounted(&session),
        Subcommand::Abelian => cmd_abelian(&session),
        Subcommand::Sweep => cmd_sweep(&session),
    }
}

fn cmd_check(s: &Session) -> Result<String, Failure> {
    let report = s.shape()?;
    let p = s.precision;
    println!("shape: xhat1 = {}, xhat2 = {}, b0 = {}", p.fmt(report.xhat1), p.fmt(report.xhat2), p.fmt(report.b0));
    let flags = &report.flags;
    let rows: [(&str, bool); 9] = [
        ("pi2_nonpositive_at_origin", flags.pi2_nonpositive_at_origin),
        ("pi1_negative_tail", flags.pi1_negative_tail),
        ("positive_lambda_pair", flags.positive_lambda_pair),
        ("origin_anchored", flags.origin_anchored),
        ("pi_unimodal", flags.pi_unimodal),
        ("small_barrier_profit", flags.small_barrier_profit),
        ("h_concave_increasing", flags.h_concave_increasing),
        ("finite_legendre", flags.finite_legendre),
        ("inada_at_zero", flags.inada_at_zero),
    ];
    let mut csv = Csv::create(&s.out_dir, "check.csv", &["item", "value", "witness_x"], p);
    for (name, value) in rows {
        println!("flag {name} = {value}");
        csv.labeled_row(&format!("flag:{name}"), &[f64::from(u8::from(value)), f64::NAN]);
    }
    for v in &report.violations {
        println!("violation: {} at x = {} (value {})", v.check, p.fmt(v.witness_x), p.fmt(v.value));
        csv.labeled_row(&format!("violation:{}", v.check), &[v.value, v.witness_x]);
    }
    let path = csv.write()?;
    println!("wrote {}", path.display());
    Ok(format!(
        "all_flags={} solver_flags={}",
        flags.all(),
        flags.solver_ready()
    ))
}

fn cmd_solve(s: &Session) -> Result<String, Failure> {
    let (_, sol) = s.solve()?;
    let p = s.precision;
    println!("case = {}", sol.case_tag);
    println!("a_star = {}", p.fmt(sol.pair.a()));
    println!("b_star = {}", p.fmt(sol.pair.b()));
    println!("lambda_star = {}", p.fmt(sol.lambda_star));
    println!(
        "foc_residuals = ({}, {})",
        p.fmt(sol.foc_residuals.0),
        p.fmt(sol.foc_residuals.1)
    );
    println!(
        "grad = ({}, {})",
        p.fmt(sol.grad_at_solution.0),
        p.fmt(sol.grad_at_solution.1)
    );
    println!("iterations = {} method = {}", sol.iterations, sol.method);
    for d in &sol.diagnostics {
        println!("note: {d}");
    }
    Ok(format!(
        "a_star={} b_star={} lambda_star={}",
        p.fmt(sol.pair.a()),
        p.fmt(sol.pair.b()),
        p.fmt(sol.lambda_star)
    ))
}

fn cmd_hjb(s: &Session) -> Result<String, Failure> {
    let (_, sol) = s.solve()?;
    let spec = GridSpec {
        x_lo: s.cfg.grid.hjb_lo,
        x_hi: s.cfg.grid.hjb_hi,
        n: s.cfg.grid.hjb_points,
    };
    let grid = hjb::build_hjb(&s.cache, &s.reward, &sol, &spec)?;
    let report = hjb::verify_hjb(&s.cache, &s.reward, &grid, &TolSpec::default())?;
    let p = s.precision;
    println!("max_interior_residual = {}", p.fmt(report.max_interior_residual));
    println!("max_exterior_violation = {}", p.fmt(report.max_exterior_violation));
    println!(
        "gradient_violations = {} (worst {})",
        report.gradient_violations.0,
        p.fmt(report.gradient_violations.1)
    );
    println!(
        "pasting = ({}, {}, {}, {})",
        p.fmt(report.pasting[0]),
        p.fmt(report.pasting[1]),
        p.fmt(report.pasting[2]),
        p.fmt(report.pasting[3])
    );
    println!("passed = {}", report.passed);
    let residuals = hjb::residual_profile(&s.cache, &s.reward, &grid);
    let mut csv = Csv::create(&s.out_dir, "hjb_grid.csv", &["x", "u", "u1", "u2", "residual"], p);
    for i in 0..grid.xs.len() {
        csv.row(&[grid.xs[i], grid.u[i], grid.u1[i], grid.u2[i], residuals[i]]);
    }
    let path = csv.write()?;
    println!("wrote {}", path.display());
    if !report.passed {
        return Err(Failure::Run(format!(
            "hjb certificate failed: interior {} (tol {}), exterior {}, gradient worst {}, pasting {:?}",
            report.max_interior_residual,
            report.interior_tol,
            report.max_exterior_violation,
            report.gradient_violations.1,
            report.pasting
        )));
    }
    Ok(format!(
        "passed=true lambda_star={} interior_residual={}",
        p.fmt(sol.lambda_star),
        p.fmt(report.max_interior_residual)
    ))
}

fn barriers_for_sim(s: &Session) -> Result<Barriers, Failure> {
    if s.cfg.sim.one_sided {
        let lower = match s.cfg.sim.one_sided_barrier {
            Some(a) => a,
            None => s.solve()?.1.pair.a(),
        };
        return Ok(Barriers::OneSided { lower });
    }
    if let (Some(a), Some(b)) = (s.cfg.sim.barrier_a, s.cfg.sim.barrier_b) {
        return Ok(Barriers::TwoSided(
            BarrierPair::new(a, b).map_err(|e| Failure::Config(e.to_string()))?,
        ));
    }
    Ok(Barriers::TwoSided(s.solve()?.1.pair))
}

fn cmd_simulate(s: &Session) -> Result<String, Failure> {
    let barriers = barriers_for_sim(s)?;
    let mk_cfg = |seed: u64, thin: u64| SimConfig {
        model: s.cache.model().clone(),
        reward: s.reward.clone(),
        barriers,
        x0: s.cfg.sim.x0,
        dt: s.cfg.sim.dt,
        horizon: s.cfg.sim.horizon,
        burn_in_fraction: s.cfg.sim.burn_in_fraction,
        n_batches: s.cfg.sim.n_batches,
        seed,
        thin_every: thin,
    };
    let p = s.precision;
    let n = s.cfg.sim.replications;
    let mut csv = Csv::create(
        &s.out_dir,
        "sim.csv",
        &["replication", "mean", "se", "rate_la", "rate_lb"],
        p,
    );
    let mut means = Vec::with_capacity(n);
    let mut first_se = 0.0;
    let mut rate_la_sum = 0.0;
    let mut rate_lb_sum = 0.0;
    for i in 0..n {
        let seed = s.cfg.sim.seed.wrapping_add(i as u64);
        let thin = if i == 0 { s.cfg.sim.thin_every } else { 0 };
        let est = if s.cfg.sim.one_sided {
            sim::simulate_one_sided(&mk_cfg(seed, 0))?
        } else if thin > 0 {
            let (est, path) = sim::simulate_reflected_path(&mk_cfg(seed, thin))?;
            let mut pcsv = Csv::create(&s.out_dir, "path.csv", &["t", "x", "la", "lb"], p);
            for pt in &path {
                pcsv.row(&[pt.t, pt.x, pt.la, pt.lb]);
            }
            let path_file = pcsv.write()?;
            println!("wrote {}", path_file.display());
            est
        } else {
            sim::simulate_reflected(&mk_cfg(seed, 0))?
        };
        println!(
            "replication {i}: mean = {} +- {}, rate_la = {}, rate_lb = {}, truncations = {}",
            p.fmt(est.mean_reward_rate),
            p.fmt(est.std_error),
            p.fmt(est.rate_la),
            p.fmt(est.rate_lb),
            est.truncations
        );
        csv.labeled_row(
            &i.to_string(),
            &[est.mean_reward_rate, est.std_error, est.rate_la, est.rate_lb],
        );
        means.push(est.mean_reward_rate);
        rate_la_sum += est.rate_la;
        rate_lb_sum += est.rate_lb;
        if i == 0 {
            first_se = est.std_error;
        }
    }
    let mean = means.iter().sum::<f64>() / n as f64;
    let se = if n >= 2 {
        let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        first_se
    };
    csv.labeled_row(
        "aggregate",
        &[mean, se, rate_la_sum / n as f64, rate_lb_sum / n as f64],
    );
    let path = csv.write()?;
    println!("wrote {}", path.display());
    Ok(format!("mean={} se={}", p.fmt(mean), p.fmt(se)))
}

fn cmd_discounted(s: &Session) -> Result<String, Failure> {
    let (_, ergodic) = s.solve()?;
    let p = s.precision;
    let mut hint = ergodic.pair.a();
    let mut solved = 0usize;
    for &r in &s.cfg.discounted.rs {
        match discounted::solve_discounted(&s.cache, &s.reward, r, Some(hint), None) {
            Ok(sol) => {
                hint = sol.a_r;
                solved += 1;
                println!(
                    "r = {}: a_r = {}, b_r = {}, rV({}) = {}, shoot_residual = {}",
                    p.fmt(r),
                    p.fmt(sol.a_r),
                    p.fmt(sol.b_r),
                    p.fmt(s.cfg.discounted.x_eval),
                    p.fmt(r * sol.v_at(s.cfg.discounted.x_eval)),
                    p.fmt(sol.shoot_residual)
                );
            }
            Err(e) => println!("r = {}: failed: {e}", p.fmt(r)),
        }
    }
    if solved == 0 {
        return Err(Failure::Run("no discount rate solved".into()));
    }
    Ok(format!("solved={solved} of={}", s.cfg.discounted.rs.len()))
}

fn cmd_abelian(s: &Session) -> Result<String, Failure> {
    let (_, ergodic) = s.solve()?;
    let table = discounted::abelian_sweep(
        &s.cache,
        &s.reward,
        &s.cfg.discounted.rs,
        s.cfg.discounted.x_eval,
        &ergodic,
    )?;
    let p = s.precision;
    let mut csv = Csv::create(
        &s.out_dir,
        "abelian.csv",
        &["r", "a_r", "b_r", "rv", "dev_lambda", "dev_a", "dev_b"],
        p,
    );
    let mut solved = 0usize;
    for row in &table.rows {
        match row {
            discounted::AbelianRow::Solved {
                r,
                a_r,
                b_r,
                rv_at_x,
                dev_lambda,
                dev_a,
                dev_b,
            } => {
                solved += 1;
                println!(
                    "r = {}: a_r = {}, b_r = {}, rV = {}, dev_lambda = {}",
                    p.fmt(*r),
                    p.fmt(*a_r),
                    p.fmt(*b_r),
                    p.fmt(*rv_at_x),
                    p.fmt(*dev_lambda)
                );
                csv.row(&[*r, *a_r, *b_r, *rv_at_x, *dev_lambda, *dev_a, *dev_b]);
            }
            discounted::AbelianRow::Failed { r, reason } => {
                println!("r = {}: failed: {reason}", p.fmt(*r));
                csv.row(&[
                    *r,
                    f64::NAN,
                    f64::NAN,
                    f64::NAN,
                    f64::NAN,
                    f64::NAN,
                    f64::NAN,
                ]);
            }
        }
    }
    let path = csv.write()?;
    println!("wrote {}", path.display());
    if solved == 0 {
        return Err(Failure::Run("no discount rate solved in the sweep".into()));
    }
    Ok(format!("solved={solved} lambda_star={}", p.fmt(ergodic.lambda_star)))
}

fn cmd_sweep(s: &Session) -> Result<String, Failure> {
    let (_, sol) = s.solve()?;
    let lo = s.cfg.grid.sweep_lo.unwrap_or(sol.pair.a() / 2.0);
    let hi = s
        .cfg
        .grid
        .sweep_hi
        .unwrap_or(2.0 * sol.pair.b())
        .min(s.cache.model().domain_cap());
    if !(lo > 0.0 && lo < hi) {
        return Err(Failure::Config(format!(
            "sweep range [{lo}, {hi}] must be positive and increasing"
        )));
    }
    let linspace = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    };
    let a_grid = linspace(s.cfg.grid.sweep_a_count);
    let b_grid = linspace(s.cfg.grid.sweep_b_count);
    let result = barrier::sweep(&s.cache, &s.reward, &a_grid, &b_grid)?;
    let p = s.precision;
    let mut csv = Csv::create(&s.out_dir, "sweep.csv", &["a", "b", "lambda"], p);
    for (i, &a) in result.a_grid.iter().enumerate() {
        for (j, &b) in result.b_grid.iter().enumerate() {
            let lam = result.lambda_table[i][j];
            if !lam.is_nan() {
                csv.row(&[a, b, lam]);
            }
        }
    }
    let path = csv.write()?;
    println!("wrote {}", path.display());
    println!(
        "table argmax = ({}, {}), solver = ({}, {})",
        p.fmt(result.argmax.a()),
        p.fmt(result.argmax.b()),
        p.fmt(sol.pair.a()),
        p.fmt(sol.pair.b())
    );
    Ok(format!(
        "argmax_a={} argmax_b={}",
        p.fmt(result.argmax.a()),
        p.fmt(result.argmax.b())
    ))
}
