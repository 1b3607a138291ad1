//! Subcommand implementations.

use std::path::Path;
use std::time::Instant;

use qswitch_core::environment::sample_trajectory;
use qswitch_core::master::{integrate_master, max_z_score, mc_average};
use qswitch_core::models::{telegraph_residual, SWAP_TELEGRAPH_COEFFICIENT};
use qswitch_core::nalgebra::DMatrix;
use qswitch_core::resolvent::{block_resolvent, laplace_fixed_point};
use qswitch_core::rng::stream;
use qswitch_core::superop::{block_generator, vectorize};
use qswitch_core::trajectory::evolve_density;
use qswitch_core::{tolerances, Complex64, ComplexMatrix, Conservation, MCEstimate, MasterSolution, TelegraphMode};
use serde_json::{json, Map, Value};

use crate::config::{Canned, Experiment};
use crate::error::CliError;
use crate::output::{
    emit_csv, format_number, mc_table, observables_table, ode_table, render_records, write_text, zscore_table, Table,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ode,
    Mc,
    Compare,
    Laplace,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ode => "ode",
            Command::Mc => "mc",
            Command::Compare => "compare",
            Command::Laplace => "laplace",
            Command::Check => "check",
        }
    }
}

/// Summary fields shared by every subcommand.
struct Summary {
    fields: Map<String, Value>,
    residuals: Map<String, Value>,
    files: Vec<String>,
}

impl Summary {
    fn new(command: Command, exp: &Experiment) -> Self {
        let mut fields = Map::new();
        fields.insert("command".into(), json!(command.name()));
        fields.insert("model".into(), serde_json::to_value(&exp.config.model).expect("serializable"));
        fields.insert("seed".into(), json!(exp.seed));
        fields.insert("n_samples".into(), json!(exp.n_samples));
        fields.insert("grid_points".into(), json!(exp.grid.len()));
        Self { fields, residuals: Map::new(), files: Vec::new() }
    }

    fn residual(&mut self, name: &str, value: f64) {
        self.residuals.insert(name.into(), json!(value));
    }

    fn write(mut self, dir: &Path, passed: bool) -> Result<(), CliError> {
        self.files.push("summary.json".into());
        self.fields.insert("max_residuals".into(), Value::Object(self.residuals));
        self.fields.insert("files".into(), json!(self.files));
        self.fields.insert("passed".into(), json!(passed));
        let mut text = serde_json::to_string_pretty(&Value::Object(self.fields)).expect("serializable");
        text.push('\n');
        write_text(&dir.join("summary.json"), &text)
    }

    fn emit(&mut self, dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
        write_text(&dir.join(name), contents)?;
        self.files.push(name.into());
        Ok(())
    }
}

fn timed<T>(label: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    eprintln!("{label}: {:.3} s", start.elapsed().as_secs_f64());
    out
}

fn solve_ode(exp: &Experiment, summary: &mut Summary) -> Result<MasterSolution, CliError> {
    let sol = timed("ode", || integrate_master(&exp.model, &exp.rho0, &exp.grid))?;
    let c = Conservation::of(sol.components.iter().flatten());
    summary.residual("ode_halving_residual", sol.halving_residual);
    summary.residual("ode_trace_drift", c.trace_drift);
    summary.residual("ode_hermiticity_defect", c.hermiticity_defect);
    if c.min_eigenvalue.is_finite() {
        summary.residual("ode_min_eigenvalue", c.min_eigenvalue);
    }
    Ok(sol)
}

fn solve_mc(exp: &Experiment, threads: Option<usize>, summary: &mut Summary) -> Result<MCEstimate, CliError> {
    let run = || mc_average(&exp.model, &exp.rho0, &exp.grid, exp.n_samples, exp.seed);
    let est = timed("mc", || match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::validation(format!("cannot start {n} worker threads: {e}")))
            .and_then(|pool| pool.install(run).map_err(CliError::from)),
        None => run().map_err(CliError::from),
    })?;
    summary.residual("mc_max_stderr", est.max_stderr());
    Ok(est)
}

pub fn run(command: Command, exp: &Experiment, threads: Option<usize>) -> Result<(), CliError> {
    let dir = &exp.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut summary = Summary::new(command, exp);
    let dim = exp.model.dim();
    let passed = match command {
        Command::Ode => {
            let sol = solve_ode(exp, &mut summary)?;
            emit_table(&mut summary, dir, "ode.csv", &ode_table(&sol, dim))?;
            let obs = observables_table(&sol, &exp.observables, &exp.distribution)?;
            emit_table(&mut summary, dir, "observables_ode.csv", &obs)?;
            true
        }
        Command::Mc => {
            let est = solve_mc(exp, threads, &mut summary)?;
            emit_table(&mut summary, dir, "mc.csv", &mc_table(&est, dim))?;
            let obs = observables_table(&est, &exp.observables, &exp.distribution)?;
            emit_table(&mut summary, dir, "observables_mc.csv", &obs)?;
            true
        }
        Command::Compare => {
            let sol = solve_ode(exp, &mut summary)?;
            let est = solve_mc(exp, threads, &mut summary)?;
            emit_table(&mut summary, dir, "ode.csv", &ode_table(&sol, dim))?;
            emit_table(&mut summary, dir, "mc.csv", &mc_table(&est, dim))?;
            let z = zscore_table(&est, &sol, dim, tolerances::STDERR_FLOOR);
            emit_table(&mut summary, dir, "zscores.csv", &z)?;
            let z_max = max_z_score(&est, &sol);
            summary.fields.insert("z_max".into(), json!(z_max));
            summary.fields.insert("z_limit".into(), json!(tolerances::Z_LIMIT));
            z_max <= tolerances::Z_LIMIT
        }
        Command::Laplace => {
            let rows = laplace_rows(exp)?;
            let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
            summary.residual("fixed_point_vs_resolvent", worst);
            let records: Vec<Vec<String>> = rows
                .iter()
                .map(|(s, residual)| {
                    vec![
                        format_number(s.re),
                        format_number(s.im),
                        format_number(*residual),
                        format_number(tolerances::INVERSE_RESIDUAL),
                        pass_word(*residual <= tolerances::INVERSE_RESIDUAL).into(),
                    ]
                })
                .collect();
            let text = render_records(&["s_re", "s_im", "residual", "limit", "pass"], &records);
            summary.emit(dir, "laplace.csv", &text)?;
            worst <= tolerances::INVERSE_RESIDUAL
        }
        Command::Check => {
            let checks = run_checks(exp)?;
            let records: Vec<Vec<String>> = checks
                .iter()
                .map(|c| {
                    summary.residual(&c.name, c.value);
                    vec![c.name.clone(), format_number(c.value), c.bound.describe(), pass_word(c.passes()).into()]
                })
                .collect();
            let text = render_records(&["check", "value", "limit", "pass"], &records);
            summary.emit(dir, "check.csv", &text)?;
            for c in checks.iter().filter(|c| !c.passes()) {
                eprintln!("check failed: {} = {} (limit {})", c.name, c.value, c.bound.describe());
            }
            checks.iter().all(Check::passes)
        }
    };
    summary.write(dir, passed)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::check(format!("{} failed; see {}", command.name(), dir.join("summary.json").display())))
    }
}

fn emit_table(summary: &mut Summary, dir: &Path, name: &str, table: &Table) -> Result<(), CliError> {
    emit_csv(table, &dir.join(name))?;
    summary.files.push(name.into());
    Ok(())
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn laplace_rows(exp: &Experiment) -> Result<Vec<(Complex64, f64)>, CliError> {
    let points = if exp.laplace_s.is_empty() { vec![Complex64::new(1.0, 0.0)] } else { exp.laplace_s.clone() };
    let generator = block_generator(&exp.model)?;
    points
        .into_iter()
        .map(|s| {
            let fixed = laplace_fixed_point(&exp.model, s)?;
            let direct = block_resolvent(&generator, s)?;
            Ok((s, (fixed.value - direct).norm()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Bound {
    AtMost(f64),
    AtLeast(f64),
}

impl Bound {
    fn describe(self) -> String {
        match self {
            Bound::AtMost(x) => format!("<= {}", format_number(x)),
            Bound::AtLeast(x) => format!(">= {}", format_number(x)),
        }
    }
}

#[derive(Debug, Clone)]
struct Check {
    name: String,
    value: f64,
    bound: Bound,
}

impl Check {
    fn new(name: &str, value: f64, bound: Bound) -> Self {
        Self { name: name.into(), value, bound }
    }

    fn passes(&self) -> bool {
        match self.bound {
            Bound::AtMost(x) => self.value <= x,
            Bound::AtLeast(x) => self.value >= x,
        }
    }
}

/// Number of sampled paths whose evolution is checked for conservation.
const CHECK_PATHS: u64 = 32;

fn conservation_checks(prefix: &str, c: Conservation, out: &mut Vec<Check>) {
    out.push(Check::new(&format!("{prefix}_trace_drift"), c.trace_drift, Bound::AtMost(tolerances::TRACE_DRIFT)));
    out.push(Check::new(
        &format!("{prefix}_hermiticity_defect"),
        c.hermiticity_defect,
        Bound::AtMost(tolerances::HERMITICITY_DEFECT),
    ));
    if c.min_eigenvalue.is_finite() {
        out.push(Check::new(
            &format!("{prefix}_min_eigenvalue"),
            c.min_eigenvalue,
            Bound::AtLeast(tolerances::MIN_EIGENVALUE),
        ));
    }
}

fn run_checks(exp: &Experiment) -> Result<Vec<Check>, CliError> {
    let model = &exp.model;
    let mut checks = Vec::new();

    let q = model.chain().generator();
    let row_sum = q.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max);
    checks.push(Check::new("chain_generator_row_sum", row_sum, Bound::AtMost(tolerances::ROW_SUM)));

    let generator = block_generator(model)?;
    let forward = generator.forward_layout();
    let (k, n) = (model.states(), model.dim());
    let n2 = n * n;
    let trace = vectorize(&ComplexMatrix::identity(n)).adjoint();
    let mut leak: f64 = 0.0;
    for c in 0..k {
        let mut total = DMatrix::from_element(1, n2, Complex64::new(0.0, 0.0));
        for r in 0..k {
            total += &trace * forward.view((r * n2, c * n2), (n2, n2));
        }
        leak = leak.max(total.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    checks.push(Check::new("generator_trace_leak", leak, Bound::AtMost(1e-12)));

    let sol = integrate_master(model, &exp.rho0, &exp.grid)?;
    conservation_checks("ode", Conservation::of(sol.components.iter().flatten()), &mut checks);

    let horizon = exp.grid.last().copied().unwrap_or(0.0);
    let mut paths = Conservation::default();
    for (start, rho) in exp.rho0.iter().enumerate() {
        for index in 0..CHECK_PATHS {
            let traj = sample_trajectory(model.chain(), start, horizon, &mut stream(exp.seed, start as u64, index))?;
            let path = evolve_density(model, &traj, rho, &exp.grid)?;
            paths = paths.merge(Conservation::of(&path.values));
        }
    }
    conservation_checks("path", paths, &mut checks);

    let s = exp.laplace_s.first().copied().unwrap_or(Complex64::new(1.0, 0.0));
    let fixed = laplace_fixed_point(model, s)?;
    let direct = block_resolvent(&generator, s)?;
    checks.push(Check::new(
        "fixed_point_vs_resolvent",
        (fixed.value - direct).norm(),
        Bound::AtMost(tolerances::INVERSE_RESIDUAL),
    ));

    let mode = match exp.canned {
        Canned::Goldstein { lambda } => Some((lambda, TelegraphMode::Goldstein, "telegraph_goldstein")),
        Canned::PoissonSwap { lambda } => Some((
            lambda,
            TelegraphMode::PoissonSwap { coefficient: SWAP_TELEGRAPH_COEFFICIENT },
            "telegraph_poisson_swap",
        )),
        Canned::None => None,
    };
    if let Some((lambda, mode, name)) = mode {
        if is_uniform(&exp.grid) {
            let h = exp.grid[1] - exp.grid[0];
            let r = telegraph_residual(&sol, lambda, model, mode)?;
            checks.push(Check::new(name, r.max_norm(), Bound::AtMost(10.0 * h * h)));
        } else {
            eprintln!("{name}: skipped, needs a uniform grid with at least three points");
        }
    }
    Ok(checks)
}

fn is_uniform(grid: &[f64]) -> bool {
    if grid.len() < 3 {
        return false;
    }
    let h = grid[1] - grid[0];
    h > 0.0 && grid.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= tolerances::UNIFORM_GRID * h)
}
