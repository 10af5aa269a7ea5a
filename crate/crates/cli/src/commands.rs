use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use erasure_fcs::analysis::{
    closed_form_cumulants, convergence_study, epsilon_family_cgf, heat_atoms, landauer_report,
    limiting_cgf, ConvergenceOptions, LimitSpec, WrongOrderSpec,
};
use erasure_fcs::fock::{run_oracle, OracleOptions};
use erasure_fcs::numerics::HermitianMatrix;
use erasure_fcs::quasifree::{propagate_one_particle, QuasiFreeRun};
use erasure_fcs::stats::{AlphaAxis, AlphaGrid, CgfCurve, PointStatus};

use crate::config::ExperimentConfig;
use crate::output::{Cell, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// CGF of the heat for one (L, T) with the selected engine.
    Fcs,
    /// Exact oracle against the determinant formula on small chains.
    OracleCheck,
    /// Distance to the limiting CGF over an (L, T) grid.
    Sweep,
    /// Limiting CGFs of the small-error family.
    Figure3,
    /// Landauer balance for one (L, T).
    Landauer,
    /// Quantized heat of the adiabatic limit and its cumulants.
    Atoms,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fcs => "fcs",
            Command::OracleCheck => "oracle-check",
            Command::Sweep => "sweep",
            Command::Figure3 => "figure3",
            Command::Landauer => "landauer",
            Command::Atoms => "atoms",
        }
    }
}

/// Runs on a dedicated pool of `workers` threads. Results do not depend on
/// the worker count.
pub fn execute(command: Command, config: &ExperimentConfig, workers: usize) -> Result<Vec<Table>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("building the worker pool")?;
    pool.install(|| match command {
        Command::Fcs => fcs(config),
        Command::OracleCheck => oracle_check(config),
        Command::Sweep => sweep(config),
        Command::Figure3 => figure3(config),
        Command::Landauer => landauer(config),
        Command::Atoms => atoms(config),
    })
}

fn oracle_options(config: &ExperimentConfig) -> OracleOptions {
    OracleOptions {
        cap: config.run.oracle_cap,
        steps: config.run.steps,
        ..OracleOptions::default()
    }
}

fn status_text(s: &PointStatus) -> String {
    match s {
        PointStatus::Ok => "ok".into(),
        PointStatus::OutsideWindow => "outside_window".into(),
        PointStatus::Failed(why) => format!("failed: {}", why.replace(',', ";")),
    }
}

fn push_curve(table: &mut Table, engine: &str, curve: &CgfCurve) {
    for ((a, v), s) in curve
        .grid
        .points
        .iter()
        .zip(&curve.values)
        .zip(&curve.status)
    {
        table.push(vec![
            (*a).into(),
            engine.into(),
            v.re.into(),
            v.im.into(),
            status_text(s).into(),
        ]);
    }
}

fn quasifree_run(config: &ExperimentConfig, l: usize, t: f64) -> Result<QuasiFreeRun> {
    let u = propagate_one_particle(&config.protocol, t, l, config.run.steps)?;
    Ok(QuasiFreeRun::new(&u, &config.protocol)?)
}

fn fcs(config: &ExperimentConfig) -> Result<Vec<Table>> {
    let grid = config.alpha.grid();
    let (l, t) = (config.run.l, config.run.t);
    let mut table = Table::new("fcs", &["alpha", "engine", "chi_re", "chi_im", "status"]);
    let mut curves = Vec::new();
    if config.run.engine.uses_quasifree() {
        let curve = quasifree_run(config, l, t)?.heat_cgf(&grid)?;
        push_curve(&mut table, "quasifree", &curve);
        curves.push(curve);
    }
    if config.run.engine.uses_oracle() {
        let (_, curve) =
            run_oracle(&config.protocol, t, l, &oracle_options(config))?.heat(&grid)?;
        push_curve(&mut table, "oracle", &curve);
        curves.push(curve);
    }
    if let [a, b] = curves.as_slice() {
        log::info!("engines differ by at most {:e}", a.max_abs_diff(b)?);
    }
    let limit = limiting_cgf(&LimitSpec::from_protocol(&config.protocol)?, &grid)?;
    push_curve(&mut table, "limit", &limit);
    Ok(vec![table])
}

#[derive(Debug)]
struct CheckRow {
    l: usize,
    t: f64,
    engine_diff: f64,
    oracle_renyi_diff: f64,
    quasifree_renyi_diff: f64,
    oracle_chi_beta: f64,
    quasifree_chi_beta: f64,
}

fn check_cell(config: &ExperimentConfig, grid: &AlphaGrid, l: usize, t: f64) -> Result<CheckRow> {
    let p = &config.protocol;
    let at_beta = AlphaGrid::real(vec![p.beta]);
    let oracle = run_oracle(p, t, l, &oracle_options(config))?;
    let (_, o) = oracle.heat(grid)?;
    let o_renyi = oracle.heat_renyi(grid)?;
    let q_run = quasifree_run(config, l, t)?;
    let q = q_run.heat_cgf(grid)?;
    let q_renyi = q_run.renyi_cgf(grid)?;
    Ok(CheckRow {
        l,
        t,
        engine_diff: o.max_abs_diff(&q)?,
        oracle_renyi_diff: o.max_abs_diff(&o_renyi)?,
        quasifree_renyi_diff: q.max_abs_diff(&q_renyi)?,
        oracle_chi_beta: oracle.heat(&at_beta)?.1.values[0].re,
        quasifree_chi_beta: q_run.heat_cgf(&at_beta)?.values[0].re,
    })
}

fn oracle_check(config: &ExperimentConfig) -> Result<Vec<Table>> {
    let grid = config.alpha.grid();
    let beta = config.protocol.beta;
    if grid.axis != AlphaAxis::Real || grid.points.iter().any(|&a| !(0.0..=beta).contains(&a)) {
        bail!("oracle-check needs a real alpha grid inside [0, beta]");
    }
    let oc = &config.oracle_check;
    let cells: Vec<(usize, f64)> =
        oc.l.iter()
            .flat_map(|&l| oc.t.iter().map(move |&t| (l, t)))
            .collect();
    let rows = cells
        .par_iter()
        .map(|&(l, t)| {
            check_cell(config, &grid, l, t)
                .with_context(|| format!("oracle check at L = {l}, T = {t}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(
        "oracle_check",
        &[
            "l",
            "t",
            "max_abs_diff",
            "oracle_renyi_diff",
            "quasifree_renyi_diff",
            "oracle_chi_beta",
            "quasifree_chi_beta",
            "pass",
        ],
    );
    for r in rows {
        let pass = [
            r.engine_diff,
            r.oracle_renyi_diff,
            r.quasifree_renyi_diff,
            r.oracle_chi_beta.abs(),
            r.quasifree_chi_beta.abs(),
        ]
        .iter()
        .all(|&x| x <= oc.tolerance);
        table.push(vec![
            r.l.into(),
            r.t.into(),
            r.engine_diff.into(),
            r.oracle_renyi_diff.into(),
            r.quasifree_renyi_diff.into(),
            r.oracle_chi_beta.into(),
            r.quasifree_chi_beta.into(),
            pass.into(),
        ]);
    }
    Ok(vec![table])
}

fn sweep(config: &ExperimentConfig) -> Result<Vec<Table>> {
    let Some(s) = &config.sweep else {
        bail!("config has no [sweep] section");
    };
    let opts = ConvergenceOptions {
        steps: config.run.steps,
        wrong_order: s.wrong_order.as_ref().map(|w| WrongOrderSpec {
            l: w.l,
            t: w.t,
            lambda_max: w.lambda_max,
        }),
    };
    let report = convergence_study(&config.protocol, &s.l, &s.t, &config.alpha.grid(), &opts)?;
    let mut table = Table::new(
        "sweep",
        &[
            "l",
            "t",
            "steps",
            "sup_error",
            "mean_heat",
            "entropy_production",
        ],
    );
    for r in &report.rows {
        table.push(vec![
            r.l.into(),
            r.t.into(),
            r.steps.into(),
            r.sup_error.into(),
            r.mean_heat.into(),
            r.entropy_production.into(),
        ]);
    }
    let mut tables = vec![table];
    if let Some(w) = &report.wrong_order {
        let mut t = Table::new(
            "sweep_wrong_order",
            &["l", "t", "lambda_max", "trace_distance", "floor"],
        );
        t.push(vec![
            w.l.into(),
            w.t.into(),
            w.lambda_max.into(),
            w.trace_distance.into(),
            w.floor.into(),
        ]);
        tables.push(t);
    }
    Ok(tables)
}

fn figure3(config: &ExperimentConfig) -> Result<Vec<Table>> {
    let f = &config.figure3;
    let beta = config.protocol.beta;
    let ratios: Vec<f64> = (0..f.count)
        .map(|k| f.alpha_over_beta_max * k as f64 / (f.count - 1) as f64)
        .collect();
    let grid = AlphaGrid::real(ratios.iter().map(|r| r * beta).collect());
    let mut table = Table::new("figure3", &["alpha_over_beta", "epsilon", "chi"]);
    for &k in &f.exponents {
        let eps = 10f64.powi(-(k as i32));
        let curve = epsilon_family_cgf(eps, f.d, beta, &grid)?;
        for (r, v) in ratios.iter().zip(&curve.values) {
            table.push(vec![(*r).into(), eps.into(), v.re.into()]);
        }
    }
    Ok(vec![table])
}

fn landauer(config: &ExperimentConfig) -> Result<Vec<Table>> {
    let p = &config.protocol;
    let (l, t) = (config.run.l, config.run.t);
    let mut table = Table::new(
        "landauer",
        &[
            "engine",
            "mean_heat",
            "entropy_drop",
            "entropy_production",
            "bound_satisfied",
            "saturation_gap",
        ],
    );
    let mut push = |engine: &str, r: erasure_fcs::analysis::LandauerReport| {
        table.push(vec![
            engine.into(),
            r.mean_heat.into(),
            r.entropy_drop.into(),
            r.entropy_production.into(),
            r.bound_satisfied.into(),
            r.saturation_gap.into(),
        ]);
    };
    if config.run.engine.uses_quasifree() {
        let run = quasifree_run(config, l, t)?;
        push(
            "quasifree",
            landauer_report(
                run.expected_heat(),
                &HermitianMatrix::symmetrized(run.initial_system_state()),
                &HermitianMatrix::symmetrized(run.final_system_state()),
                p.beta,
            )?,
        );
    }
    if config.run.engine.uses_oracle() {
        let run = run_oracle(p, t, l, &oracle_options(config))?;
        push(
            "oracle",
            landauer_report(
                run.expected_heat(),
                &HermitianMatrix::symmetrized(run.initial_system_state()),
                &HermitianMatrix::symmetrized(run.final_system_state()),
                p.beta,
            )?,
        );
    }
    let spec = LimitSpec::from_protocol(p)?;
    push(
        "limit",
        erasure_fcs::analysis::LandauerReport::new(
            heat_atoms(&spec).mean(),
            spec.entropy_drop(),
            p.beta,
        ),
    );
    Ok(vec![table])
}

fn atoms(config: &ExperimentConfig) -> Result<Vec<Table>> {
    let spec = LimitSpec::from_protocol(&config.protocol)?;
    let mut atoms = Table::new("atoms", &["heat", "probability"]);
    for a in &heat_atoms(&spec).atoms {
        atoms.push(vec![a.value.into(), a.prob.into()]);
    }
    let mut cumulants = Table::new("cumulants", &["n", "cumulant"]);
    for n in 1..=4 {
        cumulants.push(vec![n.into(), Cell::Num(closed_form_cumulants(&spec, n)?)]);
    }
    Ok(vec![atoms, cumulants])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure3_curves_vanish_at_beta() {
        let tables = execute(Command::Figure3, &ExperimentConfig::minimal(), 1).unwrap();
        let t = &tables[0];
        assert_eq!(t.rows.len(), 5 * 151);
        for row in t.rows.iter().filter(|r| r[0] == Cell::Num(1.0)) {
            let Cell::Num(chi) = row[2] else { panic!() };
            assert!(chi.abs() <= 1e-12);
        }
    }

    #[test]
    fn decoupled_fcs_is_flat() {
        let mut c = ExperimentConfig::minimal();
        c.protocol.lambda_max = 0.0;
        c.run.l = 8;
        c.run.t = 5.0;
        c.run.steps = Some(256);
        let t = &execute(Command::Fcs, &c, 1).unwrap()[0];
        for row in t
            .rows
            .iter()
            .filter(|r| r[1] == Cell::Text("quasifree".into()))
        {
            let Cell::Num(chi) = row[2] else { panic!() };
            assert!(chi.abs() < 1e-12, "{chi}");
        }
    }

    #[test]
    fn atoms_table_matches_quantization() {
        let tables = execute(Command::Atoms, &ExperimentConfig::minimal(), 1).unwrap();
        assert_eq!(tables[0].rows.len(), 2);
        let Cell::Num(mean) = tables[1].rows[0][1] else {
            panic!()
        };
        assert!((mean - 0.36807).abs() < 1e-5);
    }

    #[test]
    fn sweep_requires_its_section() {
        assert!(execute(Command::Sweep, &ExperimentConfig::minimal(), 1).is_err());
    }
}
