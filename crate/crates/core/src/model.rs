//! The driven impurity model: control schedules, one-particle symbols,
//! boundary-condition checks, free energies and time-scale estimates.
//!
//! Index 0 of every one-particle object is the impurity mode; indices
//! `1..=L` are the chain sites. The system basis is ordered `(up, down)`,
//! so `sigma_z = diag(1, -1)` and the largest target probability sits on
//! the `up` state.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{HermitianMatrix, LinearDrive, SparseReal};

/// Probabilities must sum to one within this tolerance.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

/// Shape of the `gamma` ramp. `lambda(s) = lambda_max sin^2(pi s)` for both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `gamma(s) = gamma(1) (3 s^2 - 2 s^3)`.
    #[default]
    Smoothstep,
    /// `gamma(s) = gamma(1) (1 - cos(pi s)) / 2`.
    Cosine,
}

impl ScheduleKind {
    fn ramp(self, s: f64) -> f64 {
        match self {
            ScheduleKind::Smoothstep => s * s * (3.0 - 2.0 * s),
            ScheduleKind::Cosine => 0.5 * (1.0 - (PI * s).cos()),
        }
    }
}

/// One erasure experiment: `H_S(s) = eps(s) + gamma(s) sigma_z`,
/// coupling `lambda(s) V`, reservoir hopping `kappa`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveProtocol {
    pub beta: f64,
    pub kappa: f64,
    pub lambda_max: f64,
    /// Final-state spectrum; sorted descending internally.
    pub target_probs: Vec<f64>,
    #[serde(default)]
    pub schedule: ScheduleKind,
    /// Constant value of `eps(s)`. Physically inert.
    #[serde(default)]
    pub epsilon_offset: f64,
}

impl DriveProtocol {
    pub fn erasure(beta: f64, kappa: f64, lambda_max: f64, target_probs: [f64; 2]) -> Self {
        Self {
            beta,
            kappa,
            lambda_max,
            target_probs: target_probs.to_vec(),
            schedule: ScheduleKind::Smoothstep,
            epsilon_offset: 0.0,
        }
    }

    pub fn with_schedule(mut self, schedule: ScheduleKind) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_epsilon_offset(mut self, offset: f64) -> Self {
        self.epsilon_offset = offset;
        self
    }

    pub fn with_lambda_max(mut self, lambda_max: f64) -> Self {
        self.lambda_max = lambda_max;
        self
    }

    /// Rejects malformed parameters. Boundary conditions and the
    /// effective-coupling window are reported by [`validate_protocol`].
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProtocol(msg));
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!(
                "beta must be positive and finite, got {}",
                self.beta
            ));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return bad(format!(
                "kappa must be positive and finite, got {}",
                self.kappa
            ));
        }
        if !(self.lambda_max.is_finite() && self.lambda_max >= 0.0) {
            return bad(format!(
                "lambda_max must be non-negative and finite, got {}",
                self.lambda_max
            ));
        }
        if !self.epsilon_offset.is_finite() {
            return bad("epsilon_offset must be finite".into());
        }
        check_probabilities(&self.target_probs)?;
        if self.target_probs.len() != 2 {
            return bad(format!(
                "the impurity model has d = 2, got {} target probabilities",
                self.target_probs.len()
            ));
        }
        Ok(())
    }

    /// Target spectrum in descending order; ties keep input order.
    pub fn sorted_probs(&self) -> Vec<f64> {
        let mut p = self.target_probs.clone();
        p.sort_by(|a, b| b.total_cmp(a));
        p
    }

    pub fn dimension(&self) -> usize {
        self.target_probs.len()
    }

    /// `gamma(1) = (2 beta)^{-1} log(p_2 / p_1)`.
    pub fn gamma_final(&self) -> f64 {
        let p = self.sorted_probs();
        (p[1] / p[0]).ln() / (2.0 * self.beta)
    }

    pub fn epsilon(&self, _s: f64) -> f64 {
        self.epsilon_offset
    }

    pub fn gamma(&self, s: f64) -> f64 {
        self.gamma_final() * self.schedule.ramp(s)
    }

    pub fn lambda(&self, s: f64) -> f64 {
        let x = (PI * s).sin();
        self.lambda_max * x * x
    }

    /// Diagonal of `H_S(s)` in the `(up, down)` basis.
    pub fn system_energies(&self, s: f64) -> [f64; 2] {
        let (e, g) = (self.epsilon(s), self.gamma(s));
        [e + g, e - g]
    }

    /// `F_i` from `H_S(0) = beta^{-1} log d + F_i`.
    pub fn free_energy_initial(&self) -> f64 {
        self.epsilon(0.0) - (self.dimension() as f64).ln() / self.beta
    }

    /// `F_f` from `H_S(1) = -beta^{-1} log rho_f + F_f`.
    pub fn free_energy_final(&self) -> f64 {
        let p = self.sorted_probs();
        self.epsilon(1.0) + (p[0] * p[1]).ln() / (2.0 * self.beta)
    }
}

pub fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidProtocol("probability vector is empty".into()));
    }
    if let Some(bad) = p.iter().find(|&&x| !(x.is_finite() && x > 0.0)) {
        return Err(Error::InvalidProtocol(format!(
            "probabilities must be positive, got {bad}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
        return Err(Error::InvalidProtocol(format!(
            "probabilities must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

fn check_chain_length(l: usize) -> Result<()> {
    if l == 0 {
        Err(Error::EmptyChain)
    } else {
        Ok(())
    }
}

fn laplacian_sparse(l: usize, offset: usize, scale: f64) -> Vec<(usize, usize, f64)> {
    (0..l.saturating_sub(1))
        .flat_map(|x| {
            [
                (offset + x, offset + x + 1, scale),
                (offset + x + 1, offset + x, scale),
            ]
        })
        .collect()
}

/// Dirichlet discrete Laplacian on `{1..L}`: ones on the off-diagonals.
pub fn build_laplacian(l: usize) -> Result<HermitianMatrix> {
    check_chain_length(l)?;
    let lap = SparseReal::from_triplets(l, laplacian_sparse(l, 0, 1.0));
    Ok(HermitianMatrix::symmetrized(lap.to_dense()))
}

/// `2 cos(k pi / (L + 1))` for `k = 1..=L` (descending).
pub fn laplacian_spectrum(l: usize) -> Result<Vec<f64>> {
    check_chain_length(l)?;
    Ok((1..=l)
        .map(|k| 2.0 * (k as f64 * PI / (l as f64 + 1.0)).cos())
        .collect())
}

/// Fixed operators whose combination gives `h(s)`:
/// impurity projector, chain identity, impurity-site-1 hopping, `Delta`.
fn one_particle_operators(l: usize) -> Vec<SparseReal> {
    let n = l + 1;
    vec![
        SparseReal::from_triplets(n, vec![(0, 0, 1.0)]),
        SparseReal::from_triplets(n, (1..n).map(|i| (i, i, 1.0)).collect()),
        SparseReal::from_triplets(n, vec![(0, 1, 1.0), (1, 0, 1.0)]),
        SparseReal::from_triplets(n, laplacian_sparse(l, 1, 1.0)),
    ]
}

fn one_particle_coefficients(p: &DriveProtocol, s: f64) -> Vec<f64> {
    let (e, g) = (p.epsilon(s), p.gamma(s));
    vec![e - g, e + g, -p.lambda(s), p.kappa]
}

/// `h(s) = (eps + gamma) 1 - 2 gamma |1><1| - lambda (|1><d_1| + h.c.) + kappa Delta`.
pub fn one_particle_hamiltonian(p: &DriveProtocol, s: f64, l: usize) -> Result<HermitianMatrix> {
    Ok(HermitianMatrix::symmetrized(
        one_particle_drive(p, l)?.dense_at(s),
    ))
}

/// `h(s)` as a drive for the propagator.
pub fn one_particle_drive(p: &DriveProtocol, l: usize) -> Result<LinearDrive<'_>> {
    check_chain_length(l)?;
    Ok(LinearDrive::new(one_particle_operators(l), move |s| {
        one_particle_coefficients(p, s)
    }))
}

/// `0 (+) kappa Delta`: the reservoir measurement symbol, which is also the
/// decoupled initial symbol (impurity level at zero energy).
pub fn reservoir_symbol(p: &DriveProtocol, l: usize) -> Result<HermitianMatrix> {
    check_chain_length(l)?;
    let op = SparseReal::from_triplets(l + 1, laplacian_sparse(l, 1, p.kappa));
    Ok(HermitianMatrix::symmetrized(op.to_dense()))
}

/// `h(s) - (eps(s) + gamma(s)) 1`: the symbol whose Fermi-Dirac function at
/// zero chemical potential gives the instantaneous Gibbs state of `H(s)`.
pub fn thermal_symbol(p: &DriveProtocol, s: f64, l: usize) -> Result<HermitianMatrix> {
    check_chain_length(l)?;
    let mut c = one_particle_coefficients(p, s);
    let shift = p.epsilon(s) + p.gamma(s);
    c[0] -= shift;
    c[1] -= shift;
    let mut m = nalgebra::DMatrix::zeros(l + 1, l + 1);
    for (op, coeff) in one_particle_operators(l).iter().zip(c) {
        for (i, j, v) in op.triplets() {
            m[(i, j)] += crate::numerics::C64::new(coeff * v, 0.0);
        }
    }
    Ok(HermitianMatrix::symmetrized(m))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Pass,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Finding {
    pub check: &'static str,
    pub severity: Severity,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn record(&mut self, check: &'static str, ok: bool, message: String) {
        let severity = if ok {
            Severity::Pass
        } else {
            Severity::Warning
        };
        self.findings.push(Finding {
            check,
            severity,
            message,
        });
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
    }

    pub fn passed(&self) -> bool {
        self.warnings().next().is_none()
    }

    pub fn has_warning(&self, check: &str) -> bool {
        self.warnings().any(|f| f.check == check)
    }
}

const VALIDATION_GRID: usize = 2000;
const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Checks boundary conditions, the effective-coupling window and C^1
/// smoothness. Malformed parameters are errors; physics violations are
/// warnings.
pub fn validate_protocol(p: &DriveProtocol) -> Result<ValidationReport> {
    p.check()?;
    let mut report = ValidationReport::default();

    let (l0, l1) = (p.lambda(0.0), p.lambda(1.0));
    report.record(
        "decoupling",
        l0.abs() <= BOUNDARY_TOLERANCE && l1.abs() <= BOUNDARY_TOLERANCE,
        format!("lambda(0) = {l0:e}, lambda(1) = {l1:e}"),
    );

    let g0 = p.gamma(0.0);
    report.record(
        "initial_state",
        g0.abs() <= BOUNDARY_TOLERANCE,
        format!("H_S(0) has splitting 2 gamma(0) = {:e}", 2.0 * g0),
    );

    let energies = p.system_energies(1.0);
    let f_final = p.free_energy_final();
    let expected: Vec<f64> = p
        .sorted_probs()
        .iter()
        .map(|q| -q.ln() / p.beta + f_final)
        .collect();
    let mismatch = energies
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    report.record(
        "final_state",
        mismatch <= BOUNDARY_TOLERANCE * (1.0 + f_final.abs()),
        format!("H_S(1) spectrum deviates from -log(p_k)/beta + F_f by {mismatch:e}"),
    );

    let (worst_s, worst) = (0..=VALIDATION_GRID)
        .map(|k| k as f64 / VALIDATION_GRID as f64)
        .map(|s| (s, 2.0 * p.gamma(s).abs()))
        .fold((0.0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let effective = worst < 2.0 * p.kappa;
    report.record(
        "effective_coupling",
        effective,
        if effective {
            format!("|2 gamma(s)| <= {worst:.6} inside the band (-2 kappa, 2 kappa)")
        } else {
            format!(
                "effective coupling violated: |2 gamma(s)| reaches {worst:.6} >= 2 kappa = {} at s = {worst_s:.4}",
                2.0 * p.kappa
            )
        },
    );

    let kink = [
        max_derivative_jump(|s| p.gamma(s)),
        max_derivative_jump(|s| p.lambda(s)),
        max_derivative_jump(|s| p.epsilon(s)),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    report.record(
        "smoothness",
        kink <= 0.05,
        format!("largest one-sided derivative mismatch {kink:e}"),
    );

    report.record(
        "equilibration",
        p.lambda_max > 0.0,
        if p.lambda_max > 0.0 {
            format!("T_m ~ {:e}", 1.0 / (p.lambda_max * p.lambda_max))
        } else {
            "no equilibration: T_m infinite (lambda_max = 0)".into()
        },
    );
    Ok(report)
}

/// Largest mismatch between forward and backward difference quotients on a
/// fine interior grid, relative to the derivative scale.
fn max_derivative_jump<F: Fn(f64) -> f64>(f: F) -> f64 {
    let h = 1e-4;
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    for k in 1..VALIDATION_GRID {
        let s = k as f64 / VALIDATION_GRID as f64;
        let forward = (f(s + h) - f(s)) / h;
        let backward = (f(s) - f(s - h)) / h;
        worst = worst.max((forward - backward).abs());
        scale = scale.max(forward.abs());
    }
    worst / (1.0 + scale)
}

/// `Delta F = F_f - F_i`.
pub fn free_energy_difference(p: &DriveProtocol) -> f64 {
    p.free_energy_final() - p.free_energy_initial()
}

/// Order-of-magnitude time scales at one epoch. Infinite entries mean the
/// corresponding process never happens.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimescaleReport {
    /// Recurrence time of the isolated system, `1/|gamma|`.
    pub system_recurrence: f64,
    /// Equilibration time `c / lambda^2` with `c = 1`.
    pub equilibration: f64,
    /// Joint recurrence time, inverse mean level spacing `2^(L+1) / L`.
    pub joint_recurrence: f64,
}

impl TimescaleReport {
    pub fn from_parameters(gamma: f64, lambda: f64, l: usize) -> Self {
        let inv = |x: f64| if x == 0.0 { f64::INFINITY } else { 1.0 / x };
        Self {
            system_recurrence: inv(gamma.abs()),
            equilibration: inv(lambda * lambda),
            joint_recurrence: 2f64.powi(l as i32 + 1) / l as f64,
        }
    }
}

pub fn timescale_estimates(p: &DriveProtocol, s: f64, l: usize) -> Result<TimescaleReport> {
    check_chain_length(l)?;
    Ok(TimescaleReport::from_parameters(p.gamma(s), p.lambda(s), l))
}

/// Default integrator step count `max(4096, 64 T kappa)`.
pub fn default_step_count(p: &DriveProtocol, t: f64) -> usize {
    let rule = (64.0 * t * p.kappa).ceil();
    if rule.is_finite() && rule > 4096.0 {
        rule as usize
    } else {
        4096
    }
}
