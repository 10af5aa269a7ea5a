//! Adiabatic-limit closed forms, cumulants, the small-error family,
//! Landauer bookkeeping and finite-size convergence studies.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{run_oracle, standard_adiabatic_state, OracleOptions};
use crate::model::{DriveProtocol, PROBABILITY_SUM_TOLERANCE};
use crate::numerics::{von_neumann_entropy, HermitianMatrix};
use crate::quasifree::{propagate_one_particle, QuasiFreeRun};
use crate::stats::{AlphaAxis, AlphaGrid, CgfCurve, HeatDistribution, Provenance, DEFAULT_BIN_TOL};

/// `sigma` below `-BOUND_TOLERANCE` counts as a violation.
pub const BOUND_TOLERANCE: f64 = 1e-8;

/// Final-state spectrum: distinct eigenvalues `p_k` with multiplicities `m_k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitSpec {
    pub probs: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub beta: f64,
    pub epsilon: Option<f64>,
}

impl LimitSpec {
    pub fn new(probs: Vec<f64>, multiplicities: Vec<usize>, beta: f64) -> Result<Self> {
        if probs.is_empty() || probs.len() != multiplicities.len() {
            return Err(Error::InvalidInput(
                "need one multiplicity per probability".into(),
            ));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p.is_finite() && p > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "probabilities must be positive, got {p}"
            )));
        }
        if multiplicities.contains(&0) {
            return Err(Error::InvalidInput(
                "multiplicities must be positive".into(),
            ));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "beta must be positive, got {beta}"
            )));
        }
        let total: f64 = probs
            .iter()
            .zip(&multiplicities)
            .map(|(p, &m)| p * m as f64)
            .sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "probabilities must sum to 1, got {total}"
            )));
        }
        Ok(Self {
            probs,
            multiplicities,
            beta,
            epsilon: None,
        })
    }

    /// Groups exactly equal eigenvalues.
    pub fn from_spectrum(spectrum: &[f64], beta: f64) -> Result<Self> {
        let mut sorted = spectrum.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut probs: Vec<f64> = Vec::new();
        let mut mult: Vec<usize> = Vec::new();
        for p in sorted {
            match probs.last() {
                Some(&q) if q == p => *mult.last_mut().expect("parallel vectors") += 1,
                _ => {
                    probs.push(p);
                    mult.push(1);
                }
            }
        }
        Self::new(probs, mult, beta)
    }

    pub fn from_protocol(p: &DriveProtocol) -> Result<Self> {
        p.check()?;
        Self::from_spectrum(&p.sorted_probs(), p.beta)
    }

    /// Eigenvalue `1 - eps` once, the rest `eps / (d - 1)` spread evenly.
    pub fn epsilon_family(eps: f64, d: usize, beta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidInput(format!(
                "erasure error must lie in (0, 1/2), got {eps}"
            )));
        }
        if d < 2 {
            return Err(Error::InvalidInput("the family needs d >= 2".into()));
        }
        let mut spec = Self::new(vec![1.0 - eps, eps / (d - 1) as f64], vec![1, d - 1], beta)?;
        spec.epsilon = Some(eps);
        Ok(spec)
    }

    pub fn dimension(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Von Neumann entropy of the final state.
    pub fn entropy(&self) -> f64 {
        self.weighted().map(|(p, w)| -w * p.ln()).sum()
    }

    /// `Delta S = log d - S(rho_f)`.
    pub fn entropy_drop(&self) -> f64 {
        (self.dimension() as f64).ln() - self.entropy()
    }

    /// `(p_k, m_k p_k)` pairs.
    fn weighted(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.probs
            .iter()
            .zip(&self.multiplicities)
            .map(|(&p, &m)| (p, p * m as f64))
    }

    /// Heat quanta `Q_k = beta^{-1} log(d p_k)`.
    pub fn quanta(&self) -> Vec<f64> {
        let d = self.dimension() as f64;
        self.probs
            .iter()
            .map(|p| (d * p).ln() / self.beta)
            .collect()
    }

    /// `log tr(e^{-alpha Q})` at real `alpha`, as `log1p(sum m p expm1(-alpha Q))`
    /// so that small values keep their relative precision.
    pub fn cgf_real(&self, alpha: f64) -> f64 {
        let q = self.quanta();
        let x: f64 = self
            .weighted()
            .zip(&q)
            .map(|((_, w), q)| w * (-alpha * q).exp_m1())
            .sum();
        x.ln_1p()
    }
}

/// Closed-form limiting CGF `-(alpha/beta) log d + log tr rho_f^{1 - alpha/beta}`.
pub fn limiting_cgf(spec: &LimitSpec, grid: &AlphaGrid) -> Result<CgfCurve> {
    grid.validate()?;
    let curve = match grid.axis {
        AlphaAxis::Real => CgfCurve::from_real(
            grid.points.clone(),
            grid.points.iter().map(|&a| spec.cgf_real(a)).collect(),
            Provenance::ClosedForm,
        ),
        AlphaAxis::Imaginary => heat_atoms(spec).cgf_curve(grid, Provenance::ClosedForm),
    };
    Ok(curve)
}

/// Quantized heat: atom `Q_k` with probability `m_k p_k`.
pub fn heat_atoms(spec: &LimitSpec) -> HeatDistribution {
    let samples = spec
        .quanta()
        .into_iter()
        .zip(spec.weighted().map(|(_, w)| w))
        .collect();
    HeatDistribution::from_samples(samples, DEFAULT_BIN_TOL)
}

/// Cumulants of a discrete distribution `X` with the given weights.
fn discrete_cumulant(values: &[f64], weights: &[f64], n: usize) -> f64 {
    let mean: f64 = values.iter().zip(weights).map(|(x, w)| w * x).sum();
    if n == 1 {
        return mean;
    }
    // Central moments, then the moment-cumulant recursion (the shift only
    // changes the first cumulant).
    let central: Vec<f64> = (0..=n)
        .map(|k| {
            values
                .iter()
                .zip(weights)
                .map(|(x, w)| w * (x - mean).powi(k as i32))
                .sum()
        })
        .collect();
    let mut kappa = vec![0.0; n + 1];
    for m in 2..=n {
        let mut k = central[m];
        for j in 2..m {
            k -= binomial(m - 1, j - 1) * kappa[j] * central[m - j];
        }
        kappa[m] = k;
    }
    kappa[n]
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `n`-th cumulant of the limiting heat: `beta^{-1} Delta S` for `n = 1`,
/// otherwise `beta^{-n}` times the `n`-th cumulant of `log p` under `m_k p_k`.
pub fn closed_form_cumulants(spec: &LimitSpec, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "cumulant order must be at least 1".into(),
        ));
    }
    if n == 1 {
        return Ok(spec.entropy_drop() / spec.beta);
    }
    let logs: Vec<f64> = spec.probs.iter().map(|p| p.ln()).collect();
    let weights: Vec<f64> = spec.weighted().map(|(_, w)| w).collect();
    Ok(discrete_cumulant(&logs, &weights, n) / spec.beta.powi(n as i32))
}

/// Default finite-difference spacing `1e-3 beta`.
pub fn default_stencil_spacing(beta: f64) -> f64 {
    1e-3 * beta
}

/// Points on each side of the origin needed for `n`-th derivatives of
/// order at least four.
pub fn stencil_half_width(n: usize) -> usize {
    n.div_ceil(2) + 1
}

/// A real grid holding exactly the stencil for `n`-th derivatives at spacing `h`.
pub fn stencil_grid(n: usize, h: f64) -> AlphaGrid {
    let m = stencil_half_width(n) as i64;
    AlphaGrid::real((-m..=m).map(|j| j as f64 * h).collect())
}

/// Finite-difference weights for the `order`-th derivative at `x0`
/// (Fornberg's recursion).
fn fornberg_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// `(-1)^n d^n chi / d alpha^n` at zero by central differences of order
/// at least four on a uniform stencil taken from the curve's grid.
pub fn numeric_cumulants(curve: &CgfCurve, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "cumulant order must be at least 1".into(),
        ));
    }
    if curve.grid.axis != AlphaAxis::Real {
        return Err(Error::Stencil("cumulants need a real alpha grid".into()));
    }
    let pts = &curve.grid.points;
    let origin = pts
        .iter()
        .position(|&a| a == 0.0)
        .ok_or_else(|| Error::Stencil("grid does not contain alpha = 0".into()))?;
    let m = stencil_half_width(n);
    if origin < m || origin + m >= pts.len() {
        return Err(Error::Stencil(format!(
            "need {m} points on each side of alpha = 0"
        )));
    }
    let h = pts[origin + 1];
    if !(h > 0.0) {
        return Err(Error::Stencil(
            "grid must increase through alpha = 0".into(),
        ));
    }
    for j in 1..=m {
        let (up, down) = (pts[origin + j], pts[origin - j]);
        let want = j as f64 * h;
        if (up - want).abs() > 1e-9 * want || (down + want).abs() > 1e-9 * want {
            return Err(Error::Stencil(format!(
                "grid is not uniform with spacing {h} around alpha = 0"
            )));
        }
    }
    let idx: Vec<usize> = (origin - m..=origin + m).collect();
    if idx
        .iter()
        .any(|&i| !curve.status[i].has_value() || !curve.values[i].re.is_finite())
    {
        return Err(Error::Stencil("stencil touches a failed point".into()));
    }
    let nodes: Vec<f64> = (-(m as i64)..=m as i64).map(|j| j as f64).collect();
    let w = fornberg_weights(0.0, &nodes, n);
    let d: f64 = idx
        .iter()
        .zip(&w)
        .map(|(&i, w)| w * curve.values[i].re)
        .sum::<f64>()
        / h.powi(n as i32);
    Ok(if n.is_multiple_of(2) { d } else { -d })
}

/// Limiting CGF of the family with largest eigenvalue `1 - eps`.
pub fn epsilon_family_cgf(eps: f64, d: usize, beta: f64, grid: &AlphaGrid) -> Result<CgfCurve> {
    limiting_cgf(&LimitSpec::epsilon_family(eps, d, beta)?, grid)
}

/// Conditional CGF on successful erasure: `-(alpha/beta)(log d + log(1 - eps))`.
pub fn success_limit_cgf(eps: f64, d: usize, beta: f64, grid: &AlphaGrid) -> Result<CgfCurve> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidInput(format!(
            "erasure error must lie in [0, 1), got {eps}"
        )));
    }
    if d < 1 || !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidInput("need d >= 1 and beta > 0".into()));
    }
    grid.validate()?;
    let heat = ((d as f64).ln() + (-eps).ln_1p()) / beta;
    let values = grid.complex_points().map(|a| -a * heat).collect();
    Ok(CgfCurve::new(grid.clone(), values, Provenance::ClosedForm))
}

/// Entropy balance `beta <dQ> = Delta S + sigma`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LandauerReport {
    pub mean_heat: f64,
    pub entropy_drop: f64,
    pub entropy_production: f64,
    pub bound_satisfied: bool,
    /// `<dQ> - Delta S / beta`: distance from the bound in energy units.
    pub saturation_gap: f64,
}

impl LandauerReport {
    pub fn new(mean_heat: f64, entropy_drop: f64, beta: f64) -> Self {
        let sigma = beta * mean_heat - entropy_drop;
        Self {
            mean_heat,
            entropy_drop,
            entropy_production: sigma,
            bound_satisfied: sigma >= -BOUND_TOLERANCE,
            saturation_gap: sigma / beta,
        }
    }
}

pub fn landauer_report(
    mean_heat: f64,
    initial_reduced_state: &HermitianMatrix,
    final_reduced_state: &HermitianMatrix,
    beta: f64,
) -> Result<LandauerReport> {
    let drop =
        von_neumann_entropy(initial_reduced_state)? - von_neumann_entropy(final_reduced_state)?;
    Ok(LandauerReport::new(mean_heat, drop, beta))
}

/// Adiabatic-limit `<Delta E_S> = tr(rho_f H_S(1)) - tr(rho_i H_S(0))`.
pub fn adiabatic_system_energy_change(p: &DriveProtocol) -> f64 {
    let probs = p.sorted_probs();
    let fin: f64 = probs
        .iter()
        .zip(p.system_energies(1.0))
        .map(|(q, e)| q * e)
        .sum();
    let init: f64 = p.system_energies(0.0).iter().sum::<f64>() / 2.0;
    fin - init
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub l: usize,
    pub t: f64,
    pub steps: usize,
    /// `sup_alpha |chi - chi_limit|` over the grid.
    pub sup_error: f64,
    pub mean_heat: f64,
    pub entropy_production: f64,
}

/// Fixed-`L`, large-`T` diagnostic from the exact oracle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WrongOrderRow {
    pub l: usize,
    pub t: f64,
    pub lambda_max: f64,
    /// Trace distance between the final reduced state and `rho_f`.
    pub trace_distance: f64,
    /// Same distance for the closed-form fixed-`L` adiabatic state.
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub wrong_order: Option<WrongOrderRow>,
}

impl ConvergenceReport {
    /// Whether the error strictly decreases in `T` at the largest `L`.
    pub fn decreasing_at_largest_l(&self) -> bool {
        let Some(l) = self.rows.iter().map(|r| r.l).max() else {
            return false;
        };
        let mut at: Vec<&ConvergenceRow> = self.rows.iter().filter(|r| r.l == l).collect();
        at.sort_by(|a, b| a.t.total_cmp(&b.t));
        at.windows(2).all(|w| w[1].sup_error < w[0].sup_error)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WrongOrderSpec {
    pub l: usize,
    pub t: f64,
    pub lambda_max: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceOptions {
    pub steps: Option<usize>,
    pub wrong_order: Option<WrongOrderSpec>,
}

/// One quasi-free cell of a convergence study.
pub fn convergence_cell(
    p: &DriveProtocol,
    l: usize,
    t: f64,
    grid: &AlphaGrid,
    limit: &CgfCurve,
    steps: Option<usize>,
) -> Result<ConvergenceRow> {
    let u = propagate_one_particle(p, t, l, steps)?;
    let run = QuasiFreeRun::new(&u, p)?;
    let curve = run.heat_cgf(grid)?;
    let sup_error = curve.max_abs_diff(limit)?;
    let report = landauer_report(
        run.expected_heat(),
        &HermitianMatrix::symmetrized(run.initial_system_state()),
        &HermitianMatrix::symmetrized(run.final_system_state()),
        p.beta,
    )?;
    Ok(ConvergenceRow {
        l,
        t,
        steps: u.report.steps,
        sup_error,
        mean_heat: report.mean_heat,
        entropy_production: report.entropy_production,
    })
}

/// Sup-distance to the limiting CGF on every `(L, T)` cell, computed in
/// parallel; rows keep the input order (`L` major).
pub fn convergence_study(
    p: &DriveProtocol,
    l_list: &[usize],
    t_list: &[f64],
    grid: &AlphaGrid,
    opts: &ConvergenceOptions,
) -> Result<ConvergenceReport> {
    if l_list.is_empty() || t_list.is_empty() {
        return Err(Error::InvalidInput(
            "convergence study needs at least one L and one T".into(),
        ));
    }
    if grid.axis != AlphaAxis::Real {
        return Err(Error::InvalidInput(
            "convergence study needs a real alpha grid".into(),
        ));
    }
    let limit = limiting_cgf(&LimitSpec::from_protocol(p)?, grid)?;
    let cells: Vec<(usize, f64)> = l_list
        .iter()
        .flat_map(|&l| t_list.iter().map(move |&t| (l, t)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(l, t)| convergence_cell(p, l, t, grid, &limit, opts.steps))
        .collect::<Result<Vec<_>>>()?;
    let wrong_order = opts
        .wrong_order
        .as_ref()
        .map(|w| wrong_order_row(p, w))
        .transpose()?;
    Ok(ConvergenceReport { rows, wrong_order })
}

/// Exact oracle at fixed `L` and large `T` against the target state.
pub fn wrong_order_row(p: &DriveProtocol, w: &WrongOrderSpec) -> Result<WrongOrderRow> {
    let q = p.clone().with_lambda_max(w.lambda_max);
    let run = run_oracle(
        &q,
        w.t,
        w.l,
        &OracleOptions {
            verify_work: false,
            ..OracleOptions::default()
        },
    )?;
    let target = HermitianMatrix::from_real_diagonal(&q.sorted_probs());
    let reached = HermitianMatrix::symmetrized(run.final_system_state());
    let trace_distance = crate::numerics::trace_distance(&reached, &target)?;
    let floor = standard_adiabatic_state(&q, w.l, usize::MAX)?.distance_to_target;
    Ok(WrongOrderRow {
        l: w.l,
        t: w.t,
        lambda_max: w.lambda_max,
        trace_distance,
        floor,
    })
}

/// Reduced state `diag(p)` helper for reports.
pub fn diagonal_state(probs: &[f64]) -> HermitianMatrix {
    HermitianMatrix::from_real_diagonal(probs)
}

/// Complex-valued CGF samples as `(alpha, re, im)` triples.
pub fn curve_rows(curve: &CgfCurve) -> Vec<(f64, f64, f64)> {
    curve
        .grid
        .points
        .iter()
        .zip(&curve.values)
        .map(|(&a, v)| (a, v.re, v.im))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec() -> LimitSpec {
        LimitSpec::from_spectrum(&[0.9, 0.1], 1.0).unwrap()
    }

    fn ln2() -> f64 {
        2f64.ln()
    }

    #[test]
    fn limit_spec_validation() {
        assert!(LimitSpec::new(vec![0.9, 0.2], vec![1, 1], 1.0).is_err());
        assert!(LimitSpec::new(vec![0.5], vec![1], 1.0).is_err());
        let s = LimitSpec::from_spectrum(&[0.25, 0.25, 0.5], 2.0).unwrap();
        assert_eq!(s.probs, vec![0.5, 0.25]);
        assert_eq!(s.multiplicities, vec![1, 2]);
        assert_eq!(s.dimension(), 3);
    }

    #[test]
    fn limiting_cgf_examples() {
        let s = spec();
        let g = AlphaGrid::real(vec![0.0, 0.5, 1.0]);
        let c = limiting_cgf(&s, &g).unwrap();
        assert_eq!(c.values[0].re, 0.0);
        assert_abs_diff_eq!(c.values[1].re, -0.111_571_775_657, epsilon = 1e-11);
        assert!(c.values[2].re.abs() < 1e-15);
    }

    #[test]
    fn heat_atoms_examples() {
        let atoms = heat_atoms(&spec());
        assert_eq!(atoms.atoms.len(), 2);
        assert_abs_diff_eq!(atoms.atoms[0].value, ln2() + 0.1f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(atoms.atoms[0].prob, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(atoms.atoms[1].value, ln2() + 0.9f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(atoms.atoms[1].value, 0.587_786_664_902, epsilon = 1e-11);
        assert_abs_diff_eq!(atoms.atoms[0].value, -1.609_437_912_434, epsilon = 1e-11);
        assert_abs_diff_eq!(atoms.mean(), 0.36807, epsilon = 1e-5);
        let uniform = heat_atoms(&LimitSpec::from_spectrum(&[0.25; 4], 1.0).unwrap());
        assert_eq!(uniform.atoms.len(), 1);
        assert!(uniform.atoms[0].value.abs() < 1e-15);
    }

    #[test]
    fn cumulant_examples() {
        let s = spec();
        assert_abs_diff_eq!(
            closed_form_cumulants(&s, 1).unwrap(),
            s.entropy_drop(),
            epsilon = 1e-15
        );
        let var = 0.9 * 0.9f64.ln().powi(2) + 0.1 * 0.1f64.ln().powi(2)
            - (0.9 * 0.9f64.ln() + 0.1 * 0.1f64.ln()).powi(2);
        assert_abs_diff_eq!(closed_form_cumulants(&s, 2).unwrap(), var, epsilon = 1e-14);
        assert_abs_diff_eq!(var, 0.43450, epsilon = 1e-5);
        let flat = LimitSpec::from_spectrum(&[1.0 / 3.0; 3], 1.0).unwrap();
        for n in 2..6 {
            assert_eq!(closed_form_cumulants(&flat, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn discrete_cumulants_match_bernoulli() {
        // Bernoulli(q): k3 = q(1-q)(1-2q), k4 = q(1-q)(1-6q(1-q)).
        let q: f64 = 0.3;
        let (x, w) = ([0.0, 1.0], [1.0 - q, q]);
        assert_abs_diff_eq!(
            discrete_cumulant(&x, &w, 3),
            q * (1.0 - q) * (1.0 - 2.0 * q),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            discrete_cumulant(&x, &w, 4),
            q * (1.0 - q) * (1.0 - 6.0 * q * (1.0 - q)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn fornberg_reproduces_classic_stencils() {
        let w = fornberg_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        for (a, b) in w
            .iter()
            .zip([1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0])
        {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        let w = fornberg_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        for (a, b) in w
            .iter()
            .zip([-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0])
        {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn numeric_cumulants_of_polynomials() {
        let h = 1e-2;
        let g = stencil_grid(3, h);
        let c = 0.7;
        let linear = CgfCurve::from_real(
            g.points.clone(),
            g.points.iter().map(|a| -c * a).collect(),
            Provenance::ClosedForm,
        );
        assert_abs_diff_eq!(numeric_cumulants(&linear, 1).unwrap(), c, epsilon = 1e-12);
        assert!(numeric_cumulants(&linear, 2).unwrap().abs() < 1e-10);
        let a = 1.3;
        let quad = CgfCurve::from_real(
            g.points.clone(),
            g.points.iter().map(|x| a * x * x / 2.0).collect(),
            Provenance::ClosedForm,
        );
        assert_abs_diff_eq!(numeric_cumulants(&quad, 2).unwrap(), a, epsilon = 1e-10);
        assert!(matches!(
            numeric_cumulants(&quad, 5),
            Err(Error::Stencil(_))
        ));
        let coarse =
            CgfCurve::from_real(vec![-1.0, 0.0, 1.0], vec![0.0; 3], Provenance::ClosedForm);
        assert!(matches!(
            numeric_cumulants(&coarse, 1),
            Err(Error::Stencil(_))
        ));
    }

    #[test]
    fn numeric_matches_closed_form_cumulants() {
        let s = spec();
        let h = default_stencil_spacing(s.beta);
        for n in [1, 2, 3] {
            let curve = limiting_cgf(&s, &stencil_grid(n, h)).unwrap();
            let numeric = numeric_cumulants(&curve, n).unwrap();
            assert_abs_diff_eq!(
                numeric,
                closed_form_cumulants(&s, n).unwrap(),
                epsilon = 1e-6
            );
        }
    }

    #[test]
    fn epsilon_family_examples() {
        let g = AlphaGrid::real(vec![0.5, 1.0, 2.0]);
        let c = epsilon_family_cgf(0.1, 2, 1.0, &g).unwrap();
        let expected = -2.0 * ln2() + (1.0 / 0.9f64 + 1.0 / 0.1).ln();
        assert_abs_diff_eq!(c.values[2].re, expected, epsilon = 1e-13);
        assert_abs_diff_eq!(expected, 1.02165, epsilon = 1e-5);
        assert!(c.values[1].re.abs() < 1e-15);
        // Distance to the pointwise limit is about sqrt(eps) at alpha = beta / 2.
        let tiny = epsilon_family_cgf(1e-5, 2, 1.0, &g).unwrap();
        let gap = tiny.values[0].re + 0.5 * ln2();
        assert_abs_diff_eq!(
            gap,
            (1e-5f64.sqrt() + (1.0 - 1e-5f64).sqrt()).ln(),
            epsilon = 1e-15
        );
        assert!(gap > 0.0 && gap < 4e-3);
        let tinier = epsilon_family_cgf(1e-9, 2, 1.0, &g).unwrap();
        assert!((tinier.values[0].re + 0.5 * ln2()).abs() < 1e-4);
        assert!(epsilon_family_cgf(0.6, 2, 1.0, &g).is_err());
    }

    #[test]
    fn epsilon_family_converges_at_predicted_rate() {
        // |chi_eps(alpha) + (alpha/beta) log d| = O(eps^{1 - alpha/beta}).
        let a = 0.5;
        let g = AlphaGrid::real(vec![a]);
        let err = |eps: f64| {
            (epsilon_family_cgf(eps, 3, 1.0, &g).unwrap().values[0].re + a * 3f64.ln()).abs()
        };
        let (e3, e5) = (err(1e-3), err(1e-5));
        let order = (e3 / e5).ln() / 100f64.ln();
        assert!((order - (1.0 - a)).abs() < 0.05, "order {order}");
    }

    #[test]
    fn epsilon_family_mean_heat_asymptotics() {
        // <dQ> = log d + O(eps log eps): fit the remainder against eps log eps.
        let d = 2usize;
        let eps = [1e-2, 1e-3, 1e-4, 1e-5];
        let ratios: Vec<f64> = eps
            .iter()
            .map(|&e| {
                let s = LimitSpec::epsilon_family(e, d, 1.0).unwrap();
                (closed_form_cumulants(&s, 1).unwrap() - (d as f64).ln()) / (e * e.ln())
            })
            .collect();
        // The ratio tends to one, up to O(1 / log eps) corrections.
        for w in ratios.windows(2) {
            assert!((w[1] - 1.0).abs() < (w[0] - 1.0).abs());
        }
        assert!((ratios[3] - 1.0).abs() < 0.1, "{ratios:?}");
    }

    #[test]
    fn success_limit_examples() {
        let g = AlphaGrid::real(vec![0.0, 1.0]);
        let zero = success_limit_cgf(0.0, 2, 1.0, &g).unwrap();
        assert_abs_diff_eq!(zero.values[1].re, -ln2(), epsilon = 1e-15);
        let c = success_limit_cgf(0.1, 2, 1.0, &g).unwrap();
        assert_abs_diff_eq!(c.values[1].re, -(ln2() + 0.9f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(c.values[1].re, -0.587_786_664_902, epsilon = 1e-11);
        // log p_max >= sum p log p, so conditioning on success raises the heat.
        let conditional = -c.values[1].re;
        let unconditional = LimitSpec::epsilon_family(0.1, 2, 1.0)
            .unwrap()
            .entropy_drop();
        assert!(conditional > unconditional);
    }

    #[test]
    fn landauer_examples() {
        let mixed = diagonal_state(&[0.5, 0.5]);
        let r = landauer_report(0.0, &mixed, &mixed, 1.0).unwrap();
        assert!(
            r.entropy_drop.abs() < 1e-15 && r.entropy_production.abs() < 1e-15 && r.bound_satisfied
        );
        let s = spec();
        let atoms = heat_atoms(&s);
        let r = landauer_report(atoms.mean(), &mixed, &diagonal_state(&[0.9, 0.1]), 1.0).unwrap();
        assert!(r.entropy_production.abs() < 1e-10);
        let bad = LandauerReport::new(0.1, 0.5, 1.0);
        assert!(!bad.bound_satisfied);
    }

    #[test]
    fn free_energy_chain_closes() {
        let p = DriveProtocol::erasure(1.0, 1.0, 0.5, [0.9, 0.1]);
        let de = adiabatic_system_energy_change(&p);
        assert_abs_diff_eq!(de, -0.87889, epsilon = 1e-5);
        let heat = spec().entropy_drop() / p.beta;
        assert_abs_diff_eq!(
            crate::model::free_energy_difference(&p),
            heat + de,
            epsilon = 1e-12
        );
    }

    #[test]
    fn decoupled_study_reports_the_limit_itself() {
        let p = DriveProtocol::erasure(1.0, 1.0, 0.0, [0.9, 0.1]);
        let g = AlphaGrid::linspace(0.0, 1.0, 11, AlphaAxis::Real);
        let limit = limiting_cgf(&LimitSpec::from_protocol(&p).unwrap(), &g).unwrap();
        let sup = limit.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let report = convergence_study(
            &p,
            &[8],
            &[5.0, 10.0],
            &g,
            &ConvergenceOptions {
                steps: Some(256),
                ..Default::default()
            },
        )
        .unwrap();
        for row in &report.rows {
            assert_abs_diff_eq!(row.sup_error, sup, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn limiting_cgf_invariants(raw in prop::collection::vec(0.01f64..1.0, 2..6), beta in 0.2f64..5.0) {
            let total: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
            let s = LimitSpec::new(probs.clone(), vec![1; probs.len()], beta);
            prop_assume!(s.is_ok());
            let s = s.unwrap();
            prop_assert!(s.cgf_real(beta).abs() < 1e-12);
            let g = AlphaGrid::linspace(-beta, 2.0 * beta, 31, AlphaAxis::Real);
            let c = limiting_cgf(&s, &g).unwrap();
            prop_assert!(c.is_convex(1e-8));
            let atoms = heat_atoms(&s);
            prop_assert!((atoms.mean() - s.entropy_drop() / beta).abs() < 1e-12);
            let h = default_stencil_spacing(beta);
            let slope = numeric_cumulants(&limiting_cgf(&s, &stencil_grid(1, h)).unwrap(), 1).unwrap();
            prop_assert!((slope - atoms.mean()).abs() < 1e-9);
            for (a, v) in g.points.iter().zip(&c.values) {
                prop_assert!((atoms.cgf(C64::new(*a, 0.0)).re - v.re).abs() < 1e-12);
            }
        }
    }
}
