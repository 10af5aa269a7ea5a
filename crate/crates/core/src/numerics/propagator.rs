//! Time-ordered exponentials for generators that are linear combinations of
//! fixed real sparse operators with epoch-dependent coefficients.

use std::fmt;

use super::{max_abs, repolarize, unitarity_defect, CMatrix, SparseReal, C64};
use crate::error::{Error, Result};

type CoefficientFn<'a> = dyn Fn(f64) -> Vec<f64> + Send + Sync + 'a;

/// `H(s) = sum_j f_j(s) A_j` with fixed real symmetric `A_j`.
pub struct LinearDrive<'a> {
    operators: Vec<SparseReal>,
    coefficients: Box<CoefficientFn<'a>>,
}

impl<'a> LinearDrive<'a> {
    pub fn new<F>(operators: Vec<SparseReal>, coefficients: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'a,
    {
        let n = operators.first().map_or(0, SparseReal::dim);
        assert!(
            operators.iter().all(|op| op.dim() == n),
            "operators must share one dimension"
        );
        Self {
            operators,
            coefficients: Box::new(coefficients),
        }
    }

    pub fn dim(&self) -> usize {
        self.operators.first().map_or(0, SparseReal::dim)
    }

    pub fn operators(&self) -> &[SparseReal] {
        &self.operators
    }

    pub fn coefficients(&self, s: f64) -> Vec<f64> {
        let c = (self.coefficients)(s);
        debug_assert_eq!(c.len(), self.operators.len());
        c
    }

    /// Dense `H(s)`.
    pub fn dense_at(&self, s: f64) -> CMatrix {
        let n = self.dim();
        let mut m = CMatrix::zeros(n, n);
        for (op, c) in self.operators.iter().zip(self.coefficients(s)) {
            for (i, j, v) in op.triplets() {
                m[(i, j)] += C64::new(c * v, 0.0);
            }
        }
        m
    }
}

impl fmt::Debug for LinearDrive<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearDrive")
            .field("dim", &self.dim())
            .field("terms", &self.operators.len())
            .finish()
    }
}

/// `x <- exp(-i tau sum_j c_j A_j) x` for real symmetric `A_j`.
///
/// Truncated Taylor series on substeps of norm at most one; the truncation
/// stops once a term falls below a hundredth of machine precision relative
/// to the running sum.
pub fn exp_action(operators: &[SparseReal], coeffs: &[f64], tau: f64, x: &mut CMatrix) {
    let h = SparseReal::linear_combination(operators, coeffs);
    let norm = h.row_sum_norm() * tau.abs();
    if norm == 0.0 {
        return;
    }
    let substeps = norm.ceil().max(1.0) as usize;
    let dt = tau / substeps as f64;
    // Work on the transpose: `x^T <- x^T exp(-i tau h)` for symmetric `h`.
    let mut z = x.transpose();
    let mut term = z.clone();
    let mut next = CMatrix::zeros(z.nrows(), z.ncols());
    for _ in 0..substeps {
        term.copy_from(&z);
        let floor = 1e-2 * f64::EPSILON * l1_max(z.as_slice());
        for k in 1..=64 {
            h.right_mul_symmetric_into(C64::new(0.0, -dt / k as f64), &term, &mut next);
            let mut size = 0.0_f64;
            for (zi, ni) in z.as_mut_slice().iter_mut().zip(next.as_slice()) {
                *zi += ni;
                size = size.max(ni.re.abs() + ni.im.abs());
            }
            std::mem::swap(&mut term, &mut next);
            if size <= floor {
                break;
            }
        }
    }
    x.copy_from(&z.transpose());
}

/// `max |re| + |im|`, within a factor `sqrt 2` of the largest modulus.
fn l1_max(m: &[C64]) -> f64 {
    m.iter()
        .fold(0.0, |acc, z| acc.max(z.re.abs() + z.im.abs()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorOptions {
    pub steps: usize,
    /// Project back onto the unitary group every this many steps.
    pub repolarize_every: usize,
    /// Unitarity defect tolerated before a projection; larger is an error.
    pub drift_limit: f64,
    /// Also integrate with half the steps and report the Richardson estimate.
    pub estimate_error: bool,
    /// Richardson estimates above this emit a warning.
    pub error_tolerance: f64,
}

impl IntegratorOptions {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            steps: 4096,
            repolarize_every: 64,
            drift_limit: 1e-6,
            estimate_error: false,
            error_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationReport {
    pub steps: usize,
    /// Largest unitarity defect seen before a projection.
    pub max_drift: f64,
    /// `max |U_N - U_{N/2}| / 15`, when requested.
    pub richardson_error: Option<f64>,
}

// Fourth-order commutator-free scheme with two exponentials per step,
// Hamiltonians sampled at the two Gauss-Legendre nodes.
const SQRT3: f64 = 1.732_050_807_568_877_2;
const NODE_LO: f64 = 0.5 - SQRT3 / 6.0;
const NODE_HI: f64 = 0.5 + SQRT3 / 6.0;
const WEIGHT_BIG: f64 = 0.25 + SQRT3 / 6.0;
const WEIGHT_SMALL: f64 = 0.25 - SQRT3 / 6.0;

/// Solves `(1/T) i dU/ds = H(s) U`, `U(0) = 1` on `s in [0, 1]`.
pub fn propagate(
    drive: &LinearDrive<'_>,
    t_total: f64,
    opts: &IntegratorOptions,
) -> Result<(CMatrix, PropagationReport)> {
    if opts.steps == 0 {
        return Err(Error::InvalidInput(
            "integrator needs at least one step".into(),
        ));
    }
    if !t_total.is_finite() || t_total < 0.0 {
        return Err(Error::InvalidInput(format!(
            "adiabatic time must be finite and non-negative, got {t_total}"
        )));
    }
    let u = integrate(drive, t_total, opts.steps, opts)?;
    let mut report = PropagationReport {
        steps: opts.steps,
        max_drift: u.1,
        richardson_error: None,
    };
    if opts.estimate_error && opts.steps >= 2 {
        let (coarse, _) = integrate(drive, t_total, opts.steps / 2, opts)?;
        let estimate = max_abs(&(&u.0 - coarse)) / 15.0;
        if estimate > opts.error_tolerance {
            log::warn!(
                "propagation with {} steps has Richardson error estimate {estimate:e} (tolerance {:e}); increase steps",
                opts.steps,
                opts.error_tolerance
            );
        }
        report.richardson_error = Some(estimate);
    }
    Ok((u.0, report))
}

fn integrate(
    drive: &LinearDrive<'_>,
    t_total: f64,
    steps: usize,
    opts: &IntegratorOptions,
) -> Result<(CMatrix, f64)> {
    let n = drive.dim();
    let ops = drive.operators();
    let mut u = CMatrix::identity(n, n);
    let ds = 1.0 / steps as f64;
    let tau = t_total * ds;
    let every = opts.repolarize_every.max(1);
    let mut max_drift = 0.0_f64;
    let mut first = vec![0.0; ops.len()];
    let mut second = vec![0.0; ops.len()];
    for step in 0..steps {
        let s0 = step as f64 * ds;
        let lo = drive.coefficients(s0 + NODE_LO * ds);
        let hi = drive.coefficients(s0 + NODE_HI * ds);
        for j in 0..ops.len() {
            first[j] = WEIGHT_BIG * lo[j] + WEIGHT_SMALL * hi[j];
            second[j] = WEIGHT_SMALL * lo[j] + WEIGHT_BIG * hi[j];
        }
        exp_action(ops, &first, tau, &mut u);
        exp_action(ops, &second, tau, &mut u);
        if (step + 1) % every == 0 || step + 1 == steps {
            let drift = unitarity_defect(&u);
            max_drift = max_drift.max(drift);
            if drift > opts.drift_limit {
                return Err(Error::Drift {
                    drift,
                    limit: opts.drift_limit,
                });
            }
            u = repolarize(&u)?;
        }
    }
    Ok((u, max_drift))
}
