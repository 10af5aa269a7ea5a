//! Polynomial-cost engine: the impurity model is quasi-free after a
//! Jordan-Wigner and particle-hole transformation, so heat statistics reduce
//! to determinants over the `(L + 1)`-dimensional one-particle space.
//!
//! In that picture the impurity mode is occupied when the spin points down,
//! the reservoir symbol is `k = 0 (+) kappa Delta`, and the initial state is
//! the Fermi-Dirac state of `k` at inverse temperature `beta`.

use crate::error::{Error, Result};
use crate::model::{
    default_step_count, one_particle_drive, reservoir_symbol, thermal_symbol, DriveProtocol,
};
use crate::numerics::{
    hermitian_eig, logdet, logdet_pos, propagate, unitarity_defect, unwrap_log_branch, CMatrix,
    HermitianMatrix, IntegratorOptions, PropagationReport, C64,
};
use crate::stats::{AlphaAxis, AlphaGrid, CgfCurve, PointStatus, Provenance};

/// Unitarity required of a returned propagator.
pub const UNITARITY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct OneParticlePropagator {
    pub u: CMatrix,
    pub t: f64,
    pub l: usize,
    pub report: PropagationReport,
}

/// `(1/T) i du/ds = h(s) u` with the default step rule unless `steps` is given.
pub fn propagate_one_particle(
    p: &DriveProtocol,
    t: f64,
    l: usize,
    steps: Option<usize>,
) -> Result<OneParticlePropagator> {
    let opts = IntegratorOptions {
        steps: steps.unwrap_or_else(|| default_step_count(p, t)),
        ..Default::default()
    };
    propagate_one_particle_with(p, t, l, &opts)
}

pub fn propagate_one_particle_with(
    p: &DriveProtocol,
    t: f64,
    l: usize,
    opts: &IntegratorOptions,
) -> Result<OneParticlePropagator> {
    p.check()?;
    let drive = one_particle_drive(p, l)?;
    let (u, report) = propagate(&drive, t, opts)?;
    let defect = unitarity_defect(&u);
    if defect > UNITARITY_TOLERANCE {
        return Err(Error::NotNearlyUnitary(defect));
    }
    Ok(OneParticlePropagator { u, t, l, report })
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Fermi-Dirac occupation `1 / (1 + e^x)` and its complement.
fn fermi(x: f64) -> (f64, f64) {
    if x > 0.0 {
        let e = (-x).exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    } else {
        let e = x.exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    }
}

fn scale_rows(m: &mut CMatrix, d: &[C64]) {
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row.iter_mut().for_each(|z| *z *= d[i]);
    }
}

fn scale_columns(m: &mut CMatrix, d: &[C64]) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.iter_mut().for_each(|z| *z *= d[j]);
    }
}

/// `u diag(d) u*`.
fn sandwich(u: &CMatrix, d: &[C64]) -> CMatrix {
    let mut left = u.clone();
    scale_columns(&mut left, d);
    left * u.adjoint()
}

/// A propagator expressed in the eigenbasis of the reservoir symbol.
#[derive(Clone, Debug)]
pub struct QuasiFreeRun {
    beta: f64,
    t: f64,
    l: usize,
    energies: Vec<f64>,
    basis: CMatrix,
    u_k: CMatrix,
}

impl QuasiFreeRun {
    pub fn new(u: &OneParticlePropagator, p: &DriveProtocol) -> Result<Self> {
        p.check()?;
        if u.u.nrows() != u.l + 1 {
            return Err(Error::Dimension(format!(
                "propagator of size {} for L = {}",
                u.u.nrows(),
                u.l
            )));
        }
        let eig = hermitian_eig(&reservoir_symbol(p, u.l)?)?;
        let u_k = eig.eigenvectors.adjoint() * &u.u * &eig.eigenvectors;
        Ok(Self {
            beta: p.beta,
            t: u.t,
            l: u.l,
            energies: eig.eigenvalues,
            basis: eig.eigenvectors,
            u_k,
        })
    }

    fn tag(&self, curve: CgfCurve) -> CgfCurve {
        curve.with_tags(Some(self.l), Some(self.t))
    }

    /// `log det(1 + e^{-beta k})`.
    fn log_partition(&self) -> f64 {
        self.energies
            .iter()
            .map(|&e| softplus(-self.beta * e))
            .sum()
    }

    /// Real `alpha`: Cholesky log-determinant of the Hermitian form
    /// `1 + e^{-alpha k/2} u e^{(alpha - beta) k} u* e^{-alpha k/2}`.
    fn heat_real(&self, alpha: f64) -> Result<f64> {
        let inner: Vec<C64> = self
            .energies
            .iter()
            .map(|&e| C64::new(((alpha - self.beta) * e).exp(), 0.0))
            .collect();
        let outer: Vec<C64> = self
            .energies
            .iter()
            .map(|&e| C64::new((-0.5 * alpha * e).exp(), 0.0))
            .collect();
        let mut m = sandwich(&self.u_k, &inner);
        scale_rows(&mut m, &outer);
        scale_columns(&mut m, &outer);
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0;
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Determinant(format!("overflow at alpha = {alpha}")));
        }
        Ok(logdet_pos(&HermitianMatrix::symmetrized(m))? - self.log_partition())
    }

    /// `alpha = i theta`: principal-branch LU log-determinant.
    fn heat_imaginary(&self, theta: f64) -> Result<C64> {
        let inner: Vec<C64> = self
            .energies
            .iter()
            .map(|&e| C64::new(-self.beta * e, theta * e).exp())
            .collect();
        let outer: Vec<C64> = self
            .energies
            .iter()
            .map(|&e| C64::new(0.0, -theta * e).exp())
            .collect();
        let mut m = sandwich(&self.u_k, &inner);
        scale_rows(&mut m, &outer);
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0;
        }
        Ok(logdet(&m)? - self.log_partition())
    }

    /// Heat CGF from the determinant formula. Real points outside `[0, beta]`
    /// are flagged, failed points carry NaN.
    pub fn heat_cgf(&self, grid: &AlphaGrid) -> Result<CgfCurve> {
        grid.validate()?;
        let mut values = Vec::with_capacity(grid.len());
        let mut status = Vec::with_capacity(grid.len());
        for &a in &grid.points {
            let r = match grid.axis {
                AlphaAxis::Real => self.heat_real(a).map(|v| C64::new(v, 0.0)),
                AlphaAxis::Imaginary => self.heat_imaginary(a),
            };
            match r {
                Ok(v) => {
                    values.push(v);
                    let inside =
                        grid.axis == AlphaAxis::Imaginary || (0.0..=self.beta).contains(&a);
                    status.push(if inside {
                        PointStatus::Ok
                    } else {
                        PointStatus::OutsideWindow
                    });
                }
                Err(e) => {
                    values.push(C64::new(f64::NAN, f64::NAN));
                    status.push(PointStatus::Failed(e.to_string()));
                }
            }
        }
        if grid.axis == AlphaAxis::Imaginary {
            if !grid.is_increasing() {
                return Err(Error::InvalidInput(
                    "imaginary-axis grids must be strictly increasing".into(),
                ));
            }
            unwrap_log_branch(&mut values, grid.origin_index());
        }
        let mut curve = CgfCurve::new(grid.clone(), values, Provenance::Determinant);
        curve.status = status;
        Ok(self.tag(curve))
    }

    /// Order-`a` Renyi relative entropy `S_a(eta_i | rho_1)` from the two
    /// correlation matrices, `a` in `[0, 1]`.
    pub fn renyi(&self, a: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::RenyiOrder(a));
        }
        let occ: Vec<(f64, f64)> = self
            .energies
            .iter()
            .map(|&e| fermi(self.beta * e))
            .collect();
        let rho_particle: Vec<C64> = occ.iter().map(|o| C64::new(o.0.powf(a), 0.0)).collect();
        let rho_hole: Vec<C64> = occ.iter().map(|o| C64::new(o.1.powf(a), 0.0)).collect();
        let sigma_particle: Vec<C64> = occ
            .iter()
            .map(|o| C64::new(o.0.powf(1.0 - a), 0.0))
            .collect();
        let sigma_hole: Vec<C64> = occ
            .iter()
            .map(|o| C64::new(o.1.powf(1.0 - a), 0.0))
            .collect();
        let mut holes = sandwich(&self.u_k, &sigma_hole);
        scale_rows(&mut holes, &rho_hole);
        let mut particles = sandwich(&self.u_k, &sigma_particle);
        scale_rows(&mut particles, &rho_particle);
        let v = logdet(&(holes + particles))?;
        if v.im.abs() > 1e-8 {
            return Err(Error::Determinant(format!(
                "Renyi determinant has phase {:e}",
                v.im
            )));
        }
        Ok(v.re)
    }

    /// `alpha -> S_{alpha/beta}(eta_i | rho_1)` on a real grid; points
    /// outside `[0, beta]` fail.
    pub fn renyi_cgf(&self, grid: &AlphaGrid) -> Result<CgfCurve> {
        grid.validate()?;
        if grid.axis != AlphaAxis::Real {
            return Err(Error::InvalidInput(
                "the Renyi route needs a real alpha grid".into(),
            ));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut status = Vec::with_capacity(grid.len());
        for &a in &grid.points {
            match self.renyi(a / self.beta) {
                Ok(v) => {
                    values.push(C64::new(v, 0.0));
                    status.push(PointStatus::Ok);
                }
                Err(e) => {
                    values.push(C64::new(f64::NAN, 0.0));
                    status.push(PointStatus::Failed(e.to_string()));
                }
            }
        }
        let mut curve = CgfCurve::new(grid.clone(), values, Provenance::Renyi);
        curve.status = status;
        Ok(self.tag(curve))
    }

    /// Initial correlation matrix `n_0 = (1 + e^{beta k})^{-1}` (original basis).
    pub fn initial_correlation(&self) -> CMatrix {
        let occ: Vec<C64> = self
            .energies
            .iter()
            .map(|&e| C64::new(fermi(self.beta * e).0, 0.0))
            .collect();
        sandwich(&self.basis, &occ)
    }

    /// Final correlation matrix `u n_0 u*` (original basis).
    pub fn final_correlation(&self) -> CMatrix {
        let occ: Vec<C64> = self
            .energies
            .iter()
            .map(|&e| C64::new(fermi(self.beta * e).0, 0.0))
            .collect();
        let u = &self.basis * &self.u_k;
        sandwich(&u, &occ)
    }

    /// `tr(k (u n_0 u* - n_0))`.
    pub fn expected_heat(&self) -> f64 {
        let occ: Vec<C64> = self
            .energies
            .iter()
            .map(|&e| C64::new(fermi(self.beta * e).0, 0.0))
            .collect();
        let c1 = sandwich(&self.u_k, &occ);
        self.energies
            .iter()
            .enumerate()
            .map(|(i, e)| e * (c1[(i, i)].re - occ[i].re))
            .sum()
    }

    /// Impurity occupation, which is the spin-down population.
    pub fn final_impurity_occupation(&self) -> f64 {
        self.final_correlation()[(0, 0)].re
    }

    /// Reduced system state in the `(up, down)` basis.
    pub fn final_system_state(&self) -> CMatrix {
        system_state(self.final_impurity_occupation())
    }

    pub fn initial_system_state(&self) -> CMatrix {
        system_state(self.initial_correlation()[(0, 0)].re)
    }
}

/// `diag(1 - n, n)`: the spin is diagonal because the dynamics conserve
/// the excitation number.
fn system_state(down: f64) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        C64::new(1.0 - down, 0.0),
        C64::new(down, 0.0),
    ]))
}

/// Heat CGF `log det(1 + e^{-alpha k} u e^{alpha k} e^{-beta k} u*) - log det(1 + e^{-beta k})`.
pub fn heat_cgf_determinant(
    u: &OneParticlePropagator,
    p: &DriveProtocol,
    grid: &AlphaGrid,
) -> Result<CgfCurve> {
    QuasiFreeRun::new(u, p)?.heat_cgf(grid)
}

/// Same object through the Renyi relative entropy of Gaussian states.
pub fn renyi_cgf_quasifree(
    u: &OneParticlePropagator,
    p: &DriveProtocol,
    grid: &AlphaGrid,
) -> Result<CgfCurve> {
    QuasiFreeRun::new(u, p)?.renyi_cgf(grid)
}

pub fn expected_heat(u: &OneParticlePropagator, p: &DriveProtocol) -> Result<f64> {
    Ok(QuasiFreeRun::new(u, p)?.expected_heat())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingTrace {
    pub times: Vec<f64>,
    /// Occupation of the observed site minus its instantaneous Gibbs value.
    pub deviation: Vec<f64>,
    /// Decay rate fitted to the envelope of `|deviation|`.
    pub rate: f64,
    pub warnings: Vec<String>,
}

/// Relaxation of the decoupled initial state under the frozen `h(s)`.
///
/// `samples` times are spread over `[0, t_max]`; the rate is a least-squares
/// fit of `log` of the running tail maximum of `|deviation|`, restricted to
/// the ballistic horizon `L / (2 kappa)` and to envelope values above a
/// thousandth of the initial one.
pub fn mixing_probe(
    p: &DriveProtocol,
    s: f64,
    l: usize,
    t_max: f64,
    samples: usize,
    site: usize,
) -> Result<MixingTrace> {
    p.check()?;
    if site > l {
        return Err(Error::InvalidInput(format!("site {site} outside 0..={l}")));
    }
    if !(t_max.is_finite() && t_max > 0.0) || samples < 2 {
        return Err(Error::InvalidInput(
            "mixing probe needs t_max > 0 and at least two samples".into(),
        ));
    }
    let mut warnings = Vec::new();
    let horizon = l as f64 / (2.0 * p.kappa);
    if t_max > horizon {
        warnings.push(format!(
            "t_max = {t_max} exceeds the recurrence horizon L/(2 kappa) = {horizon}; late samples see boundary reflections"
        ));
    }
    if p.lambda(s) == 0.0 {
        warnings.push("lambda(s) = 0: no equilibration".into());
    }

    let h = hermitian_eig(&thermal_symbol(p, s, l)?)?;
    let gibbs = h.map_real(|e| fermi(p.beta * e).0)?;
    let target = gibbs.as_matrix()[(site, site)].re;
    let k = hermitian_eig(&reservoir_symbol(p, l)?)?;
    let n0 = k.map(|e| C64::new(fermi(p.beta * e).0, 0.0))?;
    // Work in the eigenbasis of h(s).
    let n0_h = h.eigenvectors.adjoint() * n0 * &h.eigenvectors;
    let row = h.eigenvectors.row(site).clone_owned();

    let times: Vec<f64> = (0..samples)
        .map(|i| t_max * i as f64 / (samples - 1) as f64)
        .collect();
    let deviation: Vec<f64> = times
        .iter()
        .map(|&t| {
            let phase: Vec<C64> = h
                .eigenvalues
                .iter()
                .map(|&e| C64::new(0.0, -t * e).exp())
                .collect();
            // (V e^{-iEt} n0_h e^{iEt} V*)_{site,site}
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..phase.len() {
                let left = row[a] * phase[a];
                for b in 0..phase.len() {
                    acc += left * n0_h[(a, b)] * (row[b] * phase[b]).conj();
                }
            }
            acc.re - target
        })
        .collect();

    let mut envelope = deviation.iter().map(|d| d.abs()).collect::<Vec<_>>();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let floor = 1e-3 * envelope[0];
    let fit: Vec<(f64, f64)> = times
        .iter()
        .zip(&envelope)
        .filter(|(&t, &e)| t <= horizon && e > floor && e > 0.0)
        .map(|(&t, &e)| (t, e.ln()))
        .collect();
    let rate = if fit.len() >= 2 {
        let n = fit.len() as f64;
        let (mt, my) = fit
            .iter()
            .fold((0.0, 0.0), |acc, (t, y)| (acc.0 + t / n, acc.1 + y / n));
        let cov: f64 = fit.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
        let var: f64 = fit.iter().map(|(t, _)| (t - mt).powi(2)).sum();
        if var > 0.0 {
            -cov / var
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(MixingTrace {
        times,
        deviation,
        rate,
        warnings,
    })
}
