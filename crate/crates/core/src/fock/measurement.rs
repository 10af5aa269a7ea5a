//! Two-time measurement statistics on the Fock space.

use nalgebra::DMatrix;

use super::{
    gibbs_state, propagate_fock, ChainEigenbasis, DensityMatrix, FockOperator, FockSpace,
    DEFAULT_ORACLE_CAP,
};
use crate::error::{Error, Result};
use crate::model::{default_step_count, DriveProtocol};
use crate::numerics::{
    hermitian_eig, CMatrix, HermitianMatrix, IntegratorOptions, PropagationReport, C64,
    EIGENVALUE_FLOOR,
};
use crate::stats::{
    AlphaAxis, AlphaGrid, CgfCurve, HeatDistribution, PointStatus, Provenance, DEFAULT_BIN_TOL,
};

/// Absolute tolerance for grouping measured energies into eigenprojections.
pub const LEVEL_TOLERANCE: f64 = 1e-10;

/// Agreement required between independent evaluations of one CGF.
const CROSS_CHECK_TOLERANCE: f64 = 1e-9;

/// Level index of every basis vector; level energies are cluster means.
fn group_levels(energies: &[f64], tol: f64) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let mut ids = vec![0; energies.len()];
    let mut sums: Vec<(f64, usize)> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for &i in &order {
        let e = energies[i];
        if sums.is_empty() || e - last > tol {
            sums.push((0.0, 0));
        }
        let level = sums.len() - 1;
        sums[level].0 += e;
        sums[level].1 += 1;
        ids[i] = level;
        last = e;
    }
    (ids, sums.into_iter().map(|(s, n)| s / n as f64).collect())
}

/// A propagator, initial state and measured energies, all written in a
/// basis that diagonalizes both measured Hamiltonians.
struct TwoTime<'a> {
    u: &'a CMatrix,
    eta: &'a CMatrix,
    initial: &'a [f64],
    fin: &'a [f64],
    /// Diagonal of a final projector commuting with the final measurement.
    filter: Option<&'a [bool]>,
}

struct TwoTimeResult {
    distribution: HeatDistribution,
    /// `tr(U eta U* P)`; one without a filter.
    norm: f64,
    /// `eta U*` with `eta` unprojected, for the direct trace.
    eta_u_adj: CMatrix,
}

impl TwoTime<'_> {
    fn passes(&self, a: usize) -> bool {
        self.filter.is_none_or(|f| f[a])
    }

    fn statistics(&self, bin_tol: f64) -> Result<TwoTimeResult> {
        let n = self.u.nrows();
        let (init_ids, init_levels) = group_levels(self.initial, LEVEL_TOLERANCE);
        let (fin_ids, fin_levels) = group_levels(self.fin, LEVEL_TOLERANCE);

        let mut projected = self.eta.clone();
        let mut residual = 0.0_f64;
        for j in 0..n {
            for i in 0..n {
                if init_ids[i] != init_ids[j] {
                    residual = residual.max(projected[(i, j)].norm());
                    projected[(i, j)] = C64::new(0.0, 0.0);
                }
            }
        }
        if residual > LEVEL_TOLERANCE {
            return Err(Error::NonCommuting(residual));
        }

        let adj = self.u.adjoint();
        let z = &projected * &adj;
        let mut weights = DMatrix::<f64>::zeros(fin_levels.len(), init_levels.len());
        for a in (0..n).filter(|&a| self.passes(a)) {
            for b in 0..n {
                weights[(fin_ids[a], init_ids[b])] += (self.u[(a, b)] * z[(b, a)]).re;
            }
        }
        let norm: f64 = weights.iter().sum();
        if self.filter.is_some() && norm <= 1e-12 {
            return Err(Error::VanishingSuccess(norm));
        }
        let mut samples = Vec::with_capacity(weights.len());
        for (j, e) in init_levels.iter().enumerate() {
            for (i, e_prime) in fin_levels.iter().enumerate() {
                let w = weights[(i, j)] / norm;
                if w > 0.0 {
                    samples.push((e_prime - e, w));
                }
            }
        }
        Ok(TwoTimeResult {
            distribution: HeatDistribution::from_samples(samples, bin_tol),
            norm,
            eta_u_adj: self.eta * adj,
        })
    }

    /// `log tr(e^{-alpha H'} U e^{alpha H} eta U* P) / norm` without level
    /// grouping, with the round-off scale of the sum.
    fn direct(&self, r: &TwoTimeResult, alpha: C64) -> (C64, f64) {
        let n = self.u.nrows();
        let up: Vec<C64> = self.initial.iter().map(|&e| (alpha * e).exp()).collect();
        let down: Vec<C64> = self.fin.iter().map(|&e| (-alpha * e).exp()).collect();
        let mut sum = C64::new(0.0, 0.0);
        let mut scale = 0.0;
        for a in (0..n).filter(|&a| self.passes(a)) {
            for b in 0..n {
                let term = down[a] * self.u[(a, b)] * up[b] * r.eta_u_adj[(b, a)];
                sum += term;
                scale += term.norm();
            }
        }
        ((sum / r.norm).ln(), scale / sum.norm())
    }

    fn curve(&self, grid: &AlphaGrid, bin_tol: f64) -> Result<(HeatDistribution, CgfCurve)> {
        grid.validate()?;
        let result = self.statistics(bin_tol)?;
        let curve = result.distribution.cgf_curve(grid, Provenance::Oracle);
        for (&a, value) in grid.points.iter().zip(&curve.values) {
            let (direct, condition) = self.direct(&result, grid.to_complex(a));
            let mut diff = value - direct;
            diff.im -= (diff.im / std::f64::consts::TAU).round() * std::f64::consts::TAU;
            let tol = CROSS_CHECK_TOLERANCE + 64.0 * f64::EPSILON * condition;
            if diff.norm() > tol {
                return Err(Error::Inconsistent {
                    alpha: a,
                    first: value.re,
                    second: direct.re,
                });
            }
        }
        Ok((result.distribution, curve))
    }
}

/// Heat statistics of the two-time measurement of `H_R`.
///
/// Checks that `eta_i` commutes with `H_R` and that the CGF from the
/// distribution matches `log tr(e^{-alpha H_R} U e^{alpha H_R} eta_i U*)`.
pub fn heat_fcs_oracle(
    u: &FockOperator,
    eta_i: &DensityMatrix,
    h_r: &FockOperator,
    grid: &AlphaGrid,
) -> Result<(HeatDistribution, CgfCurve)> {
    let eig = hermitian_eig(&h_r.hermitian()?)?;
    let w = &eig.eigenvectors;
    let u_t = w.adjoint() * u.matrix() * w;
    let eta_t = w.adjoint() * eta_i.matrix() * w;
    let data = TwoTime {
        u: &u_t,
        eta: &eta_t,
        initial: &eig.eigenvalues,
        fin: &eig.eigenvalues,
        filter: None,
    };
    let (dist, curve) = data.curve(grid, DEFAULT_BIN_TOL)?;
    Ok((dist, curve.with_tags(Some(u.chain_length()), None)))
}

/// Caches the spectral data of a state pair so that
/// `S_a(rho|sigma) = log tr(rho^a sigma^{1-a})` costs `O(n^2)` per order.
#[derive(Clone, Debug)]
pub struct RenyiEvaluator {
    rho: Vec<f64>,
    sigma: Vec<f64>,
    overlap: DMatrix<f64>,
}

impl RenyiEvaluator {
    pub fn new(rho: &HermitianMatrix, sigma: &HermitianMatrix) -> Result<Self> {
        if rho.dim() != sigma.dim() {
            return Err(Error::Dimension(format!(
                "states of dimension {} and {}",
                rho.dim(),
                sigma.dim()
            )));
        }
        let r = hermitian_eig(rho)?;
        let s = hermitian_eig(sigma)?;
        let o = r.eigenvectors.adjoint() * &s.eigenvectors;
        Ok(Self {
            rho: r.eigenvalues.iter().map(|&x| x.max(0.0)).collect(),
            sigma: s
                .eigenvalues
                .iter()
                .map(|&x| x.max(EIGENVALUE_FLOOR))
                .collect(),
            overlap: o.map(|z| z.norm_sqr()),
        })
    }

    pub fn evaluate(&self, a: f64) -> Result<f64> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::RenyiOrder(a));
        }
        let ra: Vec<f64> = self.rho.iter().map(|x| x.powf(a)).collect();
        let sb: Vec<f64> = self.sigma.iter().map(|x| x.powf(1.0 - a)).collect();
        let mut total = 0.0;
        for (j, s) in sb.iter().enumerate() {
            let col: f64 = ra
                .iter()
                .enumerate()
                .map(|(i, r)| r * self.overlap[(i, j)])
                .sum();
            total += s * col;
        }
        Ok(total.ln())
    }

    /// `alpha -> S_{alpha/beta}` on a real grid; `0` at `alpha = 0`, failure
    /// markers outside `(0, beta]`.
    pub fn curve(
        &self,
        grid: &AlphaGrid,
        beta: f64,
        shift: impl Fn(f64) -> f64,
    ) -> Result<CgfCurve> {
        if grid.axis != AlphaAxis::Real {
            return Err(Error::InvalidInput(
                "the Renyi route needs a real alpha grid".into(),
            ));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut status = Vec::with_capacity(grid.len());
        for &a in &grid.points {
            if a == 0.0 {
                values.push(C64::new(0.0, 0.0));
                status.push(PointStatus::Ok);
                continue;
            }
            match self.evaluate(a / beta) {
                Ok(v) => {
                    values.push(C64::new(v + shift(a), 0.0));
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
        Ok(curve)
    }
}

/// `log tr(rho^a sigma^{1-a})` for `a` in `(0, 1]`.
pub fn renyi_relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix, a: f64) -> Result<f64> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::RenyiOrder(a));
    }
    RenyiEvaluator::new(rho.as_hermitian(), sigma.as_hermitian())?.evaluate(a)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleOptions {
    /// Largest accepted `L`.
    pub cap: usize,
    /// `None` uses `max(4096, 64 T kappa)`.
    pub steps: Option<usize>,
    pub estimate_error: bool,
    pub bin_tol: f64,
    /// Cross-check the work CGF against the Renyi identity.
    pub verify_work: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ORACLE_CAP,
            steps: None,
            estimate_error: false,
            bin_tol: DEFAULT_BIN_TOL,
            verify_work: true,
        }
    }
}

impl OracleOptions {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps: Some(steps),
            ..Self::default()
        }
    }

    pub fn integrator(&self, p: &DriveProtocol, t: f64) -> IntegratorOptions {
        IntegratorOptions {
            steps: self.steps.unwrap_or_else(|| default_step_count(p, t)),
            estimate_error: self.estimate_error,
            ..IntegratorOptions::default()
        }
    }
}

/// One propagated protocol with everything expressed in the product
/// eigenbasis `1 (x) W` of the decoupled Hamiltonians.
#[derive(Clone, Debug)]
pub struct OracleRun {
    protocol: DriveProtocol,
    t: f64,
    space: FockSpace,
    u: FockOperator,
    report: PropagationReport,
    chain: ChainEigenbasis,
    u_product: CMatrix,
    eta_product: Vec<f64>,
    rho1_product: CMatrix,
    bin_tol: f64,
    verify_work: bool,
}

/// `(1 (x) W)* m (1 (x) W)` when `forward`, else `(1 (x) W) m (1 (x) W)*`.
fn change_chain_basis(m: &CMatrix, w: &CMatrix, forward: bool) -> CMatrix {
    let n = w.nrows();
    let mut out = CMatrix::zeros(2 * n, 2 * n);
    let w_adj = w.adjoint();
    let (left, right) = if forward { (&w_adj, w) } else { (w, &w_adj) };
    for i in 0..2 {
        for j in 0..2 {
            let block = m.view((i * n, j * n), (n, n));
            out.view_mut((i * n, j * n), (n, n))
                .copy_from(&(left * block * right));
        }
    }
    out
}

/// `(R* (x) 1) m (R (x) 1)` for a 2x2 system unitary `R`.
fn rotate_system(m: &CMatrix, r: &CMatrix, n: usize) -> CMatrix {
    let mut out = CMatrix::zeros(2 * n, 2 * n);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let c = r[(k, i)].conj() * r[(l, j)];
                    if c.norm() == 0.0 {
                        continue;
                    }
                    let block = m.view((k * n, l * n), (n, n)).map(|z| z * c);
                    let mut target = out.view_mut((i * n, j * n), (n, n));
                    target += block;
                }
            }
        }
    }
    out
}

pub fn run_oracle(p: &DriveProtocol, t: f64, l: usize, opts: &OracleOptions) -> Result<OracleRun> {
    p.check()?;
    let space = FockSpace::new(l, opts.cap)?;
    let (u, report) = propagate_fock(p, t, l, &opts.integrator(p, t), opts.cap)?;
    let chain = ChainEigenbasis::new(&space, p.kappa)?;
    let u_product = change_chain_basis(u.matrix(), &chain.vectors, true);
    let initial = product_energies(p, &chain, 0.0);
    let e0 = initial.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = initial.iter().map(|e| (-p.beta * (e - e0)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let eta_product: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let mut scaled = u_product.clone();
    for (j, &w) in eta_product.iter().enumerate() {
        scaled.column_mut(j).iter_mut().for_each(|x| *x *= w);
    }
    let rho1_product = scaled * u_product.adjoint();
    Ok(OracleRun {
        protocol: p.clone(),
        t,
        space,
        u,
        report,
        chain,
        u_product,
        eta_product,
        rho1_product,
        bin_tol: opts.bin_tol,
        verify_work: opts.verify_work,
    })
}

/// Eigenvalues of `H(s)` on the product basis; requires `lambda(s) = 0`.
fn product_energies(p: &DriveProtocol, chain: &ChainEigenbasis, s: f64) -> Vec<f64> {
    p.system_energies(s)
        .iter()
        .flat_map(|es| chain.energies.iter().map(move |ec| es + ec))
        .collect()
}

fn diag(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| C64::new(v, 0.0)),
    ))
}

fn free_energy(energies: &[f64], beta: f64) -> f64 {
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let z: f64 = energies.iter().map(|e| (-beta * (e - e0)).exp()).sum();
    e0 - z.ln() / beta
}

impl OracleRun {
    pub fn protocol(&self) -> &DriveProtocol {
        &self.protocol
    }

    pub fn adiabatic_time(&self) -> f64 {
        self.t
    }

    pub fn chain_length(&self) -> usize {
        self.space.chain_length()
    }

    pub fn propagator(&self) -> &FockOperator {
        &self.u
    }

    pub fn report(&self) -> &PropagationReport {
        &self.report
    }

    fn reservoir_energies(&self) -> Vec<f64> {
        self.chain
            .energies
            .iter()
            .chain(&self.chain.energies)
            .copied()
            .collect()
    }

    fn tag(&self, curve: CgfCurve) -> CgfCurve {
        curve.with_tags(Some(self.chain_length()), Some(self.t))
    }

    /// Heat distribution and CGF of the reservoir energy change.
    pub fn heat(&self, grid: &AlphaGrid) -> Result<(HeatDistribution, CgfCurve)> {
        let energies = self.reservoir_energies();
        let eta = diag(&self.eta_product);
        let data = TwoTime {
            u: &self.u_product,
            eta: &eta,
            initial: &energies,
            fin: &energies,
            filter: None,
        };
        let (dist, curve) = data.curve(grid, self.bin_tol)?;
        Ok((dist, self.tag(curve)))
    }

    /// Work statistics of measuring `H(0)` then `H(1)`, cross-checked against
    /// `-alpha dF + S_{alpha/beta}(eta_f | rho_1)` on `(0, beta]`.
    pub fn work(&self, grid: &AlphaGrid) -> Result<(HeatDistribution, CgfCurve)> {
        let initial = product_energies(&self.protocol, &self.chain, 0.0);
        let fin = product_energies(&self.protocol, &self.chain, 1.0);
        let eta = diag(&self.eta_product);
        let data = TwoTime {
            u: &self.u_product,
            eta: &eta,
            initial: &initial,
            fin: &fin,
            filter: None,
        };
        let (dist, curve) = data.curve(grid, self.bin_tol)?;
        if self.verify_work && grid.axis == AlphaAxis::Real {
            let beta = self.protocol.beta;
            let delta_f = free_energy(&fin, beta) - free_energy(&initial, beta);
            let e0 = fin.iter().copied().fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = fin.iter().map(|e| (-beta * (e - e0)).exp()).collect();
            let z: f64 = w.iter().sum();
            let eta_f: Vec<f64> = w.iter().map(|x| x / z).collect();
            let renyi = RenyiEvaluator::new(
                &HermitianMatrix::from_real_diagonal(&eta_f),
                &HermitianMatrix::symmetrized(self.rho1_product.clone()),
            )?;
            let identity = renyi.curve(grid, beta, |a| -a * delta_f)?;
            for ((&a, x), (y, st)) in grid
                .points
                .iter()
                .zip(&curve.values)
                .zip(identity.values.iter().zip(&identity.status))
            {
                if st.is_ok() && (x.re - y.re).abs() > CROSS_CHECK_TOLERANCE {
                    return Err(Error::Inconsistent {
                        alpha: a,
                        first: x.re,
                        second: y.re,
                    });
                }
            }
        }
        Ok((dist, self.tag(curve)))
    }

    /// Heat CGF conditioned on finding the system in `psi` at the end.
    pub fn success(&self, grid: &AlphaGrid, psi: [C64; 2]) -> Result<(HeatDistribution, CgfCurve)> {
        let norm = (psi[0].norm_sqr() + psi[1].norm_sqr()).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidInput("target vector must be non-zero".into()));
        }
        let (a, b) = (psi[0] / norm, psi[1] / norm);
        // Unitary with first column psi.
        let r = CMatrix::from_row_slice(2, 2, &[a, -b.conj(), b, a.conj()]);
        let n = self.space.chain_dim();
        let u = rotate_system(&self.u_product, &r, n);
        let eta = rotate_system(&diag(&self.eta_product), &r, n);
        let energies = self.reservoir_energies();
        let filter: Vec<bool> = (0..2 * n).map(|i| i < n).collect();
        let data = TwoTime {
            u: &u,
            eta: &eta,
            initial: &energies,
            fin: &energies,
            filter: Some(&filter),
        };
        let (dist, curve) = data.curve(grid, self.bin_tol)?;
        Ok((dist, self.tag(curve)))
    }

    /// `tr(U eta_i U* |psi><psi| (x) 1)`.
    pub fn success_probability(&self, psi: [C64; 2]) -> f64 {
        let sys = self.final_system_state();
        let norm = psi[0].norm_sqr() + psi[1].norm_sqr();
        let mut p = C64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                p += psi[i].conj() * sys[(i, j)] * psi[j];
            }
        }
        p.re / norm
    }

    /// `eta_i` on the Fock basis.
    pub fn initial_state(&self) -> DensityMatrix {
        let m = change_chain_basis(&diag(&self.eta_product), &self.chain.vectors, false);
        DensityMatrix::from_conjugation(HermitianMatrix::symmetrized(m))
    }

    /// `rho_1 = U eta_i U*` on the Fock basis.
    pub fn final_state(&self) -> DensityMatrix {
        let m = change_chain_basis(&self.rho1_product, &self.chain.vectors, false);
        DensityMatrix::from_conjugation(HermitianMatrix::symmetrized(m))
    }

    /// Instantaneous Gibbs state of `H(1)`, computed independently on the Fock basis.
    pub fn final_gibbs_state(&self) -> Result<DensityMatrix> {
        let h =
            super::fock_hamiltonian_capped(&self.protocol, 1.0, self.chain_length(), usize::MAX)?;
        gibbs_state(&h.hermitian()?, self.protocol.beta)
    }

    pub fn initial_system_state(&self) -> CMatrix {
        self.space.reduce_to_system(&diag(&self.eta_product))
    }

    pub fn final_system_state(&self) -> CMatrix {
        self.space.reduce_to_system(&self.rho1_product)
    }

    /// `tr(rho_1 H_R) - tr(eta_i H_R)`.
    pub fn expected_heat(&self) -> f64 {
        self.expectation_change(&self.reservoir_energies(), &self.reservoir_energies())
    }

    /// `tr(rho_1 H(1)) - tr(eta_i H(0))`.
    pub fn expected_work(&self) -> f64 {
        let initial = product_energies(&self.protocol, &self.chain, 0.0);
        let fin = product_energies(&self.protocol, &self.chain, 1.0);
        self.expectation_change(&initial, &fin)
    }

    /// `tr(rho_1 H_S(1)) - tr(eta_i H_S(0))`.
    pub fn expected_system_energy_change(&self) -> f64 {
        let n = self.space.chain_dim();
        let sys = |s: f64| -> Vec<f64> {
            let e = self.protocol.system_energies(s);
            (0..2 * n).map(|i| e[i / n]).collect()
        };
        self.expectation_change(&sys(0.0), &sys(1.0))
    }

    fn expectation_change(&self, initial: &[f64], fin: &[f64]) -> f64 {
        let after: f64 = fin
            .iter()
            .enumerate()
            .map(|(i, e)| e * self.rho1_product[(i, i)].re)
            .sum();
        let before: f64 = initial
            .iter()
            .zip(&self.eta_product)
            .map(|(e, w)| e * w)
            .sum();
        after - before
    }

    /// Heat CGF through `S_{alpha/beta}(eta_i | rho_1)` with both states
    /// built on the Fock basis.
    pub fn heat_renyi(&self, grid: &AlphaGrid) -> Result<CgfCurve> {
        let eval = RenyiEvaluator::new(
            self.initial_state().as_hermitian(),
            self.final_state().as_hermitian(),
        )?;
        Ok(self.tag(eval.curve(grid, self.protocol.beta, |_| 0.0)?))
    }
}

/// Work CGF of the two-time measurement of `H(0)` and `H(1)`.
pub fn work_fcs_oracle(
    p: &DriveProtocol,
    t: f64,
    l: usize,
    grid: &AlphaGrid,
    opts: &OracleOptions,
) -> Result<CgfCurve> {
    Ok(run_oracle(p, t, l, opts)?.work(grid)?.1)
}

/// Heat CGF conditioned on the final system state `psi`.
pub fn success_fcs_oracle(
    p: &DriveProtocol,
    t: f64,
    l: usize,
    grid: &AlphaGrid,
    psi: [C64; 2],
    opts: &OracleOptions,
) -> Result<CgfCurve> {
    Ok(run_oracle(p, t, l, opts)?.success(grid, psi)?.1)
}
