//! Exact many-body reference on the `2^(L+1)`-dimensional Fock space.

mod adiabatic;
mod measurement;
mod space;

pub use adiabatic::{standard_adiabatic_state, StandardAdiabaticLimit};
pub use measurement::{
    heat_fcs_oracle, renyi_relative_entropy, run_oracle, success_fcs_oracle, work_fcs_oracle,
    OracleOptions, OracleRun, RenyiEvaluator, LEVEL_TOLERANCE,
};
pub use space::{FockSpace, DEFAULT_ORACLE_CAP};

use crate::error::{Error, Result};
use crate::model::DriveProtocol;
use crate::numerics::{
    hermitian_eig, propagate, CMatrix, HermitianMatrix, IntegratorOptions, LinearDrive,
    PropagationReport, SparseReal, C64,
};

/// Operator on the Fock space of a chain of length `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct FockOperator {
    l: usize,
    matrix: CMatrix,
}

impl FockOperator {
    pub fn new(l: usize, matrix: CMatrix) -> Result<Self> {
        let dim = 2usize << l;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension(format!(
                "Fock operator for L = {l} must be {dim}x{dim}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { l, matrix })
    }

    pub fn chain_length(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn hermitian(&self) -> Result<HermitianMatrix> {
        HermitianMatrix::new(self.matrix.clone())
    }
}

/// Trace tolerance of a density matrix.
pub const TRACE_TOLERANCE: f64 = 1e-12;

/// Positive semidefinite operator of unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    inner: HermitianMatrix,
}

impl DensityMatrix {
    /// Checks unit trace and a minimum eigenvalue of at least `-1e-12`.
    pub fn new(m: HermitianMatrix) -> Result<Self> {
        let trace = m.trace();
        if (trace - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "density matrix has trace {trace}"
            )));
        }
        let min = hermitian_eig(&m)?
            .eigenvalues
            .first()
            .copied()
            .unwrap_or(0.0);
        if min < -1e-12 {
            return Err(Error::InvalidInput(format!(
                "density matrix has eigenvalue {min:e}"
            )));
        }
        Ok(Self { inner: m })
    }

    /// For states obtained from valid ones by unitary conjugation.
    pub(crate) fn from_conjugation(m: HermitianMatrix) -> Self {
        Self { inner: m }
    }

    pub fn from_diagonal(probs: &[f64]) -> Result<Self> {
        Self::new(HermitianMatrix::from_real_diagonal(probs))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let p = 1.0 / dim as f64;
        Self {
            inner: HermitianMatrix::from_real_diagonal(&vec![p; dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.inner
    }

    pub fn matrix(&self) -> &CMatrix {
        self.inner.as_matrix()
    }

    /// `tr(rho a)`.
    pub fn expectation(&self, a: &CMatrix) -> f64 {
        (self.matrix() * a).trace().re
    }

    pub fn evolve(&self, u: &CMatrix) -> Self {
        Self {
            inner: self.inner.conjugate_by(u),
        }
    }
}

/// Fixed operators `[1, sigma_z (x) 1, V, 1 (x) H_R]` of the many-body drive.
fn fock_operators(space: &FockSpace, kappa: f64) -> Vec<SparseReal> {
    vec![
        SparseReal::identity(space.dim()),
        space.sigma_z(),
        space.coupling(),
        space.reservoir_operator(kappa),
    ]
}

fn fock_coefficients(p: &DriveProtocol, s: f64) -> Vec<f64> {
    vec![p.epsilon(s), p.gamma(s), p.lambda(s), 1.0]
}

/// `H(s) = H_S(s) (x) 1 + 1 (x) H_R + lambda(s) V` as a drive.
pub fn fock_drive(p: &DriveProtocol, l: usize, cap: usize) -> Result<LinearDrive<'_>> {
    let space = FockSpace::new(l, cap)?;
    Ok(LinearDrive::new(
        fock_operators(&space, p.kappa),
        move |s| fock_coefficients(p, s),
    ))
}

pub fn fock_hamiltonian(p: &DriveProtocol, s: f64, l: usize) -> Result<FockOperator> {
    fock_hamiltonian_capped(p, s, l, DEFAULT_ORACLE_CAP)
}

pub fn fock_hamiltonian_capped(
    p: &DriveProtocol,
    s: f64,
    l: usize,
    cap: usize,
) -> Result<FockOperator> {
    p.check()?;
    FockOperator::new(l, fock_drive(p, l, cap)?.dense_at(s))
}

/// `1 (x) H_R`.
pub fn reservoir_hamiltonian(p: &DriveProtocol, l: usize) -> Result<FockOperator> {
    let space = FockSpace::new(l, DEFAULT_ORACLE_CAP)?;
    FockOperator::new(l, space.reservoir_operator(p.kappa).to_dense())
}

/// `exp(-beta H) / tr exp(-beta H)`, computed after shifting the ground
/// energy to zero.
pub fn gibbs_state(h: &HermitianMatrix, beta: f64) -> Result<DensityMatrix> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "inverse temperature must be finite and non-negative, got {beta}"
        )));
    }
    let eig = hermitian_eig(h)?;
    let e0 = eig.eigenvalues[0];
    let weights: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|e| (-beta * (e - e0)).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    let mut scaled = eig.eigenvectors.clone();
    for (j, w) in weights.iter().enumerate() {
        let f = C64::new(w / z, 0.0);
        scaled.column_mut(j).iter_mut().for_each(|x| *x *= f);
    }
    Ok(DensityMatrix {
        inner: HermitianMatrix::symmetrized(scaled * eig.eigenvectors.adjoint()),
    })
}

/// Solves `(1/T) i dU/ds = H(s) U` on the Fock space.
pub fn propagate_fock(
    p: &DriveProtocol,
    t: f64,
    l: usize,
    opts: &IntegratorOptions,
    cap: usize,
) -> Result<(FockOperator, PropagationReport)> {
    p.check()?;
    let drive = fock_drive(p, l, cap)?;
    let (u, report) = propagate(&drive, t, opts)?;
    Ok((FockOperator::new(l, u)?, report))
}

/// Eigenbasis of the chain Hamiltonian, one particle-number sector at a time.
#[derive(Clone, Debug)]
pub struct ChainEigenbasis {
    pub vectors: CMatrix,
    pub energies: Vec<f64>,
}

impl ChainEigenbasis {
    pub fn new(space: &FockSpace, kappa: f64) -> Result<Self> {
        let hop = space.chain_hopping(kappa);
        let n = space.chain_dim();
        let mut vectors = CMatrix::zeros(n, n);
        let mut energies = vec![0.0; n];
        let mut column = 0;
        for sector in space.chain_sectors() {
            let k = sector.len();
            let block = CMatrix::from_fn(k, k, |i, j| C64::new(hop.get(sector[i], sector[j]), 0.0));
            let eig = hermitian_eig(&HermitianMatrix::new(block)?)?;
            for (j, &e) in eig.eigenvalues.iter().enumerate() {
                energies[column] = e;
                for (i, &row) in sector.iter().enumerate() {
                    vectors[(row, column)] = eig.eigenvectors[(i, j)];
                }
                column += 1;
            }
        }
        Ok(Self { vectors, energies })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::one_particle_hamiltonian;
    use crate::numerics::max_abs;

    fn protocol() -> DriveProtocol {
        DriveProtocol::erasure(1.0, 1.0, 0.5, [0.9, 0.1])
    }

    fn spectrum(m: &CMatrix) -> Vec<f64> {
        hermitian_eig(&HermitianMatrix::new(m.clone()).unwrap())
            .unwrap()
            .eigenvalues
    }

    #[test]
    fn single_site_decoupled_spectrum() {
        // gamma = 1 and lambda = 0: H = sigma_z (x) 1 with H_R = 0 at L = 1.
        let space = FockSpace::new(1, 10).unwrap();
        let mut h = space.sigma_z().to_dense();
        h += space.reservoir_operator(1.0).to_dense();
        let e = spectrum(&h);
        for (a, b) in e.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn decoupled_hamiltonian_commutes_with_reservoir() {
        let p = protocol();
        let l = 3;
        let hr = reservoir_hamiltonian(&p, l).unwrap();
        for s in [0.0, 1.0] {
            let h = fock_hamiltonian(&p, s, l).unwrap();
            let comm = h.matrix() * hr.matrix() - hr.matrix() * h.matrix();
            assert!(max_abs(&comm) < 1e-13);
        }
        let h = fock_hamiltonian(&p, 0.5, l).unwrap();
        let comm = h.matrix() * hr.matrix() - hr.matrix() * h.matrix();
        assert!(max_abs(&comm) > 1e-3);
    }

    #[test]
    fn decoupled_spectrum_is_sum_of_parts() {
        let p = protocol();
        let l = 3;
        let s = 1.0;
        let h = fock_hamiltonian(&p, s, l).unwrap();
        let chain = ChainEigenbasis::new(&FockSpace::new(l, 10).unwrap(), p.kappa).unwrap();
        let mut expected: Vec<f64> = p
            .system_energies(s)
            .iter()
            .flat_map(|es| chain.energies.iter().map(move |ec| es + ec))
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in spectrum(h.matrix()).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_excitation_sector_reproduces_one_particle_spectrum() {
        // In the sector n_up + N_chain = L the many-body Hamiltonian is
        // unitarily equivalent to h(s) (chain holes play the particles).
        let p = protocol().with_epsilon_offset(0.3);
        let l = 4;
        let space = FockSpace::new(l, 10).unwrap();
        for s in [0.0, 0.37, 0.8] {
            let h = fock_hamiltonian(&p, s, l).unwrap();
            let sector = &space.excitation_sectors()[l];
            assert_eq!(sector.len(), l + 1);
            let block = CMatrix::from_fn(sector.len(), sector.len(), |i, j| {
                h.matrix()[(sector[i], sector[j])]
            });
            let many = spectrum(&block);
            let one = spectrum(one_particle_hamiltonian(&p, s, l).unwrap().as_matrix());
            for (a, b) in many.iter().zip(&one) {
                assert!((a - b).abs() < 1e-12, "s = {s}: {many:?} vs {one:?}");
            }
        }
    }

    #[test]
    fn chain_eigenbasis_diagonalizes_hopping() {
        let space = FockSpace::new(5, 10).unwrap();
        let basis = ChainEigenbasis::new(&space, 1.3).unwrap();
        let h = space.chain_hopping(1.3).to_dense();
        let d = basis.vectors.adjoint() * h * &basis.vectors;
        let expected = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            32,
            basis.energies.iter().map(|&e| C64::new(e, 0.0)),
        ));
        assert!(max_abs(&(d - expected)) < 1e-12);
    }

    #[test]
    fn gibbs_examples() {
        let mixed =
            gibbs_state(&HermitianMatrix::from_real_diagonal(&[0.0, 3.0, 7.0]), 0.0).unwrap();
        assert!(max_abs(&(mixed.matrix() - DensityMatrix::maximally_mixed(3).matrix())) < 1e-15);
        let e = 1.7;
        let two = gibbs_state(&HermitianMatrix::from_real_diagonal(&[0.0, e]), 1.0).unwrap();
        let z = 1.0 + (-e).exp();
        assert!((two.matrix()[(0, 0)].re - 1.0 / z).abs() < 1e-15);
        assert!((two.matrix()[(1, 1)].re - (-e).exp() / z).abs() < 1e-15);
        // Huge energies do not overflow.
        let big = gibbs_state(
            &HermitianMatrix::from_real_diagonal(&[1e4, 1e4 + 1.0]),
            10.0,
        )
        .unwrap();
        assert!((big.as_hermitian().trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn initial_gibbs_state_factorizes() {
        let p = protocol();
        let l = 3;
        let space = FockSpace::new(l, 10).unwrap();
        let eta = gibbs_state(
            &fock_hamiltonian(&p, 0.0, l).unwrap().hermitian().unwrap(),
            p.beta,
        )
        .unwrap();
        let sys = space.reduce_to_system(eta.matrix());
        assert!(max_abs(&(sys - CMatrix::identity(2, 2) * C64::new(0.5, 0.0))) < 1e-12);
        let chain = gibbs_state(
            &HermitianMatrix::new(space.chain_hopping(p.kappa).to_dense()).unwrap(),
            p.beta,
        )
        .unwrap();
        let product = crate::numerics::kron(
            &(CMatrix::identity(2, 2) * C64::new(0.5, 0.0)),
            chain.matrix(),
        );
        assert!(max_abs(&(product - eta.matrix())) < 1e-12);
    }

    #[test]
    fn decoupled_propagation_factorizes() {
        let p = protocol().with_lambda_max(0.0);
        let l = 2;
        let t = 3.0;
        let (u, _) = propagate_fock(&p, t, l, &IntegratorOptions::with_steps(256), 10).unwrap();
        let space = FockSpace::new(l, 10).unwrap();
        // U = exp(-i T int H_S) (x) exp(-i T H_R).
        let phase: f64 = {
            let n = 20_000;
            (0..n)
                .map(|k| p.gamma((k as f64 + 0.5) / n as f64))
                .sum::<f64>()
                / n as f64
        };
        let us = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(0.0, -t * phase).exp(),
            C64::new(0.0, t * phase).exp(),
        ]));
        let ur = crate::numerics::apply_spectral_function(
            &HermitianMatrix::new(space.chain_hopping(p.kappa).to_dense()).unwrap(),
            |e| C64::new(0.0, -t * e).exp(),
        )
        .unwrap();
        assert!(max_abs(&(u.matrix() - crate::numerics::kron(&us, &ur))) < 1e-8);
    }

    #[test]
    fn autonomous_fock_propagation_is_exponential() {
        // epsilon only: constant Hamiltonian 1 (x) H_R + eps.
        let p = protocol().with_lambda_max(0.0).with_epsilon_offset(0.4);
        let p = DriveProtocol {
            target_probs: vec![0.5, 0.5],
            ..p
        };
        let l = 2;
        let t = 7.0;
        let (u, _) = propagate_fock(&p, t, l, &IntegratorOptions::with_steps(64), 10).unwrap();
        let h = fock_hamiltonian(&p, 0.5, l).unwrap().hermitian().unwrap();
        let exact =
            crate::numerics::apply_spectral_function(&h, |e| C64::new(0.0, -t * e).exp()).unwrap();
        assert!(max_abs(&(u.matrix() - exact)) < 1e-12);
    }
}
