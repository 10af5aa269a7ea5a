//! Dense complex Hermitian linear algebra shared by both engines.
//!
//! Every matrix function goes through a full eigendecomposition, so
//! exponentials, fractional powers and logarithms share one code path.

mod logdet;
mod polar;
mod propagator;
mod sparse;

pub use logdet::{logdet, logdet_pos, unwrap_log_branch};
pub use polar::{repolarize, unitarity_defect};
pub use propagator::{exp_action, propagate, IntegratorOptions, LinearDrive, PropagationReport};
pub use sparse::SparseReal;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Floor applied to eigenvalues before logarithms and negative powers.
pub const EIGENVALUE_FLOOR: f64 = 1e-300;

/// Hermiticity tolerance, relative to `max(1, max |m_ij|)`.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// Square complex matrix equal to its conjugate transpose.
///
/// Construction checks the invariant and then symmetrizes exactly, so the
/// stored entries satisfy `m[i][j] == conj(m[j][i])` bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    inner: CMatrix,
}

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::Dimension(format!(
                "Hermitian matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.iter().fold(1.0_f64, |acc, z| acc.max(z.norm()));
        for j in 0..n {
            for i in 0..=j {
                let deviation = (m[(i, j)] - m[(j, i)].conj()).norm();
                if !(deviation <= HERMITIAN_TOLERANCE * scale) {
                    return Err(Error::NotHermitian {
                        row: i,
                        col: j,
                        deviation,
                    });
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Builds `(m + m*)/2` without checking how far `m` was from Hermitian.
    pub fn symmetrized(m: CMatrix) -> Self {
        let adj = m.adjoint();
        Self {
            inner: (m + adj).scale(0.5),
        }
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        Self { inner: m }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: CMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            inner: CMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.inner
    }

    pub fn into_matrix(self) -> CMatrix {
        self.inner
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace().re
    }

    /// Unitary conjugation `u m u*`.
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        Self::symmetrized(u * &self.inner * u.adjoint())
    }
}

/// Eigenvalues in ascending order with the matching eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(f(e)) V*`.
    pub fn map<F>(&self, f: F) -> Result<CMatrix>
    where
        F: Fn(f64) -> C64,
    {
        let mut scaled = self.eigenvectors.clone();
        for (j, &e) in self.eigenvalues.iter().enumerate() {
            let fe = f(e);
            if !(fe.re.is_finite() && fe.im.is_finite()) {
                return Err(Error::NonFiniteSpectralValue { eigenvalue: e });
            }
            for z in scaled.column_mut(j).iter_mut() {
                *z *= fe;
            }
        }
        Ok(scaled * self.eigenvectors.adjoint())
    }

    /// Same as [`map`](Self::map) for real-valued functions; the result is Hermitian.
    pub fn map_real<F>(&self, f: F) -> Result<HermitianMatrix>
    where
        F: Fn(f64) -> f64,
    {
        self.map(|e| C64::new(f(e), 0.0))
            .map(HermitianMatrix::symmetrized)
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(|e| C64::new(e, 0.0))
            .expect("identity is finite on a finite spectrum")
    }

    /// Groups eigenvalues closer than `tol` (chained) into contiguous index ranges.
    pub fn levels(&self, tol: f64) -> Vec<EnergyLevel> {
        let mut levels: Vec<EnergyLevel> = Vec::new();
        for (i, &e) in self.eigenvalues.iter().enumerate() {
            match levels.last_mut() {
                Some(level) if e - self.eigenvalues[level.end - 1] <= tol => level.end = i + 1,
                _ => levels.push(EnergyLevel {
                    energy: e,
                    start: i,
                    end: i + 1,
                }),
            }
        }
        for level in &mut levels {
            let slice = &self.eigenvalues[level.start..level.end];
            level.energy = slice.iter().sum::<f64>() / slice.len() as f64;
        }
        levels
    }
}

/// A cluster of (numerically) degenerate eigenvalues, `start..end` in the
/// ascending eigenvalue order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyLevel {
    pub energy: f64,
    pub start: usize,
    pub end: usize,
}

impl EnergyLevel {
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn multiplicity(&self) -> usize {
        self.end - self.start
    }
}

pub fn hermitian_eig(m: &HermitianMatrix) -> Result<SpectralDecomposition> {
    let dim = m.dim();
    let max_iter = 1000 * dim.max(16);
    let eig = SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, max_iter)
        .ok_or(Error::EigenNoConvergence { dim })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(Error::EigenNoConvergence { dim });
    }
    let mut eigenvectors = CMatrix::zeros(dim, dim);
    for (j, &k) in order.iter().enumerate() {
        eigenvectors.set_column(j, &eig.eigenvectors.column(k));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

pub fn apply_spectral_function<F>(m: &HermitianMatrix, f: F) -> Result<CMatrix>
where
    F: Fn(f64) -> C64,
{
    hermitian_eig(m)?.map(f)
}

/// `m^a` for positive semidefinite `m`, eigenvalues clamped at `floor`.
pub fn fractional_power(m: &HermitianMatrix, a: f64, floor: f64) -> Result<HermitianMatrix> {
    hermitian_eig(m)?.map_real(|e| e.max(floor).powf(a))
}

/// Von Neumann entropy `-tr(rho log rho)` in nats.
pub fn von_neumann_entropy(rho: &HermitianMatrix) -> Result<f64> {
    let eig = hermitian_eig(rho)?;
    Ok(eig
        .eigenvalues
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum())
}

/// `||a - b||_1 / 2` for Hermitian `a`, `b`.
pub fn trace_distance(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    let diff = HermitianMatrix::symmetrized(a.as_matrix() - b.as_matrix());
    Ok(0.5
        * hermitian_eig(&diff)?
            .eigenvalues
            .iter()
            .map(|e| e.abs())
            .sum::<f64>())
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Kronecker product `a (x) b`, `a` acting on the slow (leading) index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}
