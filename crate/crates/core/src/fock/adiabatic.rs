//! Large-`T` limit at fixed `L`: populations follow the instantaneous
//! eigenvectors inside each conserved sector, so the final weights are the
//! initial Gibbs weights of `H(0)`, not those of `H(1)`.

use super::{fock_hamiltonian_capped, FockSpace};
use crate::error::Result;
use crate::model::DriveProtocol;
use crate::numerics::{hermitian_eig, trace_distance, CMatrix, HermitianMatrix, C64};

/// Degeneracy tolerance at `s = 1`.
const CLUSTER_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct StandardAdiabaticLimit {
    /// Reduced system state in the `(up, down)` basis.
    pub system_state: CMatrix,
    /// Trace distance from `diag(p_1, p_2)`.
    pub distance_to_target: f64,
}

/// Closed-form `T -> infinity` state at fixed `L`: the k-th lowest level of
/// `H(0)` in each sector of `n_up + N_chain` is carried to the k-th lowest
/// level of `H(1)`. Weights are averaged over degenerate clusters at `s = 1`.
pub fn standard_adiabatic_state(
    p: &DriveProtocol,
    l: usize,
    cap: usize,
) -> Result<StandardAdiabaticLimit> {
    let space = FockSpace::new(l, cap)?;
    let h0 = fock_hamiltonian_capped(p, 0.0, l, cap)?.into_matrix();
    let h1 = fock_hamiltonian_capped(p, 1.0, l, cap)?.into_matrix();
    let n = space.chain_dim();

    // Per sector: initial energies, final eigenvectors, final clusters.
    let mut sectors = Vec::new();
    for sector in space.excitation_sectors() {
        let k = sector.len();
        let block = |h: &CMatrix| CMatrix::from_fn(k, k, |i, j| h[(sector[i], sector[j])]);
        let e0 = hermitian_eig(&HermitianMatrix::new(block(&h0))?)?;
        let e1 = hermitian_eig(&HermitianMatrix::new(block(&h1))?)?;
        let clusters = e1.levels(CLUSTER_TOLERANCE);
        sectors.push((sector, e0.eigenvalues, e1.eigenvectors, clusters));
    }

    let ground = sectors
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let boltzmann = |e: f64| (-p.beta * (e - ground)).exp();
    let z: f64 = sectors
        .iter()
        .flat_map(|s| s.1.iter().map(|&e| boltzmann(e)))
        .sum();

    let mut system = CMatrix::zeros(2, 2);
    for (sector, initial, vectors, clusters) in &sectors {
        for cluster in clusters {
            let w = initial[cluster.indices()]
                .iter()
                .map(|&e| boltzmann(e))
                .sum::<f64>()
                / z
                / cluster.multiplicity() as f64;
            for col in cluster.indices() {
                let mut full = vec![C64::new(0.0, 0.0); 2 * n];
                for (i, &row) in sector.iter().enumerate() {
                    full[row] = vectors[(i, col)];
                }
                for a in 0..2 {
                    for b in 0..2 {
                        let overlap: C64 = (0..n)
                            .map(|c| full[a * n + c] * full[b * n + c].conj())
                            .sum();
                        system[(a, b)] += overlap * w;
                    }
                }
            }
        }
    }
    let probs = p.sorted_probs();
    let target = HermitianMatrix::from_real_diagonal(&probs);
    let distance_to_target =
        trace_distance(&HermitianMatrix::symmetrized(system.clone()), &target)?;
    Ok(StandardAdiabaticLimit {
        system_state: system,
        distance_to_target,
    })
}
