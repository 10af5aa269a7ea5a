//! Fock space of one spin coupled to `L` spinless chain fermions.
//!
//! Basis index `sys * 2^L + sum_x n_x 2^(L - x)` with `sys = 0` for spin up
//! and site `x = 1` as the most significant chain bit. Jordan-Wigner strings
//! run over chain sites only; the spin is a genuine tensor factor.

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, SparseReal, C64};

/// Default cap on `L` for dense Fock-space work.
pub const DEFAULT_ORACLE_CAP: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FockSpace {
    l: usize,
}

impl FockSpace {
    /// Refuses `L` above `cap`, reporting the memory a dense propagator needs.
    pub fn new(l: usize, cap: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::EmptyChain);
        }
        if l > cap {
            let dim = 1u128 << (l + 1).min(120);
            let bytes = dim * dim * std::mem::size_of::<C64>() as u128;
            return Err(Error::OracleTooLarge { l, cap, bytes });
        }
        Ok(Self { l })
    }

    pub fn chain_length(&self) -> usize {
        self.l
    }

    pub fn chain_dim(&self) -> usize {
        1 << self.l
    }

    pub fn dim(&self) -> usize {
        2 << self.l
    }

    pub fn index(&self, spin_down: bool, chain: usize) -> usize {
        (usize::from(spin_down) << self.l) | chain
    }

    /// Occupation of site `x` in `1..=L` of a chain configuration.
    pub fn occupied(&self, chain: usize, x: usize) -> bool {
        (chain >> (self.l - x)) & 1 == 1
    }

    /// Parity of the occupied sites `< x`.
    fn string_sign(&self, chain: usize, x: usize) -> f64 {
        let above = chain >> (self.l - x + 1);
        if above.count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// `c(x)` on a chain configuration: `(sign, new configuration)`.
    pub fn annihilate(&self, chain: usize, x: usize) -> Option<(f64, usize)> {
        self.occupied(chain, x)
            .then(|| (self.string_sign(chain, x), chain ^ (1 << (self.l - x))))
    }

    /// `c*(x)` on a chain configuration.
    pub fn create(&self, chain: usize, x: usize) -> Option<(f64, usize)> {
        (!self.occupied(chain, x))
            .then(|| (self.string_sign(chain, x), chain | (1 << (self.l - x))))
    }

    /// `N' = n_up + N_chain`, conserved by the coupled Hamiltonian.
    pub fn excitation_number(&self, index: usize) -> usize {
        let chain = index & (self.chain_dim() - 1);
        let up = usize::from(index >> self.l == 0);
        up + chain.count_ones() as usize
    }

    /// `sum_x kappa (c*(x) c(x+1) + h.c.)` on the chain factor alone.
    pub fn chain_hopping(&self, kappa: f64) -> SparseReal {
        let mut t = Vec::new();
        for chain in 0..self.chain_dim() {
            for x in 1..self.l {
                for (from, to) in [(x + 1, x), (x, x + 1)] {
                    if let Some((s1, mid)) = self.annihilate(chain, from) {
                        if let Some((s2, out)) = self.create(mid, to) {
                            t.push((out, chain, kappa * s1 * s2));
                        }
                    }
                }
            }
        }
        SparseReal::from_triplets(self.chain_dim(), t)
    }

    /// `1 (x) H_R`.
    pub fn reservoir_operator(&self, kappa: f64) -> SparseReal {
        SparseReal::kron_left(&[1.0, 0.0, 0.0, 1.0], 2, &self.chain_hopping(kappa))
    }

    /// `sigma_z (x) 1`.
    pub fn sigma_z(&self) -> SparseReal {
        SparseReal::kron_left(
            &[1.0, 0.0, 0.0, -1.0],
            2,
            &SparseReal::identity(self.chain_dim()),
        )
    }

    /// `sigma^- (x) c*(1) + sigma^+ (x) c(1)`.
    pub fn coupling(&self) -> SparseReal {
        let mut t = Vec::new();
        for chain in 0..self.chain_dim() {
            if let Some((sign, out)) = self.create(chain, 1) {
                let from = self.index(false, chain);
                let to = self.index(true, out);
                t.push((to, from, sign));
                t.push((from, to, sign));
            }
        }
        SparseReal::from_triplets(self.dim(), t)
    }

    /// `tr_chain rho` as a 2x2 matrix in the `(up, down)` basis.
    pub fn reduce_to_system(&self, rho: &CMatrix) -> CMatrix {
        let n = self.chain_dim();
        CMatrix::from_fn(2, 2, |i, j| {
            (0..n).map(|c| rho[(i * n + c, j * n + c)]).sum()
        })
    }

    /// Basis indices grouped by chain particle number.
    pub fn chain_sectors(&self) -> Vec<Vec<usize>> {
        let mut sectors = vec![Vec::new(); self.l + 1];
        for c in 0..self.chain_dim() {
            sectors[c.count_ones() as usize].push(c);
        }
        sectors
    }

    /// Basis indices grouped by `N'`.
    pub fn excitation_sectors(&self) -> Vec<Vec<usize>> {
        let mut sectors = vec![Vec::new(); self.l + 2];
        for i in 0..self.dim() {
            sectors[self.excitation_number(i)].push(i);
        }
        sectors
    }
}
