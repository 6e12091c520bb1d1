use std::collections::HashMap;

use crate::distributed::PartitionPlan;
use crate::error::{Error, Result};
use crate::sparse::SparseCoo;

/// Exchange lists for one neighbor, both sorted by global index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborExchange {
    pub rank: usize,
    /// Local positions of owned values this neighbor needs.
    pub send_idx: Vec<usize>,
    /// Local positions (in the halo region) this neighbor fills.
    pub recv_idx: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HaloMap {
    /// Ascending by rank.
    pub neighbors: Vec<NeighborExchange>,
}

impl HaloMap {
    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Owned rows of a matrix with columns in `[owned | halo]` local numbering.
///
/// Entries of a row stay in ascending global column order, so a row sum is
/// accumulated in the same order as the serial kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMatrix {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl LocalMatrix {
    fn extract(
        a: &SparseCoo,
        owned: &[usize],
        global_to_local: &HashMap<usize, usize>,
    ) -> (Self, Vec<usize>) {
        let csr = a.to_csr();
        let mut row_ptr = Vec::with_capacity(owned.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        let mut entry_index = Vec::new();
        for &g in owned {
            let start = csr.row_ptr()[g];
            let (cols, row_vals) = csr.row(g);
            for (k, (&c, &v)) in cols.iter().zip(row_vals).enumerate() {
                col_idx.push(global_to_local[&c]);
                vals.push(v);
                entry_index.push(start + k);
            }
            row_ptr.push(col_idx.len());
        }
        (
            Self {
                row_ptr,
                col_idx,
                vals,
            },
            entry_index,
        )
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = A_local · x_ext` with `x_ext` laid out as `[owned | halo]`.
    pub fn spmv_into(&self, x_ext: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x_ext[self.col_idx[k]];
            }
            *yi = acc;
        }
    }
}

/// Everything one rank needs to take part in distributed kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPartition {
    pub rank: usize,
    pub num_ranks: usize,
    pub n_global: usize,
    /// Global indices of owned nodes, ascending.
    pub owned: Vec<usize>,
    /// Global indices of halo nodes, ascending.
    pub halo: Vec<usize>,
    pub matrix: LocalMatrix,
    /// Index into the global canonical COO of each local entry.
    pub entry_index: Vec<usize>,
    /// Owned rows of `Aᵀ`, present when `A` is structurally but not
    /// numerically symmetric.
    pub transposed: Option<LocalMatrix>,
    /// Global `A` is numerically symmetric.
    pub symmetric: bool,
    pub structurally_symmetric: bool,
    pub halo_map: HaloMap,
    pub global_to_local: HashMap<usize, usize>,
}

impl LocalPartition {
    pub fn n_owned(&self) -> usize {
        self.owned.len()
    }

    pub fn n_halo(&self) -> usize {
        self.halo.len()
    }

    pub fn n_local(&self) -> usize {
        self.owned.len() + self.halo.len()
    }

    /// `[x_owned | 0]`, ready for a halo exchange.
    pub fn extend(&self, x_owned: &[f64]) -> Vec<f64> {
        let mut ext = Vec::with_capacity(self.n_local());
        ext.extend_from_slice(x_owned);
        ext.resize(self.n_local(), 0.0);
        ext
    }
}

/// Extracts rank `rank`'s share of `a` under `plan`.
pub fn build_local(a: &SparseCoo, plan: &PartitionPlan, rank: usize) -> Result<LocalPartition> {
    if rank >= plan.num_parts {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} out of range for {} parts",
            plan.num_parts
        )));
    }
    if a.nrows() != plan.n() || !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: plan.n(),
            got: a.nrows(),
        });
    }
    let owned = plan.owned[rank].clone();
    let halo = plan.halo[rank].clone();
    let global_to_local: HashMap<usize, usize> = owned
        .iter()
        .chain(&halo)
        .enumerate()
        .map(|(l, &g)| (g, l))
        .collect();

    let (matrix, entry_index) = LocalMatrix::extract(a, &owned, &global_to_local);
    let structurally_symmetric = a.is_structurally_symmetric();
    let symmetric = structurally_symmetric && a.is_symmetric();
    let transposed = (structurally_symmetric && !symmetric)
        .then(|| LocalMatrix::extract(&a.transpose(), &owned, &global_to_local).0);

    let mut neighbors = Vec::new();
    for &q in &plan.neighbors[rank] {
        let send_idx = plan.halo[q]
            .iter()
            .filter(|&&g| plan.part_of[g] == rank)
            .map(|g| global_to_local[g])
            .collect();
        let recv_idx = halo
            .iter()
            .filter(|&&g| plan.part_of[g] == q)
            .map(|g| global_to_local[g])
            .collect();
        neighbors.push(NeighborExchange {
            rank: q,
            send_idx,
            recv_idx,
        });
    }

    Ok(LocalPartition {
        rank,
        num_ranks: plan.num_parts,
        n_global: plan.n(),
        owned,
        halo,
        matrix,
        entry_index,
        transposed,
        symmetric,
        structurally_symmetric,
        halo_map: HaloMap { neighbors },
        global_to_local,
    })
}
