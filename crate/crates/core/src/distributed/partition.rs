use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseCoo;

/// Assignment of nodes to ranks together with the derived owned and halo
/// sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub num_parts: usize,
    pub part_of: Vec<usize>,
    /// Ascending global indices owned by each rank.
    pub owned: Vec<Vec<usize>>,
    /// Ascending global indices of non-owned nodes coupled to an owned node
    /// through an entry `(i, h)` or `(h, i)`.
    pub halo: Vec<Vec<usize>>,
    /// Ranks owning at least one halo node, or holding an owned node in
    /// their own halo.
    pub neighbors: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn new(a: &SparseCoo, part_of: Vec<usize>, num_parts: usize) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                nrows: a.nrows(),
                ncols: a.ncols(),
            });
        }
        let n = a.nrows();
        if part_of.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: part_of.len(),
            });
        }
        if num_parts == 0 {
            return Err(Error::InvalidArgument("need at least one part".into()));
        }
        if let Some(&bad) = part_of.iter().find(|&&p| p >= num_parts) {
            return Err(Error::InvalidArgument(format!(
                "node assigned to rank {bad}, but there are {num_parts} parts"
            )));
        }

        let mut owned = vec![Vec::new(); num_parts];
        for (i, &p) in part_of.iter().enumerate() {
            owned[p].push(i);
        }
        let mut halo = vec![Vec::new(); num_parts];
        for (i, j, _) in a.iter() {
            let (pi, pj) = (part_of[i], part_of[j]);
            if pi != pj {
                halo[pi].push(j);
                halo[pj].push(i);
            }
        }
        for h in &mut halo {
            h.sort_unstable();
            h.dedup();
        }
        let mut neighbors = vec![Vec::new(); num_parts];
        for (p, h) in halo.iter().enumerate() {
            for &g in h {
                neighbors[p].push(part_of[g]);
                neighbors[part_of[g]].push(p);
            }
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        Ok(Self {
            num_parts,
            part_of,
            owned,
            halo,
            neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.part_of.len()
    }
}

/// Rank `p` owns `[p·⌈n/P⌉, min((p+1)·⌈n/P⌉, n))`. Trailing ranks may own
/// nothing when `⌈n/P⌉·(P−1) ≥ n`.
pub fn partition_contiguous(n: usize, num_parts: usize) -> Result<Vec<usize>> {
    if num_parts == 0 || num_parts > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} nodes into {num_parts} parts"
        )));
    }
    let block = n.div_ceil(num_parts);
    Ok((0..n).map(|i| i / block).collect())
}

/// Recursive coordinate bisection: split at the median of the longer
/// bounding-box axis (x on ties), recursing until `num_parts` pieces.
/// The first half of each split takes the extra node when the count is odd.
pub fn partition_rcb(coords: &[[f64; 2]], num_parts: usize) -> Result<Vec<usize>> {
    if num_parts == 0 || !num_parts.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "recursive bisection needs a power-of-two part count, got {num_parts}"
        )));
    }
    if num_parts > coords.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} nodes into {num_parts} parts",
            coords.len()
        )));
    }
    let mut part_of = vec![0; coords.len()];
    let mut nodes: Vec<usize> = (0..coords.len()).collect();
    bisect(coords, &mut nodes, 0, num_parts, &mut part_of);
    Ok(part_of)
}

fn bisect(coords: &[[f64; 2]], nodes: &mut [usize], first: usize, parts: usize, out: &mut [usize]) {
    if parts == 1 {
        for &i in nodes.iter() {
            out[i] = first;
        }
        return;
    }
    let extent = |axis: usize| {
        let (lo, hi) = nodes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(coords[i][axis]), hi.max(coords[i][axis]))
            });
        hi - lo
    };
    let axis = if extent(0) >= extent(1) { 0 } else { 1 };
    nodes.sort_by(|&a, &b| coords[a][axis].total_cmp(&coords[b][axis]).then(a.cmp(&b)));
    let mid = nodes.len().div_ceil(2);
    let (left, right) = nodes.split_at_mut(mid);
    bisect(coords, left, first, parts / 2, out);
    bisect(coords, right, first + parts / 2, parts / 2, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{poisson2d, poisson2d_rect};

    fn path_laplacian(n: usize) -> SparseCoo {
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            rows.push(i);
            cols.push(i);
            vals.push(2.0);
            if i + 1 < n {
                rows.extend([i, i + 1]);
                cols.extend([i + 1, i]);
                vals.extend([-1.0, -1.0]);
            }
        }
        SparseCoo::new(rows, cols, vals, (n, n)).unwrap()
    }

    #[test]
    fn contiguous_examples() {
        assert_eq!(partition_contiguous(6, 2).unwrap(), vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(partition_contiguous(5, 2).unwrap(), vec![0, 0, 0, 1, 1]);
        assert_eq!(partition_contiguous(4, 1).unwrap(), vec![0; 4]);
        assert!(partition_contiguous(2, 3).is_err());
    }

    #[test]
    fn rcb_corners() {
        let c = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert_eq!(partition_rcb(&c, 2).unwrap(), vec![0, 1, 0, 1]);
        assert_eq!(partition_rcb(&c, 1).unwrap(), vec![0; 4]);
        assert!(partition_rcb(&c, 3).is_err());
    }

    #[test]
    fn rcb_quadrants() {
        let p = poisson2d(16).unwrap();
        let part = partition_rcb(&p.coords, 4).unwrap();
        for (i, &[x, y]) in p.coords.iter().enumerate() {
            let expected = match (x < 8.0, y < 8.0) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            assert_eq!(part[i], expected, "node {i}");
        }
    }

    #[test]
    fn figure_chain_plan() {
        let a = path_laplacian(6);
        let plan = PartitionPlan::new(&a, partition_contiguous(6, 2).unwrap(), 2).unwrap();
        assert_eq!(plan.owned, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(plan.halo, vec![vec![3], vec![2]]);
        assert_eq!(plan.neighbors, vec![vec![1], vec![0]]);
    }

    #[test]
    fn interior_halo_is_two_grid_rows() {
        let n = 8;
        let p = poisson2d(n).unwrap();
        let plan =
            PartitionPlan::new(&p.matrix, partition_contiguous(n * n, 4).unwrap(), 4).unwrap();
        assert_eq!(plan.halo[0].len(), n);
        assert_eq!(plan.halo[1].len(), 2 * n);
        assert_eq!(plan.halo[3].len(), n);
    }

    #[test]
    fn diagonal_has_no_halo() {
        let a = SparseCoo::from_diagonal(&[1.0; 10]);
        let plan = PartitionPlan::new(&a, partition_contiguous(10, 3).unwrap(), 3).unwrap();
        assert!(plan.halo.iter().all(|h| h.is_empty()));
        assert!(plan.neighbors.iter().all(|nb| nb.is_empty()));
    }

    #[test]
    fn rect_rcb_splits_long_axis_first() {
        let p = poisson2d_rect(8, 2).unwrap();
        let part = partition_rcb(&p.coords, 2).unwrap();
        for (i, c) in p.coords.iter().enumerate() {
            assert_eq!(part[i], usize::from(c[0] >= 4.0));
        }
    }
}
