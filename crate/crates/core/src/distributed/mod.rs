//! Domain decomposition over a message transport: partitioning, halo
//! exchange, distributed SpMV and CG, and the distributed adjoint solve.
//!
//! Every operation here is collective: all ranks must call it in the same
//! order. Reductions are summed in rank order, so results are reproducible
//! run to run, and on one rank they match the serial kernels bit for bit.

mod local;
mod partition;
mod transport;

use crate::error::{Error, Result};
use crate::solvers::{Backend, SolveReport};
use crate::vecops::{axpy, dot};

pub use local::{build_local, HaloMap, LocalMatrix, LocalPartition, NeighborExchange};
pub use partition::{partition_contiguous, partition_rcb, PartitionPlan};
pub use transport::{
    run_ranks, run_ranks_with, CommCounters, CommLog, InProcessTransport, Message, Transport,
    DEFAULT_TIMEOUT, HEADER_BYTES,
};

/// Fills the halo region of `values` (`[owned | halo]`) with the owners'
/// current values. All sends are posted before any receive.
pub fn halo_exchange<T: Transport + ?Sized>(
    transport: &T,
    values: &mut [f64],
    halo: &HaloMap,
    epoch: u64,
) -> Result<()> {
    transport.counters().record_halo_exchange();
    for nb in &halo.neighbors {
        let payload: Vec<f64> = nb.send_idx.iter().map(|&i| values[i]).collect();
        transport.send(nb.rank, epoch, &payload)?;
    }
    for nb in &halo.neighbors {
        let payload = transport.recv(nb.rank, epoch)?;
        if payload.len() != nb.recv_idx.len() {
            return Err(Error::Transport(format!(
                "rank {} sent {} halo values, expected {}",
                nb.rank,
                payload.len(),
                nb.recv_idx.len()
            )));
        }
        for (&slot, v) in nb.recv_idx.iter().zip(payload) {
            values[slot] = v;
        }
    }
    Ok(())
}

fn spmv_with<T: Transport + ?Sized>(
    local: &LocalPartition,
    matrix: &LocalMatrix,
    transport: &T,
    ext: &mut [f64],
    y: &mut [f64],
) -> Result<()> {
    halo_exchange(
        transport,
        ext,
        &local.halo_map,
        transport.counters().next_epoch(),
    )?;
    matrix.spmv_into(ext, y);
    Ok(())
}

/// Owned slice of `A·x`, given the owned slice of `x`.
pub fn dist_spmv<T: Transport + ?Sized>(
    local: &LocalPartition,
    transport: &T,
    x_owned: &[f64],
) -> Result<Vec<f64>> {
    check_len(local, x_owned)?;
    let mut ext = local.extend(x_owned);
    let mut y = vec![0.0; local.n_owned()];
    spmv_with(local, &local.matrix, transport, &mut ext, &mut y)?;
    Ok(y)
}

pub fn all_reduce_sum<T: Transport + ?Sized>(transport: &T, value: f64) -> Result<f64> {
    transport.all_reduce_sum(value)
}

/// Global dot product: local partial sums reduced in rank order.
pub fn dist_dot<T: Transport + ?Sized>(transport: &T, a: &[f64], b: &[f64]) -> Result<f64> {
    transport.all_reduce_sum(dot(a, b))
}

fn check_len(local: &LocalPartition, v: &[f64]) -> Result<()> {
    if v.len() != local.n_owned() {
        return Err(Error::DimensionMismatch {
            expected: local.n_owned(),
            got: v.len(),
        });
    }
    Ok(())
}

/// Distributed unpreconditioned CG from `x = 0`, stopping when the global
/// residual norm reaches `atol` (use `atol = 0` for a fixed `max_iter`
/// sweep).
///
/// Per iteration: one halo exchange and two all-reduces; one more
/// all-reduce precedes the loop. `spmv_count` equals `iterations` because
/// the initial residual is `b` and needs no product.
pub fn dist_cg<T: Transport + ?Sized>(
    local: &LocalPartition,
    transport: &T,
    b_owned: &[f64],
    atol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    check_len(local, b_owned)?;
    cg_on(local, &local.matrix, transport, b_owned, atol, max_iter)
}

fn cg_on<T: Transport + ?Sized>(
    local: &LocalPartition,
    matrix: &LocalMatrix,
    transport: &T,
    b: &[f64],
    atol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p_ext = local.extend(&r);
    let mut ap = vec![0.0; n];
    let mut rho = dist_dot(transport, &r, &r)?;
    let mut res = rho.sqrt();

    let mut iterations = 0;
    let mut diagnostic = None;
    while res > atol && iterations < max_iter {
        spmv_with(local, matrix, transport, &mut p_ext, &mut ap)?;
        let pap = dist_dot(transport, &p_ext[..n], &ap)?;
        if !(pap > 0.0) {
            diagnostic = Some(format!(
                "breakdown: non-positive curvature pᵀAp = {pap:e} at iteration {iterations}"
            ));
            break;
        }
        let alpha = rho / pap;
        for i in 0..n {
            x[i] += alpha * p_ext[i];
        }
        for i in 0..n {
            r[i] -= alpha * ap[i];
        }
        let rho_new = dist_dot(transport, &r, &r)?;
        res = rho_new.sqrt();
        let beta = rho_new / rho;
        for i in 0..n {
            p_ext[i] = r[i] + beta * p_ext[i];
        }
        rho = rho_new;
        iterations += 1;
    }
    let converged = res <= atol;
    if !converged && diagnostic.is_none() {
        diagnostic = Some(format!("reached max_iter = {max_iter}"));
    }
    Ok((
        x,
        SolveReport {
            iterations,
            residual_norm: res,
            converged,
            spmv_count: iterations,
            backend: Backend::Cg,
            diagnostic,
        },
    ))
}

/// Unpreconditioned distributed BiCGStab from `x = 0`, used for `Aᵀ` when
/// `A` is not symmetric.
fn bicgstab_on<T: Transport + ?Sized>(
    local: &LocalPartition,
    matrix: &LocalMatrix,
    transport: &T,
    b: &[f64],
    atol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let b_norm2 = dist_dot(transport, b, b)?;
    let mut res = b_norm2.sqrt();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p_ext = local.extend(&v);
    let mut s_ext = local.extend(&v);
    let mut t = vec![0.0; n];
    let mut spmv_count = 0;
    let mut iterations = 0;
    let mut diagnostic = None;

    while res > atol && iterations < max_iter {
        let rho_new = dist_dot(transport, &r_hat, &r)?;
        if rho_new.abs() < 1e-30 * b_norm2 {
            diagnostic = Some(format!(
                "breakdown: rho = {rho_new:e} at iteration {iterations}"
            ));
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p_ext[i] = r[i] + beta * (p_ext[i] - omega * v[i]);
        }
        spmv_with(local, matrix, transport, &mut p_ext, &mut v)?;
        spmv_count += 1;
        alpha = rho_new / dist_dot(transport, &r_hat, &v)?;
        for i in 0..n {
            s_ext[i] = r[i] - alpha * v[i];
        }
        let s_norm = dist_dot(transport, &s_ext[..n], &s_ext[..n])?.sqrt();
        iterations += 1;
        if s_norm <= atol {
            axpy(alpha, &p_ext[..n], &mut x);
            res = s_norm;
            break;
        }
        spmv_with(local, matrix, transport, &mut s_ext, &mut t)?;
        spmv_count += 1;
        let tt = dist_dot(transport, &t, &t)?;
        omega = dist_dot(transport, &t, &s_ext[..n])? / tt;
        for i in 0..n {
            x[i] += alpha * p_ext[i] + omega * s_ext[i];
            r[i] = s_ext[i] - omega * t[i];
        }
        res = dist_dot(transport, &r, &r)?.sqrt();
        rho = rho_new;
        if !(omega != 0.0 && omega.is_finite()) {
            diagnostic = Some(format!(
                "breakdown: omega = {omega:e} at iteration {iterations}"
            ));
            break;
        }
    }
    let converged = res <= atol;
    if !converged && diagnostic.is_none() {
        diagnostic = Some(format!("reached max_iter = {max_iter}"));
    }
    Ok((
        x,
        SolveReport {
            iterations,
            residual_norm: res,
            converged,
            spmv_count,
            backend: Backend::Bicgstab,
            diagnostic,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistGradient {
    /// Owned slice of `λ`, the gradient with respect to `b`.
    pub grad_b_owned: Vec<f64>,
    /// `−λ_i · x_j` for every local entry, aligned with
    /// [`LocalPartition::entry_index`].
    pub grad_vals_local: Vec<f64>,
    pub report: SolveReport,
}

/// Distributed backward pass of `A x = b`: solves `Aᵀ λ = grad_x` with the
/// forward halo maps, then forms the entry gradients locally.
///
/// Requires a structurally symmetric `A` so the forward communication
/// pattern also serves `Aᵀ`. Symmetric `A` runs CG on `A`; otherwise
/// BiCGStab runs on the stored rows of `Aᵀ`.
pub fn dist_adjoint_solve<T: Transport + ?Sized>(
    local: &LocalPartition,
    transport: &T,
    x_owned: &[f64],
    grad_x_owned: &[f64],
    atol: f64,
    max_iter: usize,
) -> Result<DistGradient> {
    check_len(local, x_owned)?;
    check_len(local, grad_x_owned)?;
    if !local.structurally_symmetric {
        return Err(Error::Unsupported(
            "distributed adjoint needs a structurally symmetric matrix".into(),
        ));
    }
    let (lambda, report) = match &local.transposed {
        None => cg_on(
            local,
            &local.matrix,
            transport,
            grad_x_owned,
            atol,
            max_iter,
        )?,
        Some(at) => bicgstab_on(local, at, transport, grad_x_owned, atol, max_iter)?,
    };
    if !report.converged {
        return Err(Error::NotConverged(Box::new(report)));
    }
    let mut x_ext = local.extend(x_owned);
    halo_exchange(
        transport,
        &mut x_ext,
        &local.halo_map,
        transport.counters().next_epoch(),
    )?;
    let m = &local.matrix;
    let mut grad_vals_local = Vec::with_capacity(m.nnz());
    for (i, li) in lambda.iter().enumerate() {
        for k in m.row_ptr[i]..m.row_ptr[i + 1] {
            grad_vals_local.push(-li * x_ext[m.col_idx[k]]);
        }
    }
    Ok(DistGradient {
        grad_b_owned: lambda,
        grad_vals_local,
        report,
    })
}

/// Assembles the global vector on rank 0 from every rank's owned slice.
/// Other ranks get `None`.
pub fn gather_solution<T: Transport + ?Sized>(
    transport: &T,
    x_owned: &[f64],
    plan: &PartitionPlan,
) -> Result<Option<Vec<f64>>> {
    let rank = transport.rank();
    if x_owned.len() != plan.owned[rank].len() {
        return Err(Error::DimensionMismatch {
            expected: plan.owned[rank].len(),
            got: x_owned.len(),
        });
    }
    let epoch = transport.counters().next_epoch();
    if rank != 0 {
        transport.send(0, epoch, x_owned)?;
        return Ok(None);
    }
    let mut x = vec![0.0; plan.n()];
    for (&g, &v) in plan.owned[0].iter().zip(x_owned) {
        x[g] = v;
    }
    for src in 1..transport.size() {
        let part = transport.recv(src, epoch)?;
        if part.len() != plan.owned[src].len() {
            return Err(Error::Transport(format!(
                "rank {src} sent {} values, owns {}",
                part.len(),
                plan.owned[src].len()
            )));
        }
        for (&g, v) in plan.owned[src].iter().zip(part) {
            x[g] = v;
        }
    }
    Ok(Some(x))
}

/// Like [`gather_solution`] for arbitrary `(index, value)` pairs, e.g. entry
/// gradients keyed by [`LocalPartition::entry_index`].
pub fn gather_indexed<T: Transport + ?Sized>(
    transport: &T,
    indices: &[usize],
    values: &[f64],
    len: usize,
) -> Result<Option<Vec<f64>>> {
    if indices.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: indices.len(),
            got: values.len(),
        });
    }
    let epoch = transport.counters().next_epoch();
    if transport.rank() != 0 {
        let idx: Vec<f64> = indices.iter().map(|&i| i as f64).collect();
        transport.send(0, epoch, &idx)?;
        transport.send(0, epoch, values)?;
        return Ok(None);
    }
    let mut out = vec![0.0; len];
    let mut place = |idx: &[usize], vals: &[f64]| -> Result<()> {
        for (&i, &v) in idx.iter().zip(vals) {
            *out.get_mut(i)
                .ok_or_else(|| Error::Transport(format!("gathered index {i} out of range")))? = v;
        }
        Ok(())
    };
    place(indices, values)?;
    for src in 1..transport.size() {
        let idx: Vec<usize> = transport
            .recv(src, epoch)?
            .into_iter()
            .map(|v| v as usize)
            .collect();
        let vals = transport.recv(src, epoch)?;
        if idx.len() != vals.len() {
            return Err(Error::Transport(format!(
                "rank {src} sent mismatched index and value lists"
            )));
        }
        place(&idx, &vals)?;
    }
    Ok(Some(out))
}

/// Owned slice of a global vector.
pub fn scatter_owned(local: &LocalPartition, global: &[f64]) -> Vec<f64> {
    local.owned.iter().map(|&g| global[g]).collect()
}
