//! Message transport between ranks.
//!
//! Point-to-point messages are FIFO per `(src, dst)` pair and tagged with an
//! epoch; collectives run on a separate lane so they never interleave with
//! halo traffic. Everything crosses the channel in the wire format below, so
//! a socket or multi-process backing only has to move bytes.

use std::cell::Cell;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Header bytes: epoch u64, src u32, dst u32, payload length u64.
pub const HEADER_BYTES: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub epoch: u64,
    pub src: u32,
    pub dst: u32,
    pub payload: Vec<f64>,
}

impl Message {
    /// Little-endian header followed by the payload as little-endian f64.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + 8 * self.payload.len());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.src.to_le_bytes());
        out.extend_from_slice(&self.dst.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Transport(format!(
                "message of {} bytes is shorter than the header",
                bytes.len()
            )));
        }
        let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let len = u64_at(16) as usize;
        let body = &bytes[HEADER_BYTES..];
        if body.len() != 8 * len {
            return Err(Error::Transport(format!(
                "payload length {len} does not match {} body bytes",
                body.len()
            )));
        }
        Ok(Self {
            epoch: u64_at(0),
            src: u32_at(8),
            dst: u32_at(12),
            payload: body
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        })
    }
}

/// Per-rank communication counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLog {
    pub messages_sent: u64,
    pub values_sent: u64,
    pub bytes_sent: u64,
    pub halo_exchanges: u64,
    pub all_reduces: u64,
    pub barriers: u64,
}

#[derive(Debug, Default)]
pub struct CommCounters {
    messages_sent: Cell<u64>,
    values_sent: Cell<u64>,
    bytes_sent: Cell<u64>,
    halo_exchanges: Cell<u64>,
    all_reduces: Cell<u64>,
    barriers: Cell<u64>,
    p2p_epoch: Cell<u64>,
}

fn bump(c: &Cell<u64>, by: u64) {
    c.set(c.get() + by);
}

impl CommCounters {
    pub fn snapshot(&self) -> CommLog {
        CommLog {
            messages_sent: self.messages_sent.get(),
            values_sent: self.values_sent.get(),
            bytes_sent: self.bytes_sent.get(),
            halo_exchanges: self.halo_exchanges.get(),
            all_reduces: self.all_reduces.get(),
            barriers: self.barriers.get(),
        }
    }

    pub fn record_message(&self, values: usize, bytes: usize) {
        bump(&self.messages_sent, 1);
        bump(&self.values_sent, values as u64);
        bump(&self.bytes_sent, bytes as u64);
    }

    pub fn record_halo_exchange(&self) {
        bump(&self.halo_exchanges, 1);
    }

    pub fn record_all_reduce(&self) {
        bump(&self.all_reduces, 1);
    }

    pub fn record_barrier(&self) {
        bump(&self.barriers, 1);
    }

    /// A fresh point-to-point epoch. Ranks advance in lockstep because every
    /// collective operation draws one epoch on every rank.
    pub fn next_epoch(&self) -> u64 {
        let e = self.p2p_epoch.get() + 1;
        self.p2p_epoch.set(e);
        e
    }
}

/// What distributed kernels need from the communication layer.
pub trait Transport {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    /// Non-blocking send of `payload` to `dst`.
    fn send(&self, dst: usize, epoch: u64, payload: &[f64]) -> Result<()>;
    /// Next message from `src`; its epoch must equal `epoch`.
    fn recv(&self, src: usize, epoch: u64) -> Result<Vec<f64>>;
    /// Returns once every rank has entered.
    fn synchronize(&self) -> Result<()>;
    /// Sum over ranks, accumulated in ascending rank order, identical on
    /// every rank.
    fn all_reduce_sum(&self, value: f64) -> Result<f64>;
    fn counters(&self) -> &CommCounters;

    fn log(&self) -> CommLog {
        self.counters().snapshot()
    }
}

/// One rank's endpoint of an in-process network of channels.
pub struct InProcessTransport {
    rank: usize,
    size: usize,
    timeout: Duration,
    p2p_tx: Vec<Sender<Vec<u8>>>,
    p2p_rx: Vec<Receiver<Vec<u8>>>,
    coll_tx: Vec<Sender<Vec<u8>>>,
    coll_rx: Vec<Receiver<Vec<u8>>>,
    coll_epoch: Cell<u64>,
    counters: CommCounters,
}

/// Channel matrix indexed `[src][dst]`; returns per-rank sender and
/// receiver lists.
#[allow(clippy::type_complexity)]
fn channel_grid(size: usize) -> (Vec<Vec<Sender<Vec<u8>>>>, Vec<Vec<Receiver<Vec<u8>>>>) {
    let mut senders: Vec<Vec<Sender<Vec<u8>>>> =
        (0..size).map(|_| Vec::with_capacity(size)).collect();
    let mut receivers: Vec<Vec<Option<Receiver<Vec<u8>>>>> = (0..size)
        .map(|_| (0..size).map(|_| None).collect())
        .collect();
    for (src, row) in senders.iter_mut().enumerate() {
        for rx_row in receivers.iter_mut() {
            let (tx, rx) = mpsc::channel();
            row.push(tx);
            rx_row[src] = Some(rx);
        }
    }
    let receivers = receivers
        .into_iter()
        .map(|row| row.into_iter().map(|r| r.expect("filled")).collect())
        .collect();
    (senders, receivers)
}

impl InProcessTransport {
    /// Endpoints for `size` ranks, index = rank.
    pub fn network(size: usize) -> Vec<Self> {
        Self::network_with_timeout(size, DEFAULT_TIMEOUT)
    }

    pub fn network_with_timeout(size: usize, timeout: Duration) -> Vec<Self> {
        let (p2p_tx, p2p_rx) = channel_grid(size);
        let (coll_tx, coll_rx) = channel_grid(size);
        p2p_tx
            .into_iter()
            .zip(p2p_rx)
            .zip(coll_tx.into_iter().zip(coll_rx))
            .enumerate()
            .map(|(rank, ((p2p_tx, p2p_rx), (coll_tx, coll_rx)))| Self {
                rank,
                size,
                timeout,
                p2p_tx,
                p2p_rx,
                coll_tx,
                coll_rx,
                coll_epoch: Cell::new(0),
                counters: CommCounters::default(),
            })
            .collect()
    }

    fn check_peer(&self, peer: usize) -> Result<()> {
        if peer >= self.size {
            return Err(Error::Transport(format!(
                "rank {peer} out of range for {} ranks",
                self.size
            )));
        }
        Ok(())
    }

    fn post(
        &self,
        lane: &[Sender<Vec<u8>>],
        dst: usize,
        epoch: u64,
        payload: &[f64],
    ) -> Result<()> {
        self.check_peer(dst)?;
        let bytes = Message {
            epoch,
            src: self.rank as u32,
            dst: dst as u32,
            payload: payload.to_vec(),
        }
        .encode();
        self.counters.record_message(payload.len(), bytes.len());
        lane[dst]
            .send(bytes)
            .map_err(|_| Error::Transport(format!("rank {dst} has hung up")))
    }

    fn take(
        &self,
        lane: &[Receiver<Vec<u8>>],
        src: usize,
        epoch: u64,
        what: &str,
    ) -> Result<Vec<f64>> {
        self.check_peer(src)?;
        let bytes = match lane[src].recv_timeout(self.timeout) {
            Ok(b) => b,
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Timeout {
                    rank: self.rank,
                    what: format!("{what} from rank {src}"),
                    secs: self.timeout.as_secs_f64(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Transport(format!("rank {src} has hung up")))
            }
        };
        let msg = Message::decode(&bytes)?;
        if msg.src as usize != src || msg.dst as usize != self.rank {
            return Err(Error::Transport(format!(
                "misrouted message {}->{} received by rank {} from channel {src}",
                msg.src, msg.dst, self.rank
            )));
        }
        if msg.epoch != epoch {
            return Err(Error::EpochMismatch {
                src,
                expected: epoch,
                received: msg.epoch,
            });
        }
        Ok(msg.payload)
    }

    fn next_coll_epoch(&self) -> u64 {
        let e = self.coll_epoch.get() + 1;
        self.coll_epoch.set(e);
        e
    }

    /// Gather to rank 0, reduce there in rank order, broadcast back.
    fn reduce_broadcast(&self, value: f64, what: &str) -> Result<f64> {
        let epoch = self.next_coll_epoch();
        if self.rank == 0 {
            let mut acc = value;
            for src in 1..self.size {
                let v = self.take(&self.coll_rx, src, epoch, what)?;
                acc += v.first().copied().unwrap_or(0.0);
            }
            for dst in 1..self.size {
                self.post(&self.coll_tx, dst, epoch, &[acc])?;
            }
            Ok(acc)
        } else {
            self.post(&self.coll_tx, 0, epoch, &[value])?;
            let v = self.take(&self.coll_rx, 0, epoch, what)?;
            v.first()
                .copied()
                .ok_or_else(|| Error::Transport("empty reduction result".into()))
        }
    }
}

impl Transport for InProcessTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn send(&self, dst: usize, epoch: u64, payload: &[f64]) -> Result<()> {
        self.post(&self.p2p_tx, dst, epoch, payload)
    }

    fn recv(&self, src: usize, epoch: u64) -> Result<Vec<f64>> {
        self.take(&self.p2p_rx, src, epoch, "point-to-point message")
    }

    fn synchronize(&self) -> Result<()> {
        self.counters.record_barrier();
        self.reduce_broadcast(0.0, "barrier").map(|_| ())
    }

    fn all_reduce_sum(&self, value: f64) -> Result<f64> {
        self.counters.record_all_reduce();
        self.reduce_broadcast(value, "all_reduce")
    }

    fn counters(&self) -> &CommCounters {
        &self.counters
    }
}

/// Runs `f` on `size` in-process ranks, one scoped thread each, and returns
/// the per-rank results in rank order.
pub fn run_ranks<T, F>(size: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&InProcessTransport) -> T + Sync,
{
    run_ranks_with(InProcessTransport::network(size), f)
}

pub fn run_ranks_with<T, F>(endpoints: Vec<InProcessTransport>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&InProcessTransport) -> T + Sync,
{
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = endpoints
            .into_iter()
            .map(|ep| s.spawn(move || f(&ep)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_round_trip() {
        let m = Message {
            epoch: 7,
            src: 1,
            dst: 3,
            payload: vec![1.5, -0.0, f64::MAX, 1e-300],
        };
        let bytes = m.encode();
        assert_eq!(bytes.len(), HEADER_BYTES + 32);
        assert_eq!(&bytes[..8], &7u64.to_le_bytes());
        assert_eq!(Message::decode(&bytes).unwrap(), m);
        assert!(Message::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn all_reduce_three_ranks() {
        let out = run_ranks(3, |t| t.all_reduce_sum((t.rank() + 1) as f64).unwrap());
        assert_eq!(out, vec![6.0; 3]);
    }

    #[test]
    fn all_reduce_single_rank_identity() {
        let out = run_ranks(1, |t| t.all_reduce_sum(0.1).unwrap());
        assert_eq!(out, vec![0.1]);
    }

    #[test]
    fn all_reduce_rank_order() {
        // Rank order (1e16 + 1) + 1 loses both ones; other orders would not.
        let vals = [1e16, 1.0, 1.0, -1e16];
        let out = run_ranks(4, |t| t.all_reduce_sum(vals[t.rank()]).unwrap());
        let expected = ((1e16 + 1.0) + 1.0) + -1e16;
        assert!(out.iter().all(|&v| v.to_bits() == f64::to_bits(expected)));
    }

    #[test]
    fn fifo_point_to_point() {
        let out = run_ranks(2, |t| {
            if t.rank() == 0 {
                t.send(1, 1, &[1.0]).unwrap();
                t.send(1, 2, &[2.0, 3.0]).unwrap();
                vec![]
            } else {
                let mut a = t.recv(0, 1).unwrap();
                a.extend(t.recv(0, 2).unwrap());
                a
            }
        });
        assert_eq!(out[1], vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn epoch_mismatch_detected() {
        let out = run_ranks(2, |t| {
            if t.rank() == 0 {
                t.send(1, 5, &[1.0]).unwrap();
                None
            } else {
                Some(t.recv(0, 4))
            }
        });
        assert!(matches!(
            out[1],
            Some(Err(Error::EpochMismatch {
                expected: 4,
                received: 5,
                ..
            }))
        ));
    }

    #[test]
    fn missing_rank_times_out() {
        let eps = InProcessTransport::network_with_timeout(2, Duration::from_millis(50));
        let out = run_ranks_with(eps, |t| {
            if t.rank() == 0 {
                Some(t.all_reduce_sum(1.0))
            } else {
                // Stay alive past the timeout without joining the collective.
                std::thread::sleep(Duration::from_millis(300));
                None
            }
        });
        assert!(matches!(out[0], Some(Err(Error::Timeout { rank: 0, .. }))));
    }

    #[test]
    fn counters_track_traffic() {
        let logs = run_ranks(2, |t| {
            t.all_reduce_sum(1.0).unwrap();
            t.synchronize().unwrap();
            t.log()
        });
        assert_eq!(logs[0].all_reduces, 1);
        assert_eq!(logs[1].barriers, 1);
        // Rank 1 sends one value per collective; rank 0 broadcasts one.
        assert_eq!(logs[1].messages_sent, 2);
        assert_eq!(logs[1].bytes_sent, 2 * (HEADER_BYTES as u64 + 8));
    }
}
