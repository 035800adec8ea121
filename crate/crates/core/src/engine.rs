//! Shard-parallel map/reduce with simulated aggregation topologies.
//!
//! Shard partials are computed concurrently on the rayon pool. Merging is
//! serial and follows a fixed pairing order, so sums are bit-identical
//! between runs for a given shard count and topology. Communication is not
//! performed, only counted in a [`CommLedger`].

use rayon::prelude::*;

use crate::dataset::{Instance, ShardedDataset};
use crate::error::{Error, Result};
use crate::numerics::DenseVector;

/// Bytes per payload element (double precision).
pub const ELEMENT_BYTES: u64 = 8;

/// How shard partials travel to the driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceTopology {
    /// Every shard sends its partial straight to the driver.
    AllToOne,
    /// `levels` rounds of adjacent pairwise merging before the survivors
    /// are sent to the driver.
    Tree { levels: usize },
}

impl ReduceTopology {
    pub fn tree(levels: usize) -> Result<Self> {
        if levels < 1 {
            return Err(Error::InvalidArgument(
                "tree aggregation needs at least one level".into(),
            ));
        }
        Ok(ReduceTopology::Tree { levels })
    }

    fn levels(self) -> usize {
        match self {
            ReduceTopology::AllToOne => 0,
            ReduceTopology::Tree { levels } => levels,
        }
    }
}

/// Running totals of simulated communication.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommLedger {
    /// Every message, reduce and broadcast.
    pub messages: u64,
    /// `ELEMENT_BYTES` times the element count of every message.
    pub bytes: u64,
    /// Largest number of messages the driver received in a single reduce.
    pub driver_fan_in: u64,
    /// Number of reduce operations.
    pub reduces: u64,
    pub broadcast_messages: u64,
    pub broadcast_bytes: u64,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    fn message(&mut self, payload_len: usize) {
        self.messages += 1;
        self.bytes += ELEMENT_BYTES * payload_len as u64;
    }

    /// One `len`-element vector sent to each of `n_p` workers.
    pub fn record_broadcast(&mut self, n_p: usize, len: usize) {
        let bytes = ELEMENT_BYTES * len as u64 * n_p as u64;
        self.messages += n_p as u64;
        self.bytes += bytes;
        self.broadcast_messages += n_p as u64;
        self.broadcast_bytes += bytes;
    }

    pub fn reduce_bytes(&self) -> u64 {
        self.bytes - self.broadcast_bytes
    }

    pub fn reduce_messages(&self) -> u64 {
        self.messages - self.broadcast_messages
    }
}

/// Merges shard partials according to `topology`, recording the traffic.
///
/// Tree levels pair partials left to right; an odd trailing partial is
/// carried to the next level without moving. Survivors are then summed at
/// the driver in order.
pub fn reduce_partials(
    mut partials: Vec<Vec<f64>>,
    payload_len: usize,
    topology: ReduceTopology,
    ledger: &mut CommLedger,
) -> Result<DenseVector> {
    if let Some(bad) = partials.iter().find(|p| p.len() != payload_len) {
        return Err(Error::PayloadLength {
            expected: payload_len,
            found: bad.len(),
        });
    }
    for _ in 0..topology.levels() {
        if partials.len() <= 1 {
            break;
        }
        let mut next = Vec::with_capacity(partials.len().div_ceil(2));
        let mut iter = partials.into_iter();
        while let Some(mut left) = iter.next() {
            if let Some(right) = iter.next() {
                ledger.message(payload_len);
                for (a, b) in left.iter_mut().zip(&right) {
                    *a += b;
                }
            }
            next.push(left);
        }
        partials = next;
    }

    ledger.reduces += 1;
    ledger.driver_fan_in = ledger.driver_fan_in.max(partials.len() as u64);
    let mut iter = partials.into_iter();
    let mut total = match iter.next() {
        Some(first) => {
            ledger.message(payload_len);
            first
        }
        None => vec![0.0; payload_len],
    };
    for p in iter {
        ledger.message(payload_len);
        for (a, b) in total.iter_mut().zip(&p) {
            *a += b;
        }
    }
    Ok(DenseVector::from_vec(total))
}

/// Sums `per_instance` over every instance. Each shard partial is a
/// left-to-right sum over the shard.
pub fn map_reduce<F>(
    data: &ShardedDataset,
    payload_len: usize,
    topology: ReduceTopology,
    ledger: &mut CommLedger,
    per_instance: F,
) -> Result<DenseVector>
where
    F: Fn(&Instance) -> Vec<f64> + Sync,
{
    let partials = data
        .shards()
        .par_iter()
        .map(|shard| {
            let mut acc = vec![0.0; payload_len];
            for inst in shard {
                let v = per_instance(inst);
                if v.len() != payload_len {
                    return Err(Error::PayloadLength {
                        expected: payload_len,
                        found: v.len(),
                    });
                }
                for (a, b) in acc.iter_mut().zip(&v) {
                    *a += b;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    reduce_partials(partials, payload_len, topology, ledger)
}

/// Like [`map_reduce`], but the kernel adds its contribution directly into
/// the shard accumulator instead of allocating a payload per instance.
pub fn map_reduce_into<F>(
    data: &ShardedDataset,
    payload_len: usize,
    topology: ReduceTopology,
    ledger: &mut CommLedger,
    accumulate: F,
) -> Result<DenseVector>
where
    F: Fn(&Instance, &mut [f64]) + Sync,
{
    let partials: Vec<Vec<f64>> = data
        .shards()
        .par_iter()
        .map(|shard| {
            let mut acc = vec![0.0; payload_len];
            for inst in shard {
                accumulate(inst, &mut acc);
            }
            acc
        })
        .collect();
    reduce_partials(partials, payload_len, topology, ledger)
}

/// A topology bound to a ledger.
#[derive(Debug, Clone)]
pub struct Engine {
    pub topology: ReduceTopology,
    pub ledger: CommLedger,
}

impl Engine {
    pub fn new(topology: ReduceTopology) -> Self {
        Self {
            topology,
            ledger: CommLedger::new(),
        }
    }

    pub fn map_reduce<F>(
        &mut self,
        data: &ShardedDataset,
        payload_len: usize,
        per_instance: F,
    ) -> Result<DenseVector>
    where
        F: Fn(&Instance) -> Vec<f64> + Sync,
    {
        map_reduce(
            data,
            payload_len,
            self.topology,
            &mut self.ledger,
            per_instance,
        )
    }

    pub fn map_reduce_into<F>(
        &mut self,
        data: &ShardedDataset,
        payload_len: usize,
        accumulate: F,
    ) -> Result<DenseVector>
    where
        F: Fn(&Instance, &mut [f64]) + Sync,
    {
        map_reduce_into(
            data,
            payload_len,
            self.topology,
            &mut self.ledger,
            accumulate,
        )
    }

    pub fn broadcast(&mut self, data: &ShardedDataset, len: usize) {
        self.ledger.record_broadcast(data.n_shards(), len);
    }
}
