//! Client workloads.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::protocol::OpSpec;
use crate::types::{ProcessId, Timestamp, Value};

/// One operation of a client script. A client invokes its operations in
/// order, each at `at` or as soon as the previous one completes, whichever
/// is later.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedOp {
    pub client: ProcessId,
    pub op: OpSpec,
    pub at: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Workload {
    pub ops: Vec<PlannedOp>,
}

impl Workload {
    pub fn new(ops: Vec<PlannedOp>) -> Self {
        Workload { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Rewrites register operations as storage operations. The `i`-th write
    /// of client `c` stores its value under timestamp `(i, c)`.
    pub fn into_storage(self) -> Workload {
        let mut seq: BTreeMap<ProcessId, u64> = BTreeMap::new();
        let ops = self
            .ops
            .into_iter()
            .map(|mut p| {
                p.op = match p.op {
                    OpSpec::Read => OpSpec::AmsRead,
                    OpSpec::Write(v) => {
                        let i = seq.entry(p.client).or_default();
                        *i += 1;
                        OpSpec::AmsWrite(Timestamp::new(*i, p.client), v)
                    }
                    other => other,
                };
                p
            })
            .collect();
        Workload { ops }
    }
}

/// Shape of a seeded random workload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomWorkload {
    pub ops: usize,
    pub write_ratio: f64,
    /// Largest gap between two planned invocations of the same client.
    pub max_gap: u64,
}

impl Default for RandomWorkload {
    fn default() -> Self {
        RandomWorkload {
            ops: 8,
            write_ratio: 0.5,
            max_gap: 6,
        }
    }
}

/// Random mix of reads and writes over `clients`; written values are
/// `v1, v2, ...` in generation order, so each is unique.
pub fn random_workload(clients: &[ProcessId], shape: &RandomWorkload, rng: &mut ChaCha8Rng) -> Workload {
    let mut next_at: Vec<u64> = clients.iter().map(|_| 0).collect();
    let mut next_value = 1;
    let mut ops = Vec::with_capacity(shape.ops);
    for _ in 0..shape.ops {
        let c = rng.gen_range(0..clients.len());
        let op = if rng.gen_bool(shape.write_ratio.clamp(0.0, 1.0)) {
            next_value += 1;
            OpSpec::Write(Value(next_value - 1))
        } else {
            OpSpec::Read
        };
        let at = next_at[c] + rng.gen_range(0..=shape.max_gap);
        next_at[c] = at;
        ops.push(PlannedOp {
            client: clients[c],
            op,
            at,
        });
    }
    Workload { ops }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn written_values_are_unique_and_nonzero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_workload(
            &[4, 5, 6],
            &RandomWorkload {
                ops: 50,
                ..Default::default()
            },
            &mut rng,
        );
        let vals: Vec<u64> = w.ops.iter().filter_map(|p| p.op.written_value()).map(|v| v.0).collect();
        let mut sorted = vals.clone();
        sorted.dedup();
        assert_eq!(vals, sorted);
        assert!(vals.iter().all(|v| *v > 0));
    }

    #[test]
    fn storage_writes_get_per_client_timestamps() {
        let w = Workload::new(vec![
            PlannedOp {
                client: 10,
                op: OpSpec::Write(Value(1)),
                at: 0,
            },
            PlannedOp {
                client: 11,
                op: OpSpec::Read,
                at: 0,
            },
            PlannedOp {
                client: 10,
                op: OpSpec::Write(Value(2)),
                at: 5,
            },
        ])
        .into_storage();
        let ops: Vec<OpSpec> = w.ops.iter().map(|p| p.op).collect();
        assert_eq!(
            ops,
            vec![
                OpSpec::AmsWrite(Timestamp::new(1, 10), Value(1)),
                OpSpec::AmsRead,
                OpSpec::AmsWrite(Timestamp::new(2, 10), Value(2)),
            ]
        );
    }
}
