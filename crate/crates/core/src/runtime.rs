//! Simulated bulk-synchronous execution: a master and K workers exchanging
//! explicit messages, with a ledger counting every d-dimensional vector moved.
//!
//! The contract is schedule independence: a round forks K tasks with no shared
//! mutable state, joins at a barrier, and merges results in ascending worker
//! order, so the merged state and the ledger are identical whether the tasks
//! run serially or in parallel. A failed task aborts the round before any
//! ledger increment or merge, leaving the caller's state unchanged.

use serde::{Deserialize, Serialize};

/// One vector movement between master and a worker. All state movement in a
/// round goes through these, which is what makes the ledger exhaustive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub round: u32,
    pub worker: usize,
    pub payload_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    BroadcastW,
    ReduceDeltaW,
}

/// Which message directions the reported vector count includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountDirection {
    Up,
    Down,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    #[default]
    Serial,
    Parallel,
}

/// Exact counts of vectors exchanged and coordinate updates performed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommLedger {
    pub vectors_up: u64,
    pub vectors_down: u64,
    pub per_round: Vec<(u64, u64)>,
    pub coordinate_updates: u64,
}

impl CommLedger {
    fn record(&mut self, msg: &Message) {
        match msg.kind {
            MessageKind::BroadcastW => self.vectors_down += 1,
            MessageKind::ReduceDeltaW => self.vectors_up += 1,
        }
    }

    /// Vector count under the chosen direction convention.
    pub fn counted(&self, direction: CountDirection) -> u64 {
        match direction {
            CountDirection::Up => self.vectors_up,
            CountDirection::Down => self.vectors_down,
            CountDirection::Both => self.vectors_up + self.vectors_down,
        }
    }

    pub fn rounds(&self) -> usize {
        self.per_round.len()
    }
}

/// Converts ledger counts into a synthetic time axis. The coefficients are
/// configuration, not measurements; the default ratio reflects network
/// latency being orders of magnitude above a memory access.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub per_vector: f64,
    pub per_update: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            per_vector: 2500.0,
            per_update: 1.0,
        }
    }
}

impl CostModel {
    pub fn synth_time(&self, vectors: u64, updates: u64) -> f64 {
        self.per_vector * vectors as f64 + self.per_update * updates as f64
    }
}

/// Summary record of a ledger, embedded in trace reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub vectors_up: u64,
    pub vectors_down: u64,
    pub counted: u64,
    pub count_direction: CountDirection,
    pub rounds: usize,
    pub coordinate_updates: u64,
    pub updates_per_vector: f64,
}

/// Totals, per-round series, and the updates-per-vector ratio.
pub fn ledger_report(ledger: &CommLedger, direction: CountDirection) -> LedgerSummary {
    let counted = ledger.counted(direction);
    LedgerSummary {
        vectors_up: ledger.vectors_up,
        vectors_down: ledger.vectors_down,
        counted,
        count_direction: direction,
        rounds: ledger.rounds(),
        coordinate_updates: ledger.coordinate_updates,
        updates_per_vector: if counted == 0 {
            0.0
        } else {
            ledger.coordinate_updates as f64 / counted as f64
        },
    }
}

/// Master-side executor owning the ledger.
#[derive(Debug, Clone)]
pub struct Runtime {
    pub mode: ExecutionMode,
    pub count_direction: CountDirection,
    ledger: CommLedger,
}

impl Runtime {
    pub fn new(mode: ExecutionMode, count_direction: CountDirection) -> Self {
        Self {
            mode,
            count_direction,
            ledger: CommLedger::default(),
        }
    }

    pub fn serial() -> Self {
        Self::new(ExecutionMode::Serial, CountDirection::Both)
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn add_updates(&mut self, updates: u64) {
        self.ledger.coordinate_updates += updates;
    }

    pub fn vectors(&self) -> u64 {
        self.ledger.counted(self.count_direction)
    }

    /// Runs the K tasks of one round under the bulk-synchronous contract and
    /// merges their results in ascending worker order. Each task receives the
    /// same broadcast snapshot (captured in its closure); `dim` is the payload
    /// length of every vector moved. On any task error the round is aborted:
    /// nothing is merged and the ledger is not incremented.
    pub fn execute_round<R, E, F, M, G>(
        &mut self,
        round: u32,
        dim: usize,
        tasks: Vec<F>,
        merge: G,
    ) -> Result<M, E>
    where
        F: FnOnce() -> Result<R, E> + Send,
        R: Send,
        E: Send,
        G: FnOnce(Vec<R>) -> M,
    {
        let workers = tasks.len();
        let outcomes: Vec<Result<R, E>> = match self.mode {
            ExecutionMode::Serial => tasks.into_iter().map(|task| task()).collect(),
            ExecutionMode::Parallel => std::thread::scope(|scope| {
                let handles: Vec<_> = tasks.into_iter().map(|task| scope.spawn(task)).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker task panicked"))
                    .collect()
            }),
        };
        let mut results = Vec::with_capacity(workers);
        for outcome in outcomes {
            results.push(outcome?);
        }
        for worker in 0..workers {
            self.ledger.record(&Message {
                kind: MessageKind::BroadcastW,
                round,
                worker,
                payload_len: dim,
            });
            self.ledger.record(&Message {
                kind: MessageKind::ReduceDeltaW,
                round,
                worker,
                payload_len: dim,
            });
        }
        self.ledger.per_round.push((workers as u64, workers as u64));
        Ok(merge(results))
    }
}

/// Per-(round, worker) seed derived from the master seed, so traces are
/// reproducible and workers are decorrelated.
pub fn worker_seed(master: u64, round: u32, worker: usize) -> u64 {
    let mut state = splitmix64(master ^ (round as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    state = splitmix64(state ^ (worker as u64).wrapping_mul(0x9FB2_1C65_1E98_DF25));
    state
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
