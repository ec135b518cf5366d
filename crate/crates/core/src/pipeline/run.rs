use std::sync::mpsc::{sync_channel, SyncSender};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::trainer::{combine_digests, trainer_stub, TrainOutput};
use crate::error::{Error, Result};
use crate::iostore::{AssembledBatch, FeatureSource, IoStats};

pub const DEFAULT_QUEUE_CAPACITY: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sequential,
    Pipelined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Assemble,
    Graph,
    Train,
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "load" => Ok(Stage::Load),
            "assemble" => Ok(Stage::Assemble),
            "graph" => Ok(Stage::Graph),
            "train" => Ok(Stage::Train),
            _ => Err(Error::invalid(format!(
                "unknown stage {s:?} (expected load, assemble, graph or train)"
            ))),
        }
    }
}

/// Artificial per-batch work added to each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageDelays {
    pub load: Duration,
    pub assemble: Duration,
    pub graph: Duration,
    pub train: Duration,
}

impl StageDelays {
    pub fn uniform(d: Duration) -> Self {
        Self {
            load: d,
            assemble: d,
            graph: d,
            train: d,
        }
    }

    pub fn set(&mut self, stage: Stage, d: Duration) {
        match stage {
            Stage::Load => self.load = d,
            Stage::Assemble => self.assemble = d,
            Stage::Graph => self.graph = d,
            Stage::Train => self.train = d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageConfig {
    pub mode: Mode,
    pub queue_capacity: usize,
    pub delays: StageDelays,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Pipelined,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            delays: StageDelays::default(),
        }
    }
}

/// Busy seconds per stage, delays included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub load: f64,
    pub assemble: f64,
    pub graph: f64,
    pub train: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch: u32,
    pub mode: Mode,
    pub queue_capacity: usize,
    pub batches: u64,
    /// Timing fields vary between runs; everything else is deterministic.
    pub wall_secs: f64,
    pub busy_secs: StageTimes,
    #[serde(with = "hex")]
    pub epoch_digest: u64,
    #[serde(with = "hex_vec")]
    pub batch_digests: Vec<u64>,
    pub io: IoStats,
}

mod hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

mod hex_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| format!("{x:016x}")))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u64>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| u64::from_str_radix(s, 16).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Called by the trainer for every batch it consumes.
pub type Observer<'a> = &'a (dyn Fn(&AssembledBatch, &TrainOutput) + Sync);

fn timed<T>(busy: &mut Duration, delay: Duration, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    if !delay.is_zero() {
        thread::sleep(delay);
    }
    let out = f();
    *busy += t.elapsed();
    out
}

/// Sends a stage's output downstream; `false` tells the worker to stop.
fn forward<T>(out: Result<T>, tx: &SyncSender<T>, fail: &impl Fn(Error)) -> bool {
    match out {
        Ok(v) => tx.send(v).is_ok(),
        Err(e) => {
            fail(e);
            false
        }
    }
}

/// Processes every batch once, in order.
///
/// Sequential mode runs the four stages back to back per batch, fetching
/// features and sample with one combined read. Pipelined mode runs one worker
/// per stage: feature loader -> assembler -> trainer over two bounded queues,
/// and graph loader -> trainer over a third. The trainer pairs queue heads by
/// batch id. The first error stops every worker and is returned.
pub fn run_epoch(
    source: &dyn FeatureSource,
    config: &StageConfig,
    epoch: u32,
    observer: Option<Observer<'_>>,
) -> Result<TrainReport> {
    if config.queue_capacity == 0 {
        return Err(Error::invalid("queue capacity must be at least 1"));
    }
    let n = source.num_batches() as u64;
    let before = source.stats();
    let start = Instant::now();
    let d = config.delays;
    let mut digests = Vec::with_capacity(n as usize);
    let mut train = |batch: AssembledBatch, busy: &mut Duration| {
        timed(busy, d.train, || {
            let out = trainer_stub(&batch);
            if let Some(obs) = observer {
                obs(&batch, &out);
            }
            digests.push(out.digest);
        })
    };

    let mut busy = [Duration::ZERO; 4];
    match config.mode {
        Mode::Sequential => {
            // the combined read is charged to the load stage
            for b in 0..n {
                let (partial, sample) =
                    timed(&mut busy[0], d.load, || source.load_partial_input(b))?;
                let features = timed(&mut busy[1], d.assemble, || source.assemble(partial))?;
                timed(&mut busy[2], d.graph, || ());
                train(AssembledBatch::pair(features, sample)?, &mut busy[3]);
            }
        }
        Mode::Pipelined => {
            let first_error: Mutex<Option<Error>> = Mutex::new(None);
            let fail = |e: Error| {
                first_error.lock().unwrap().get_or_insert(e);
            };
            let cap = config.queue_capacity;
            let (partial_tx, partial_rx) = sync_channel(cap);
            let (complete_tx, complete_rx) = sync_channel(cap);
            let (graph_tx, graph_rx) = sync_channel(cap);
            let trained = thread::scope(|s| {
                let loader = s.spawn(|| {
                    let mut t = Duration::ZERO;
                    for b in 0..n {
                        if !forward(timed(&mut t, d.load, || source.load_features(b)), &partial_tx, &fail) {
                            break;
                        }
                    }
                    drop(partial_tx);
                    t
                });
                let assembler = s.spawn(|| {
                    let mut t = Duration::ZERO;
                    for p in partial_rx {
                        if !forward(timed(&mut t, d.assemble, || source.assemble(p)), &complete_tx, &fail) {
                            break;
                        }
                    }
                    drop(complete_tx);
                    t
                });
                let graph = s.spawn(|| {
                    let mut t = Duration::ZERO;
                    for b in 0..n {
                        if !forward(timed(&mut t, d.graph, || source.load_sample(b)), &graph_tx, &fail) {
                            break;
                        }
                    }
                    drop(graph_tx);
                    t
                });
                let mut t = Duration::ZERO;
                let mut trained = 0u64;
                while let (Ok(f), Ok(g)) = (complete_rx.recv(), graph_rx.recv()) {
                    match AssembledBatch::pair(f, g) {
                        Ok(batch) => train(batch, &mut t),
                        Err(e) => {
                            fail(e);
                            break;
                        }
                    }
                    trained += 1;
                }
                drop(complete_rx);
                drop(graph_rx);
                busy[3] = t;
                for (slot, h) in [(0, loader), (1, assembler), (2, graph)] {
                    busy[slot] = h.join().expect("pipeline worker panicked");
                }
                trained
            });
            if let Some(e) = first_error.into_inner().unwrap() {
                return Err(e);
            }
            if trained != n {
                return Err(Error::Pipeline(format!(
                    "trainer consumed {trained} of {n} batches"
                )));
            }
        }
    }

    Ok(TrainReport {
        epoch,
        mode: config.mode,
        queue_capacity: config.queue_capacity,
        batches: n,
        wall_secs: start.elapsed().as_secs_f64(),
        busy_secs: StageTimes {
            load: busy[0].as_secs_f64(),
            assemble: busy[1].as_secs_f64(),
            graph: busy[2].as_secs_f64(),
            train: busy[3].as_secs_f64(),
        },
        epoch_digest: combine_digests(&digests),
        batch_digests: digests,
        io: source.stats().since(&before),
    })
}

/// Runs `epochs` epochs back to back.
pub fn run_training(
    source: &dyn FeatureSource,
    config: &StageConfig,
    epochs: u32,
    observer: Option<Observer<'_>>,
) -> Result<Vec<TrainReport>> {
    (0..epochs)
        .map(|e| run_epoch(source, config, e, observer))
        .collect()
}
