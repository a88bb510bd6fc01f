//! Event sequences, CSV ingestion, splitting and padded batching.
//!
//! Event types are 1-based throughout (`1..=K`), matching the CSV files.
//! Times inside a [`Dataset`] are normalized: raw time = normalized time ×
//! `time_scale`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EventsError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: duplicate timestamp {time} in sequence {seq_id:?}")]
    DuplicateTimestamp { line: u64, seq_id: String, time: f64 },
    #[error("missing column {0:?} in header")]
    MissingColumn(String),
    #[error("dataset is empty")]
    Empty,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
}

/// One realization `{(t_j, m_j)}` observed on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    id: String,
    times: Vec<f64>,
    marks: Vec<usize>,
    horizon: f64,
}

impl EventSequence {
    /// Validates strict increase, non-negative finite times, marks ≥ 1 and
    /// `horizon ≥ last time`.
    pub fn new(
        id: impl Into<String>,
        times: Vec<f64>,
        marks: Vec<usize>,
        horizon: f64,
    ) -> Result<Self, EventsError> {
        let id = id.into();
        if times.len() != marks.len() {
            return Err(EventsError::InvalidSequence(format!(
                "{id}: {} times but {} marks",
                times.len(),
                marks.len()
            )));
        }
        if let Some(&t) = times.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(EventsError::InvalidSequence(format!("{id}: bad time {t}")));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(EventsError::InvalidSequence(format!(
                "{id}: times not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if marks.contains(&0) {
            return Err(EventsError::InvalidSequence(format!("{id}: mark 0 (types start at 1)")));
        }
        let last = times.last().copied().unwrap_or(0.0);
        if !(horizon >= last) || !horizon.is_finite() {
            return Err(EventsError::InvalidSequence(format!(
                "{id}: horizon {horizon} before last event {last}"
            )));
        }
        Ok(Self {
            id,
            times,
            marks,
            horizon,
        })
    }

    /// Sequence whose horizon is its last event time.
    pub fn observed(
        id: impl Into<String>,
        times: Vec<f64>,
        marks: Vec<usize>,
    ) -> Result<Self, EventsError> {
        let horizon = times.last().copied().unwrap_or(0.0);
        Self::new(id, times, marks, horizon)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn marks(&self) -> &[usize] {
        &self.marks
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn max_mark(&self) -> usize {
        self.marks.iter().copied().max().unwrap_or(0)
    }

    /// `N(t) = #{t_j : t_j < t}`.
    pub fn count_before(&self, t: f64) -> usize {
        self.times.partition_point(|&tj| tj < t)
    }

    /// The first `n` events, keeping the horizon at the last kept event.
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            id: self.id.clone(),
            times: self.times[..n].to_vec(),
            marks: self.marks[..n].to_vec(),
            horizon: if n == self.len() {
                self.horizon
            } else {
                self.times[..n].last().copied().unwrap_or(0.0)
            },
        }
    }

    /// Inter-event gaps `t_{j+1} − t_j`.
    pub fn gaps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Stable 64-bit digest of the content (times, marks, horizon).
    ///
    /// Used to derive per-sequence random streams that do not depend on the
    /// sequence's position in a dataset or batch.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        feed(self.times.len() as u64);
        for (&t, &m) in self.times.iter().zip(&self.marks) {
            feed(t.to_bits());
            feed(m as u64);
        }
        feed(self.horizon.to_bits());
        h
    }
}

/// Column names of the event CSV.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvSchema {
    pub seq_id: String,
    pub time: String,
    pub event_type: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            seq_id: "seq_id".into(),
            time: "time".into(),
            event_type: "event_type".into(),
        }
    }
}

/// How raw CSV times are mapped to model time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum TimeScale {
    /// Divide by the largest raw time in the file.
    #[default]
    MaxTime,
    /// Divide by a fixed constant (1.0 keeps raw units).
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sequences: Vec<EventSequence>,
    pub num_types: usize,
    pub time_scale: f64,
}

impl Dataset {
    pub fn new(
        sequences: Vec<EventSequence>,
        num_types: usize,
        time_scale: f64,
    ) -> Result<Self, EventsError> {
        if !(time_scale > 0.0) || !time_scale.is_finite() {
            return Err(EventsError::InvalidSequence(format!("time scale {time_scale}")));
        }
        if let Some(s) = sequences.iter().find(|s| s.max_mark() > num_types) {
            return Err(EventsError::InvalidSequence(format!(
                "{}: mark {} exceeds K = {num_types}",
                s.id(),
                s.max_mark()
            )));
        }
        Ok(Self {
            sequences,
            num_types,
            time_scale,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn num_events(&self) -> usize {
        self.sequences.iter().map(EventSequence::len).sum()
    }

    pub fn subset(&self, sequences: Vec<EventSequence>) -> Self {
        Self {
            sequences,
            num_types: self.num_types,
            time_scale: self.time_scale,
        }
    }

    pub fn find(&self, id: &str) -> Option<&EventSequence> {
        self.sequences.iter().find(|s| s.id() == id)
    }
}

/// Reads an event CSV, normalizing times by the largest raw time.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, EventsError> {
    load_csv_scaled(path, schema, TimeScale::MaxTime)
}

/// Reads an event CSV with an explicit time normalization.
///
/// One sequence per distinct id, in order of first appearance; events are
/// sorted by time within each sequence. `K` is the largest observed type.
pub fn load_csv_scaled(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    scale: TimeScale,
) -> Result<Dataset, EventsError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EventsError::MissingColumn(name.to_string()))
    };
    let (id_col, time_col, type_col) = (
        column(&schema.seq_id)?,
        column(&schema.time)?,
        column(&schema.event_type)?,
    );

    // (raw time, mark, line) per sequence, in first-appearance order
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, usize, u64)>> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = field(id_col).to_string();
        let time: f64 = field(time_col).parse().map_err(|_| EventsError::Parse {
            line,
            message: format!("time {:?} is not a number", field(time_col)),
        })?;
        if !time.is_finite() || time < 0.0 {
            return Err(EventsError::Parse {
                line,
                message: format!("time {time} must be finite and non-negative"),
            });
        }
        let mark: usize = field(type_col)
            .parse()
            .ok()
            .filter(|&m| m >= 1)
            .ok_or_else(|| EventsError::Parse {
                line,
                message: format!("event type {:?} is not a positive integer", field(type_col)),
            })?;
        rows.entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push((time, mark, line));
    }
    if order.is_empty() {
        return Err(EventsError::Empty);
    }

    let max_raw = rows
        .values()
        .flat_map(|r| r.iter().map(|e| e.0))
        .fold(0.0_f64, f64::max);
    let time_scale = match scale {
        TimeScale::MaxTime if max_raw > 0.0 => max_raw,
        TimeScale::MaxTime => 1.0,
        TimeScale::Fixed(s) => s,
    };

    let mut num_types = 0;
    let mut sequences = Vec::with_capacity(order.len());
    for id in order {
        let mut events = rows.remove(&id).unwrap_or_default();
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        if let Some(w) = events.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(EventsError::DuplicateTimestamp {
                line: w[1].2,
                seq_id: id,
                time: w[1].0,
            });
        }
        num_types = num_types.max(events.iter().map(|e| e.1).max().unwrap_or(0));
        let times = events.iter().map(|e| e.0 / time_scale).collect();
        let marks = events.iter().map(|e| e.1).collect();
        sequences.push(EventSequence::observed(id, times, marks)?);
    }
    Dataset::new(sequences, num_types, time_scale)
}

/// Writes the dataset in raw units under the standard header.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), EventsError> {
    let file = File::create(path.as_ref())?;
    let mut out = BufWriter::new(file);
    write_events(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_events(dataset: &Dataset, out: &mut impl Write) -> Result<(), EventsError> {
    writeln!(out, "seq_id,time,event_type")?;
    for s in &dataset.sequences {
        for (&t, &m) in s.times().iter().zip(s.marks()) {
            writeln!(out, "{},{},{}", s.id(), t * dataset.time_scale, m)?;
        }
    }
    Ok(())
}

/// Relative sizes of the train/validation/test parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 8.0,
            val: 1.0,
            test: 1.0,
        }
    }
}

impl SplitRatios {
    /// Part sizes for `n` sequences: floor allocations for validation and
    /// test (at least one each), remainder to train.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize), EventsError> {
        let total = self.train + self.val + self.test;
        if !(self.train > 0.0 && self.val > 0.0 && self.test > 0.0) || !total.is_finite() {
            return Err(EventsError::InsufficientData(format!("bad split ratios {self:?}")));
        }
        if n < 3 {
            return Err(EventsError::InsufficientData(format!(
                "{n} sequences cannot fill three parts"
            )));
        }
        let alloc = |r: f64| ((n as f64 * r / total).floor() as usize).max(1);
        let (val, test) = (alloc(self.val), alloc(self.test));
        if val + test >= n {
            return Err(EventsError::InsufficientData(format!(
                "{n} sequences leave no training data"
            )));
        }
        Ok((n - val - test, val, test))
    }
}

/// Disjoint train/validation/test partition by whole sequences.
pub fn split(
    dataset: &Dataset,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), EventsError> {
    if dataset.is_empty() {
        return Err(EventsError::Empty);
    }
    let (n_train, n_val, _) = ratios.sizes(dataset.len())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| {
        dataset.subset(idx.iter().map(|&i| dataset.sequences[i].clone()).collect())
    };
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    ))
}

/// Sequences padded to a common length. Slots past a row's length hold time
/// 0 and mark 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub times: Vec<Vec<f64>>,
    pub marks: Vec<Vec<usize>>,
    pub lengths: Vec<usize>,
    pub ids: Vec<String>,
    pub horizons: Vec<f64>,
}

impl Batch {
    pub fn from_sequences(sequences: &[EventSequence]) -> Self {
        let max_len = sequences.iter().map(EventSequence::len).max().unwrap_or(0);
        let mut batch = Batch {
            times: Vec::with_capacity(sequences.len()),
            marks: Vec::with_capacity(sequences.len()),
            lengths: Vec::with_capacity(sequences.len()),
            ids: Vec::with_capacity(sequences.len()),
            horizons: Vec::with_capacity(sequences.len()),
        };
        for s in sequences {
            let mut t = s.times().to_vec();
            let mut m = s.marks().to_vec();
            t.resize(max_len, 0.0);
            m.resize(max_len, 0);
            batch.times.push(t);
            batch.marks.push(m);
            batch.lengths.push(s.len());
            batch.ids.push(s.id().to_string());
            batch.horizons.push(s.horizon());
        }
        batch
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.times.first().map_or(0, Vec::len)
    }

    pub fn is_padding(&self, row: usize, col: usize) -> bool {
        col >= self.lengths[row]
    }

    pub fn padding_mask(&self) -> Vec<Vec<bool>> {
        (0..self.size())
            .map(|r| (0..self.max_len()).map(|c| self.is_padding(r, c)).collect())
            .collect()
    }

    pub fn sequence(&self, row: usize) -> EventSequence {
        let n = self.lengths[row];
        EventSequence {
            id: self.ids[row].clone(),
            times: self.times[row][..n].to_vec(),
            marks: self.marks[row][..n].to_vec(),
            horizon: self.horizons[row],
        }
    }

    pub fn unpad(&self) -> Vec<EventSequence> {
        (0..self.size()).map(|r| self.sequence(r)).collect()
    }
}

/// Consecutive batches of at most `batch_size` sequences.
pub fn batchify(sequences: &[EventSequence], batch_size: usize) -> Vec<Batch> {
    sequences
        .chunks(batch_size.max(1))
        .map(Batch::from_sequences)
        .collect()
}
