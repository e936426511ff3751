//! Trajectory sinks: in memory, streamed CSV, streamed binary, or nothing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    State,
    AbstractState,
    Output,
    AbstractOutput,
    Input,
    AbstractInput,
}

impl Signal {
    pub fn label(self) -> &'static str {
        match self {
            Signal::State => "x",
            Signal::AbstractState => "x_hat",
            Signal::Output => "y",
            Signal::AbstractOutput => "y_hat",
            Signal::Input => "u",
            Signal::AbstractInput => "u_hat",
        }
    }

    pub fn code(self) -> u16 {
        self as u16
    }
}

pub trait TrajectorySink {
    /// False skips per-node recording entirely.
    fn wants_nodes(&self) -> bool {
        true
    }
    fn record(&mut self, k: usize, node: usize, signal: Signal, values: &[f64]) -> Result<()>;
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Records nothing; only the summary series are kept.
pub struct NullSink;

impl TrajectorySink for NullSink {
    fn wants_nodes(&self) -> bool {
        false
    }
    fn record(&mut self, _: usize, _: usize, _: Signal, _: &[f64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub step: usize,
    pub node: usize,
    pub signal: Signal,
    pub values: Vec<f64>,
}

/// Keeps records in memory up to `limit` values, then stops recording.
pub struct MemorySink {
    pub records: Vec<Record>,
    pub limit: usize,
    stored: usize,
    pub truncated: bool,
}

impl MemorySink {
    pub fn new(limit: usize) -> Self {
        Self {
            records: Vec::new(),
            limit,
            stored: 0,
            truncated: false,
        }
    }
}

impl TrajectorySink for MemorySink {
    fn record(&mut self, k: usize, node: usize, signal: Signal, values: &[f64]) -> Result<()> {
        if self.stored + values.len() > self.limit {
            self.truncated = true;
            return Ok(());
        }
        self.stored += values.len();
        self.records.push(Record {
            step: k,
            node,
            signal,
            values: values.to_vec(),
        });
        Ok(())
    }
}

/// Long-format CSV `step,subsystem,signal,index,value`, written through a buffer.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl CsvSink<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(BufWriter::with_capacity(1 << 20, File::create(path)?))
    }
}

impl<W: Write> CsvSink<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(["step", "subsystem", "signal", "index", "value"])?;
        Ok(Self { writer })
    }

    pub fn into_inner(self) -> Option<W> {
        self.writer.into_inner().ok()
    }
}

impl<W: Write> TrajectorySink for CsvSink<W> {
    fn record(&mut self, k: usize, node: usize, signal: Signal, values: &[f64]) -> Result<()> {
        for (i, v) in values.iter().enumerate() {
            self.writer.write_record(&[
                k.to_string(),
                node.to_string(),
                signal.label().to_string(),
                i.to_string(),
                format!("{v:e}"),
            ])?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

pub const BINARY_MAGIC: &[u8; 4] = b"NTRJ";

/// Little-endian records `(u32 step, u32 node, u16 signal, u16 index, f64 value)` after a
/// 4-byte magic and a `u32` version.
pub struct BinarySink<W: Write> {
    w: W,
}

impl BinarySink<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(BufWriter::with_capacity(1 << 20, File::create(path)?))
    }
}

impl<W: Write> BinarySink<W> {
    pub fn new(mut w: W) -> Result<Self> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        Ok(Self { w })
    }

    pub fn into_inner(self) -> W {
        self.w
    }
}

impl<W: Write> TrajectorySink for BinarySink<W> {
    fn record(&mut self, k: usize, node: usize, signal: Signal, values: &[f64]) -> Result<()> {
        for (i, v) in values.iter().enumerate() {
            self.w.write_all(&(k as u32).to_le_bytes())?;
            self.w.write_all(&(node as u32).to_le_bytes())?;
            self.w.write_all(&signal.code().to_le_bytes())?;
            self.w.write_all(&(i as u16).to_le_bytes())?;
            self.w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// `(step, node, signal code, index, value)`.
pub type BinaryRecord = (u32, u32, u16, u16, f64);

/// Decodes a binary trajectory.
pub fn read_binary(bytes: &[u8]) -> Option<Vec<BinaryRecord>> {
    if bytes.len() < 8 || &bytes[..4] != BINARY_MAGIC {
        return None;
    }
    let body = &bytes[8..];
    if !body.len().is_multiple_of(20) {
        return None;
    }
    Some(
        body.chunks_exact(20)
            .map(|c| {
                (
                    u32::from_le_bytes(c[0..4].try_into().unwrap()),
                    u32::from_le_bytes(c[4..8].try_into().unwrap()),
                    u16::from_le_bytes(c[8..10].try_into().unwrap()),
                    u16::from_le_bytes(c[10..12].try_into().unwrap()),
                    f64::from_le_bytes(c[12..20].try_into().unwrap()),
                )
            })
            .collect(),
    )
}
