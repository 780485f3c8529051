//! Pulse-indexed detection records and their two on-disk encodings.
//!
//! CSV: header `pulse_index,channel`, one record per line, channel `S` or `aS`.
//!
//! Binary (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic, ASCII "SASEVT01"
//! 8       8     record count N (u64)
//! 16      9·N   records: pulse index (u64), channel code (u8: 0 = S, 1 = aS)
//! ```
//!
//! Both encodings store records in stream order (pulse index, then S before aS).

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BIN_MAGIC: &[u8; 8] = b"SASEVT01";
pub const BIN_HEADER_LEN: usize = 16;
pub const BIN_RECORD_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "S")]
    Stokes,
    #[serde(rename = "aS")]
    AntiStokes,
}

impl Channel {
    pub fn code(self) -> u8 {
        match self {
            Channel::Stokes => 0,
            Channel::AntiStokes => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Channel::Stokes),
            1 => Some(Channel::AntiStokes),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::Stokes => "S",
            Channel::AntiStokes => "aS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "S" => Some(Channel::Stokes),
            "aS" => Some(Channel::AntiStokes),
            _ => None,
        }
    }
}

/// One detection. Ordering is (pulse, channel), the stream order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Record {
    pub pulse: u64,
    pub channel: Channel,
}

impl Record {
    pub fn new(pulse: u64, channel: Channel) -> Self {
        Record { pulse, channel }
    }
}

/// Detections over `n_pulses` pump pulses.
///
/// Invariants: records strictly increasing in (pulse, channel), which also
/// rules out duplicate (pulse, channel) pairs; every pulse < `n_pulses`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub records: Vec<Record>,
    pub n_pulses: u64,
    pub rep_rate_hz: f64,
    pub seed: u64,
}

impl EventStream {
    pub fn empty(n_pulses: u64, rep_rate_hz: f64, seed: u64) -> Self {
        EventStream {
            records: Vec::new(),
            n_pulses,
            rep_rate_hz,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_sorted_unique(&self.records)?;
        if let Some(last) = self.records.last() {
            if last.pulse >= self.n_pulses {
                return Err(Error::invalid(format!(
                    "record at pulse {} outside stream of {} pulses",
                    last.pulse, self.n_pulses
                )));
            }
        }
        Ok(())
    }

    pub fn count(&self, channel: Channel) -> u64 {
        self.records.iter().filter(|r| r.channel == channel).count() as u64
    }

    /// Pulses holding both an S and an aS record.
    pub fn same_pulse_coincidences(&self) -> u64 {
        self.records
            .windows(2)
            .filter(|w| w[0].pulse == w[1].pulse)
            .count() as u64
    }

    pub fn duration_s(&self) -> f64 {
        self.n_pulses as f64 / self.rep_rate_hz
    }
}

pub(crate) fn check_sorted_unique(records: &[Record]) -> Result<()> {
    for w in records.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid(format!(
                "records out of order or duplicated at pulse {} ({} then {})",
                w[1].pulse,
                w[0].channel.label(),
                w[1].channel.label()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StreamFormat {
    Csv,
    Bin,
}

impl StreamFormat {
    pub fn extension(self) -> &'static str {
        match self {
            StreamFormat::Csv => "csv",
            StreamFormat::Bin => "bin",
        }
    }
}

pub fn write_csv<W: Write>(records: &[Record], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "pulse_index,channel")?;
    for r in records {
        writeln!(w, "{},{}", r.pulse, r.channel.label())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bin<W: Write>(records: &[Record], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(BIN_MAGIC)?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        w.write_all(&r.pulse.to_le_bytes())?;
        w.write_all(&[r.channel.code()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records(path: &Path, records: &[Record], format: StreamFormat) -> Result<()> {
    let file = File::create(path)?;
    match format {
        StreamFormat::Csv => write_csv(records, file),
        StreamFormat::Bin => write_bin(records, file),
    }
}

/// Streaming reader over either encoding. Yields records one at a time so
/// arbitrarily large files can be correlated in bounded memory.
pub struct RecordReader {
    inner: ReaderKind,
    path: PathBuf,
}

enum ReaderKind {
    Csv {
        lines: io::Lines<BufReader<File>>,
        line_no: usize,
    },
    Bin {
        reader: BufReader<File>,
        remaining: u64,
        index: u64,
    },
}

impl RecordReader {
    /// Opens `path`, detecting the encoding from the binary magic unless
    /// `format` is given.
    pub fn open(path: &Path, format: Option<StreamFormat>) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let format = match format {
            Some(f) => f,
            None => {
                let head = reader.fill_buf()?;
                if head.starts_with(BIN_MAGIC) {
                    StreamFormat::Bin
                } else {
                    StreamFormat::Csv
                }
            }
        };
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let inner = match format {
            StreamFormat::Bin => {
                let mut header = [0u8; BIN_HEADER_LEN];
                reader
                    .read_exact(&mut header)
                    .map_err(|_| parse_err(0, "truncated binary header".into()))?;
                if &header[..8] != BIN_MAGIC {
                    return Err(parse_err(0, "bad magic, expected SASEVT01".into()));
                }
                let remaining = u64::from_le_bytes(header[8..16].try_into().unwrap());
                ReaderKind::Bin {
                    reader,
                    remaining,
                    index: 0,
                }
            }
            StreamFormat::Csv => {
                let mut lines = reader.lines();
                match lines.next() {
                    Some(Ok(h)) if h.trim() == "pulse_index,channel" => {}
                    Some(Ok(h)) => {
                        return Err(parse_err(1, format!("expected header `pulse_index,channel`, got `{h}`")));
                    }
                    Some(Err(e)) => return Err(e.into()),
                    None => return Err(parse_err(1, "missing header".into())),
                }
                ReaderKind::Csv { lines, line_no: 1 }
            }
        };
        Ok(RecordReader {
            inner,
            path: path.to_path_buf(),
        })
    }

    fn parse_error(&self, line: usize, message: String) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message,
        }
    }

    fn next_record(&mut self) -> Option<Result<Record>> {
        match &mut self.inner {
            ReaderKind::Csv { lines, line_no } => loop {
                let line = match lines.next()? {
                    Ok(l) => l,
                    Err(e) => return Some(Err(e.into())),
                };
                *line_no += 1;
                let n = *line_no;
                let text = line.trim();
                if text.is_empty() {
                    continue;
                }
                return Some(parse_csv_line(text).map_err(|m| self.parse_error(n, m)));
            },
            ReaderKind::Bin {
                reader,
                remaining,
                index,
            } => {
                if *remaining == 0 {
                    return None;
                }
                let mut buf = [0u8; BIN_RECORD_LEN];
                let i = *index;
                if reader.read_exact(&mut buf).is_err() {
                    *remaining = 0;
                    return Some(Err(self.parse_error(0, format!("truncated at record {i}"))));
                }
                *remaining -= 1;
                *index += 1;
                let pulse = u64::from_le_bytes(buf[..8].try_into().unwrap());
                Some(match Channel::from_code(buf[8]) {
                    Some(channel) => Ok(Record { pulse, channel }),
                    None => Err(self.parse_error(0, format!("record {i}: unknown channel code {}", buf[8]))),
                })
            }
        }
    }
}

impl Iterator for RecordReader {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record()
    }
}

fn parse_csv_line(text: &str) -> std::result::Result<Record, String> {
    let (pulse, channel) = text
        .split_once(',')
        .ok_or_else(|| format!("expected `pulse_index,channel`, got `{text}`"))?;
    let pulse = pulse
        .trim()
        .parse::<u64>()
        .map_err(|e| format!("bad pulse index `{}`: {e}", pulse.trim()))?;
    let channel = Channel::parse(channel.trim()).ok_or_else(|| format!("bad channel `{}`, expected S or aS", channel.trim()))?;
    Ok(Record { pulse, channel })
}

/// Reads a whole file and checks stream ordering.
pub fn read_records(path: &Path, format: Option<StreamFormat>) -> Result<Vec<Record>> {
    let records = RecordReader::open(path, format)?.collect::<Result<Vec<_>>>()?;
    check_sorted_unique(&records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Vec<Record> {
        vec![
            Record::new(0, Channel::Stokes),
            Record::new(3, Channel::Stokes),
            Record::new(3, Channel::AntiStokes),
            Record::new(1 << 40, Channel::AntiStokes),
        ]
    }

    #[test]
    fn binary_layout_is_exact() {
        let mut buf = Vec::new();
        write_bin(&sample()[..2], &mut buf).unwrap();
        let mut expected = b"SASEVT01".to_vec();
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 0, 0]);
        expected.extend_from_slice(&[3, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(buf, expected);
        assert_eq!(buf.len(), BIN_HEADER_LEN + 2 * BIN_RECORD_LEN);
    }

    #[test]
    fn csv_layout_is_exact() {
        let mut buf = Vec::new();
        write_csv(&sample()[1..3], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "pulse_index,channel\n3,S\n3,aS\n");
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "pulse_index,channel\n1,S\n2,X\n").unwrap();
        let err = read_records(&p, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        std::fs::write(&p, "pulse,chan\n").unwrap();
        assert!(matches!(read_records(&p, None).unwrap_err(), Error::Parse { line: 1, .. }));
        std::fs::write(&p, "pulse_index,channel\n5,S\n2,S\n").unwrap();
        assert!(matches!(read_records(&p, None).unwrap_err(), Error::InvalidInput(_)));
    }

    #[test]
    fn truncated_binary_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        let mut buf = Vec::new();
        write_bin(&sample(), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        std::fs::write(&p, &buf).unwrap();
        assert!(read_records(&p, None).is_err());
    }

    #[test]
    fn stream_validation() {
        let mut s = EventStream {
            records: sample(),
            n_pulses: 1 << 41,
            rep_rate_hz: 76e6,
            seed: 0,
        };
        s.validate().unwrap();
        assert_eq!(s.same_pulse_coincidences(), 1);
        s.n_pulses = 10;
        assert!(s.validate().is_err());
        s.n_pulses = 1 << 41;
        s.records.push(Record::new(1 << 40, Channel::AntiStokes));
        assert!(s.validate().is_err());
    }

    proptest! {
        #[test]
        fn both_encodings_decode_to_the_same_records(
            pulses in proptest::collection::btree_set((0u64..5000, any::<bool>()), 0..200)
        ) {
            let records: Vec<Record> = pulses
                .into_iter()
                .map(|(p, a)| Record::new(p, if a { Channel::AntiStokes } else { Channel::Stokes }))
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let csv = dir.path().join("s.csv");
            let bin = dir.path().join("s.bin");
            write_records(&csv, &records, StreamFormat::Csv).unwrap();
            write_records(&bin, &records, StreamFormat::Bin).unwrap();
            prop_assert_eq!(read_records(&csv, None).unwrap(), records.clone());
            prop_assert_eq!(read_records(&bin, None).unwrap(), records);
        }
    }
}
