//! Per-episode CSV log. The header is fixed and every row has the same
//! number of fields; absent losses are empty fields.

use std::io::{Read, Write};
use std::path::Path;

use bac_core::outcome::OutcomeTag;
use bac_core::rl::{EpisodeSummary, Variant};

pub const HEADER: [&str; 9] =
    ["wall_clock_ms", "worker_id", "episode_index", "variant", "reward", "episode_length", "outcome_tag", "tp_loss_mean", "pi_loss_mean"];

#[derive(Debug, thiserror::Error)]
pub enum CsvLogError {
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("bad header: expected {expected}, found {found}")]
    Header { expected: String, found: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub wall_clock_ms: u64,
    pub worker_id: usize,
    pub episode_index: u64,
    pub variant: Variant,
    pub reward: i8,
    pub episode_length: u32,
    pub outcome_tag: OutcomeTag,
    pub tp_loss_mean: Option<f64>,
    pub pi_loss_mean: Option<f64>,
}

impl EpisodeRow {
    pub fn from_summary(s: &EpisodeSummary, wall_clock_ms: u64) -> Self {
        EpisodeRow {
            wall_clock_ms,
            worker_id: s.worker_id,
            episode_index: s.episode_index,
            variant: s.variant,
            reward: s.outcome.reward,
            episode_length: s.outcome.length,
            outcome_tag: s.outcome.tag,
            tp_loss_mean: s.tp_loss,
            pi_loss_mean: s.pi_loss_mean,
        }
    }

    pub fn fields(&self) -> [String; 9] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.wall_clock_ms.to_string(),
            self.worker_id.to_string(),
            self.episode_index.to_string(),
            self.variant.to_string(),
            self.reward.to_string(),
            self.episode_length.to_string(),
            self.outcome_tag.to_string(),
            opt(self.tp_loss_mean),
            opt(self.pi_loss_mean),
        ]
    }

    fn parse(rec: &csv::StringRecord, line: u64) -> Result<Self, CsvLogError> {
        let err = |reason: String| CsvLogError::Row { line, reason };
        if rec.len() != HEADER.len() {
            return Err(err(format!("expected {} fields, found {}", HEADER.len(), rec.len())));
        }
        fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T, String> {
            rec[i].parse().map_err(|_| format!("bad {} `{}`", HEADER[i], &rec[i]))
        }
        let opt = |i: usize| -> Result<Option<f64>, String> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(rec, i).map(Some)
            }
        };
        let row = (|| -> Result<EpisodeRow, String> {
            Ok(EpisodeRow {
                wall_clock_ms: num(rec, 0)?,
                worker_id: num(rec, 1)?,
                episode_index: num(rec, 2)?,
                variant: Variant::parse(&rec[3]).ok_or_else(|| format!("bad variant `{}`", &rec[3]))?,
                reward: num(rec, 4)?,
                episode_length: num(rec, 5)?,
                outcome_tag: OutcomeTag::parse(&rec[6]).ok_or_else(|| format!("bad outcome_tag `{}`", &rec[6]))?,
                tp_loss_mean: opt(7)?,
                pi_loss_mean: opt(8)?,
            })
        })()
        .map_err(err)?;
        if !(-1..=1).contains(&row.reward) {
            return Err(CsvLogError::Row { line, reason: format!("reward {} outside [-1, 1]", row.reward) });
        }
        Ok(row)
    }
}

pub struct EpisodeWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> EpisodeWriter<W> {
    /// Writes the header immediately, so an empty run still has one.
    pub fn new(w: W) -> Result<Self, CsvLogError> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(HEADER)?;
        inner.flush()?;
        Ok(EpisodeWriter { inner })
    }

    pub fn write(&mut self, row: &EpisodeRow) -> Result<(), CsvLogError> {
        self.inner.write_record(row.fields())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), CsvLogError> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, CsvLogError> {
        self.inner.into_inner().map_err(|e| CsvLogError::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn read_rows<R: Read>(r: R) -> Result<Vec<EpisodeRow>, CsvLogError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
    let mut records = rd.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(CsvLogError::Header { expected: HEADER.join(","), found: String::new() }),
    };
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(CsvLogError::Header { expected: HEADER.join(","), found: header.iter().collect::<Vec<_>>().join(",") });
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push(EpisodeRow::parse(&rec, line)?);
    }
    Ok(rows)
}

pub fn read_file(path: &Path) -> Result<Vec<EpisodeRow>, CsvLogError> {
    read_rows(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u64) -> EpisodeRow {
        EpisodeRow {
            wall_clock_ms: 10 * i,
            worker_id: (i % 3) as usize,
            episode_index: i,
            variant: Variant::PiA3cTp,
            reward: [-1, 0, 1][(i % 3) as usize],
            episode_length: 7 + i as u32,
            outcome_tag: OutcomeTag::ALL[(i % 5) as usize],
            tp_loss_mean: (i % 2 == 0).then_some(0.1 + i as f64 / 3.0),
            pi_loss_mean: (i % 4 == 1).then_some(1.0 / 7.0),
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut w = EpisodeWriter::new(Vec::new()).unwrap();
        let rows: Vec<_> = (0..20).map(row).collect();
        for r in &rows {
            w.write(r).unwrap();
        }
        let buf = w.into_inner().unwrap();
        assert_eq!(read_rows(&buf[..]).unwrap(), rows);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| l.split(',').count() == HEADER.len()));
    }

    #[test]
    fn malformed_row_names_its_line() {
        let text = format!("{}\n{}\n1,2,3\n", HEADER.join(","), row(0).fields().join(","));
        match read_rows(text.as_bytes()) {
            Err(CsvLogError::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
