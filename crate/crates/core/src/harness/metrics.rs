//! CSV metric streams.
//!
//! `metrics.csv` holds one row per finished episode. An optional first line
//! `# created <unix seconds>` records when the file was written; readers
//! skip `#` lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::maa2c::StepTrace;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Env timesteps consumed in the phase when the episode ended.
    pub step: u64,
    /// `train` or `finetune`.
    pub phase: String,
    pub task: String,
    /// Sum over agents of the undiscounted episode returns.
    pub episode_return: f64,
    pub episode_len: usize,
    /// Losses of the iteration in which the episode ended.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mate_loss: Option<f64>,
}

fn metrics_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Metrics {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

/// Buffered CSV writer with an optional timestamp comment line.
pub struct CsvStream {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvStream {
    pub fn create(path: &Path, timestamp: bool) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        if timestamp {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            writeln!(out, "# created {secs}").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            writer: csv::Writer::from_writer(out),
        })
    }

    pub fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.writer.serialize(row).map_err(|e| metrics_err(&self.path, e))
    }

    /// Writes a header-less record; for streams whose width varies by run.
    pub fn write_record<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| metrics_err(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<MetricsRow>, _>>()
        .map_err(|e| metrics_err(path, e))?;
    if let Some(w) = rows.windows(2).find(|w| w[1].step < w[0].step) {
        return Err(metrics_err(path, format!("step decreases from {} to {}", w[0].step, w[1].step)));
    }
    Ok(rows)
}

/// Writes `embeddings.csv`: one row per timestep and encoder with
/// `episode, task, t, encoder, mu_0.., sigma_0.., w_0..`; the weight columns
/// are present for the mixed paradigm only.
pub fn write_embeddings(path: &Path, task_names: &[String], rows: &[StepTrace], timestamp: bool) -> Result<()> {
    let mut out = CsvStream::create(path, timestamp)?;
    let Some(first) = rows.first() else {
        return out.finish();
    };
    let d = first.embeddings[0].dim();
    let n_w = first.weights.as_ref().map_or(0, Vec::len);
    let mut header: Vec<String> = ["episode", "task", "t", "encoder"].iter().map(|s| s.to_string()).collect();
    header.extend((0..d).map(|k| format!("mu_{k}")));
    header.extend((0..d).map(|k| format!("sigma_{k}")));
    header.extend((0..n_w).map(|k| format!("w_{k}")));
    out.write_record(&header)?;
    for r in rows {
        for (i, e) in r.embeddings.iter().enumerate() {
            let mut rec = vec![r.episode.to_string(), task_names[r.task_index].clone(), r.t.to_string(), i.to_string()];
            rec.extend(e.mu.iter().chain(&e.sigma).map(f64::to_string));
            if let Some(w) = &r.weights {
                rec.extend(w.iter().map(f64::to_string));
            }
            out.write_record(&rec)?;
        }
    }
    out.finish()
}

/// One parsed line of `embeddings.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub episode: usize,
    pub task: String,
    pub t: usize,
    pub encoder: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let header = reader.headers().map_err(|e| metrics_err(path, e))?.clone();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let (d, n_w) = (count("mu_"), count("w_"));
    if header.len() != 4 + 2 * d + n_w {
        return Err(metrics_err(path, "unexpected embedding columns"));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| metrics_err(path, e))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| metrics_err(path, e));
        let int = |i: usize| rec[i].parse::<usize>().map_err(|e| metrics_err(path, e));
        out.push(EmbeddingRow {
            episode: int(0)?,
            task: rec[1].to_string(),
            t: int(2)?,
            encoder: int(3)?,
            mu: (4..4 + d).map(num).collect::<Result<_>>()?,
            sigma: (4 + d..4 + 2 * d).map(num).collect::<Result<_>>()?,
            weights: (4 + 2 * d..4 + 2 * d + n_w).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mate::{EmbeddingSource, TaskEmbedding};

    fn row(step: u64) -> MetricsRow {
        MetricsRow {
            step,
            phase: "train".into(),
            task: "lbf-6x6-2ag".into(),
            episode_return: 0.25,
            episode_len: 17,
            policy_loss: -0.1,
            value_loss: 0.3,
            entropy: 1.7,
            mate_loss: None,
        }
    }

    #[test]
    fn metrics_round_trip_and_timestamp_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut w = CsvStream::create(&path, true).unwrap();
        let rows = vec![row(50), MetricsRow { mate_loss: Some(0.5), ..row(100) }];
        for r in &rows {
            w.write(r).unwrap();
        }
        w.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# created "));
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "step,phase,task,episode_return,episode_len,policy_loss,value_loss,entropy,mate_loss"
        );
        assert_eq!(read_metrics(&path).unwrap(), rows);
    }

    #[test]
    fn decreasing_steps_are_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut w = CsvStream::create(&path, false).unwrap();
        w.write(&row(100)).unwrap();
        w.write(&row(50)).unwrap();
        w.finish().unwrap();
        assert!(read_metrics(&path).is_err());
        std::fs::write(&path, "step,phase\nx,y\n").unwrap();
        assert!(read_metrics(&path).is_err());
    }

    #[test]
    fn embeddings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeddings.csv");
        let e = |m: f64| TaskEmbedding::new(vec![m, 0.5, -m], vec![1.0, 0.25, 2.0], EmbeddingSource::Agent(0)).unwrap();
        let rows = vec![
            StepTrace { episode: 0, task_index: 1, t: 0, embeddings: vec![e(0.1), e(0.2)], weights: Some(vec![0.25, 0.75]) },
            StepTrace { episode: 0, task_index: 1, t: 1, embeddings: vec![e(0.3), e(0.4)], weights: Some(vec![0.5, 0.5]) },
        ];
        write_embeddings(&path, &["a".into(), "b".into()], &rows, false).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back[3].mu, vec![0.4, 0.5, -0.4]);
        assert_eq!(back[3].task, "b");
        assert_eq!(back[2].weights, vec![0.5, 0.5]);
        assert_eq!(back[1].encoder, 1);
    }
}
