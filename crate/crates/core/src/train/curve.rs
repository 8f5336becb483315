use std::io::{Read, Write};

use crate::error::{Error, Result};

const HEADER: [&str; 5] = ["iteration", "loss", "ce", "l2", "val_kl"];

/// One optimizer update. `ce` is summed over the window's frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRecord {
    pub iteration: usize,
    pub loss: f64,
    pub ce: f64,
    pub l2: f64,
    pub frames: usize,
    pub val_kl: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainCurve {
    pub records: Vec<CurveRecord>,
}

impl TrainCurve {
    pub fn push(&mut self, record: CurveRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.iteration <= last.iteration {
                return Err(Error::invalid(format!(
                    "curve iteration {} does not follow {}",
                    record.iteration, last.iteration
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// CSV with header `iteration,loss,ce,l2,val_kl`; `val_kl` is empty when not measured.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::from(std::io::Error::other(e));
        out.write_record(HEADER).map_err(err)?;
        for r in &self.records {
            let val = r.val_kl.map(|v| format!("{v:.16e}")).unwrap_or_default();
            out.write_record([
                r.iteration.to_string(),
                format!("{:.16e}", r.loss),
                format!("{:.16e}", r.ce),
                format!("{:.16e}", r.l2),
                val,
            ])
            .map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Inverse of [`TrainCurve::write_csv`]. Frame counts are not stored and read back as 0.
    pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let bad = |line: usize, reason: String| Error::Csv {
            file: source.to_string(),
            line,
            reason,
        };
        let header = rd.headers().map_err(|e| bad(1, e.to_string()))?.clone();
        if header.iter().ne(HEADER) {
            return Err(bad(1, format!("expected header {}", HEADER.join(","))));
        }
        let mut curve = TrainCurve::default();
        for (i, row) in rd.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| bad(line, e.to_string()))?;
            let num = |j: usize| -> Result<f64> {
                row[j]
                    .parse()
                    .map_err(|_| bad(line, format!("bad {} value {:?}", HEADER[j], &row[j])))
            };
            let iteration = row[0]
                .parse()
                .map_err(|_| bad(line, format!("bad iteration {:?}", &row[0])))?;
            let val_kl = if row[4].is_empty() {
                None
            } else {
                Some(num(4)?)
            };
            curve
                .push(CurveRecord {
                    iteration,
                    loss: num(1)?,
                    ce: num(2)?,
                    l2: num(3)?,
                    frames: 0,
                    val_kl,
                })
                .map_err(|e| bad(line, e.to_string()))?;
        }
        Ok(curve)
    }
}

/// Trailing mean over `window` points; entry `i` averages `values[i+1-window..=i]`.
/// The first `window-1` entries average what is available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut sum = 0.0;
    let mut out = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}
