//! Turning raw per-participant gaze samples into one grid label per frame.
//!
//! Order of application: quantize each sample, vote per frame, fill frames
//! that had no sample, then apply manual overrides.

use std::collections::BTreeMap;
use std::io::Read;

use crate::data::LabeledSequence;
use crate::error::{Error, Result};

/// One participant's gaze sample on one frame. `point` is `None` for a frame
/// where the tracker recorded nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGazeRecord {
    pub frame_index: usize,
    pub participant_id: usize,
    pub point: Option<(f64, f64)>,
    pub frame_width: f64,
    pub frame_height: f64,
}

/// Gives every unlabeled frame the value of the nearest labeled frame.
/// Equidistant neighbors resolve to the earlier frame.
pub fn fill_missing<T: Clone>(records: &[Option<T>]) -> Result<Vec<T>> {
    let labeled: Vec<usize> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().map(|_| i))
        .collect();
    if labeled.is_empty() {
        return Err(Error::invalid("fill_missing: no frame carries a fixation"));
    }
    let mut out = Vec::with_capacity(records.len());
    let mut next = 0; // index into `labeled` of the first labeled frame >= i
    for (i, r) in records.iter().enumerate() {
        if let Some(v) = r {
            out.push(v.clone());
            continue;
        }
        while next < labeled.len() && labeled[next] < i {
            next += 1;
        }
        let before = next.checked_sub(1).map(|j| labeled[j]);
        let after = labeled.get(next).copied();
        let source = match (before, after) {
            (Some(b), Some(a)) => {
                if i - b <= a - i {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("at least one labeled frame exists"),
        };
        out.push(records[source].clone().expect("source frame is labeled"));
    }
    Ok(out)
}

/// Row-major grid cell of pixel `(x, y)` on a `grid_side`×`grid_side` grid.
pub fn quantize(x: f64, y: f64, width: f64, height: f64, grid_side: usize) -> Result<usize> {
    if grid_side == 0 {
        return Err(Error::invalid("grid side must be >= 1"));
    }
    let inside =
        x.is_finite() && y.is_finite() && (0.0..width).contains(&x) && (0.0..height).contains(&y);
    if !inside {
        return Err(Error::invalid(format!(
            "gaze point ({x}, {y}) outside a {width}x{height} frame"
        )));
    }
    let k = grid_side as f64;
    let row = ((y * k / height).floor() as usize).min(grid_side - 1);
    let col = ((x * k / width).floor() as usize).min(grid_side - 1);
    Ok(row * grid_side + col)
}

/// Plurality vote over grid cells; ties go to the smallest cell index.
pub fn vote(labels: &[usize]) -> Result<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let mut best: Option<(usize, usize)> = None;
    for (label, count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((label, count));
        }
    }
    best.map(|(l, _)| l)
        .ok_or_else(|| Error::invalid("vote over an empty label list"))
}

/// Temporal split: the first `floor(T·fraction)` frames train, the rest test.
pub fn split(
    seq: &LabeledSequence,
    train_fraction: f64,
) -> Result<(LabeledSequence, LabeledSequence)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let t = seq.len();
    // the epsilon absorbs representation error, e.g. 3025·0.8
    let cut = (t as f64 * train_fraction + 1e-9).floor() as usize;
    if cut == 0 || cut >= t {
        return Err(Error::invalid(format!(
            "splitting {t} frames at {train_fraction} leaves an empty partition"
        )));
    }
    Ok((
        seq.slice(0, cut, format!("{}-train", seq.name)),
        seq.slice(cut, t, format!("{}-test", seq.name)),
    ))
}

/// Reads `frame,participant,x,y,width,height`; empty x and y mark an
/// unlabeled sample.
pub fn read_gaze_csv<R: Read>(reader: R, source: &str) -> Result<Vec<RawGazeRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let err = |line: usize, reason: String| Error::Csv {
        file: source.to_string(),
        line,
        reason,
    };
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let expected = ["frame", "participant", "x", "y", "width", "height"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(err(1, format!("header must be {}", expected.join(","))));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| err(line, e.to_string()))?;
        let int = |col: usize| -> Result<usize> {
            row[col].parse().map_err(|_| {
                err(
                    line,
                    format!(
                        "{} is not a non-negative integer: {:?}",
                        expected[col], &row[col]
                    ),
                )
            })
        };
        let num = |col: usize| -> Result<f64> {
            row[col].parse().map_err(|_| {
                err(
                    line,
                    format!("{} is not a number: {:?}", expected[col], &row[col]),
                )
            })
        };
        let point = match (row[2].is_empty(), row[3].is_empty()) {
            (true, true) => None,
            (false, false) => Some((num(2)?, num(3)?)),
            _ => {
                return Err(err(
                    line,
                    "x and y must both be present or both empty".into(),
                ))
            }
        };
        let rec = RawGazeRecord {
            frame_index: int(0)?,
            participant_id: int(1)?,
            point,
            frame_width: num(4)?,
            frame_height: num(5)?,
        };
        if !(rec.frame_width > 0.0 && rec.frame_height > 0.0) {
            return Err(err(line, "frame width and height must be positive".into()));
        }
        if let Some((x, y)) = rec.point {
            if !((0.0..rec.frame_width).contains(&x) && (0.0..rec.frame_height).contains(&y)) {
                return Err(err(
                    line,
                    format!("gaze point ({x}, {y}) outside the frame"),
                ));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads `frame,label` manual corrections.
pub fn read_overrides<R: Read>(reader: R, source: &str) -> Result<Vec<(usize, usize)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let err = |line: usize, reason: String| Error::Csv {
        file: source.to_string(),
        line,
        reason,
    };
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["frame", "label"] {
        return Err(err(1, "header must be frame,label".into()));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| err(line, e.to_string()))?;
        let parse = |col: usize| -> Result<usize> {
            row[col]
                .parse()
                .map_err(|_| err(line, format!("not a non-negative integer: {:?}", &row[col])))
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}

/// Full label pipeline: quantize, vote per frame, fill gaps, apply overrides.
///
/// `num_frames` extends the label track past the last frame mentioned in the
/// records (those trailing frames are filled like any other gap).
pub fn prepare_labels(
    records: &[RawGazeRecord],
    grid_side: usize,
    overrides: &[(usize, usize)],
    num_frames: Option<usize>,
) -> Result<Vec<usize>> {
    let seen = records.iter().map(|r| r.frame_index + 1).max().unwrap_or(0);
    let n = num_frames.unwrap_or(seen).max(seen);
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in records {
        if let Some((x, y)) = r.point {
            cells[r.frame_index].push(quantize(x, y, r.frame_width, r.frame_height, grid_side)?);
        }
    }
    let voted: Vec<Option<usize>> = cells
        .iter()
        .map(|c| if c.is_empty() { None } else { vote(c).ok() })
        .collect();
    let mut labels = fill_missing(&voted)?;
    let regions = grid_side * grid_side;
    for &(frame, label) in overrides {
        if frame >= n {
            return Err(Error::invalid(format!(
                "override for frame {frame}, but the sequence has {n} frames"
            )));
        }
        if label >= regions {
            return Err(Error::LabelOutOfRange {
                frame,
                label,
                regions,
            });
        }
        labels[frame] = label;
    }
    Ok(labels)
}
