use std::path::Path;

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// `None` detects a header from the first row.
    pub has_header: Option<bool>,
    /// Treat the first column as timestamps instead of a channel.
    pub timestamp_column: bool,
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub dataset: TimeSeriesDataset,
    /// Cells filled by interpolation or edge-fill.
    pub repaired_cells: usize,
}

fn parse_cell(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na") {
        return Some(f64::NAN);
    }
    t.parse::<f64>().ok()
}

/// Loads a time-major CSV (rows are time steps) into a channel-major dataset.
///
/// Missing values are linearly interpolated between the nearest finite
/// neighbours; leading and trailing gaps take the nearest finite value.
pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<LoadOutcome> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut header: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut stamps = Vec::new();
    let mut width = None;
    let skip = usize::from(options.timestamp_column);

    for (idx, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = idx + 1;
        let fields: Vec<&str> = rec.iter().collect();
        if idx == 0 {
            let is_header = options
                .has_header
                .unwrap_or_else(|| fields[skip.min(fields.len())..].iter().any(|f| parse_cell(f).is_none()));
            if is_header {
                header = Some(
                    fields[skip.min(fields.len())..]
                        .iter()
                        .map(|s| s.trim().to_string())
                        .collect(),
                );
                width = Some(fields.len());
                continue;
            }
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Format {
                    row,
                    detail: format!("expected {w} fields, found {}", fields.len()),
                })
            }
            _ => {}
        }
        if columns.is_empty() {
            columns = vec![Vec::new(); fields.len().saturating_sub(skip)];
        }
        if skip == 1 {
            stamps.push(fields[0].trim().to_string());
        }
        for (c, f) in fields[skip..].iter().enumerate() {
            let v = parse_cell(f).ok_or_else(|| Error::Format {
                row,
                detail: format!("column {}: cannot parse {f:?}", c + skip + 1),
            })?;
            columns[c].push(v);
        }
    }

    let names = match header {
        Some(h) if h.len() == columns.len() => h,
        _ => (0..columns.len()).map(|i| format!("ch{i}")).collect(),
    };
    let mut repaired = 0;
    for (c, col) in columns.iter_mut().enumerate() {
        repaired +=
            fill_missing(col).ok_or_else(|| Error::Data(format!("channel {:?} has no finite values", names[c])))?;
    }
    let n = columns.first().map_or(0, Vec::len);
    let values = Matrix::from_fn(columns.len(), n, |i, j| columns[i][j]);
    Ok(LoadOutcome {
        dataset: TimeSeriesDataset {
            values,
            channel_names: names,
            timestamps: (skip == 1).then_some(stamps),
            frequency: None,
            source: Some(path.to_path_buf()),
        },
        repaired_cells: repaired,
    })
}

/// Repairs non-finite cells in place; returns the count, or `None` when the
/// column is entirely missing.
fn fill_missing(col: &mut [f64]) -> Option<usize> {
    let known: Vec<usize> = (0..col.len()).filter(|&i| col[i].is_finite()).collect();
    if known.is_empty() {
        return if col.is_empty() { Some(0) } else { None };
    }
    let mut repaired = 0;
    let (first, last) = (known[0], *known.last().unwrap());
    for i in 0..first {
        col[i] = col[first];
        repaired += 1;
    }
    for i in (last + 1)..col.len() {
        col[i] = col[last];
        repaired += 1;
    }
    for pair in known.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for i in (a + 1)..b {
            let t = (i - a) as f64 / (b - a) as f64;
            col[i] = col[a] + t * (col[b] - col[a]);
            repaired += 1;
        }
    }
    Some(repaired)
}

/// Writes the dataset time-major with a header of channel names. Values
/// use the shortest round-trip representation, so reloading is exact.
pub fn save_csv(ds: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let stamps = ds.timestamps.as_ref();
    let mut header = Vec::new();
    if stamps.is_some() {
        header.push("timestamp".to_string());
    }
    header.extend(ds.channel_names.iter().cloned());
    w.write_record(&header)?;
    for t in 0..ds.len() {
        let mut rec = Vec::with_capacity(header.len());
        if let Some(s) = stamps {
            rec.push(s[t].clone());
        }
        rec.extend((0..ds.channels()).map(|c| ds.values[(c, t)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
