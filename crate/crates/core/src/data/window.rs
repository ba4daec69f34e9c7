use super::dataset::{TimeSeriesDataset, Timestamp};
use crate::error::{Error, Result};

/// `B x W x d` tensor of sliding windows, row-major `[b][t][f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    data: Vec<f64>,
    length: usize,
    n_features: usize,
    stride: usize,
    window_starts: Vec<Timestamp>,
    window_ends: Vec<Timestamp>,
    /// Row offset of each window's first step in the concatenated runs.
    start_rows: Vec<usize>,
    labels: Vec<bool>,
    feature_names: Vec<String>,
}

impl WindowBatch {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        data: Vec<f64>,
        length: usize,
        n_features: usize,
        stride: usize,
        window_starts: Vec<Timestamp>,
        window_ends: Vec<Timestamp>,
        start_rows: Vec<usize>,
        labels: Vec<bool>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let b = window_starts.len();
        if data.len() != b * length * n_features
            || window_ends.len() != b
            || start_rows.len() != b
            || labels.len() != b
            || feature_names.len() != n_features
        {
            return Err(Error::InvalidArgument("inconsistent window batch parts".into()));
        }
        Ok(Self {
            data,
            length,
            n_features,
            stride,
            window_starts,
            window_ends,
            start_rows,
            labels,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.window_starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window_starts.is_empty()
    }

    pub fn window_length(&self) -> usize {
        self.length
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn window_starts(&self) -> &[Timestamp] {
        &self.window_starts
    }

    pub fn window_ends(&self) -> &[Timestamp] {
        &self.window_ends
    }

    pub fn start_rows(&self) -> &[usize] {
        &self.start_rows
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn window_size(&self) -> usize {
        self.length * self.n_features
    }

    /// Flattened `W * d` slice of window `b`.
    pub fn window(&self, b: usize) -> &[f64] {
        let n = self.window_size();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, b: usize, t: usize, f: usize) -> f64 {
        self.data[(b * self.length + t) * self.n_features + f]
    }

    /// Same metadata, new tensor contents.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::InvalidArgument(format!(
                "replacement tensor has {} cells, expected {}",
                data.len(),
                self.data.len()
            )));
        }
        Ok(Self { data, ..self.clone() })
    }

    /// Content hash of the tensor, window spans and labels.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(8 * (self.data.len() + 3 * self.len()) + 24);
        for n in [self.length, self.n_features, self.stride] {
            bytes.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for v in &self.data {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        for i in 0..self.len() {
            bytes.extend_from_slice(&self.window_starts[i].to_le_bytes());
            bytes.extend_from_slice(&self.window_ends[i].to_le_bytes());
            bytes.push(self.labels[i] as u8);
        }
        crate::hashing::sha256_hex(&bytes)
    }

    /// Windows `[start, end)` as a new batch.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let n = self.window_size();
        Self {
            data: self.data[start * n..end * n].to_vec(),
            window_starts: self.window_starts[start..end].to_vec(),
            window_ends: self.window_ends[start..end].to_vec(),
            start_rows: self.start_rows[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
            ..self.clone()
        }
    }

    /// Windows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let n = self.window_size();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.window(i));
        }
        Self {
            data,
            window_starts: indices.iter().map(|&i| self.window_starts[i]).collect(),
            window_ends: indices.iter().map(|&i| self.window_ends[i]).collect(),
            start_rows: indices.iter().map(|&i| self.start_rows[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone()
        }
    }
}

/// Enumerate sliding windows of length `length` and step `stride` inside
/// each run. A window is labelled positive when its time span
/// `[start, end]` overlaps any label interval of its run.
pub fn make_windows(runs: &[TimeSeriesDataset], length: usize, stride: usize) -> Result<WindowBatch> {
    if length == 0 || stride == 0 {
        return Err(Error::InvalidArgument("window length and stride must be >= 1".into()));
    }
    let first = runs.first().ok_or_else(|| Error::Empty("no runs to window".into()))?;
    let d = first.n_features();
    let mut data = Vec::new();
    let mut starts = Vec::new();
    let mut ends = Vec::new();
    let mut start_rows = Vec::new();
    let mut labels = Vec::new();
    let mut row_offset = 0;
    for (ri, run) in runs.iter().enumerate() {
        if run.n_features() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: run.n_features(),
            });
        }
        let t = run.len();
        if t < length {
            log::warn!("run {ri} has {t} rows, shorter than window length {length}; no windows emitted");
        } else {
            let ts = run.timestamps();
            for s in (0..=t - length).step_by(stride) {
                let (ws, we) = (ts[s], ts[s + length - 1]);
                data.extend_from_slice(&run.values()[s * d..(s + length) * d]);
                starts.push(ws);
                ends.push(we);
                start_rows.push(row_offset + s);
                labels.push(run.label_intervals().iter().any(|iv| iv.start <= we && ws <= iv.end));
            }
        }
        row_offset += t;
    }
    WindowBatch::from_parts(
        data,
        length,
        d,
        stride,
        starts,
        ends,
        start_rows,
        labels,
        first.feature_names().to_vec(),
    )
}
