//! Feature extraction: converts one tap (centroid and/or heatmap frame)
//! into each of the five feature representations, with min-max
//! normalization fitted on training data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{KeyId, KeyboardLayout, Point, FULL_FRAME_ROWS, GRID_CELLS, GRID_COLS, GRID_ROWS, KEY_COUNT};

/// One capacitive sensor frame, either a full-screen frame (39x18) or one
/// pre-cropped to the keyboard region (16x18). Intensities are
/// non-negative integers; math promotes them to floats.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u16>>", into = "Vec<Vec<u16>>")]
pub struct HeatmapFrame {
    rows: usize,
    data: Vec<u16>,
}

impl HeatmapFrame {
    pub fn zeros_full() -> HeatmapFrame {
        HeatmapFrame {
            rows: FULL_FRAME_ROWS,
            data: vec![0; FULL_FRAME_ROWS * GRID_COLS],
        }
    }

    pub fn zeros_cropped() -> HeatmapFrame {
        HeatmapFrame {
            rows: GRID_ROWS,
            data: vec![0; GRID_CELLS],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u16>>) -> Result<HeatmapFrame> {
        if rows.len() != FULL_FRAME_ROWS && rows.len() != GRID_ROWS {
            return Err(Error::InvalidFrame(format!(
                "expected {FULL_FRAME_ROWS} or {GRID_ROWS} rows, got {}",
                rows.len()
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * GRID_COLS);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != GRID_COLS {
                return Err(Error::InvalidFrame(format!(
                    "row {i} has {} columns, expected {GRID_COLS}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(HeatmapFrame { rows: rows.len(), data })
    }

    /// Whether this is a full-screen frame (vs pre-cropped to the keyboard).
    pub fn is_full(&self) -> bool {
        self.rows == FULL_FRAME_ROWS
    }

    /// The 16x18 keyboard region, row-major. For a full frame this is the
    /// last 16 rows.
    pub fn keyboard_region(&self) -> &[u16] {
        &self.data[(self.rows - GRID_ROWS) * GRID_COLS..]
    }

    /// Intensity of keyboard-region cell (row, col), row in 0..16.
    pub fn keyboard_value(&self, row: usize, col: usize) -> u16 {
        self.keyboard_region()[row * GRID_COLS + col]
    }

    pub fn set_keyboard_value(&mut self, row: usize, col: usize, value: u16) {
        let offset = (self.rows - GRID_ROWS) * GRID_COLS;
        self.data[offset + row * GRID_COLS + col] = value;
    }
}

impl TryFrom<Vec<Vec<u16>>> for HeatmapFrame {
    type Error = Error;
    fn try_from(rows: Vec<Vec<u16>>) -> Result<HeatmapFrame> {
        HeatmapFrame::from_rows(rows)
    }
}

impl From<HeatmapFrame> for Vec<Vec<u16>> {
    fn from(frame: HeatmapFrame) -> Vec<Vec<u16>> {
        frame
            .data
            .chunks(GRID_COLS)
            .map(|row| row.to_vec())
            .collect()
    }
}

/// One tap: the reported centroid, the first heatmap frame of the touch
/// sequence, a timestamp, and (for labeled data) the intended key.
#[derive(Clone, Debug, PartialEq)]
pub struct TapSample {
    pub user_id: String,
    pub prompt_id: u32,
    pub t_ms: u64,
    pub centroid: Point,
    pub heatmap: Option<HeatmapFrame>,
    pub label: Option<KeyId>,
}

impl TapSample {
    /// Natural identifier used to reference this tap from other files.
    pub fn tap_ref(&self) -> String {
        format!("{}:{}:{}", self.user_id, self.prompt_id, self.t_ms)
    }

    pub fn label(&self) -> Result<KeyId> {
        self.label.ok_or(Error::MissingLabel)
    }
}

/// Which representation a spatial model consumes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum FeatureSetKind {
    /// Centroid deltas to all key centers (56 features).
    C,
    /// Flattened 16x18 heatmap (288 features).
    Hf,
    /// Centroid deltas + flattened heatmap (344 features).
    CHf,
    /// Heatmap overlap vector (28 features).
    Ho,
    /// Centroid deltas + heatmap overlap vector (84 features).
    CHo,
}

impl FeatureSetKind {
    pub const ALL: [FeatureSetKind; 5] = [
        FeatureSetKind::C,
        FeatureSetKind::Hf,
        FeatureSetKind::CHf,
        FeatureSetKind::Ho,
        FeatureSetKind::CHo,
    ];

    pub fn dim(self) -> usize {
        match self {
            FeatureSetKind::C => 2 * KEY_COUNT,
            FeatureSetKind::Hf => GRID_CELLS,
            FeatureSetKind::CHf => 2 * KEY_COUNT + GRID_CELLS,
            FeatureSetKind::Ho => KEY_COUNT,
            FeatureSetKind::CHo => 2 * KEY_COUNT + KEY_COUNT,
        }
    }

    pub fn requires_heatmap(self) -> bool {
        !matches!(self, FeatureSetKind::C)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSetKind::C => "C",
            FeatureSetKind::Hf => "Hf",
            FeatureSetKind::CHf => "CHf",
            FeatureSetKind::Ho => "Ho",
            FeatureSetKind::CHo => "CHo",
        }
    }
}

impl std::str::FromStr for FeatureSetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<FeatureSetKind> {
        FeatureSetKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown feature set kind {s:?}")))
    }
}

impl std::fmt::Display for FeatureSetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Centroid deltas: `[dx_1, dy_1, ..., dx_28, dy_28]` in canonical key
/// order, with `dx_k = (x - x_k) / w` and `dy_k = (y - y_k) / h`.
pub fn centroid_features(layout: &KeyboardLayout, p: Point) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * KEY_COUNT);
    for k in KeyId::all() {
        let c = layout.key(k).center();
        out.push((p.x - c.x) / layout.key_width);
        out.push((p.y - c.y) / layout.key_height);
    }
    out
}

/// The 16x18 keyboard region of the frame in row-major order.
pub fn flatten_heatmap(frame: &HeatmapFrame) -> Vec<f64> {
    frame.keyboard_region().iter().map(|&v| v as f64).collect()
}

/// Heatmap overlap vector: `f_k = sum_ij O(k,i,j)/A_k * v_ij` in canonical
/// key order.
pub fn heatmap_overlap_vector(layout: &KeyboardLayout, frame: &HeatmapFrame) -> Vec<f64> {
    let region = frame.keyboard_region();
    KeyId::all()
        .map(|k| {
            layout
                .overlap_weight_row(k)
                .iter()
                .zip(region)
                .map(|(w, &v)| w * v as f64)
                .sum()
        })
        .collect()
}

/// Intensity-weighted mean of cell centers over the keyboard region, or
/// `None` for an all-zero frame. A diagnostic estimate of the contact
/// point carried by the heatmap alone.
pub fn heatmap_centroid(layout: &KeyboardLayout, frame: &HeatmapFrame) -> Option<Point> {
    let region = frame.keyboard_region();
    let mut total = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for row in 0..GRID_ROWS {
        for col in 0..GRID_COLS {
            let v = region[row * GRID_COLS + col] as f64;
            if v > 0.0 {
                let c = layout.cell_center(row, col);
                total += v;
                sx += v * c.x;
                sy += v * c.y;
            }
        }
    }
    (total > 0.0).then(|| Point::new(sx / total, sy / total))
}

/// Per-dimension min-max statistics mapping raw features into `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Normalizer {
    /// Fits per-dimension minima and maxima over the given vectors.
    pub fn fit<'a, I>(vectors: I) -> Result<Normalizer>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = vectors.into_iter();
        let first = iter.next().ok_or(Error::EmptyInput("normalizer fitting set"))?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for v in iter {
            if v.len() != min.len() {
                return Err(Error::DimensionMismatch { expected: min.len(), got: v.len() });
            }
            for (i, &x) in v.iter().enumerate() {
                min[i] = min[i].min(x);
                max[i] = max[i].max(x);
            }
        }
        Ok(Normalizer { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps `v` to `2 (v - min) / (max - min) - 1`, clamped to `[-1, 1]`;
    /// degenerate dimensions (max == min) map to 0.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = v.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, v: &mut [f64]) -> Result<()> {
        if v.len() != self.min.len() {
            return Err(Error::DimensionMismatch { expected: self.min.len(), got: v.len() });
        }
        for (i, x) in v.iter_mut().enumerate() {
            let range = self.max[i] - self.min[i];
            *x = if range > 0.0 {
                (2.0 * (*x - self.min[i]) / range - 1.0).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
        Ok(())
    }
}

/// Raw (pre-normalization) feature vector for the given kind; heatmap
/// blocks follow the centroid block.
pub fn raw_features(layout: &KeyboardLayout, kind: FeatureSetKind, tap: &TapSample) -> Result<Vec<f64>> {
    let heatmap = || {
        tap.heatmap
            .as_ref()
            .ok_or_else(|| Error::MissingHeatmap(kind.name().to_string()))
    };
    let v = match kind {
        FeatureSetKind::C => centroid_features(layout, tap.centroid),
        FeatureSetKind::Hf => flatten_heatmap(heatmap()?),
        FeatureSetKind::Ho => heatmap_overlap_vector(layout, heatmap()?),
        FeatureSetKind::CHf => {
            let mut v = centroid_features(layout, tap.centroid);
            v.extend(flatten_heatmap(heatmap()?));
            v
        }
        FeatureSetKind::CHo => {
            let mut v = centroid_features(layout, tap.centroid);
            v.extend(heatmap_overlap_vector(layout, heatmap()?));
            v
        }
    };
    debug_assert_eq!(v.len(), kind.dim());
    Ok(v)
}

/// Feature vector for the given kind, normalized when a fitted
/// [`Normalizer`] is supplied.
pub fn build_features(
    layout: &KeyboardLayout,
    kind: FeatureSetKind,
    tap: &TapSample,
    normalizer: Option<&Normalizer>,
) -> Result<Vec<f64>> {
    let mut v = raw_features(layout, kind, tap)?;
    if let Some(n) = normalizer {
        n.apply_in_place(&mut v)?;
    }
    Ok(v)
}
