//! Keyboard geometry: the 28 candidate keys, the sensor grid, and the
//! geometric primitives every other module builds on.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Number of candidate keys (a-z, SPACE, PERIOD).
pub const KEY_COUNT: usize = 28;
/// Rows of the heatmap grid covering the keyboard area.
pub const GRID_ROWS: usize = 16;
/// Columns of the heatmap grid.
pub const GRID_COLS: usize = 18;
/// Cells in the keyboard region of the grid.
pub const GRID_CELLS: usize = GRID_ROWS * GRID_COLS;
/// Rows of a full sensor frame (whole screen); the last [`GRID_ROWS`] cover
/// the keyboard area.
pub const FULL_FRAME_ROWS: usize = 39;

/// One of the 28 candidate keys, identified by its canonical index:
/// `a..z` are 0..26, SPACE is 26, PERIOD is 27. The canonical order is the
/// class index used by every model and distribution in this crate.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(u8);

impl KeyId {
    pub const SPACE: KeyId = KeyId(26);
    pub const PERIOD: KeyId = KeyId(27);

    pub fn from_index(index: usize) -> Option<KeyId> {
        (index < KEY_COUNT).then(|| KeyId(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Maps a character to its key, folding uppercase to lowercase.
    /// `' '` is SPACE and `'.'` is PERIOD.
    pub fn from_char(c: char) -> Option<KeyId> {
        match c {
            'a'..='z' => Some(KeyId(c as u8 - b'a')),
            'A'..='Z' => Some(KeyId(c as u8 - b'A')),
            ' ' => Some(KeyId::SPACE),
            '.' => Some(KeyId::PERIOD),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self.0 {
            26 => ' ',
            27 => '.',
            i => (b'a' + i) as char,
        }
    }

    pub fn label(self) -> &'static str {
        const LABELS: [&str; KEY_COUNT] = [
            "a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p", "q",
            "r", "s", "t", "u", "v", "w", "x", "y", "z", "SPACE", "PERIOD",
        ];
        LABELS[self.index()]
    }

    pub fn from_label(label: &str) -> Option<KeyId> {
        match label {
            "SPACE" => Some(KeyId::SPACE),
            "PERIOD" => Some(KeyId::PERIOD),
            s => {
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c @ 'a'..='z'), None) => KeyId::from_char(c),
                    _ => None,
                }
            }
        }
    }

    /// All 28 keys in canonical order.
    pub fn all() -> impl Iterator<Item = KeyId> {
        (0..KEY_COUNT).map(|i| KeyId(i as u8))
    }

    /// Converts a string over the 28-key alphabet into key indices,
    /// folding case. Fails on any other character.
    pub fn sequence(text: &str) -> Result<Vec<KeyId>> {
        text.chars()
            .map(|c| KeyId::from_char(c).ok_or(Error::UnknownKey(c)))
            .collect()
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({})", self.label())
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for KeyId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for KeyId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        KeyId::from_label(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown key label {s:?}")))
    }
}

/// A point in keyboard coordinates: pixels, origin at the keyboard's
/// top-left corner.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Point {
        Point { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Point {
        Point { x, y }
    }
}

impl From<Point> for (f64, f64) {
    fn from(p: Point) -> (f64, f64) {
        (p.x, p.y)
    }
}

/// Bounding box and identity of one key.
#[derive(Clone, Debug)]
pub struct KeyGeometry {
    pub id: KeyId,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl KeyGeometry {
    pub fn center(&self) -> Point {
        Point::new(self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.left
            && p.x <= self.left + self.width
            && p.y >= self.top
            && p.y <= self.top + self.height
    }
}

/// On-disk layout schema.
#[derive(Serialize, Deserialize)]
struct LayoutFile {
    name: String,
    #[serde(rename = "W")]
    width: f64,
    #[serde(rename = "H")]
    height: f64,
    #[serde(rename = "w")]
    key_width: f64,
    #[serde(rename = "h")]
    key_height: f64,
    cell_px: f64,
    keys: Vec<KeyFile>,
}

#[derive(Serialize, Deserialize)]
struct KeyFile {
    label: String,
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

/// The keyboard layout plus the heatmap grid it sits under.
///
/// The grid is 16x18 square cells, bottom-aligned with the screen; its
/// vertical span (16 cells) extends above the keyboard, so the grid's top
/// row starts at `H - 16 * cell_px` in keyboard coordinates (negative for
/// the default layout). Immutable after construction and safe to share
/// across threads.
#[derive(Clone, Debug)]
pub struct KeyboardLayout {
    pub name: String,
    /// Keyboard width W in px.
    pub width: f64,
    /// Keyboard height H in px.
    pub height: f64,
    /// Most common key width w in px.
    pub key_width: f64,
    /// Most common key height h in px.
    pub key_height: f64,
    /// Side of one square grid cell in px.
    pub cell_px: f64,
    keys: Vec<KeyGeometry>,
    fingerprint: String,
    /// O(k, i, j) / A_k for all keys and cells, row-major over (i, j).
    overlap_weights: Vec<f64>,
}

const DEFAULT_LAYOUT_JSON: &str = include_str!("../data/default_layout.json");

impl KeyboardLayout {
    /// The portrait QWERTY layout the rest of the crate defaults to.
    pub fn default_qwerty() -> KeyboardLayout {
        KeyboardLayout::from_json(DEFAULT_LAYOUT_JSON)
            .expect("embedded default layout must be valid")
    }

    pub fn from_json(json: &str) -> Result<KeyboardLayout> {
        let file: LayoutFile = serde_json::from_str(json)?;
        KeyboardLayout::from_file(file)
    }

    pub fn load(path: &Path) -> Result<KeyboardLayout> {
        let text = std::fs::read_to_string(path)?;
        KeyboardLayout::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.as_file()).expect("layout serialization")
    }

    fn as_file(&self) -> LayoutFile {
        LayoutFile {
            name: self.name.clone(),
            width: self.width,
            height: self.height,
            key_width: self.key_width,
            key_height: self.key_height,
            cell_px: self.cell_px,
            keys: self
                .keys
                .iter()
                .map(|k| KeyFile {
                    label: k.id.label().to_string(),
                    left: k.left,
                    top: k.top,
                    width: k.width,
                    height: k.height,
                })
                .collect(),
        }
    }

    fn from_file(file: LayoutFile) -> Result<KeyboardLayout> {
        let bad = |msg: String| Error::InvalidLayout(msg);
        for (label, v) in [
            ("W", file.width),
            ("H", file.height),
            ("w", file.key_width),
            ("h", file.key_height),
            ("cell_px", file.cell_px),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(format!("{label} must be positive, got {v}")));
            }
        }
        if (file.cell_px * GRID_COLS as f64 - file.width).abs() > 1e-6 {
            return Err(bad(format!(
                "cell_px * {GRID_COLS} must equal W ({} * {GRID_COLS} != {})",
                file.cell_px, file.width
            )));
        }
        if (GRID_ROWS as f64) * file.cell_px < file.height {
            return Err(bad(format!(
                "grid vertical span {} does not cover keyboard height {}",
                GRID_ROWS as f64 * file.cell_px,
                file.height
            )));
        }
        if file.keys.len() != KEY_COUNT {
            return Err(bad(format!("expected {KEY_COUNT} keys, got {}", file.keys.len())));
        }

        let mut keys: Vec<Option<KeyGeometry>> = vec![None; KEY_COUNT];
        for kf in &file.keys {
            let id = KeyId::from_label(&kf.label)
                .ok_or_else(|| bad(format!("unknown key label {:?}", kf.label)))?;
            if keys[id.index()].is_some() {
                return Err(bad(format!("duplicate key label {:?}", kf.label)));
            }
            if !(kf.width > 0.0 && kf.height > 0.0) {
                return Err(bad(format!("key {:?} has non-positive size", kf.label)));
            }
            if kf.left < 0.0
                || kf.top < 0.0
                || kf.left + kf.width > file.width + 1e-9
                || kf.top + kf.height > file.height + 1e-9
            {
                return Err(bad(format!("key {:?} extends outside keyboard bounds", kf.label)));
            }
            keys[id.index()] = Some(KeyGeometry {
                id,
                left: kf.left,
                top: kf.top,
                width: kf.width,
                height: kf.height,
            });
        }
        let keys: Vec<KeyGeometry> = keys
            .into_iter()
            .map(|k| k.ok_or_else(|| bad("missing key".into())))
            .collect::<Result<_>>()?;

        for a in 0..KEY_COUNT {
            for b in (a + 1)..KEY_COUNT {
                let (ka, kb) = (&keys[a], &keys[b]);
                let ox = (ka.left + ka.width).min(kb.left + kb.width) - ka.left.max(kb.left);
                let oy = (ka.top + ka.height).min(kb.top + kb.height) - ka.top.max(kb.top);
                if ox > 1e-9 && oy > 1e-9 {
                    return Err(bad(format!(
                        "keys {} and {} overlap",
                        ka.id.label(),
                        kb.id.label()
                    )));
                }
            }
        }

        let mut layout = KeyboardLayout {
            name: file.name,
            width: file.width,
            height: file.height,
            key_width: file.key_width,
            key_height: file.key_height,
            cell_px: file.cell_px,
            keys,
            fingerprint: String::new(),
            overlap_weights: Vec::new(),
        };
        layout.fingerprint = layout.compute_fingerprint();
        layout.overlap_weights = layout.compute_overlap_weights();
        Ok(layout)
    }

    /// Stable hash of the geometry, embedded in serialized models so a model
    /// is never applied to a layout it was not trained for.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn compute_fingerprint(&self) -> String {
        // Canonical form: compact JSON with keys in canonical order, so the
        // fingerprint does not depend on file formatting or key order.
        let canonical = serde_json::to_string(&self.as_file()).expect("layout serialization");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn keys(&self) -> &[KeyGeometry] {
        &self.keys
    }

    pub fn key(&self, id: KeyId) -> &KeyGeometry {
        &self.keys[id.index()]
    }

    /// Top edge of the heatmap grid in keyboard coordinates (negative when
    /// the grid extends above the keyboard).
    pub fn grid_top(&self) -> f64 {
        self.height - GRID_ROWS as f64 * self.cell_px
    }

    /// Rectangle of grid cell (row, col) as (left, top, right, bottom).
    pub fn cell_rect(&self, row: usize, col: usize) -> (f64, f64, f64, f64) {
        let x0 = col as f64 * self.cell_px;
        let y0 = self.grid_top() + row as f64 * self.cell_px;
        (x0, y0, x0 + self.cell_px, y0 + self.cell_px)
    }

    /// Center of grid cell (row, col).
    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        let (x0, y0, x1, y1) = self.cell_rect(row, col);
        Point::new((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }

    /// The key whose bounding box contains `p`; with zero or several
    /// containing boxes, the key with the nearest center (ties broken by
    /// canonical key order).
    pub fn containing_or_closest_key(&self, p: Point) -> KeyId {
        let mut containing = self.keys.iter().filter(|k| k.contains(p));
        if let (Some(only), None) = (containing.next(), containing.next()) {
            return only.id;
        }
        self.closest_key_by_center(p)
    }

    fn closest_key_by_center(&self, p: Point) -> KeyId {
        let mut best = KeyId::from_index(0).unwrap();
        let mut best_d2 = f64::INFINITY;
        for k in &self.keys {
            let c = k.center();
            let d2 = (p.x - c.x).powi(2) + (p.y - c.y).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                best = k.id;
            }
        }
        best
    }

    /// Signed x-offset from `p.x` to key `k` for distance purposes.
    ///
    /// For every key but SPACE this is `x - x_k`. For SPACE the offset is
    /// zero while `x` stays within half a common key width of neither edge
    /// (the inner interval), and is otherwise measured from the nearer inner
    /// boundary, so the wide key behaves like a common-width key at both
    /// ends.
    pub fn x_offset(&self, k: KeyId, x: f64) -> f64 {
        let key = self.key(k);
        if k == KeyId::SPACE {
            let lo = key.left + self.key_width / 2.0;
            let hi = key.left + key.width - self.key_width / 2.0;
            if x < lo {
                x - lo
            } else if x > hi {
                x - hi
            } else {
                0.0
            }
        } else {
            x - key.center().x
        }
    }

    /// Normalized distance from the touch centroid to key `k`:
    /// `sqrt((dx/W)^2 + (dy/H)^2)` with the SPACE inner-edge rule applied
    /// to `dx`.
    pub fn normalized_distance(&self, p: Point, k: KeyId) -> f64 {
        let dx = self.x_offset(k, p.x) / self.width;
        let dy = (p.y - self.key(k).center().y) / self.height;
        (dx * dx + dy * dy).sqrt()
    }

    /// Overlap area in px^2 between key `k` and grid cell (row, col).
    pub fn overlap_area(&self, k: KeyId, row: usize, col: usize) -> Result<f64> {
        if row >= GRID_ROWS || col >= GRID_COLS {
            return Err(Error::InvalidData(format!(
                "grid cell ({row}, {col}) out of range {GRID_ROWS}x{GRID_COLS}"
            )));
        }
        let key = self.key(k);
        let (cl, ct, cr, cb) = self.cell_rect(row, col);
        Ok(rect_intersection_area(
            (key.left, key.top, key.left + key.width, key.top + key.height),
            (cl, ct, cr, cb),
        ))
    }

    /// `O(k, i, j) / A_k` for key `k` over all cells, row-major.
    pub fn overlap_weight_row(&self, k: KeyId) -> &[f64] {
        let start = k.index() * GRID_CELLS;
        &self.overlap_weights[start..start + GRID_CELLS]
    }

    fn compute_overlap_weights(&self) -> Vec<f64> {
        let mut weights = vec![0.0; KEY_COUNT * GRID_CELLS];
        for k in KeyId::all() {
            let area = self.key(k).area();
            for row in 0..GRID_ROWS {
                for col in 0..GRID_COLS {
                    let o = self.overlap_area(k, row, col).expect("in-range cell");
                    weights[k.index() * GRID_CELLS + row * GRID_COLS + col] = o / area;
                }
            }
        }
        weights
    }
}

/// Area of the intersection of two rectangles given as
/// (left, top, right, bottom).
pub(crate) fn rect_intersection_area(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let w = a.2.min(b.2) - a.0.max(b.0);
    let h = a.3.min(b.3) - a.1.max(b.1);
    if w > 0.0 && h > 0.0 {
        w * h
    } else {
        0.0
    }
}
