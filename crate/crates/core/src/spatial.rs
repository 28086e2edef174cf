//! Spatial models: the trainable multi-class logistic regression and the
//! two training-free baselines (On-key, Distance).
//!
//! The logistic regression predicts `softmax(W f + b)` over the 28 keys
//! and is fitted by minimizing mean cross-entropy plus `(1/C) * 0.5 *
//! ||W||_F^2` (the bias is never regularized) with the in-repo L-BFGS
//! minimizer. The hyperparameter `C` is selected from a grid by validation
//! accuracy, ties going to the smaller `C`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_features, raw_features, FeatureSetKind, Normalizer, TapSample};
use crate::layout::{KeyId, KeyboardLayout, Point, KEY_COUNT};
use crate::optim::{self, LbfgsConfig, Objective};

/// A probability distribution over the 28 candidate keys in canonical
/// order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyDistribution([f64; KEY_COUNT]);

impl KeyDistribution {
    pub fn new(probs: [f64; KEY_COUNT]) -> Result<KeyDistribution> {
        let sum: f64 = probs.iter().sum();
        if !probs.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)) {
            return Err(Error::NonFinite("key distribution"));
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidData(format!(
                "key distribution sums to {sum}, expected 1"
            )));
        }
        Ok(KeyDistribution(probs))
    }

    /// Normalizes non-negative scores into a distribution.
    pub fn from_scores(scores: &[f64; KEY_COUNT]) -> Result<KeyDistribution> {
        let sum: f64 = scores.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::NonFinite("key scores"));
        }
        let mut probs = *scores;
        for p in probs.iter_mut() {
            *p /= sum;
        }
        Ok(KeyDistribution(probs))
    }

    pub fn uniform() -> KeyDistribution {
        KeyDistribution([1.0 / KEY_COUNT as f64; KEY_COUNT])
    }

    pub fn probs(&self) -> &[f64; KEY_COUNT] {
        &self.0
    }

    pub fn get(&self, k: KeyId) -> f64 {
        self.0[k.index()]
    }

    /// Most probable key; ties broken by canonical key order.
    pub fn argmax(&self) -> KeyId {
        let mut best = 0;
        for i in 1..KEY_COUNT {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        KeyId::from_index(best).unwrap()
    }
}

/// Training hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Inverse-regularization-strength grid searched by validation
    /// accuracy.
    pub c_grid: Vec<f64>,
    pub max_iters: usize,
    /// L-BFGS stops when the gradient norm (bias included) drops here.
    pub grad_tol: f64,
    /// Root seed for fold planning; the optimization itself is
    /// deterministic and does not consume randomness.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c_grid: vec![0.5, 1.0, 1.5, 2.0],
            max_iters: 1000,
            grad_tol: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() {
            return Err(Error::InvalidConfig("C grid must be non-empty".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidConfig("gradient tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Diagnostics recorded at training time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainMeta {
    pub iterations: usize,
    pub converged: bool,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// A trained multi-class logistic regression over one feature set.
#[derive(Clone, Debug)]
pub struct SpatialModel {
    pub kind: FeatureSetKind,
    weights: Array2<f64>,
    bias: Array1<f64>,
    pub normalizer: Normalizer,
    pub inv_reg_strength: f64,
    pub layout_fingerprint: String,
    pub meta: TrainMeta,
}

impl SpatialModel {
    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn bias(&self) -> ArrayView1<'_, f64> {
        self.bias.view()
    }

    /// `softmax(W f + b)` with max-subtraction for overflow safety.
    pub fn predict_proba(&self, features: &[f64]) -> Result<KeyDistribution> {
        let d = self.kind.dim();
        if features.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: features.len() });
        }
        if !features.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        let mut logits = [0.0; KEY_COUNT];
        for k in 0..KEY_COUNT {
            let row = self.weights.row(k);
            let mut z = self.bias[k];
            for (w, f) in row.iter().zip(features) {
                z += w * f;
            }
            logits[k] = z;
        }
        Ok(softmax(&logits))
    }

    /// Loss and exact gradient of this model's objective on a batch of
    /// already-normalized features.
    pub fn loss_and_gradient(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[KeyId],
    ) -> Result<(f64, Array2<f64>, Array1<f64>)> {
        loss_and_gradient(
            self.weights.view(),
            self.bias.view(),
            features,
            labels,
            self.inv_reg_strength,
        )
    }

    /// Feature-space prediction for a tap, applying this model's
    /// normalizer.
    pub fn predict_tap(&self, layout: &KeyboardLayout, tap: &TapSample) -> Result<KeyDistribution> {
        let f = build_features(layout, self.kind, tap, Some(&self.normalizer))?;
        self.predict_proba(&f)
    }
}

fn softmax(logits: &[f64; KEY_COUNT]) -> KeyDistribution {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; KEY_COUNT];
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    KeyDistribution(out)
}

/// Mean cross-entropy plus `(1/C) * 0.5 ||W||_F^2` and its exact gradient:
/// `grad_W = (P - Y)^T F / N + W / C`, `grad_b = colsum(P - Y) / N`.
pub fn loss_and_gradient(
    weights: ArrayView2<'_, f64>,
    bias: ArrayView1<'_, f64>,
    features: ArrayView2<'_, f64>,
    labels: &[KeyId],
    inv_reg_strength: f64,
) -> Result<(f64, Array2<f64>, Array1<f64>)> {
    let n = features.nrows();
    let d = features.ncols();
    if n == 0 {
        return Err(Error::EmptyInput("loss batch"));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if weights.dim() != (KEY_COUNT, d) {
        return Err(Error::DimensionMismatch { expected: KEY_COUNT * d, got: weights.len() });
    }

    let mut x = Vec::with_capacity(KEY_COUNT * d + KEY_COUNT);
    x.extend(weights.iter());
    x.extend(bias.iter());
    let label_idx: Vec<usize> = labels.iter().map(|k| k.index()).collect();
    let mut objective = LogisticObjective::new(features, &label_idx, inv_reg_strength, d);
    let mut grad = vec![0.0; x.len()];
    let loss = objective.value_and_grad(&x, &mut grad);

    let grad_w = Array2::from_shape_vec((KEY_COUNT, d), grad[..KEY_COUNT * d].to_vec()).unwrap();
    let grad_b = Array1::from_vec(grad[KEY_COUNT * d..].to_vec());
    Ok((loss, grad_w, grad_b))
}

/// The training objective over the flat parameter vector
/// `[W row-major | b]`.
struct LogisticObjective<'a> {
    features: ArrayView2<'a, f64>,
    labels: &'a [usize],
    inv_c: f64,
    d: usize,
    logits: Array2<f64>,
}

impl<'a> LogisticObjective<'a> {
    fn new(features: ArrayView2<'a, f64>, labels: &'a [usize], inv_c: f64, d: usize) -> Self {
        let n = features.nrows();
        LogisticObjective { features, labels, inv_c, d, logits: Array2::zeros((n, KEY_COUNT)) }
    }

    fn param_count(&self) -> usize {
        KEY_COUNT * self.d + KEY_COUNT
    }

    /// Fills `self.logits` with `F W^T + b` and returns the full loss.
    fn fill_logits_and_loss(&mut self, x: &[f64]) -> f64 {
        let n = self.features.nrows();
        let w = ArrayView2::from_shape((KEY_COUNT, self.d), &x[..KEY_COUNT * self.d]).unwrap();
        let b = &x[KEY_COUNT * self.d..];
        general_mat_mul(1.0, &self.features, &w.t(), 0.0, &mut self.logits);

        let mut ce = 0.0;
        for (i, mut row) in self.logits.outer_iter_mut().enumerate() {
            let row = row.as_slice_mut().unwrap();
            let mut max = f64::NEG_INFINITY;
            for (z, bk) in row.iter_mut().zip(b) {
                *z += bk;
                max = max.max(*z);
            }
            let mut sum = 0.0;
            for z in row.iter() {
                sum += (z - max).exp();
            }
            ce += max + sum.ln() - row[self.labels[i]];
        }
        ce /= n as f64;

        let reg: f64 =
            x[..KEY_COUNT * self.d].iter().map(|w| w * w).sum::<f64>() * 0.5 * self.inv_c;
        ce + reg
    }
}

impl Objective for LogisticObjective<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.fill_logits_and_loss(x)
    }

    fn value_and_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.param_count());
        debug_assert_eq!(grad.len(), self.param_count());
        let n = self.features.nrows();
        let loss = self.fill_logits_and_loss(x);

        // Turn logits into (P - Y) in place.
        for (i, mut row) in self.logits.outer_iter_mut().enumerate() {
            let row = row.as_slice_mut().unwrap();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for z in row.iter_mut() {
                *z = (*z - max).exp();
                sum += *z;
            }
            for z in row.iter_mut() {
                *z /= sum;
            }
            row[self.labels[i]] -= 1.0;
        }

        let (grad_w_slice, grad_b_slice) = grad.split_at_mut(KEY_COUNT * self.d);
        let mut grad_w = ArrayViewMut2::from_shape((KEY_COUNT, self.d), grad_w_slice).unwrap();
        general_mat_mul(1.0 / n as f64, &self.logits.t(), &self.features, 0.0, &mut grad_w);
        let w = ArrayView2::from_shape((KEY_COUNT, self.d), &x[..KEY_COUNT * self.d]).unwrap();
        grad_w.scaled_add(self.inv_c, &w);

        let colsum = self.logits.sum_axis(Axis(0));
        for (g, c) in grad_b_slice.iter_mut().zip(colsum.iter()) {
            *g = c / n as f64;
        }
        loss
    }
}

/// Fits one logistic regression for a fixed `C`. Deterministic: starts
/// from zero parameters and uses the deterministic L-BFGS minimizer.
fn fit_single(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    inv_c: f64,
    cfg: &TrainConfig,
) -> Result<(Array2<f64>, Array1<f64>, optim::LbfgsResult)> {
    let d = features.ncols();
    let mut objective = LogisticObjective::new(features, labels, inv_c, d);
    let x0 = vec![0.0; objective.param_count()];
    let lbfgs = LbfgsConfig {
        max_iters: cfg.max_iters,
        grad_tol: cfg.grad_tol,
        ..LbfgsConfig::default()
    };
    let result = optim::minimize(&mut objective, x0, &lbfgs);
    if !result.value.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    let weights =
        Array2::from_shape_vec((KEY_COUNT, d), result.x[..KEY_COUNT * d].to_vec()).unwrap();
    let bias = Array1::from_vec(result.x[KEY_COUNT * d..].to_vec());
    Ok((weights, bias, result))
}

fn logits_matrix(
    weights: &Array2<f64>,
    bias: &Array1<f64>,
    features: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut logits = features.dot(&weights.t());
    for mut row in logits.outer_iter_mut() {
        row += bias;
    }
    logits
}

fn accuracy(
    weights: &Array2<f64>,
    bias: &Array1<f64>,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
) -> f64 {
    let logits = logits_matrix(weights, bias, features);
    let mut correct = 0usize;
    for (row, &y) in logits.outer_iter().zip(labels) {
        let mut best = 0;
        for k in 1..KEY_COUNT {
            if row[k] > row[best] {
                best = k;
            }
        }
        if best == y {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

fn mean_ce(
    weights: &Array2<f64>,
    bias: &Array1<f64>,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
) -> f64 {
    let logits = logits_matrix(weights, bias, features);
    let mut ce = 0.0;
    for (row, &y) in logits.outer_iter().zip(labels) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        ce += max + sum.ln() - row[y];
    }
    ce / labels.len() as f64
}

/// Trains a model on raw (un-normalized) feature matrices. The normalizer
/// is fitted on the training rows only; validation reuses it.
pub fn train_on_features(
    kind: FeatureSetKind,
    raw_train: ArrayView2<'_, f64>,
    labels_train: &[KeyId],
    raw_val: ArrayView2<'_, f64>,
    labels_val: &[KeyId],
    cfg: &TrainConfig,
    layout_fingerprint: &str,
) -> Result<SpatialModel> {
    cfg.validate()?;
    if raw_train.nrows() == 0 {
        return Err(Error::EmptyInput("training split"));
    }
    if raw_val.nrows() == 0 {
        return Err(Error::EmptyInput("validation split"));
    }

    let normalizer = Normalizer::fit(
        raw_train.outer_iter().map(|row| row.to_slice().expect("contiguous feature rows")),
    )?;
    let normalize = |raw: ArrayView2<'_, f64>| -> Result<Array2<f64>> {
        let mut m = raw.to_owned();
        for mut row in m.outer_iter_mut() {
            normalizer.apply_in_place(row.as_slice_mut().expect("contiguous feature rows"))?;
        }
        Ok(m)
    };
    let train = normalize(raw_train)?;
    let val = normalize(raw_val)?;
    let train_labels: Vec<usize> = labels_train.iter().map(|k| k.index()).collect();
    let val_labels: Vec<usize> = labels_val.iter().map(|k| k.index()).collect();

    struct Candidate {
        c: f64,
        weights: Array2<f64>,
        bias: Array1<f64>,
        result: optim::LbfgsResult,
        val_accuracy: f64,
    }

    let mut best: Option<Candidate> = None;
    for &c in &cfg.c_grid {
        if !(c > 0.0) {
            return Err(Error::InvalidConfig(format!("C must be positive, got {c}")));
        }
        let (weights, bias, result) = fit_single(train.view(), &train_labels, 1.0 / c, cfg)?;
        let val_accuracy = accuracy(&weights, &bias, val.view(), &val_labels);
        let better = match &best {
            None => true,
            Some(b) => val_accuracy > b.val_accuracy || (val_accuracy == b.val_accuracy && c < b.c),
        };
        if better {
            best = Some(Candidate { c, weights, bias, result, val_accuracy });
        }
    }
    let best = best.unwrap();

    let val_loss = mean_ce(&best.weights, &best.bias, val.view(), &val_labels);
    Ok(SpatialModel {
        kind,
        meta: TrainMeta {
            iterations: best.result.iterations,
            converged: best.result.converged,
            train_loss: best.result.value,
            val_loss,
            val_accuracy: best.val_accuracy,
        },
        weights: best.weights,
        bias: best.bias,
        normalizer,
        inv_reg_strength: best.c,
        layout_fingerprint: layout_fingerprint.to_string(),
    })
}

/// Builds the raw feature matrix and label vector for a set of labeled
/// taps.
pub fn feature_matrix(
    layout: &KeyboardLayout,
    kind: FeatureSetKind,
    taps: &[TapSample],
) -> Result<(Array2<f64>, Vec<KeyId>)> {
    if taps.is_empty() {
        return Err(Error::EmptyInput("tap set"));
    }
    let d = kind.dim();
    let mut data = Vec::with_capacity(taps.len() * d);
    let mut labels = Vec::with_capacity(taps.len());
    for tap in taps {
        labels.push(tap.label()?);
        data.extend(raw_features(layout, kind, tap)?);
    }
    let matrix = Array2::from_shape_vec((taps.len(), d), data).unwrap();
    Ok((matrix, labels))
}

/// Trains a spatial model from labeled taps: fits the normalizer on the
/// training split, minimizes the loss for every `C` in the grid, and
/// returns the model with the best validation accuracy (ties prefer the
/// smaller `C`).
pub fn train(
    layout: &KeyboardLayout,
    train_taps: &[TapSample],
    val_taps: &[TapSample],
    kind: FeatureSetKind,
    cfg: &TrainConfig,
) -> Result<SpatialModel> {
    let (raw_train, labels_train) = feature_matrix(layout, kind, train_taps)?;
    let (raw_val, labels_val) = feature_matrix(layout, kind, val_taps)?;
    train_on_features(
        kind,
        raw_train.view(),
        &labels_train,
        raw_val.view(),
        &labels_val,
        cfg,
        layout.fingerprint(),
    )
}

/// On-key baseline: the key whose bounding box contains the centroid,
/// else the closest key center. Categorical only.
pub fn onkey_predict(layout: &KeyboardLayout, tap: &TapSample) -> KeyId {
    layout.containing_or_closest_key(tap.centroid)
}

/// Distance-baseline probabilities: a 1-D Gaussian pdf over the
/// normalized distance to each key, normalized across keys.
pub fn distance_proba(layout: &KeyboardLayout, p: Point, sigma: f64) -> Result<KeyDistribution> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    // exp(-d^2 / 2s^2) with the max exponent factored out; the pdf's
    // constant coefficient cancels in the normalization.
    let mut exponents = [0.0; KEY_COUNT];
    for k in KeyId::all() {
        let d = layout.normalized_distance(p, k);
        exponents[k.index()] = -(d * d) / (2.0 * sigma * sigma);
    }
    let max = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut scores = [0.0; KEY_COUNT];
    for (s, e) in scores.iter_mut().zip(&exponents) {
        *s = (e - max).exp();
    }
    KeyDistribution::from_scores(&scores)
}

/// Anything that can score a tap into a key distribution.
pub trait SpatialScorer: Sync {
    fn key_proba(&self, layout: &KeyboardLayout, tap: &TapSample) -> Result<KeyDistribution>;
    fn describe(&self) -> String;
}

impl SpatialScorer for SpatialModel {
    fn key_proba(&self, layout: &KeyboardLayout, tap: &TapSample) -> Result<KeyDistribution> {
        self.predict_tap(layout, tap)
    }

    fn describe(&self) -> String {
        format!("logistic-regression({})", self.kind)
    }
}

/// The Distance baseline as a scorer.
#[derive(Clone, Copy, Debug)]
pub struct DistanceBaseline {
    pub sigma: f64,
}

impl Default for DistanceBaseline {
    fn default() -> Self {
        DistanceBaseline { sigma: 0.03 }
    }
}

impl SpatialScorer for DistanceBaseline {
    fn key_proba(&self, layout: &KeyboardLayout, tap: &TapSample) -> Result<KeyDistribution> {
        distance_proba(layout, tap.centroid, self.sigma)
    }

    fn describe(&self) -> String {
        format!("distance(sigma={})", self.sigma)
    }
}

// ---------------------------------------------------------------------------
// Model file serialization

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: u32,
    kind: FeatureSetKind,
    #[serde(rename = "C")]
    inv_reg_strength: f64,
    layout_fingerprint: String,
    normalizer: Normalizer,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    meta: TrainMeta,
}

const MODEL_SCHEMA: u32 = 1;

impl SpatialModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            schema: MODEL_SCHEMA,
            kind: self.kind,
            inv_reg_strength: self.inv_reg_strength,
            layout_fingerprint: self.layout_fingerprint.clone(),
            normalizer: self.normalizer.clone(),
            weights: self.weights.outer_iter().map(|r| r.to_vec()).collect(),
            bias: self.bias.to_vec(),
            meta: self.meta.clone(),
        };
        serde_json::to_string(&file).expect("model serialization")
    }

    /// Loads a model and verifies it matches the given layout's
    /// fingerprint.
    pub fn from_json(json: &str, layout: &KeyboardLayout) -> Result<SpatialModel> {
        let file: ModelFile = serde_json::from_str(json)?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::InvalidData(format!("unsupported model schema {}", file.schema)));
        }
        if file.layout_fingerprint != layout.fingerprint() {
            return Err(Error::FingerprintMismatch {
                expected: file.layout_fingerprint,
                got: layout.fingerprint().to_string(),
            });
        }
        let d = file.kind.dim();
        if file.weights.len() != KEY_COUNT || file.weights.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidData("weight matrix shape mismatch".into()));
        }
        if file.bias.len() != KEY_COUNT {
            return Err(Error::InvalidData("bias length mismatch".into()));
        }
        if file.normalizer.dim() != d {
            return Err(Error::InvalidData("normalizer dimension mismatch".into()));
        }
        let weights =
            Array2::from_shape_vec((KEY_COUNT, d), file.weights.into_iter().flatten().collect())
                .unwrap();
        let bias = Array1::from_vec(file.bias);
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(SpatialModel {
            kind: file.kind,
            weights,
            bias,
            normalizer: file.normalizer,
            inv_reg_strength: file.inv_reg_strength,
            layout_fingerprint: file.layout_fingerprint,
            meta: file.meta,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path, layout: &KeyboardLayout) -> Result<SpatialModel> {
        let text = std::fs::read_to_string(path)?;
        SpatialModel::from_json(&text, layout)
    }
}
