//! End-to-end tap decoding: spatial scores, optional character-LM fusion,
//! skipping of unambiguous taps, and neighbor-key candidate filtering,
//! with a per-tap trace for post-hoc analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::TapSample;
use crate::layout::{KeyId, KeyboardLayout, Point, KEY_COUNT};
use crate::lm::{truncate_to_last_words, CharLM};
use crate::spatial::{KeyDistribution, SpatialScorer};

/// Decoding options.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Fuse spatial scores with a character LM when one is supplied.
    pub use_lm: bool,
    /// Skip the model entirely for taps close to a key center.
    pub use_suc: bool,
    /// Restrict candidates to keys near the tap.
    pub use_filter: bool,
    /// A tap within this fraction of the key's width/height of its center
    /// counts as unambiguous.
    pub suc_fraction: f64,
    /// Neighbor window half-width as a multiple of the common key width.
    pub filter_window_w: f64,
    /// Neighbor window half-height as a multiple of the common key height.
    pub filter_window_h: f64,
    /// LM scores whose spread over the candidates is below this are
    /// treated as uninformative.
    pub lm_informative_eps: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            use_lm: false,
            use_suc: false,
            use_filter: false,
            suc_fraction: 0.25,
            filter_window_w: 1.5,
            filter_window_h: 1.5,
            lm_informative_eps: 1e-9,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.suc_fraction > 0.0 && self.suc_fraction < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "suc_fraction must lie in (0, 0.5), got {}",
                self.suc_fraction
            )));
        }
        if !(self.filter_window_w > 0.0 && self.filter_window_h > 0.0) {
            return Err(Error::InvalidConfig("filter window factors must be positive".into()));
        }
        Ok(())
    }
}

/// Which path produced a decoded key.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeBucket {
    NotAmbiguous,
    ModelWithoutLm,
    ModelWithLm,
}

/// Everything the decoder knew when it decided one tap.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub tap_ref: String,
    pub bucket: DecodeBucket,
    pub candidates: Vec<KeyId>,
    /// Spatial distribution, renormalized over the candidate set. Absent
    /// for taps decided by the unambiguous-tap rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_sm: Option<KeyDistribution>,
    /// LM distribution, when one was consulted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_lm: Option<KeyDistribution>,
    pub decided: KeyId,
}

/// The key whose center the point sits within `fraction` of the key's own
/// width and height of (strict inequalities), or `None`. At most one key
/// can satisfy this for fractions below one half on non-overlapping keys.
pub fn unambiguous_key(layout: &KeyboardLayout, p: Point, fraction: f64) -> Option<KeyId> {
    KeyId::all().find(|&k| {
        let g = layout.key(k);
        let c = g.center();
        (p.x - c.x).abs() < fraction * g.width && (p.y - c.y).abs() < fraction * g.height
    })
}

/// The unambiguous-tap rule at its standard quarter-key threshold.
pub fn is_unambiguous(layout: &KeyboardLayout, tap: &TapSample) -> Option<KeyId> {
    unambiguous_key(layout, tap.centroid, 0.25)
}

/// Keys whose centers fall inside a window of `w_factor` common key
/// widths by `h_factor` common key heights around the point (SPACE uses
/// the inner-edge x rule). The on-key is always included, so the result
/// is never empty.
pub fn candidate_filter_with(
    layout: &KeyboardLayout,
    p: Point,
    w_factor: f64,
    h_factor: f64,
) -> Vec<KeyId> {
    let max_dx = w_factor * layout.key_width;
    let max_dy = h_factor * layout.key_height;
    let mut keys: Vec<KeyId> = KeyId::all()
        .filter(|&k| {
            let dx = layout.x_offset(k, p.x).abs();
            let dy = (p.y - layout.key(k).center().y).abs();
            dx <= max_dx && dy <= max_dy
        })
        .collect();
    let on_key = layout.containing_or_closest_key(p);
    if !keys.contains(&on_key) {
        keys.push(on_key);
        keys.sort();
    }
    keys
}

/// Neighbor-key filtering at the default window of 1.5 key widths and
/// heights.
pub fn candidate_filter(layout: &KeyboardLayout, tap: &TapSample) -> Vec<KeyId> {
    candidate_filter_with(layout, tap.centroid, 1.5, 1.5)
}

fn all_keys() -> Vec<KeyId> {
    KeyId::all().collect()
}

/// Restricts a distribution to the candidate set and renormalizes. Falls
/// back to uniform over the candidates if the restricted mass underflows
/// to zero.
fn restrict(p: &KeyDistribution, candidates: &[KeyId]) -> KeyDistribution {
    let mut probs = [0.0; KEY_COUNT];
    let mut sum = 0.0;
    for &k in candidates {
        probs[k.index()] = p.get(k);
        sum += p.get(k);
    }
    if sum > 0.0 {
        for v in probs.iter_mut() {
            *v /= sum;
        }
    } else {
        for &k in candidates {
            probs[k.index()] = 1.0 / candidates.len() as f64;
        }
    }
    KeyDistribution::new(probs).expect("renormalized distribution")
}

fn argmax_over(scores: impl Fn(KeyId) -> f64, candidates: &[KeyId]) -> KeyId {
    let mut best = candidates[0];
    let mut best_score = scores(best);
    for &k in &candidates[1..] {
        let s = scores(k);
        if s > best_score {
            best = k;
            best_score = s;
        }
    }
    best
}

/// Whether the next key to predict starts a new word.
fn at_word_boundary(context: &str) -> bool {
    context.is_empty() || context.ends_with(' ')
}

/// Decodes one tap.
///
/// Decision order: (1) the unambiguous-tap rule when enabled; (2) spatial
/// probabilities over the (optionally filtered) candidate set; (3) the
/// spatial answer alone when there is no usable LM signal — no LM, an
/// uninformative LM, a PERIOD spatial prediction, or a word boundary in
/// the context; (4) otherwise the argmax of `p_sm * p_lm`. Ties always
/// break by canonical key order.
pub fn decode(
    scorer: &dyn SpatialScorer,
    lm: Option<&dyn CharLM>,
    layout: &KeyboardLayout,
    tap: &TapSample,
    context: &str,
    cfg: &DecodeConfig,
) -> Result<(KeyId, DecodeTrace)> {
    cfg.validate()?;

    if cfg.use_suc {
        if let Some(k) = unambiguous_key(layout, tap.centroid, cfg.suc_fraction) {
            let trace = DecodeTrace {
                tap_ref: tap.tap_ref(),
                bucket: DecodeBucket::NotAmbiguous,
                candidates: vec![k],
                p_sm: None,
                p_lm: None,
                decided: k,
            };
            return Ok((k, trace));
        }
    }

    let candidates = if cfg.use_filter {
        candidate_filter_with(layout, tap.centroid, cfg.filter_window_w, cfg.filter_window_h)
    } else {
        all_keys()
    };
    let p_sm = restrict(&scorer.key_proba(layout, tap)?, &candidates);
    let sm_answer = argmax_over(|k| p_sm.get(k), &candidates);

    let lm = match lm {
        Some(lm) if cfg.use_lm => lm,
        _ => {
            let trace = DecodeTrace {
                tap_ref: tap.tap_ref(),
                bucket: DecodeBucket::ModelWithoutLm,
                candidates,
                p_sm: Some(p_sm),
                p_lm: None,
                decided: sm_answer,
            };
            return Ok((sm_answer, trace));
        }
    };

    if sm_answer == KeyId::PERIOD || at_word_boundary(context) {
        let trace = DecodeTrace {
            tap_ref: tap.tap_ref(),
            bucket: DecodeBucket::ModelWithoutLm,
            candidates,
            p_sm: Some(p_sm),
            p_lm: None,
            decided: sm_answer,
        };
        return Ok((sm_answer, trace));
    }

    let p_lm = lm.next_key_probs(truncate_to_last_words(context, 5));
    let spread = {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &k in &candidates {
            min = min.min(p_lm.get(k));
            max = max.max(p_lm.get(k));
        }
        max - min
    };
    if spread < cfg.lm_informative_eps {
        let trace = DecodeTrace {
            tap_ref: tap.tap_ref(),
            bucket: DecodeBucket::ModelWithoutLm,
            candidates,
            p_sm: Some(p_sm),
            p_lm: Some(p_lm),
            decided: sm_answer,
        };
        return Ok((sm_answer, trace));
    }

    let decided = argmax_over(|k| p_sm.get(k) * p_lm.get(k), &candidates);
    let trace = DecodeTrace {
        tap_ref: tap.tap_ref(),
        bucket: DecodeBucket::ModelWithLm,
        candidates,
        p_sm: Some(p_sm),
        p_lm: Some(p_lm),
        decided,
    };
    Ok((decided, trace))
}
