//! Touch-point to key alignment: turns raw typing logs (taps and
//! backspaces) into labeled (tap, reference-key) pairs for training and
//! evaluation.
//!
//! Committed text is aligned to the prompt with a Needleman-Wunsch
//! dynamic program extended with adjacent transpositions; deleted taps
//! are recovered by replaying the log and aligning the pre-deletion
//! buffer against a prompt prefix. Ambiguous deletions (several minimal
//! alignments disagreeing on the deleted tap's reference) are excluded,
//! as are pairs whose reference key is not in the tap's neighborhood.

use serde::{Deserialize, Serialize};

use crate::decoder::candidate_filter;
use crate::error::{Error, Result};
use crate::features::TapSample;
use crate::layout::{KeyId, KeyboardLayout};

/// One step of an edit script that rewrites the reference into the
/// hypothesis.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Match,
    Substitution,
    /// Extra hypothesis character with no reference counterpart.
    Insertion,
    /// Reference character never typed.
    Omission,
    /// Two adjacent characters typed in swapped order. The op covers two
    /// positions in both strings, starting at the recorded ones.
    Transposition,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub ref_pos: Option<usize>,
    pub hyp_pos: Option<usize>,
}

const COST_INF: u32 = u32::MAX / 2;

/// Forward DP table of minimal edit costs; `dist[i][j]` aligns the first
/// `i` reference keys to the first `j` hypothesis keys. Unit costs, with
/// adjacent transposition as a single unit-cost op.
fn cost_table(reference: &[KeyId], hypothesis: &[KeyId]) -> Vec<Vec<u32>> {
    let n = reference.len();
    let m = hypothesis.len();
    let mut dist = vec![vec![COST_INF; m + 1]; n + 1];
    for (i, row) in dist.iter_mut().enumerate() {
        row[0] = i as u32;
    }
    for j in 0..=m {
        dist[0][j] = j as u32;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = if reference[i - 1] == hypothesis[j - 1] { 0 } else { 1 };
            let mut best = dist[i - 1][j - 1] + sub;
            best = best.min(dist[i - 1][j] + 1); // omission
            best = best.min(dist[i][j - 1] + 1); // insertion
            if i >= 2
                && j >= 2
                && reference[i - 1] == hypothesis[j - 2]
                && reference[i - 2] == hypothesis[j - 1]
            {
                best = best.min(dist[i - 2][j - 2] + 1);
            }
            dist[i][j] = best;
        }
    }
    dist
}

/// Minimal edit cost between two key sequences.
pub fn edit_cost(reference: &[KeyId], hypothesis: &[KeyId]) -> u32 {
    cost_table(reference, hypothesis)[reference.len()][hypothesis.len()]
}

/// Minimal-cost edit script, deterministic under the tie-break
/// match > substitution > transposition > omission > insertion.
pub fn align_keys(reference: &[KeyId], hypothesis: &[KeyId]) -> Vec<EditOp> {
    let dist = cost_table(reference, hypothesis);
    let mut ops = Vec::new();
    let (mut i, mut j) = (reference.len(), hypothesis.len());
    while i > 0 || j > 0 {
        let here = dist[i][j];
        // Match, then substitution.
        if i > 0 && j > 0 {
            let equal = reference[i - 1] == hypothesis[j - 1];
            let sub = if equal { 0 } else { 1 };
            if dist[i - 1][j - 1] + sub == here && equal {
                ops.push(EditOp {
                    kind: EditKind::Match,
                    ref_pos: Some(i - 1),
                    hyp_pos: Some(j - 1),
                });
                i -= 1;
                j -= 1;
                continue;
            }
            if dist[i - 1][j - 1] + sub == here && !equal {
                ops.push(EditOp {
                    kind: EditKind::Substitution,
                    ref_pos: Some(i - 1),
                    hyp_pos: Some(j - 1),
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i >= 2
            && j >= 2
            && reference[i - 1] == hypothesis[j - 2]
            && reference[i - 2] == hypothesis[j - 1]
            && dist[i - 2][j - 2] + 1 == here
        {
            ops.push(EditOp {
                kind: EditKind::Transposition,
                ref_pos: Some(i - 2),
                hyp_pos: Some(j - 2),
            });
            i -= 2;
            j -= 2;
            continue;
        }
        if i > 0 && dist[i - 1][j] + 1 == here {
            ops.push(EditOp { kind: EditKind::Omission, ref_pos: Some(i - 1), hyp_pos: None });
            i -= 1;
            continue;
        }
        debug_assert!(j > 0 && dist[i][j - 1] + 1 == here);
        ops.push(EditOp { kind: EditKind::Insertion, ref_pos: None, hyp_pos: Some(j - 1) });
        j -= 1;
    }
    ops.reverse();
    ops
}

/// String front-end over the 28-key alphabet (case folded).
pub fn align_strings(reference: &str, hypothesis: &str) -> Result<Vec<EditOp>> {
    Ok(align_keys(&KeyId::sequence(reference)?, &KeyId::sequence(hypothesis)?))
}

/// The set of reference keys the *last* hypothesis character is paired
/// with across every minimal-cost script; `None` stands for scripts that
/// treat it as an insertion. Computed from edge co-optimality, which
/// covers all minimal scripts without enumerating them.
fn last_position_references(reference: &[KeyId], hypothesis: &[KeyId]) -> Vec<Option<KeyId>> {
    let n = reference.len();
    let m = hypothesis.len();
    assert!(m > 0);
    let dist = cost_table(reference, hypothesis);
    let total = dist[n][m];
    let mut labels: Vec<Option<KeyId>> = Vec::new();
    let mut push = |v: Option<KeyId>, labels: &mut Vec<Option<KeyId>>| {
        if !labels.contains(&v) {
            labels.push(v);
        }
    };
    // After consuming the whole hypothesis at reference position i, the
    // only way to finish is omitting the remaining n - i reference keys.
    let tail = |i: usize| (n - i) as u32;
    for i in 0..=n {
        if i >= 1 {
            let sub = if reference[i - 1] == hypothesis[m - 1] { 0 } else { 1 };
            if dist[i - 1][m - 1] + sub + tail(i) == total {
                push(Some(reference[i - 1]), &mut labels);
            }
        }
        if dist[i][m - 1] + 1 + tail(i) == total {
            push(None, &mut labels);
        }
        if i >= 2
            && m >= 2
            && reference[i - 1] == hypothesis[m - 2]
            && reference[i - 2] == hypothesis[m - 1]
            && dist[i - 2][m - 2] + 1 + tail(i) == total
        {
            // In a transposition the last hypothesis key realizes the
            // earlier reference key of the swapped pair.
            push(Some(reference[i - 2]), &mut labels);
        }
    }
    labels
}

/// One event in a typing log.
#[derive(Clone, Debug)]
pub enum TypingEvent {
    Tap {
        tap: TapSample,
        /// The key the live keyboard decoded at the time.
        decoded: KeyId,
    },
    Backspace {
        t_ms: u64,
    },
}

impl TypingEvent {
    pub fn t_ms(&self) -> u64 {
        match self {
            TypingEvent::Tap { tap, .. } => tap.t_ms,
            TypingEvent::Backspace { t_ms } => *t_ms,
        }
    }
}

/// Where a labeled pair came from.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Committed,
    Deleted,
}

/// A tap together with the reference key it realizes.
#[derive(Clone, Debug)]
pub struct AlignedPair {
    pub tap: TapSample,
    pub reference: KeyId,
    pub source: PairSource,
}

impl AlignedPair {
    /// The tap relabeled with its reference key, ready for training.
    pub fn labeled_tap(&self) -> TapSample {
        TapSample { label: Some(self.reference), ..self.tap.clone() }
    }
}

fn prompt_keys(prompt: &str) -> Result<Vec<KeyId>> {
    let keys = KeyId::sequence(prompt)?;
    if keys.is_empty() {
        return Err(Error::EmptyInput("prompt"));
    }
    Ok(keys)
}

/// Replays the event log and returns the committed buffer as (key,
/// event-index) pairs, plus the count of backspaces that hit an empty
/// buffer and were skipped.
fn fold_events(events: &[TypingEvent]) -> (Vec<(KeyId, usize)>, usize) {
    let mut buffer: Vec<(KeyId, usize)> = Vec::new();
    let mut skipped = 0;
    for (idx, event) in events.iter().enumerate() {
        match event {
            TypingEvent::Tap { decoded, .. } => buffer.push((*decoded, idx)),
            TypingEvent::Backspace { .. } => {
                if buffer.pop().is_none() {
                    log::warn!("backspace on empty buffer (event {idx}); skipped");
                    skipped += 1;
                }
            }
        }
    }
    (buffer, skipped)
}

fn tap_of(events: &[TypingEvent], idx: usize) -> &TapSample {
    match &events[idx] {
        TypingEvent::Tap { tap, .. } => tap,
        TypingEvent::Backspace { .. } => unreachable!("buffer holds tap indices only"),
    }
}

/// Aligns the committed string to the prompt. Taps whose characters
/// match or substitute a reference character are labeled with it;
/// inserted and transposed taps yield no pair.
pub fn align_committed(prompt: &str, events: &[TypingEvent]) -> Result<Vec<AlignedPair>> {
    let reference = prompt_keys(prompt)?;
    let (buffer, _) = fold_events(events);
    let committed: Vec<KeyId> = buffer.iter().map(|&(k, _)| k).collect();
    let ops = align_keys(&reference, &committed);
    let mut pairs = Vec::new();
    for op in ops {
        if matches!(op.kind, EditKind::Match | EditKind::Substitution) {
            let (_, event_idx) = buffer[op.hyp_pos.unwrap()];
            pairs.push(AlignedPair {
                tap: tap_of(events, event_idx).clone(),
                reference: reference[op.ref_pos.unwrap()],
                source: PairSource::Committed,
            });
        }
    }
    Ok(pairs)
}

struct ReplayOutcome {
    pairs: Vec<AlignedPair>,
    ambiguous: usize,
    skipped_backspaces: usize,
}

fn replay_deleted_detailed(prompt: &str, events: &[TypingEvent]) -> Result<ReplayOutcome> {
    let reference = prompt_keys(prompt)?;
    let mut buffer: Vec<(KeyId, usize)> = Vec::new();
    let mut pairs = Vec::new();
    let mut ambiguous = 0;
    let mut skipped = 0;
    for (idx, event) in events.iter().enumerate() {
        match event {
            TypingEvent::Tap { decoded, .. } => buffer.push((*decoded, idx)),
            TypingEvent::Backspace { .. } => {
                let Some(&(_, deleted_idx)) = buffer.last() else {
                    log::warn!("backspace on empty buffer (event {idx}); skipped");
                    skipped += 1;
                    continue;
                };
                // Align the buffer (deleted tap included) against a prompt
                // prefix one character longer, leaving room for one
                // omission.
                let prefix_len = (buffer.len() + 1).min(reference.len());
                let prefix = &reference[..prefix_len];
                let hyp: Vec<KeyId> = buffer.iter().map(|&(k, _)| k).collect();
                let labels = last_position_references(prefix, &hyp);
                match labels.as_slice() {
                    [Some(key)] => pairs.push(AlignedPair {
                        tap: tap_of(events, deleted_idx).clone(),
                        reference: *key,
                        source: PairSource::Deleted,
                    }),
                    _ => ambiguous += 1,
                }
                buffer.pop();
            }
        }
    }
    Ok(ReplayOutcome { pairs, ambiguous, skipped_backspaces: skipped })
}

/// Labels deleted taps by re-aligning the buffer right before each
/// deletion. Deletions whose minimal alignments disagree on the deleted
/// tap's reference (spelling-vs-spatial ambiguity) are excluded.
pub fn replay_deleted(prompt: &str, events: &[TypingEvent]) -> Result<Vec<AlignedPair>> {
    Ok(replay_deleted_detailed(prompt, events)?.pairs)
}

/// Keeps only pairs whose reference key lies within the tap's neighbor
/// window. Idempotent.
pub fn far_key_filter(layout: &KeyboardLayout, pairs: Vec<AlignedPair>) -> Vec<AlignedPair> {
    pairs
        .into_iter()
        .filter(|pair| candidate_filter(layout, &pair.tap).contains(&pair.reference))
        .collect()
}

/// Summary of one trial's alignment.
#[derive(Clone, Debug, Default)]
pub struct AlignStats {
    pub committed_pairs: usize,
    pub deleted_pairs: usize,
    pub ambiguous_deleted: usize,
    pub far_dropped: usize,
    pub skipped_backspaces: usize,
}

/// Full alignment pipeline for one trial: committed pairs, deleted-tap
/// pairs (excluding taps already labeled by the committed pass), then the
/// far-key filter.
pub fn align_trial(
    layout: &KeyboardLayout,
    prompt: &str,
    events: &[TypingEvent],
) -> Result<(Vec<AlignedPair>, AlignStats)> {
    let mut last_t = 0u64;
    for event in events {
        if event.t_ms() < last_t {
            return Err(Error::InvalidData("event timestamps must be non-decreasing".into()));
        }
        last_t = event.t_ms();
    }

    let committed = align_committed(prompt, events)?;
    let replay = replay_deleted_detailed(prompt, events)?;
    let committed_refs: Vec<String> = committed.iter().map(|p| p.tap.tap_ref()).collect();
    let deleted: Vec<AlignedPair> = replay
        .pairs
        .into_iter()
        .filter(|p| !committed_refs.contains(&p.tap.tap_ref()))
        .collect();

    let mut stats = AlignStats {
        committed_pairs: committed.len(),
        deleted_pairs: deleted.len(),
        ambiguous_deleted: replay.ambiguous,
        far_dropped: 0,
        skipped_backspaces: replay.skipped_backspaces,
    };
    let mut pairs = committed;
    pairs.extend(deleted);
    let before = pairs.len();
    let pairs = far_key_filter(layout, pairs);
    stats.far_dropped = before - pairs.len();
    Ok((pairs, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Point;

    fn layout() -> KeyboardLayout {
        KeyboardLayout::default_qwerty()
    }

    fn key(c: char) -> KeyId {
        KeyId::from_char(c).unwrap()
    }

    /// Tap event whose centroid sits on the given key's center.
    fn tap_on(layout: &KeyboardLayout, c: char, t_ms: u64) -> TypingEvent {
        let k = key(c);
        TypingEvent::Tap {
            tap: TapSample {
                user_id: "u0".into(),
                prompt_id: 0,
                t_ms,
                centroid: layout.key(k).center(),
                heatmap: None,
                label: None,
            },
            decoded: k,
        }
    }

    /// Structural validity: ops visit both strings left to right exactly
    /// once and their kinds agree with the characters.
    fn check_script(reference: &[KeyId], hypothesis: &[KeyId], ops: &[EditOp]) {
        let (mut i, mut j) = (0usize, 0usize);
        for op in ops {
            match op.kind {
                EditKind::Match => {
                    assert_eq!((op.ref_pos, op.hyp_pos), (Some(i), Some(j)));
                    assert_eq!(reference[i], hypothesis[j]);
                    i += 1;
                    j += 1;
                }
                EditKind::Substitution => {
                    assert_eq!((op.ref_pos, op.hyp_pos), (Some(i), Some(j)));
                    assert_ne!(reference[i], hypothesis[j]);
                    i += 1;
                    j += 1;
                }
                EditKind::Omission => {
                    assert_eq!((op.ref_pos, op.hyp_pos), (Some(i), None));
                    i += 1;
                }
                EditKind::Insertion => {
                    assert_eq!((op.ref_pos, op.hyp_pos), (None, Some(j)));
                    j += 1;
                }
                EditKind::Transposition => {
                    assert_eq!((op.ref_pos, op.hyp_pos), (Some(i), Some(j)));
                    assert_eq!(reference[i], hypothesis[j + 1]);
                    assert_eq!(reference[i + 1], hypothesis[j]);
                    i += 2;
                    j += 2;
                }
            }
        }
        assert_eq!(i, reference.len());
        assert_eq!(j, hypothesis.len());
    }

    fn non_match_cost(ops: &[EditOp]) -> u32 {
        ops.iter().filter(|op| op.kind != EditKind::Match).count() as u32
    }

    #[test]
    fn shock_sjock_is_one_substitution() {
        let ops = align_strings("shock", "sjock").unwrap();
        check_script(&KeyId::sequence("shock").unwrap(), &KeyId::sequence("sjock").unwrap(), &ops);
        assert_eq!(non_match_cost(&ops), 1);
        let sub = ops.iter().find(|op| op.kind == EditKind::Substitution).unwrap();
        assert_eq!(sub.ref_pos, Some(1));
        assert_eq!(sub.hyp_pos, Some(1));
    }

    #[test]
    fn breathing_beeathing_is_one_substitution() {
        let ops = align_strings("breathing", "beeathing").unwrap();
        assert_eq!(non_match_cost(&ops), 1);
        let sub = ops.iter().find(|op| op.kind == EditKind::Substitution).unwrap();
        assert_eq!(sub.ref_pos, Some(1));
    }

    #[test]
    fn the_teh_is_one_transposition() {
        let ops = align_strings("the", "teh").unwrap();
        assert_eq!(non_match_cost(&ops), 1);
        assert!(ops.iter().any(|op| op.kind == EditKind::Transposition));
        check_script(&KeyId::sequence("the").unwrap(), &KeyId::sequence("teh").unwrap(), &ops);
    }

    /// Plain exhaustive recursion over edit scripts; no memoization, no
    /// sharing with the production DP.
    fn brute_force_cost(reference: &[KeyId], hypothesis: &[KeyId]) -> u32 {
        fn go(r: &[KeyId], h: &[KeyId]) -> u32 {
            match (r.is_empty(), h.is_empty()) {
                (true, _) => h.len() as u32,
                (_, true) => r.len() as u32,
                _ => {
                    let sub = if r[0] == h[0] { 0 } else { 1 };
                    let mut best = go(&r[1..], &h[1..]) + sub;
                    best = best.min(go(&r[1..], h) + 1);
                    best = best.min(go(r, &h[1..]) + 1);
                    if r.len() >= 2 && h.len() >= 2 && r[0] == h[1] && r[1] == h[0] {
                        best = best.min(go(&r[2..], &h[2..]) + 1);
                    }
                    best
                }
            }
        }
        go(reference, hypothesis)
    }

    #[test]
    fn cost_matches_brute_force_on_short_strings() {
        let alphabet = [key('a'), key('b'), key('c'), key('d')];
        let strings_of = |len: usize| -> Vec<Vec<KeyId>> {
            let mut out = vec![Vec::new()];
            for _ in 0..len {
                out = out
                    .into_iter()
                    .flat_map(|s| {
                        alphabet.iter().map(move |&c| {
                            let mut s = s.clone();
                            s.push(c);
                            s
                        })
                    })
                    .collect();
            }
            out
        };
        let mut all = Vec::new();
        for len in 0..=3 {
            all.extend(strings_of(len));
        }
        for r in &all {
            for h in &all {
                let dp = edit_cost(r, h);
                let brute = brute_force_cost(r, h);
                assert_eq!(dp, brute, "{r:?} vs {h:?}");
                check_script(r, h, &align_keys(r, h));
            }
        }
    }

    #[test]
    fn perfect_copy_labels_every_tap() {
        let layout = layout();
        let prompt = "cat";
        let events: Vec<TypingEvent> =
            [('c', 0), ('a', 100), ('t', 200)].map(|(c, t)| tap_on(&layout, c, t)).into();
        let pairs = align_committed(prompt, &events).unwrap();
        assert_eq!(pairs.len(), 3);
        for (pair, c) in pairs.iter().zip(['c', 'a', 't']) {
            assert_eq!(pair.reference, key(c));
            assert_eq!(pair.source, PairSource::Committed);
        }
    }

    #[test]
    fn substituted_tap_gets_reference_label() {
        let layout = layout();
        // Typed "sjock" for prompt "shock": the j tap is labeled h.
        let events: Vec<TypingEvent> = [('s', 0), ('j', 1), ('o', 2), ('c', 3), ('k', 4)]
            .map(|(c, t)| tap_on(&layout, c, t))
            .into();
        let pairs = align_committed("shock", &events).unwrap();
        assert_eq!(pairs.len(), 5);
        assert_eq!(pairs[1].reference, key('h'));
        match &events[1] {
            TypingEvent::Tap { tap, .. } => assert_eq!(pairs[1].tap.t_ms, tap.t_ms),
            _ => unreachable!(),
        }
    }

    #[test]
    fn inserted_tap_is_dropped() {
        let layout = layout();
        // Doubled letter: "caat" for "cat".
        let events: Vec<TypingEvent> = [('c', 0), ('a', 1), ('a', 2), ('t', 3)]
            .map(|(c, t)| tap_on(&layout, c, t))
            .into();
        let pairs = align_committed("cat", &events).unwrap();
        assert_eq!(pairs.len(), 3);
    }

    #[test]
    fn missd_deletion_is_ambiguous_and_excluded() {
        let layout = layout();
        // Prompt "missed", typed "missd", then backspace: the deleted d
        // aligns to both e (substitution) and d (match after omitting e).
        let mut events: Vec<TypingEvent> = [('m', 0), ('i', 1), ('s', 2), ('s', 3), ('d', 4)]
            .map(|(c, t)| tap_on(&layout, c, t))
            .into();
        events.push(TypingEvent::Backspace { t_ms: 5 });
        let pairs = replay_deleted("missed", &events).unwrap();
        assert!(pairs.is_empty());

        let prefix = KeyId::sequence("missed").unwrap();
        let hyp = KeyId::sequence("missd").unwrap();
        let labels = last_position_references(&prefix, &hyp);
        assert!(labels.contains(&Some(key('e'))));
        assert!(labels.contains(&Some(key('d'))));
    }

    #[test]
    fn be_deletion_is_ambiguous_and_excluded() {
        let layout = layout();
        // Prompt "breathing is difficult", typed "Be", deleted e: omission
        // of r (spelling) vs e-for-r substitution (spatial).
        let mut events: Vec<TypingEvent> =
            [('b', 0), ('e', 1)].map(|(c, t)| tap_on(&layout, c, t)).into();
        events.push(TypingEvent::Backspace { t_ms: 2 });
        let pairs = replay_deleted("breathing is difficult", &events).unwrap();
        assert!(pairs.is_empty());
    }

    #[test]
    fn corrected_tap_is_recovered_with_its_reference() {
        let layout = layout();
        // Prompt "w": typed q, deleted it, retyped w. The deleted q tap is
        // labeled w.
        let events = vec![
            tap_on(&layout, 'q', 0),
            TypingEvent::Backspace { t_ms: 1 },
            tap_on(&layout, 'w', 2),
        ];
        let pairs = replay_deleted("w", &events).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].reference, key('w'));
        assert_eq!(pairs[0].source, PairSource::Deleted);
        assert_eq!(pairs[0].tap.t_ms, 0);
    }

    #[test]
    fn backspace_on_empty_buffer_is_skipped() {
        let layout = layout();
        let events = vec![
            TypingEvent::Backspace { t_ms: 0 },
            tap_on(&layout, 'h', 1),
            tap_on(&layout, 'i', 2),
        ];
        let (pairs, stats) = align_trial(&layout, "hi", &events).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(stats.skipped_backspaces, 1);
    }

    #[test]
    fn far_key_filter_rules() {
        let layout = layout();
        let tap_at = |c: char| TapSample {
            user_id: "u0".into(),
            prompt_id: 0,
            t_ms: 0,
            centroid: layout.key(key(c)).center(),
            heatmap: None,
            label: None,
        };
        let pairs = vec![
            // Tap on n labeled q: far, dropped.
            AlignedPair { tap: tap_at('n'), reference: key('q'), source: PairSource::Committed },
            // Tap on x labeled c: neighbors, kept.
            AlignedPair { tap: tap_at('x'), reference: key('c'), source: PairSource::Committed },
            // Tap at the label's own center: kept.
            AlignedPair { tap: tap_at('e'), reference: key('e'), source: PairSource::Committed },
        ];
        let kept = far_key_filter(&layout, pairs);
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().all(|p| p.reference != key('q')));

        // Idempotent.
        let again = far_key_filter(&layout, kept.clone());
        assert_eq!(again.len(), kept.len());
    }

    #[test]
    fn replay_is_deterministic() {
        let layout = layout();
        let mut events: Vec<TypingEvent> = [('t', 0), ('h', 1), ('w', 2)]
            .map(|(c, t)| tap_on(&layout, c, t))
            .into();
        events.push(TypingEvent::Backspace { t_ms: 3 });
        events.push(tap_on(&layout, 'e', 4));
        let a = replay_deleted("the", &events).unwrap();
        let b = replay_deleted("the", &events).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.reference, y.reference);
            assert_eq!(x.tap.t_ms, y.tap.t_ms);
        }
    }

    #[test]
    fn trial_pipeline_combines_and_filters() {
        let layout = layout();
        // Prompt "the": typed t, h, then w (slip toward e), deleted w,
        // typed e. Committed "the" labels three taps; the deleted w tap is
        // labeled e.
        let mut events: Vec<TypingEvent> =
            [('t', 0), ('h', 1)].map(|(c, t)| tap_on(&layout, c, t)).to_vec();
        events.push(tap_on(&layout, 'w', 2));
        events.push(TypingEvent::Backspace { t_ms: 3 });
        events.push(tap_on(&layout, 'e', 4));
        let (pairs, stats) = align_trial(&layout, "the", &events).unwrap();
        assert_eq!(stats.committed_pairs, 3);
        assert_eq!(stats.deleted_pairs, 1);
        let deleted: Vec<_> =
            pairs.iter().filter(|p| p.source == PairSource::Deleted).collect();
        assert_eq!(deleted.len(), 1);
        assert_eq!(deleted[0].reference, key('e'));
        assert_eq!(deleted[0].tap.t_ms, 2);
        // Pair count never exceeds tap count.
        assert!(pairs.len() <= 5);
    }

    #[test]
    fn unordered_timestamps_rejected() {
        let layout = layout();
        let events = vec![tap_on(&layout, 'a', 10), tap_on(&layout, 'b', 5)];
        assert!(align_trial(&layout, "ab", &events).is_err());
    }

    #[test]
    fn empty_prompt_rejected() {
        let layout = layout();
        let events = vec![tap_on(&layout, 'a', 0)];
        assert!(align_committed("", &events).is_err());
    }
}
