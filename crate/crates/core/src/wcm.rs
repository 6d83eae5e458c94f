//! Word-continuation masking (WCM) example preparation.
//!
//! A fraction of subword positions is selected uniformly. Each selected
//! position becomes a mask whose target is the original subword, and every
//! later subword of the same word is removed from the input, so the model
//! learns to start or continue a word without knowing its length.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gateway::MASK;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordToken {
    pub surface: String,
    pub begins_word: bool,
}

impl SubwordToken {
    pub fn new(surface: impl Into<String>, begins_word: bool) -> Self {
        Self {
            surface: surface.into(),
            begins_word,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedLine {
    pub tokens: Vec<SubwordToken>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<u64>,
}

impl TokenizedLine {
    pub fn is_valid(&self) -> bool {
        self.tokens.first().is_some_and(|t| t.begins_word)
            && self.tokens.iter().all(|t| !t.surface.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WcmToken {
    pub surface: String,
    pub begins_word: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub mask: bool,
}

/// One training example.
///
/// `target_tokens` maps input positions to the original subword the model
/// must predict there. `removed` keeps the deleted continuation subwords per
/// input position so the original line can be restored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WcmExample {
    pub input_tokens: Vec<WcmToken>,
    pub target_tokens: BTreeMap<usize, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub removed: BTreeMap<usize, Vec<SubwordToken>>,
    /// Number of positions drawn before subsumption within words.
    pub selected: usize,
}

impl WcmExample {
    /// Undoes masking and removal.
    pub fn restore(&self) -> Vec<SubwordToken> {
        let mut out = Vec::new();
        for (i, t) in self.input_tokens.iter().enumerate() {
            let surface = self
                .target_tokens
                .get(&i)
                .cloned()
                .unwrap_or_else(|| t.surface.clone());
            out.push(SubwordToken::new(surface, t.begins_word));
            if let Some(r) = self.removed.get(&i) {
                out.extend(r.iter().cloned());
            }
        }
        out
    }

    pub fn mask_count(&self) -> usize {
        self.input_tokens.iter().filter(|t| t.mask).count()
    }

    pub fn removed_count(&self) -> usize {
        self.removed.values().map(Vec::len).sum()
    }
}

/// Optional BERT-style treatment of selected positions. Probabilities of
/// keeping the original and of substituting a random subword of the same
/// line; the rest become masks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplacementSplit {
    pub keep: f64,
    pub random: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WcmParams {
    pub mask_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub split: Option<ReplacementSplit>,
}

impl Default for WcmParams {
    fn default() -> Self {
        Self {
            mask_rate: 0.15,
            seed: 0,
            split: None,
        }
    }
}

/// Masks one line using an rng seeded with `seed`.
pub fn wcm_mask(line: &TokenizedLine, params: &WcmParams, seed: u64) -> WcmExample {
    assert!(
        params.mask_rate > 0.0 && params.mask_rate < 1.0,
        "mask rate must be in (0, 1)"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = &line.tokens;
    let n = tokens.len();
    let n_sel = ((params.mask_rate * n as f64).round() as usize).min(n);
    let mut chosen = vec![false; n];
    for i in sample(&mut rng, n, n_sel) {
        chosen[i] = true;
    }

    let mut ex = WcmExample {
        input_tokens: Vec::with_capacity(n),
        target_tokens: BTreeMap::new(),
        removed: BTreeMap::new(),
        selected: n_sel,
    };
    let mut i = 0;
    while i < n {
        let t = &tokens[i];
        if !chosen[i] {
            ex.input_tokens.push(WcmToken {
                surface: t.surface.clone(),
                begins_word: t.begins_word,
                mask: false,
            });
            i += 1;
            continue;
        }
        let pos = ex.input_tokens.len();
        let (surface, mask) = match params.split {
            Some(split) => {
                let r: f64 = rng.gen();
                if r < split.keep {
                    (t.surface.clone(), false)
                } else if r < split.keep + split.random {
                    (tokens[rng.gen_range(0..n)].surface.clone(), false)
                } else {
                    (MASK.to_string(), true)
                }
            }
            None => (MASK.to_string(), true),
        };
        ex.input_tokens.push(WcmToken {
            surface,
            begins_word: t.begins_word,
            mask,
        });
        ex.target_tokens.insert(pos, t.surface.clone());
        let mut j = i + 1;
        while j < n && !tokens[j].begins_word {
            j += 1;
        }
        if j > i + 1 {
            ex.removed.insert(pos, tokens[i + 1..j].to_vec());
        }
        i = j;
    }
    ex
}

/// Per-line seed derived from the global seed and the line index.
pub fn line_seed(global: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(global ^ mix(index))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WcmStats {
    pub lines: usize,
    pub tokens: usize,
    pub selected: usize,
    pub masks: usize,
    pub removed: usize,
    pub skipped: usize,
}

const BATCH: usize = 512;

/// Streams tokenized JSONL lines to WCM example JSONL.
///
/// Lines are processed in parallel batches; output order equals input order
/// and each line's seed depends only on the global seed and its line number.
pub fn wcm_prep_corpus<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    params: &WcmParams,
) -> std::io::Result<WcmStats> {
    let mut stats = WcmStats::default();
    let mut batch: Vec<(u64, String)> = Vec::with_capacity(BATCH);
    let mut flush = |batch: &mut Vec<(u64, String)>, stats: &mut WcmStats| -> std::io::Result<()> {
        let results: Vec<Option<(usize, WcmExample)>> = batch
            .par_iter()
            .map(|(idx, line)| {
                let parsed: TokenizedLine = serde_json::from_str(line).ok()?;
                if !parsed.is_valid() {
                    return None;
                }
                let n = parsed.tokens.len();
                Some((n, wcm_mask(&parsed, params, line_seed(params.seed, *idx))))
            })
            .collect();
        for (r, (idx, _)) in results.into_iter().zip(batch.iter()) {
            match r {
                Some((n, ex)) => {
                    stats.lines += 1;
                    stats.tokens += n;
                    stats.selected += ex.selected;
                    stats.masks += ex.mask_count();
                    stats.removed += ex.removed_count();
                    serde_json::to_writer(&mut output, &ex)?;
                    output.write_all(b"\n")?;
                }
                None => {
                    log::warn!("skipping malformed line {}", idx + 1);
                    stats.skipped += 1;
                }
            }
        }
        batch.clear();
        Ok(())
    };
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        batch.push((idx as u64, line));
        if batch.len() == BATCH {
            flush(&mut batch, &mut stats)?;
        }
    }
    flush(&mut batch, &mut stats)?;
    output.flush()?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(words: &[&[&str]]) -> TokenizedLine {
        let tokens = words
            .iter()
            .flat_map(|w| {
                w.iter()
                    .enumerate()
                    .map(|(i, s)| SubwordToken::new(*s, i == 0))
            })
            .collect();
        TokenizedLine {
            tokens,
            offset: None,
        }
    }

    /// Finds a seed whose selection hits exactly `want` (single selection).
    fn mask_at(l: &TokenizedLine, rate: f64, want: usize) -> WcmExample {
        let p = WcmParams {
            mask_rate: rate,
            ..Default::default()
        };
        (0..10_000)
            .map(|s| wcm_mask(l, &p, s))
            .find(|ex| ex.selected == 1 && ex.target_tokens.values().next().map(String::as_str) == Some(l.tokens[want].surface.as_str()))
            .expect("some seed selects the wanted position")
    }

    fn surfaces(ex: &WcmExample) -> Vec<&str> {
        ex.input_tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn mask_inside_word_truncates_continuation() {
        let l = line(&[&["cats"], &["and"], &["capy", "bara", "s"], &["are"], &["cute"]]);
        let ex = mask_at(&l, 0.15, 3);
        assert_eq!(surfaces(&ex), ["cats", "and", "capy", "<mask>", "are", "cute"]);
        assert_eq!(ex.target_tokens, BTreeMap::from([(3, "bara".to_string())]));
        assert_eq!(ex.restore(), l.tokens);
    }

    #[test]
    fn mask_at_word_start_collapses_word() {
        let l = line(&[&["cats"], &["and"], &["capy", "bara", "s"], &["are"], &["cute"]]);
        let ex = mask_at(&l, 0.15, 2);
        assert_eq!(surfaces(&ex), ["cats", "and", "<mask>", "are", "cute"]);
        assert_eq!(ex.target_tokens[&2], "capy");
        assert_eq!(ex.removed_count(), 2);
        assert_eq!(ex.restore(), l.tokens);
    }

    #[test]
    fn single_token_word_is_plain_mlm() {
        let l = line(&[&["cats"], &["and"], &["capy", "bara", "s"], &["are"], &["cute"]]);
        let ex = mask_at(&l, 0.15, 5);
        assert_eq!(surfaces(&ex), ["cats", "and", "capy", "bara", "s", "<mask>", "cute"]);
        assert!(ex.removed.is_empty());
    }

    #[test]
    fn later_selection_in_same_word_is_subsumed() {
        let l = line(&[&["a", "b", "c", "d"]]);
        let p = WcmParams {
            mask_rate: 0.5,
            ..Default::default()
        };
        let ex = wcm_mask(&l, &p, 3);
        assert_eq!(ex.selected, 2);
        assert_eq!(ex.mask_count(), 1);
        assert_eq!(ex.restore(), l.tokens);
    }

    #[test]
    fn split_keeps_targets() {
        let l = line(&[&["x"], &["y"], &["z"], &["w"]]);
        let p = WcmParams {
            mask_rate: 0.5,
            seed: 0,
            split: Some(ReplacementSplit {
                keep: 1.0,
                random: 0.0,
            }),
        };
        let ex = wcm_mask(&l, &p, 1);
        assert_eq!(ex.mask_count(), 0);
        assert_eq!(ex.target_tokens.len(), 2);
        assert_eq!(surfaces(&ex), ["x", "y", "z", "w"]);
    }

    #[test]
    fn empty_input_gives_zero_stats() {
        let mut out = Vec::new();
        let stats = wcm_prep_corpus(&b""[..], &mut out, &WcmParams::default()).unwrap();
        assert_eq!(stats, WcmStats::default());
        assert!(out.is_empty());
    }

    #[test]
    fn malformed_lines_are_counted() {
        let input = "{\"tokens\":[{\"surface\":\"a\",\"begins_word\":false}]}\nnope\n{\"tokens\":[{\"surface\":\"a\",\"begins_word\":true}]}\n";
        let mut out = Vec::new();
        let stats = wcm_prep_corpus(input.as_bytes(), &mut out, &WcmParams::default()).unwrap();
        assert_eq!(stats.skipped, 2);
        assert_eq!(stats.lines, 1);
    }
}
