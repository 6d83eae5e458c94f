//! A scripted mock model behind a replay cache.
//!
//! The first pass records every query; the second pass replays it without
//! the inner backend.

use subsense::gateway::{CacheBackend, MaskQuery, MlmBackend, MockBackend, MockConfig, VocabItem};
use subsense::PredictedToken;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = MockConfig::default();
    cfg.insert_masked(
        "This <mask> is cute",
        vec![
            PredictedToken::new("cat", true, -0.4),
            PredictedToken::new("dog", true, -1.1),
            PredictedToken::new("##s", false, -2.5),
        ],
    );
    cfg.fallback_vocab = vec![VocabItem::Word("thing".into())];
    let mock = MockBackend::new(cfg)?;

    let dir = std::env::temp_dir().join("subsense-mock-gateway");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("cache.jsonl");
    let _ = std::fs::remove_file(&path);

    let recording = CacheBackend::open(&path, Some(Box::new(mock)))?;
    let q = MaskQuery::masked("This <mask> is cute", 2);
    let live = recording.score(&q)?;
    for t in &live.predictions[0] {
        println!("{:6} begins_word={:5} logprob={:.2}", t.surface, t.begins_word, t.logprob);
    }
    let unknown = recording.score(&MaskQuery::masked("Something <mask> else", 5))?;
    println!("unscripted query falls back to: {:?}", unknown.predictions[0]);
    drop(recording);

    let replay = CacheBackend::open(&path, None)?;
    println!("replayed {} cached queries; same answer: {}", replay.len(), replay.score(&q)? == live);
    match replay.score(&MaskQuery::masked("Never seen <mask>", 1)) {
        Ok(_) => println!("unexpected hit"),
        Err(e) => println!("replay-only miss: {e}"),
    }
    Ok(())
}
