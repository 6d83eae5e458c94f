//! Preparing word-continuation-masking training examples from a
//! pre-tokenized corpus.

use std::io::Cursor;

use subsense::wcm::{wcm_mask, wcm_prep_corpus, SubwordToken, TokenizedLine, WcmExample, WcmParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let line = TokenizedLine {
        tokens: vec![
            SubwordToken::new("the", true),
            SubwordToken::new("capy", true),
            SubwordToken::new("bara", false),
            SubwordToken::new("s", false),
            SubwordToken::new("swim", true),
        ],
        offset: None,
    };
    let params = WcmParams { mask_rate: 0.4, ..WcmParams::default() };
    let ex = wcm_mask(&line, &params, 3);
    println!("{}", serde_json::to_string(&ex)?);
    assert_eq!(ex.restore(), line.tokens);

    let mut corpus = String::new();
    for i in 0..200 {
        let l = TokenizedLine {
            tokens: (0..20)
                .map(|j| SubwordToken::new(format!("t{i}_{j}"), j % 3 != 1))
                .collect(),
            offset: Some(i),
        };
        corpus.push_str(&serde_json::to_string(&l)?);
        corpus.push('\n');
    }
    corpus.push_str("not json\n");
    let mut out = Vec::new();
    let stats = wcm_prep_corpus(Cursor::new(corpus), &mut out, &WcmParams::default())?;
    println!("{stats:?}");
    println!("selected fraction {:.4}", stats.selected as f64 / stats.tokens as f64);
    let first: WcmExample = serde_json::from_str(std::str::from_utf8(&out)?.lines().next().unwrap_or("{}"))?;
    println!("first example has {} masks", first.mask_count());
    Ok(())
}
