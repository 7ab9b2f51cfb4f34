//! Word-unit segmentation shared by the explainer and the encoder tokenizer.
//!
//! Text is split on Unicode whitespace; within each whitespace-delimited
//! chunk, maximal runs of Han/Kana characters are further split into single
//! characters, since those scripts carry no word boundaries. Hangul is
//! whitespace-delimited in practice and is left intact. An optional
//! segmenter hook can override the per-character CJK fallback with
//! word-level units.

/// A word unit: its case-folded form plus the byte span in the original
/// string. `original[start..end]` is the unfolded source slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordUnit {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Hook for plugging in an external CJK word segmenter. Given a maximal
/// Han/Kana run, return byte offsets (relative to the run) where units
/// start, beginning with 0. Returning `None` falls back to per-character
/// units.
pub trait CjkSegmenter {
    fn segment(&self, run: &str) -> Option<Vec<usize>>;
}

/// True for characters that belong to scripts written without spaces
/// (Han ideographs and Japanese kana).
pub fn is_cjk_run_char(c: char) -> bool {
    matches!(c,
        '\u{3400}'..='\u{4DBF}'   // CJK extension A
        | '\u{4E00}'..='\u{9FFF}' // CJK unified ideographs
        | '\u{F900}'..='\u{FAFF}' // CJK compatibility ideographs
        | '\u{3040}'..='\u{309F}' // hiragana
        | '\u{30A0}'..='\u{30FF}' // katakana
        | '\u{31F0}'..='\u{31FF}' // katakana phonetic extensions
        | '\u{FF66}'..='\u{FF9D}' // halfwidth katakana
        | '\u{20000}'..='\u{2A6DF}' // CJK extension B
    )
}

fn fold(s: &str) -> String {
    s.to_lowercase()
}

/// Segment `text` into word units. See the module docs for the rules.
pub fn word_units(text: &str, segmenter: Option<&dyn CjkSegmenter>) -> Vec<WordUnit> {
    let mut units = Vec::new();
    let mut chunk_start = None::<usize>;
    let bytes_len = text.len();
    for (idx, c) in text.char_indices().chain(std::iter::once((bytes_len, ' '))) {
        let is_space = c.is_whitespace();
        match (chunk_start, is_space) {
            (None, false) => chunk_start = Some(idx),
            (Some(start), true) => {
                push_chunk_units(text, start, idx, segmenter, &mut units);
                chunk_start = None;
            }
            _ => {}
        }
    }
    units
}

fn push_chunk_units(
    text: &str,
    start: usize,
    end: usize,
    segmenter: Option<&dyn CjkSegmenter>,
    units: &mut Vec<WordUnit>,
) {
    let chunk = &text[start..end];
    let mut run_start = None::<usize>; // relative CJK run start
    let mut seg_start = None::<usize>; // relative non-CJK segment start
    let chunk_len = chunk.len();
    for (rel, c) in chunk.char_indices().chain(std::iter::once((chunk_len, ' '))) {
        let cjk = rel < chunk_len && is_cjk_run_char(c);
        let ended = rel == chunk_len;
        if cjk || ended {
            if let Some(s) = seg_start.take() {
                units.push(WordUnit {
                    text: fold(&chunk[s..rel]),
                    start: start + s,
                    end: start + rel,
                });
            }
        }
        if !cjk || ended {
            if let Some(s) = run_start.take() {
                push_cjk_units(chunk, s, rel, start, segmenter, units);
            }
        }
        if ended {
            break;
        }
        if cjk {
            run_start.get_or_insert(rel);
        } else {
            seg_start.get_or_insert(rel);
        }
    }
}

fn push_cjk_units(
    chunk: &str,
    rel_start: usize,
    rel_end: usize,
    base: usize,
    segmenter: Option<&dyn CjkSegmenter>,
    units: &mut Vec<WordUnit>,
) {
    let run = &chunk[rel_start..rel_end];
    let starts = segmenter
        .and_then(|s| s.segment(run))
        .filter(|starts| starts.first() == Some(&0) && starts.iter().all(|&o| run.is_char_boundary(o)))
        .unwrap_or_else(|| run.char_indices().map(|(i, _)| i).collect());
    for (i, &s) in starts.iter().enumerate() {
        let e = starts.get(i + 1).copied().unwrap_or(run.len());
        if s < e {
            units.push(WordUnit {
                text: fold(&run[s..e]),
                start: base + rel_start + s,
                end: base + rel_start + e,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(units: &[WordUnit]) -> Vec<&str> {
        units.iter().map(|u| u.text.as_str()).collect()
    }

    #[test]
    fn whitespace_split() {
        let units = word_units("this is awful", None);
        assert_eq!(texts(&units), vec!["this", "is", "awful"]);
        assert_eq!(units[2].start, 8);
        assert_eq!(units[2].end, 13);
    }

    #[test]
    fn cjk_runs_split_per_character() {
        let units = word_units("不良品です", None);
        assert_eq!(texts(&units), vec!["不", "良", "品", "で", "す"]);
        // spans index the original bytes exactly
        let original = "不良品です";
        for u in &units {
            assert_eq!(&original[u.start..u.end], u.text);
        }
    }

    #[test]
    fn case_folded_tokens_keep_original_spans() {
        let text = "Ça c’est du vol";
        let units = word_units(text, None);
        assert_eq!(texts(&units), vec!["ça", "c’est", "du", "vol"]);
        assert_eq!(&text[units[0].start..units[0].end], "Ça");
    }

    #[test]
    fn mixed_latin_and_cjk_in_one_chunk() {
        let units = word_units("abc不良品x", None);
        assert_eq!(texts(&units), vec!["abc", "不", "良", "品", "x"]);
    }

    #[test]
    fn hangul_words_stay_whole() {
        let units = word_units("안녕하세요 세계", None);
        assert_eq!(texts(&units), vec!["안녕하세요", "세계"]);
    }

    #[test]
    fn empty_and_whitespace_only() {
        assert!(word_units("", None).is_empty());
        assert!(word_units("   \t\n", None).is_empty());
    }

    struct FixedSegmenter(Vec<usize>);
    impl CjkSegmenter for FixedSegmenter {
        fn segment(&self, _run: &str) -> Option<Vec<usize>> {
            Some(self.0.clone())
        }
    }

    #[test]
    fn segmenter_hook_overrides_fallback() {
        // 不良品 as one unit, です as で+す stays per-char via offsets
        let seg = FixedSegmenter(vec![0, 9, 12]);
        let units = word_units("不良品です", Some(&seg));
        assert_eq!(texts(&units), vec!["不良品", "で", "す"]);
    }

    #[test]
    fn bogus_segmenter_offsets_fall_back_to_per_char() {
        struct Bad;
        impl CjkSegmenter for Bad {
            fn segment(&self, _run: &str) -> Option<Vec<usize>> {
                Some(vec![1, 2]) // not char boundaries, missing leading 0
            }
        }
        let units = word_units("不良品", Some(&Bad));
        assert_eq!(texts(&units), vec!["不", "良", "品"]);
    }
}
