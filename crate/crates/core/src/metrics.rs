//! Evaluation metrics: confusion matrices, macro-averaged scores, full
//! per-language reports, and the model comparison table.
//!
//! Averaging is macro (unweighted mean over the three classes) and every
//! report says so explicitly. Undefined per-class ratios score 0 and bump a
//! warnings counter instead of erroring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{argmax_label, ClassifierProbe};
use crate::corpus::{Corpus, Label};
use crate::error::{Error, Result};

const EVAL_CHUNK: usize = 256;

/// 3x3 confusion counts; rows are true classes, columns predicted, both in
/// the pinned class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> usize {
        (0..3).map(|r| self.counts[r][c]).sum()
    }
}

/// Tally true/predicted label pairs into a confusion matrix.
pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Argument(format!(
            "label sequences differ in length: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput("cannot build a confusion matrix from zero pairs".into()));
    }
    let mut counts = [[0usize; 3]; 3];
    for (t, p) in y_true.iter().zip(y_pred) {
        counts[t.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Per-class precision/recall/F1 with its support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// The accuracy/precision/recall/F1 quadruple (macro-averaged).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores derived from one confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredMatrix {
    pub overall: ScoreSet,
    pub per_class: BTreeMap<String, ClassScores>,
    pub zero_division_warnings: usize,
}

/// Compute accuracy plus per-class and macro precision/recall/F1.
///
/// Zero-division convention: a class with no predicted (or no true)
/// examples scores 0 on the affected ratio, and each such event increments
/// the warnings counter.
pub fn scores(cm: &ConfusionMatrix) -> Result<ScoredMatrix> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::EmptyInput("confusion matrix has no entries".into()));
    }
    let mut per_class = BTreeMap::new();
    let mut warnings = 0usize;
    let mut macro_p = 0.0;
    let mut macro_r = 0.0;
    let mut macro_f1 = 0.0;
    for label in Label::ALL {
        let c = label.index();
        let tp = cm.counts[c][c] as f64;
        let col = cm.col_sum(c);
        let row = cm.row_sum(c);
        let precision = if col == 0 {
            warnings += 1;
            0.0
        } else {
            tp / col as f64
        };
        let recall = if row == 0 {
            warnings += 1;
            0.0
        } else {
            tp / row as f64
        };
        let f1 = if precision + recall == 0.0 {
            warnings += 1;
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        macro_p += precision;
        macro_r += recall;
        macro_f1 += f1;
        per_class
            .insert(label.as_str().to_string(), ClassScores { precision, recall, f1, support: row });
    }
    let overall = ScoreSet {
        accuracy: cm.trace() as f64 / n as f64,
        precision: macro_p / 3.0,
        recall: macro_r / 3.0,
        f1: macro_f1 / 3.0,
    };
    Ok(ScoredMatrix { overall, per_class, zero_division_warnings: warnings })
}

/// Full evaluation report: confusion matrix plus overall, per-class, and
/// per-language scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    /// Always "macro"; recorded so downstream comparisons are never
    /// apples-to-oranges silently.
    pub averaging: String,
    pub class_order: [String; 3],
    pub confusion: ConfusionMatrix,
    pub overall: ScoreSet,
    pub per_class: BTreeMap<String, ClassScores>,
    pub per_language: BTreeMap<String, ScoreSet>,
    pub zero_division_warnings: usize,
}

/// Run a probe over a test corpus and score it, overall and per language.
/// Texts are expected to be cleaned already.
pub fn evaluate(probe: &dyn ClassifierProbe, test_set: &Corpus) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::EmptyInput("cannot evaluate on an empty corpus".into()));
    }
    let texts: Vec<&str> = test_set.iter().map(|ex| ex.text.as_str()).collect();
    let mut y_pred = Vec::with_capacity(texts.len());
    for (chunk_idx, chunk) in texts.chunks(EVAL_CHUNK).enumerate() {
        let rows = probe.predict_proba(chunk).map_err(|e| match e {
            probe_err @ Error::Probe { .. } => probe_err,
            other => Error::Probe { batch_index: chunk_idx, message: other.to_string() },
        })?;
        if rows.len() != chunk.len() {
            return Err(Error::Probe {
                batch_index: chunk_idx,
                message: format!("probe returned {} rows for {} inputs", rows.len(), chunk.len()),
            });
        }
        y_pred.extend(rows.iter().map(argmax_label));
    }
    let y_true: Vec<Label> = test_set.iter().map(|ex| ex.label).collect();

    let cm = confusion(&y_true, &y_pred)?;
    let scored = scores(&cm)?;

    let mut per_language = BTreeMap::new();
    let mut languages: Vec<&str> = test_set.iter().map(|ex| ex.language.as_str()).collect();
    languages.sort_unstable();
    languages.dedup();
    for lang in languages {
        let mut lt = Vec::new();
        let mut lp = Vec::new();
        for (i, ex) in test_set.iter().enumerate() {
            if ex.language == lang {
                lt.push(y_true[i]);
                lp.push(y_pred[i]);
            }
        }
        let lang_scores = scores(&confusion(&lt, &lp)?)?;
        per_language.insert(lang.to_string(), lang_scores.overall);
    }

    Ok(EvalReport {
        n: test_set.len(),
        averaging: "macro".to_string(),
        class_order: [
            Label::Positive.as_str().to_string(),
            Label::Neutral.as_str().to_string(),
            Label::Negative.as_str().to_string(),
        ],
        confusion: cm,
        overall: scored.overall,
        per_class: scored.per_class,
        per_language,
        zero_division_warnings: scored.zero_division_warnings,
    })
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ComparisonRow {
    pub fn from_report(name: impl Into<String>, report: &EvalReport) -> ComparisonRow {
        ComparisonRow {
            name: name.into(),
            accuracy: report.overall.accuracy,
            precision: report.overall.precision,
            recall: report.overall.recall,
            f1: report.overall.f1,
        }
    }
}

/// Rendered comparison table: Markdown text plus the same rows as JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub markdown: String,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.rows).expect("rows serialize");
        s.push('\n');
        s
    }
}

/// Render the comparison table. Rows keep their input order; accuracy is a
/// percentage with two decimals, the other metrics plain two-decimal reals.
pub fn comparison_table(rows: &[ComparisonRow]) -> Result<ComparisonTable> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("comparison table needs at least one row".into()));
    }
    let mut markdown = String::new();
    markdown.push_str("| Model | Accuracy | Precision | Recall | F1-Score |\n");
    markdown.push_str("|---|---|---|---|---|\n");
    for row in rows {
        markdown.push_str(&format!(
            "| {} | {:.2}% | {:.2} | {:.2} | {:.2} |\n",
            row.name,
            row.accuracy * 100.0,
            row.precision,
            row.recall,
            row.f1
        ));
    }
    Ok(ComparisonTable { markdown, rows: rows.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::LexiconProbe;
    use crate::corpus::LabeledExample;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let t = vec![Label::Positive, Label::Negative];
        let cm = confusion(&t, &t).unwrap();
        assert_eq!(cm.counts, [[1, 0, 0], [0, 0, 0], [0, 0, 1]]);
        assert_eq!(cm.trace(), 2);
    }

    #[test]
    fn single_error_is_off_diagonal() {
        let cm = confusion(&[Label::Positive], &[Label::Negative]).unwrap();
        assert_eq!(cm.counts[0][2], 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(confusion(&[Label::Positive], &[]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn random_pairs_match_double_loop_tally() {
        let mut rng = ChaCha20Rng::seed_from_u64(30);
        let y_true: Vec<Label> =
            (0..30).map(|_| Label::from_index(rng.gen_range(0..3)).unwrap()).collect();
        let y_pred: Vec<Label> =
            (0..30).map(|_| Label::from_index(rng.gen_range(0..3)).unwrap()).collect();
        let cm = confusion(&y_true, &y_pred).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut count = 0;
                for k in 0..30 {
                    if y_true[k].index() == i && y_pred[k].index() == j {
                        count += 1;
                    }
                }
                assert_eq!(cm.counts[i][j], count);
            }
        }
    }

    #[test]
    fn perfect_diagonal_scores_one() {
        let cm = ConfusionMatrix { counts: [[4, 0, 0], [0, 2, 0], [0, 0, 3]] };
        let s = scores(&cm).unwrap();
        assert_eq!(s.overall.accuracy, 1.0);
        assert_eq!(s.overall.precision, 1.0);
        assert_eq!(s.overall.recall, 1.0);
        assert_eq!(s.overall.f1, 1.0);
        assert_eq!(s.zero_division_warnings, 0);
    }

    /// Hand computation under the zero-division rule: no neutral examples.
    #[test]
    fn missing_class_scores_zero_with_warnings() {
        let cm = ConfusionMatrix { counts: [[5, 0, 0], [0, 0, 0], [0, 0, 5]] };
        let s = scores(&cm).unwrap();
        assert_eq!(s.overall.accuracy, 1.0);
        assert!((s.overall.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.overall.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.overall.f1 - 2.0 / 3.0).abs() < 1e-15);
        let neutral = s.per_class["neutral"];
        assert_eq!((neutral.precision, neutral.recall, neutral.f1), (0.0, 0.0, 0.0));
        assert_eq!(neutral.support, 0);
        // one warning each for neutral precision, recall, and f1
        assert_eq!(s.zero_division_warnings, 3);
    }

    /// Brute-force oracle: per-class values from first principles (TP, FP,
    /// FN loops), plus the accuracy == micro-precision == micro-recall
    /// identity.
    fn brute_force_check(cm: &ConfusionMatrix) {
        let s = scores(cm).unwrap();
        let n = cm.total() as f64;
        let mut macro_p = 0.0;
        let mut macro_r = 0.0;
        let mut macro_f = 0.0;
        let mut micro_tp = 0.0;
        let mut micro_fp = 0.0;
        let mut micro_fn = 0.0;
        for c in 0..3 {
            let tp = cm.counts[c][c] as f64;
            let mut fp = 0.0;
            let mut fnn = 0.0;
            for r in 0..3 {
                if r != c {
                    fp += cm.counts[r][c] as f64;
                    fnn += cm.counts[c][r] as f64;
                }
            }
            let p = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
            let r = if tp + fnn == 0.0 { 0.0 } else { tp / (tp + fnn) };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            let got = s.per_class[Label::from_index(c).unwrap().as_str()];
            assert!((got.precision - p).abs() < 1e-12);
            assert!((got.recall - r).abs() < 1e-12);
            assert!((got.f1 - f).abs() < 1e-12);
            macro_p += p;
            macro_r += r;
            macro_f += f;
            micro_tp += tp;
            micro_fp += fp;
            micro_fn += fnn;
        }
        assert!((s.overall.precision - macro_p / 3.0).abs() < 1e-12);
        assert!((s.overall.recall - macro_r / 3.0).abs() < 1e-12);
        assert!((s.overall.f1 - macro_f / 3.0).abs() < 1e-12);
        assert!((s.overall.accuracy - micro_tp / n).abs() < 1e-12);
        let micro_p = micro_tp / (micro_tp + micro_fp);
        let micro_r = micro_tp / (micro_tp + micro_fn);
        assert!((s.overall.accuracy - micro_p).abs() < 1e-12);
        assert!((s.overall.accuracy - micro_r).abs() < 1e-12);
    }

    #[test]
    fn scores_match_brute_force_on_random_matrices() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for _ in 0..200 {
            let mut counts = [[0usize; 3]; 3];
            for row in &mut counts {
                for cell in row.iter_mut() {
                    *cell = rng.gen_range(0..25);
                }
            }
            let cm = ConfusionMatrix { counts };
            if cm.total() == 0 {
                continue;
            }
            brute_force_check(&cm);
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut pairs: Vec<(Label, Label)> = (0..40)
            .map(|_| {
                (
                    Label::from_index(rng.gen_range(0..3)).unwrap(),
                    Label::from_index(rng.gen_range(0..3)).unwrap(),
                )
            })
            .collect();
        let t: Vec<Label> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<Label> = pairs.iter().map(|p| p.1).collect();
        let before = scores(&confusion(&t, &p).unwrap()).unwrap();
        use rand::seq::SliceRandom;
        pairs.shuffle(&mut rng);
        let t2: Vec<Label> = pairs.iter().map(|p| p.0).collect();
        let p2: Vec<Label> = pairs.iter().map(|p| p.1).collect();
        let after = scores(&confusion(&t2, &p2).unwrap()).unwrap();
        assert_eq!(before, after);
    }

    fn lexicon_fixture() -> (LexiconProbe, Corpus) {
        let probe = LexiconProbe::new(["good"], ["awful"], [0.0; 3], 2.0).unwrap();
        let corpus = Corpus::new(
            vec![
                LabeledExample::new("good stuff", Label::Positive, "en"),
                LabeledExample::new("awful mess", Label::Negative, "en"),
                LabeledExample::new("très good", Label::Positive, "fr"),
                LabeledExample::new("awful vraiment", Label::Negative, "fr"),
            ],
            "mem",
        );
        (probe, corpus)
    }

    #[test]
    fn evaluate_constructed_oracle_is_perfect() {
        let (probe, corpus) = lexicon_fixture();
        let report = evaluate(&probe, &corpus).unwrap();
        assert_eq!(report.overall.accuracy, 1.0);
        assert_eq!(report.n, 4);
        assert_eq!(report.averaging, "macro");
    }

    #[test]
    fn evaluate_covers_every_language() {
        let (probe, corpus) = lexicon_fixture();
        let report = evaluate(&probe, &corpus).unwrap();
        assert_eq!(report.per_language.len(), 2);
        assert!(report.per_language.contains_key("en"));
        assert!(report.per_language.contains_key("fr"));
        assert_eq!(report.per_language["fr"].accuracy, 1.0);
    }

    /// Lexicon probe predictions are analytically predictable, so the whole
    /// report can be derived by hand: one "good" text mislabeled negative.
    #[test]
    fn evaluate_matches_hand_derived_values() {
        let probe = LexiconProbe::new(["good"], ["awful"], [0.0; 3], 2.0).unwrap();
        let corpus = Corpus::new(
            vec![
                LabeledExample::new("good news", Label::Positive, "en"),
                LabeledExample::new("good vibes", Label::Negative, "en"), // will predict positive
                LabeledExample::new("awful day", Label::Negative, "en"),
                LabeledExample::new("plain words", Label::Neutral, "en"), // uniform -> positive tie-break
            ],
            "mem",
        );
        let report = evaluate(&probe, &corpus).unwrap();
        // predictions: pos, pos, neg, pos
        assert_eq!(report.confusion.counts, [[1, 0, 0], [1, 0, 0], [1, 0, 1]]);
        assert_eq!(report.overall.accuracy, 0.5);
        // per-class: pos p=1/3 r=1; neu p=0 (colsum 0, warn) r=0/1=0 (defined)
        // f1=0 (warn); neg p=1 r=1/2
        assert!((report.per_class["positive"].precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(report.per_class["positive"].recall, 1.0);
        assert_eq!(report.per_class["neutral"].recall, 0.0);
        assert_eq!(report.per_class["negative"].precision, 1.0);
        assert_eq!(report.per_class["negative"].recall, 0.5);
        assert_eq!(report.zero_division_warnings, 2);
    }

    #[test]
    fn evaluate_rejects_empty_corpus() {
        let (probe, _) = lexicon_fixture();
        assert!(matches!(evaluate(&probe, &Corpus::new(vec![], "mem")), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn comparison_renders_the_reference_fixture_rows() {
        let fixture = [
            ("BERT-base-multilingual-cased (Frozen)", 0.9020, 0.91, 0.88, 0.89),
            ("BERT-base-multilingual-cased (Unfrozen)", 0.8750, 0.88, 0.85, 0.86),
            ("RoBERTa-base (Frozen)", 0.9100, 0.92, 0.89, 0.90),
            ("RoBERTa-base (Unfrozen)", 0.8920, 0.90, 0.87, 0.88),
            ("XLM-RoBERTa-base (Frozen)", 0.9230, 0.93, 0.90, 0.91),
            ("XLM-RoBERTa-base (Unfrozen)", 0.9050, 0.91, 0.88, 0.89),
        ];
        let rows: Vec<ComparisonRow> = fixture
            .iter()
            .map(|(name, a, p, r, f)| ComparisonRow {
                name: name.to_string(),
                accuracy: *a,
                precision: *p,
                recall: *r,
                f1: *f,
            })
            .collect();
        let table = comparison_table(&rows).unwrap();
        assert!(
            table
                .markdown
                .contains("| XLM-RoBERTa-base (Frozen) | 92.30% | 0.93 | 0.90 | 0.91 |\n"),
            "{}",
            table.markdown
        );
        // rows in input order
        let lines: Vec<&str> = table.markdown.lines().collect();
        assert!(lines[2].starts_with("| BERT-base-multilingual-cased (Frozen)"));
        assert!(lines[7].starts_with("| XLM-RoBERTa-base (Unfrozen)"));
    }

    #[test]
    fn comparison_single_row_and_stable_ties() {
        let row = ComparisonRow {
            name: "only".into(),
            accuracy: 0.5,
            precision: 0.5,
            recall: 0.5,
            f1: 0.5,
        };
        let table = comparison_table(std::slice::from_ref(&row)).unwrap();
        assert_eq!(table.markdown.lines().count(), 3);
        let twin = ComparisonRow { name: "twin".into(), ..row.clone() };
        let table = comparison_table(&[row, twin]).unwrap();
        let lines: Vec<&str> = table.markdown.lines().collect();
        assert!(lines[2].starts_with("| only"));
        assert!(lines[3].starts_with("| twin"));
        assert!(comparison_table(&[]).is_err());
    }
}
