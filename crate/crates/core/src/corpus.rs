//! Multilingual sentiment corpus: loading, validation, stratified splitting,
//! and language/label distribution reporting.
//!
//! The canonical on-disk format is UTF-8 JSONL with keys exactly
//! `text`, `label`, `language`, one object per line. CSV (with a header row
//! naming the same three columns) is supported as a convenience import.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentiment label. The class order (positive, neutral, negative) is pinned
/// globally; every probability row and confusion matrix follows it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Neutral,
    Negative,
}

impl Label {
    /// All labels in the pinned class order.
    pub const ALL: [Label; 3] = [Label::Positive, Label::Neutral, Label::Negative];

    /// Index of this label in the pinned class order.
    pub fn index(self) -> usize {
        match self {
            Label::Positive => 0,
            Label::Neutral => 1,
            Label::Negative => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Neutral => "neutral",
            Label::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "positive" => Some(Label::Positive),
            "neutral" => Some(Label::Neutral),
            "negative" => Some(Label::Negative),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One dataset row: a raw text with its sentiment label and language tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: Label,
    pub language: String,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: Label, language: impl Into<String>) -> Self {
        LabeledExample { text: text.into(), label, language: language.into() }
    }

    /// Check the row invariants, normalizing the language code to lowercase.
    /// Codes that do not look like ISO-639-1 (two ASCII letters) are accepted
    /// with a warning.
    fn validate(mut self, line: Option<usize>) -> Result<LabeledExample> {
        if self.text.trim().is_empty() {
            return Err(Error::validation(line, "text is empty after stripping whitespace"));
        }
        if self.language.trim().is_empty() {
            return Err(Error::validation(line, "language code is empty"));
        }
        self.language = self.language.trim().to_lowercase();
        if self.language.len() != 2 || !self.language.bytes().all(|b| b.is_ascii_lowercase()) {
            log::warn!(
                "language code {:?} does not look like ISO-639-1{}",
                self.language,
                line.map(|l| format!(" (line {l})")).unwrap_or_default()
            );
        }
        Ok(self)
    }
}

/// An ordered, validated collection of examples. Iteration order is the file
/// order and is stable across loads of the same file.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    examples: Vec<LabeledExample>,
    source_id: String,
}

/// Input file format for [`load_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// Guess the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DataFormat::Csv,
            _ => DataFormat::Jsonl,
        }
    }
}

impl Corpus {
    pub fn new(examples: Vec<LabeledExample>, source_id: impl Into<String>) -> Self {
        Corpus { examples, source_id: source_id.into() }
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledExample> {
        self.examples.iter()
    }
}

/// Load a corpus from disk, validating every record. Malformed records are
/// rejected with the 1-based line number, never silently dropped.
pub fn load_corpus(path: &Path, format: DataFormat) -> Result<Corpus> {
    let source_id = path.display().to_string();
    match format {
        DataFormat::Jsonl => {
            let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut examples = Vec::new();
            for (idx, line) in content.lines().enumerate() {
                let line_no = idx + 1;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: LabeledExample = serde_json::from_str(line)
                    .map_err(|e| Error::validation(line_no, e.to_string()))?;
                examples.push(raw.validate(Some(line_no))?);
            }
            Ok(Corpus::new(examples, source_id))
        }
        DataFormat::Csv => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let mut reader = csv::Reader::from_reader(file);
            let mut examples = Vec::new();
            for (idx, record) in reader.deserialize::<LabeledExample>().enumerate() {
                // header occupies line 1
                let line_no = idx + 2;
                let raw = record.map_err(|e| Error::validation(line_no, e.to_string()))?;
                examples.push(raw.validate(Some(line_no))?);
            }
            Ok(Corpus::new(examples, source_id))
        }
    }
}

/// Write a corpus back out as canonical JSONL. `load_corpus` of the written
/// file yields field-identical examples.
pub fn save_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = String::new();
    for ex in corpus.iter() {
        out.push_str(&serde_json::to_string(ex).expect("example serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Per-stratum allocation of `m` items to splits with the given ratios.
///
/// Uses floor allocation plus a cumulative largest-deficit rule for the
/// leftover seats, tracking targets across strata so the global split sizes
/// stay within one example of `ratio * total`.
struct Allocator {
    ratios: [f64; 3],
    processed: f64,
    allocated: [usize; 3],
}

impl Allocator {
    fn new(ratios: [f64; 3]) -> Self {
        Allocator { ratios, processed: 0.0, allocated: [0, 0, 0] }
    }

    fn allocate(&mut self, m: usize) -> [usize; 3] {
        self.processed += m as f64;
        let mut counts = [0usize; 3];
        let mut assigned = 0;
        for s in 0..3 {
            counts[s] = (self.ratios[s] * m as f64).floor() as usize;
            assigned += counts[s];
        }
        for _ in assigned..m {
            // seat goes to the split furthest behind its cumulative target
            let mut best = 0;
            let mut best_deficit = f64::NEG_INFINITY;
            for s in 0..3 {
                let deficit =
                    self.ratios[s] * self.processed - (self.allocated[s] + counts[s]) as f64;
                if deficit > best_deficit + 1e-12 {
                    best = s;
                    best_deficit = deficit;
                }
            }
            counts[best] += 1;
        }
        for s in 0..3 {
            self.allocated[s] += counts[s];
        }
        counts
    }
}

/// Split a corpus into (train, val, test), stratified by label.
///
/// The partition is disjoint and exhaustive, and identical
/// (corpus, ratios, seed) inputs always produce identical splits. Within each
/// split the original corpus order is preserved.
pub fn split_corpus(
    corpus: &Corpus,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus)> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| x <= 0.0) {
        return Err(Error::Argument(format!("split ratios must be positive, got {r:?}")));
    }
    let sum: f64 = r.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("split ratios must sum to 1, got {sum}")));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut allocator = Allocator::new(r);
    let mut membership: Vec<Option<usize>> = vec![None; corpus.len()];

    // strata processed in pinned label order for determinism
    for label in Label::ALL {
        let mut indices: Vec<usize> = corpus
            .iter()
            .enumerate()
            .filter(|(_, ex)| ex.label == label)
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            continue;
        }
        indices.shuffle(&mut rng);
        let counts = allocator.allocate(indices.len());
        let mut cursor = 0;
        for (split, &count) in counts.iter().enumerate() {
            for &idx in &indices[cursor..cursor + count] {
                membership[idx] = Some(split);
            }
            cursor += count;
        }
    }

    let mut splits: [Vec<LabeledExample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (idx, slot) in membership.iter().enumerate() {
        let split = slot.expect("every example assigned to a split");
        splits[split].push(corpus.examples[idx].clone());
    }
    let [train, val, test] = splits;
    let src = corpus.source_id();
    Ok((
        Corpus::new(train, format!("{src}#train")),
        Corpus::new(val, format!("{src}#val")),
        Corpus::new(test, format!("{src}#test")),
    ))
}

/// Language and label histograms for a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub total: usize,
    pub languages: BTreeMap<String, usize>,
    pub labels: BTreeMap<String, usize>,
}

/// Count languages and labels. Every label appears in the report even with a
/// zero count.
pub fn distribution_report(corpus: &Corpus) -> Result<DistributionReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("cannot report distributions of an empty corpus".into()));
    }
    let mut languages = BTreeMap::new();
    let mut labels: BTreeMap<String, usize> =
        Label::ALL.iter().map(|l| (l.as_str().to_string(), 0)).collect();
    for ex in corpus.iter() {
        *languages.entry(ex.language.clone()).or_insert(0) += 1;
        *labels.get_mut(ex.label.as_str()).expect("all labels present") += 1;
    }
    Ok(DistributionReport { total: corpus.len(), languages, labels })
}

/// Render one histogram as a standalone SVG bar chart.
fn bar_chart_svg(title: &str, bars: &[(String, usize)]) -> String {
    let width = 640.0;
    let height = 400.0;
    let margin_left = 60.0;
    let margin_bottom = 60.0;
    let margin_top = 40.0;
    let plot_w = width - margin_left - 20.0;
    let plot_h = height - margin_top - margin_bottom;
    let max = bars.iter().map(|(_, c)| *c).max().unwrap_or(1).max(1) as f64;
    let n = bars.len().max(1) as f64;
    let slot = plot_w / n;
    let bar_w = slot * 0.7;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        width / 2.0,
        xml_escape(title)
    ));
    for (i, (name, count)) in bars.iter().enumerate() {
        let h = (*count as f64 / max) * plot_h;
        let x = margin_left + i as f64 * slot + (slot - bar_w) / 2.0;
        let y = margin_top + (plot_h - h);
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" \
             fill=\"#4477aa\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            x + bar_w / 2.0,
            y - 4.0,
            count
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            x + bar_w / 2.0,
            margin_top + plot_h + 18.0,
            xml_escape(name)
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{margin_left}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        margin_top + plot_h,
        width - 20.0
    ));
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write the distribution artifacts: a machine-readable counts file plus one
/// bar-chart image per histogram. Re-running overwrites deterministically.
/// Returns the written paths.
pub fn emit_distribution_artifacts(
    report: &DistributionReport,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let counts_path = out_dir.join("distribution.json");
    let json = serde_json::json!({
        "total": report.total,
        "languages": report.languages,
        "labels": report.labels,
    });
    let mut file = fs::File::create(&counts_path).map_err(|e| Error::io(&counts_path, e))?;
    file.write_all(serde_json::to_string_pretty(&json).expect("report serializes").as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| Error::io(&counts_path, e))?;
    written.push(counts_path);

    // languages sorted by count desc, then name, mirroring a histogram view
    let mut lang_bars: Vec<(String, usize)> =
        report.languages.iter().map(|(k, v)| (k.clone(), *v)).collect();
    lang_bars.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let lang_path = out_dir.join("language_distribution.svg");
    fs::write(&lang_path, bar_chart_svg("Language distribution", &lang_bars))
        .map_err(|e| Error::io(&lang_path, e))?;
    written.push(lang_path);

    // labels always in pinned class order
    let label_bars: Vec<(String, usize)> = Label::ALL
        .iter()
        .map(|l| (l.as_str().to_string(), *report.labels.get(l.as_str()).unwrap_or(&0)))
        .collect();
    let label_path = out_dir.join("label_distribution.svg");
    fs::write(&label_path, bar_chart_svg("Label distribution", &label_bars))
        .map_err(|e| Error::io(&label_path, e))?;
    written.push(label_path);

    Ok(written)
}
