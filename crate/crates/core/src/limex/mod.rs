//! From-scratch LIME for text classifiers.
//!
//! A prediction is explained by perturbing the input at the word level:
//! build an interpretable token space, sample presence/absence masks,
//! reconstruct each perturbed text and push it through the probe, weight
//! samples by proximity to the original, then fit a weighted ridge
//! surrogate whose coefficients are the signed word attributions.
//!
//! Below `enumerate_threshold` tokens the full 2^n mask space is enumerated
//! instead of sampled, which removes Monte-Carlo noise entirely for short
//! inputs.

mod ridge;

use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{argmax_label, ClassifierProbe};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::segment::{self, CjkSegmenter, WordUnit};

pub use ridge::{fit_surrogate, RidgeFit};

/// A text decomposed into interpretable word units.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpretableText {
    pub original: String,
    pub tokens: Vec<WordUnit>,
}

impl InterpretableText {
    /// Rebuild a perturbed text: kept tokens (original spelling) joined by
    /// single spaces. The all-ones mask reconstructs the original modulo
    /// collapsed whitespace.
    pub fn reconstruct(&self, mask: &[bool]) -> String {
        debug_assert_eq!(mask.len(), self.tokens.len());
        self.tokens
            .iter()
            .zip(mask)
            .filter(|(_, &keep)| keep)
            .map(|(t, _)| &self.original[t.start..t.end])
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Split text into interpretable units: Unicode whitespace for
/// space-delimited scripts, single characters for unspaced CJK runs.
pub fn interpret_tokens(text: &str) -> Result<InterpretableText> {
    interpret_tokens_with(text, None)
}

/// As [`interpret_tokens`], with an optional external CJK segmenter that can
/// produce word-level units like 不良品 instead of single characters.
pub fn interpret_tokens_with(
    text: &str,
    segmenter: Option<&dyn CjkSegmenter>,
) -> Result<InterpretableText> {
    if text.trim().is_empty() {
        return Err(Error::Argument("cannot explain empty or whitespace-only text".into()));
    }
    let tokens = segment::word_units(text, segmenter);
    debug_assert!(!tokens.is_empty());
    Ok(InterpretableText { original: text.to_string(), tokens })
}

/// Explainer hyperparameters. Defaults follow the canonical LIME recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
    pub top_k: usize,
    pub seed: u64,
    /// At or below this token count all 2^n masks are enumerated.
    pub enumerate_threshold: usize,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_samples: 1000,
            kernel_width: 0.25,
            ridge_lambda: 1.0,
            top_k: 10,
            seed: 42,
            enumerate_threshold: 12,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 10 {
            return Err(Error::Argument("n_samples must be at least 10".into()));
        }
        if self.kernel_width <= 0.0 {
            return Err(Error::Argument("kernel width must be positive".into()));
        }
        if self.ridge_lambda < 0.0 {
            return Err(Error::Argument("ridge lambda must be non-negative".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Argument("top_k must be at least 1".into()));
        }
        // 2^24 probe calls is already far past any sensible budget
        if self.enumerate_threshold > 24 {
            return Err(Error::Argument(format!(
                "enumerate_threshold {} would enumerate 2^{} masks; the limit is 24",
                self.enumerate_threshold, self.enumerate_threshold
            )));
        }
        Ok(())
    }
}

/// Generate the perturbation mask matrix. Row 0 is always the all-ones
/// mask. For n_tokens at or below the enumeration threshold every 2^n mask
/// is produced; otherwise `n_samples` masks are drawn by removing a
/// uniformly chosen count of distinct tokens. Deterministic under the seed.
pub fn sample_masks(n_tokens: usize, config: &LimeConfig) -> Vec<Vec<bool>> {
    if n_tokens <= config.enumerate_threshold {
        let full = (1usize << n_tokens) - 1;
        let mut masks = Vec::with_capacity(1 << n_tokens);
        masks.push(vec![true; n_tokens]);
        for m in 0..(1usize << n_tokens) {
            if m == full {
                continue;
            }
            masks.push((0..n_tokens).map(|i| (m >> i) & 1 == 1).collect());
        }
        return masks;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut masks = Vec::with_capacity(config.n_samples);
    masks.push(vec![true; n_tokens]);
    while masks.len() < config.n_samples {
        let remove = rng.gen_range(1..=n_tokens);
        let mut mask = vec![true; n_tokens];
        for idx in index_sample(&mut rng, n_tokens, remove) {
            mask[idx] = false;
        }
        masks.push(mask);
    }
    masks
}

/// Exponential kernel over cosine distance between a mask and the all-ones
/// mask. The all-zeros mask is defined to sit at maximal distance 1.
pub fn proximity(mask: &[bool], sigma: f64) -> f64 {
    let kept = mask.iter().filter(|&&b| b).count();
    proximity_of_counts(kept, mask.len(), sigma)
}

pub(crate) fn proximity_of_counts(kept: usize, n: usize, sigma: f64) -> f64 {
    debug_assert!(n >= 1 && sigma > 0.0);
    let distance = if kept == 0 {
        1.0
    } else {
        // 1 - cos(mask, ones) = 1 - k / sqrt(n k) = 1 - sqrt(k / n)
        1.0 - (kept as f64 / n as f64).sqrt()
    };
    (-(distance * distance) / (sigma * sigma)).exp()
}

/// Which class the surrogate is fitted against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetClass {
    /// The probe's argmax on the original text.
    Predicted,
    Fixed(Label),
}

impl TargetClass {
    pub fn parse(s: &str) -> Result<TargetClass> {
        if s == "predicted" {
            return Ok(TargetClass::Predicted);
        }
        Label::parse(s)
            .map(TargetClass::Fixed)
            .ok_or_else(|| Error::Argument(format!("unknown target class {s:?}")))
    }
}

/// One signed word attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// Case-folded token form; `start..end` is the byte span in `text`.
    pub token: String,
    pub start: usize,
    pub end: usize,
    pub weight: f64,
}

/// The explanation for one prediction: the top-K signed attributions plus
/// surrogate diagnostics. Serialized with a stable, versioned schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub version: u32,
    pub text: String,
    pub target_class: Label,
    /// Probability of the target class on the unperturbed text.
    pub probe_probability: f64,
    pub intercept: f64,
    pub r2: f64,
    pub attributions: Vec<Attribution>,
    #[serde(default)]
    pub flags: Vec<String>,
}

pub const EXPLANATION_SCHEMA_VERSION: u32 = 1;

/// Run the full LIME pipeline for one text.
pub fn explain(
    probe: &dyn ClassifierProbe,
    text: &str,
    target: TargetClass,
    config: &LimeConfig,
) -> Result<Explanation> {
    config.validate()?;
    let interp = interpret_tokens(text)?;
    let n = interp.tokens.len();

    let original_row = probe
        .predict_proba(&[text])
        .map_err(probe_context(0))?
        .pop()
        .ok_or_else(|| Error::Probe { batch_index: 0, message: "probe returned no rows".into() })?;
    let target_class = match target {
        TargetClass::Predicted => argmax_label(&original_row),
        TargetClass::Fixed(label) => label,
    };
    let class_idx = target_class.index();

    let masks = sample_masks(n, config);
    let perturbed: Vec<String> = masks.iter().map(|m| interp.reconstruct(m)).collect();
    let refs: Vec<&str> = perturbed.iter().map(String::as_str).collect();
    let rows = probe.predict_proba(&refs).map_err(probe_context(1))?;
    if rows.len() != masks.len() {
        return Err(Error::Probe {
            batch_index: 1,
            message: format!("probe returned {} rows for {} inputs", rows.len(), masks.len()),
        });
    }
    let targets: Vec<f64> = rows.iter().map(|r| r[class_idx]).collect();
    let weights: Vec<f64> = masks.iter().map(|m| proximity(m, config.kernel_width)).collect();

    let fit = fit_surrogate(&masks, &targets, &weights, config.ridge_lambda)?;

    let mut attributions: Vec<Attribution> = interp
        .tokens
        .iter()
        .zip(&fit.coefficients)
        .map(|(tok, &weight)| Attribution {
            token: tok.text.clone(),
            start: tok.start,
            end: tok.end,
            weight,
        })
        .collect();
    attributions.sort_by(|a, b| {
        b.weight
            .abs()
            .partial_cmp(&a.weight.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.start.cmp(&b.start))
    });
    attributions.truncate(config.top_k);

    let mut flags: Vec<String> =
        fit.degenerate_columns.iter().map(|i| format!("degenerate_token:{i}")).collect();
    if fit.constant_targets {
        flags.push("constant_targets".to_string());
    }

    Ok(Explanation {
        version: EXPLANATION_SCHEMA_VERSION,
        text: text.to_string(),
        target_class,
        probe_probability: original_row[class_idx],
        intercept: fit.intercept,
        r2: fit.r2,
        attributions,
        flags,
    })
}

fn probe_context(batch_index: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        probe @ Error::Probe { .. } => probe,
        other => Error::Probe { batch_index, message: other.to_string() },
    }
}

/// Output format for [`render_explanation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderFormat {
    Json,
    Html,
    Ansi,
}

impl RenderFormat {
    pub fn parse(s: &str) -> Result<RenderFormat> {
        match s {
            "json" => Ok(RenderFormat::Json),
            "html" => Ok(RenderFormat::Html),
            "ansi" => Ok(RenderFormat::Ansi),
            other => Err(Error::Argument(format!("unknown render format {other:?}"))),
        }
    }
}

/// Render an explanation as a document in the requested format.
pub fn render_explanation(expl: &Explanation, format: RenderFormat) -> String {
    match format {
        RenderFormat::Json => {
            let mut s = serde_json::to_string_pretty(expl).expect("explanation serializes");
            s.push('\n');
            s
        }
        RenderFormat::Html => render_html(expl),
        RenderFormat::Ansi => render_ansi(expl),
    }
}

const HIGHLIGHT_FLOOR: f64 = 1e-12;

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn render_html(expl: &Explanation) -> String {
    let max_abs = expl
        .attributions
        .iter()
        .map(|a| a.weight.abs())
        .fold(0.0f64, f64::max)
        .max(HIGHLIGHT_FLOOR);
    let mut spans: Vec<&Attribution> =
        expl.attributions.iter().filter(|a| a.weight.abs() > HIGHLIGHT_FLOOR).collect();
    spans.sort_by_key(|a| a.start);

    let mut body = String::new();
    let mut cursor = 0;
    for a in &spans {
        body.push_str(&html_escape(&expl.text[cursor..a.start]));
        let alpha = 0.15 + 0.75 * a.weight.abs() / max_abs;
        let color = if a.weight >= 0.0 { "255,127,14" } else { "31,119,180" };
        body.push_str(&format!(
            "<span class=\"tok\" style=\"background-color: rgba({color},{alpha:.3});\" \
             title=\"{:+.4}\">{}</span>",
            a.weight,
            html_escape(&expl.text[a.start..a.end])
        ));
        cursor = a.end;
    }
    body.push_str(&html_escape(&expl.text[cursor..]));

    let mut table = String::new();
    for a in &expl.attributions {
        table.push_str(&format!(
            "<tr><td>{}</td><td>{:+.6}</td></tr>\n",
            html_escape(&a.token),
            a.weight
        ));
    }

    format!(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n\
         <title>explanation: {target}</title>\n\
         <style>body{{font-family:sans-serif;max-width:48em;margin:2em auto;}}\
         .tok{{padding:0 2px;border-radius:3px;}}\
         table{{border-collapse:collapse;margin-top:1em;}}\
         td{{border:1px solid #ccc;padding:2px 8px;}}</style>\n</head>\n<body>\n\
         <h2>Target class: {target} (p = {prob:.4})</h2>\n\
         <p class=\"text\">{body}</p>\n\
         <table>\n<tr><th>token</th><th>weight</th></tr>\n{table}</table>\n\
         <p>intercept {intercept:+.6}, weighted R&#178; {r2:.6}</p>\n</body>\n</html>\n",
        target = expl.target_class,
        prob = expl.probe_probability,
        body = body,
        table = table,
        intercept = expl.intercept,
        r2 = expl.r2,
    )
}

fn render_ansi(expl: &Explanation) -> String {
    let mut spans: Vec<&Attribution> =
        expl.attributions.iter().filter(|a| a.weight.abs() > HIGHLIGHT_FLOOR).collect();
    spans.sort_by_key(|a| a.start);
    let mut line = String::new();
    let mut cursor = 0;
    for a in &spans {
        line.push_str(&expl.text[cursor..a.start]);
        let color = if a.weight >= 0.0 { 208 } else { 33 };
        line.push_str(&format!("\x1b[48;5;{color}m{}\x1b[0m", &expl.text[a.start..a.end]));
        cursor = a.end;
    }
    line.push_str(&expl.text[cursor..]);

    let mut out = format!(
        "target: {} (p = {:.4})\n{line}\n",
        expl.target_class, expl.probe_probability
    );
    for a in &expl.attributions {
        out.push_str(&format!("  {:+.6}  {}\n", a.weight, a.token));
    }
    out.push_str(&format!("intercept {:+.6}  r2 {:.6}\n", expl.intercept, expl.r2));
    out
}
