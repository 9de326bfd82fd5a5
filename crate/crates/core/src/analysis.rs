//! Best-of-N baseline, indistinguishable-pair taxonomy, OSPO-vs-Best-of-N
//! comparison and the local-gap density report.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, CorruptionParams, DecodeParams, ImageArtifact, ImageRequest};
use crate::pair_selection::{self, GapRecord};
use crate::perturbation::{self, DensePromptPair, DensifyMode, PerturbError, PerturbKind};
use crate::prompt_forge::{KeywordPools, StructuredPrompt};
use crate::rng;
use crate::vqa_scoring::{self, ImageScore, QuestionSet, ScoreCard, ScoringError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("answer vectors cover different question sets ({0} vs {1} questions)")]
    MismatchedQuestionSets(usize, usize),
    #[error("best-of-n needs n >= 2, got {0}")]
    InvalidN(usize),
    #[error("no scored pairs to summarize")]
    EmptyManifest,
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
}

impl From<crate::backend::BackendError> for AnalysisError {
    fn from(e: crate::backend::BackendError) -> Self {
        AnalysisError::Scoring(e.into())
    }
}

/// How much preference signal a pair of binary answer vectors carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseLabel {
    AllYes,
    AllNo,
    AllSame,
    Distinct,
}

impl CaseLabel {
    pub const ALL: [CaseLabel; 4] = [CaseLabel::AllYes, CaseLabel::AllNo, CaseLabel::AllSame, CaseLabel::Distinct];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseLabel::AllYes => "all_yes",
            CaseLabel::AllNo => "all_no",
            CaseLabel::AllSame => "all_same",
            CaseLabel::Distinct => "distinct",
        }
    }

    pub fn is_indistinguishable(self) -> bool {
        self != CaseLabel::Distinct
    }
}

/// Classifies a pair by its answers; the first matching of all-yes,
/// all-no, all-same wins.
pub fn classify_indistinguishable(best: &[bool], worst: &[bool]) -> Result<CaseLabel, AnalysisError> {
    if best.len() != worst.len() {
        return Err(AnalysisError::MismatchedQuestionSets(best.len(), worst.len()));
    }
    let label = if best.iter().chain(worst).all(|a| *a) {
        CaseLabel::AllYes
    } else if best.iter().chain(worst).all(|a| !*a) {
        CaseLabel::AllNo
    } else if best == worst {
        CaseLabel::AllSame
    } else {
        CaseLabel::Distinct
    };
    Ok(label)
}

pub fn binary_answers(score: &ImageScore) -> Vec<bool> {
    score.local.iter().map(|a| a.is_yes()).collect()
}

/// Counts of each label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCounts {
    pub all_yes: usize,
    pub all_no: usize,
    pub all_same: usize,
    pub distinct: usize,
}

impl CaseCounts {
    pub fn add(&mut self, label: CaseLabel) {
        match label {
            CaseLabel::AllYes => self.all_yes += 1,
            CaseLabel::AllNo => self.all_no += 1,
            CaseLabel::AllSame => self.all_same += 1,
            CaseLabel::Distinct => self.distinct += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.all_yes + self.all_no + self.all_same + self.distinct
    }

    pub fn indistinguishable(&self) -> usize {
        self.all_yes + self.all_no + self.all_same
    }

    /// Share of pairs without a distinguishing answer; 0 for no pairs.
    pub fn indistinguishable_fraction(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.indistinguishable() as f64 / n as f64,
        }
    }
}

/// The N images of one prompt and the extremes by correctness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestOfN {
    pub prompt: StructuredPrompt,
    /// Number of local questions answered "yes" by each image.
    pub correctness: Vec<usize>,
    pub best: usize,
    pub worst: usize,
    pub best_score: ImageScore,
    pub worst_score: ImageScore,
}

impl BestOfN {
    pub fn best_answers(&self) -> Vec<bool> {
        binary_answers(&self.best_score)
    }

    pub fn worst_answers(&self) -> Vec<bool> {
        binary_answers(&self.worst_score)
    }

    pub fn label(&self) -> CaseLabel {
        classify_indistinguishable(&self.best_answers(), &self.worst_answers()).expect("same question set")
    }

    pub fn gap(&self) -> GapPoint {
        GapPoint {
            delta_local: self.best_score.s_local - self.worst_score.s_local,
            delta_global: self.best_score.s_global - self.worst_score.s_global,
        }
    }
}

fn sample_key(index: usize) -> String {
    format!("p{index:05}")
}

fn render_image(
    backend: &dyn Backend,
    id: String,
    source: &str,
    prompt: &StructuredPrompt,
    text: &str,
    decode: DecodeParams,
    corruption: CorruptionParams,
) -> Result<ImageArtifact, AnalysisError> {
    Ok(backend.generate_image(&ImageRequest {
        id: &id,
        source_prompt_id: source,
        prompt,
        text,
        decode,
        corruption,
    })?)
}

/// Best and worst of `n` images of one prompt. Images are ranked by the
/// number of "yes" answers to the prompt's local questions; ties go to the
/// lower seed index.
pub fn best_of_n_one(
    prompt: &StructuredPrompt,
    key: &str,
    n: usize,
    decode: DecodeParams,
    corruption: CorruptionParams,
    backend: &dyn Backend,
    seed: u64,
) -> Result<BestOfN, AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::InvalidN(n));
    }
    let questions = vqa_scoring::decompose_questions(prompt)?;
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let d = decode.with_seed(rng::derive_seed(seed, &["best_of_n", key, &i.to_string()]));
        let image = render_image(backend, format!("{key}-bon{i}"), key, prompt, &prompt.surface, d, corruption)?;
        scores.push(vqa_scoring::score_image(&image, &questions, backend)?);
    }
    let correctness: Vec<usize> = scores.iter().map(|s| binary_answers(s).iter().filter(|a| **a).count()).collect();
    let mut best = 0;
    let mut worst = 0;
    for (i, c) in correctness.iter().enumerate() {
        if *c > correctness[best] {
            best = i;
        }
        if *c < correctness[worst] {
            worst = i;
        }
    }
    Ok(BestOfN {
        prompt: prompt.clone(),
        best,
        worst,
        best_score: scores[best].clone(),
        worst_score: scores[worst].clone(),
        correctness,
    })
}

pub fn run_best_of_n(
    prompts: &[StructuredPrompt],
    n: usize,
    decode: DecodeParams,
    corruption: CorruptionParams,
    backend: &dyn Backend,
    seed: u64,
) -> Result<Vec<BestOfN>, AnalysisError> {
    prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| best_of_n_one(p, &sample_key(i), n, decode, corruption, backend, seed))
        .collect()
}

/// One OSPO candidate: a negative prompt, its densified pair and the scored
/// images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OspoCandidate {
    pub kind: PerturbKind,
    pub dense: DensePromptPair,
    pub card: ScoreCard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OspoSample {
    pub prompt: StructuredPrompt,
    pub candidates: Vec<OspoCandidate>,
    pub selection: Option<pair_selection::SelectionResult>,
}

impl OspoSample {
    /// The candidate used when the sample is summarized as a single pair:
    /// the selected one, or for discarded samples the one with the largest
    /// local gap (earliest kind on ties).
    pub fn representative(&self) -> Option<&OspoCandidate> {
        let chosen = self.selection.as_ref().and_then(|s| s.chosen);
        if let Some(kind) = chosen {
            return self.candidates.iter().find(|c| c.kind == kind);
        }
        let mut best: Option<&OspoCandidate> = None;
        for c in &self.candidates {
            if best.is_none_or(|b| c.card.delta_local() > b.card.delta_local()) {
                best = Some(c);
            }
        }
        best
    }
}

/// Parameters shared by the comparison runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareParams {
    pub n: usize,
    pub decode: DecodeParams,
    pub corruption: CorruptionParams,
    pub epsilon: f64,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            n: 10,
            decode: DecodeParams::default(),
            corruption: CorruptionParams::default(),
            epsilon: pair_selection::DEFAULT_EPSILON,
        }
    }
}

/// Builds, scores and selects the OSPO candidates for one prompt with rule
/// densification. Both images of a pair share a decode seed.
pub fn ospo_sample(
    prompt: &StructuredPrompt,
    key: &str,
    params: &CompareParams,
    pools: &KeywordPools,
    backend: &dyn Backend,
    seed: u64,
) -> Result<OspoSample, AnalysisError> {
    let questions: QuestionSet = vqa_scoring::decompose_questions(prompt)?;
    let mut candidates = Vec::new();
    for kind in PerturbKind::ALL {
        let pseed = rng::derive_seed(seed, &["perturb", key]);
        let negative = match perturbation::perturb(prompt, kind, pools, pseed) {
            Ok(n) => n,
            Err(PerturbError::NotPerturbable { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let dseed = rng::derive_seed(seed, &["densify", key, kind.as_str()]);
        let dense = perturbation::densify_pair(prompt, &negative, kind, DensifyMode::Rule, dseed)?;
        let decode = params
            .decode
            .with_seed(rng::derive_seed(seed, &["images", key, kind.as_str()]));
        let w = render_image(
            backend,
            format!("{key}-{kind}-w"),
            key,
            &dense.base_dense,
            &dense.base_text,
            decode,
            params.corruption,
        )?;
        let l = render_image(
            backend,
            format!("{key}-{kind}-l"),
            key,
            &dense.negative_dense,
            &dense.negative_text,
            decode,
            params.corruption,
        )?;
        let card = vqa_scoring::score_pair(&w, &l, &questions, backend)?;
        candidates.push(OspoCandidate { kind, dense, card });
    }
    let gaps: Vec<GapRecord> = candidates.iter().map(|c| GapRecord::from_card(c.kind, &c.card)).collect();
    let selection = if gaps.is_empty() {
        None
    } else {
        Some(pair_selection::select_pair(&gaps, params.epsilon).expect("non-empty gaps, valid epsilon"))
    };
    Ok(OspoSample {
        prompt: prompt.clone(),
        candidates,
        selection,
    })
}

/// A (δ_local, δ_global) observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub delta_local: f64,
    pub delta_global: f64,
}

/// Mean local gap over points whose global gap is below `threshold`.
pub fn mean_local_gap_below(points: &[GapPoint], threshold: f64) -> Option<f64> {
    let sel: Vec<f64> = points
        .iter()
        .filter(|p| p.delta_global < threshold)
        .map(|p| p.delta_local)
        .collect();
    (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub prompt_index: usize,
    pub pipeline: String,
    pub label: CaseLabel,
    pub kind: Option<PerturbKind>,
    pub delta_local: f64,
    pub delta_global: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub prompts: usize,
    pub best_of_n: CaseCounts,
    pub ospo: CaseCounts,
    /// Prompts for which no perturbation applied.
    pub ospo_unavailable: usize,
    pub ospo_discarded: usize,
    pub best_of_n_fraction: f64,
    pub ospo_fraction: f64,
    /// Best-of-N fraction over OSPO fraction (infinite when OSPO is 0).
    pub ratio: f64,
    pub best_of_n_gaps: Vec<GapPoint>,
    pub ospo_gaps: Vec<GapPoint>,
    pub rows: Vec<CaseRow>,
}

impl ComparisonReport {
    pub fn cases_csv(&self) -> String {
        let mut out = String::from("prompt_index,pipeline,label,kind,delta_local,delta_global\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.prompt_index,
                r.pipeline,
                r.label.as_str(),
                r.kind.map_or("", |k| k.as_str()),
                r.delta_local,
                r.delta_global
            );
        }
        out
    }
}

/// Indistinguishable-pair fractions of Best-of-N and OSPO pairs built from
/// the same prompts and image parameters.
pub fn compare_pipelines(
    prompts: &[StructuredPrompt],
    params: &CompareParams,
    pools: &KeywordPools,
    backend: &dyn Backend,
    seed: u64,
) -> Result<ComparisonReport, AnalysisError> {
    let bon = run_best_of_n(prompts, params.n, params.decode, params.corruption, backend, seed)?;
    let ospo: Vec<OspoSample> = prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| ospo_sample(p, &sample_key(i), params, pools, backend, seed))
        .collect::<Result<_, _>>()?;

    let mut report = ComparisonReport {
        prompts: prompts.len(),
        best_of_n: CaseCounts::default(),
        ospo: CaseCounts::default(),
        ospo_unavailable: 0,
        ospo_discarded: 0,
        best_of_n_fraction: 0.0,
        ospo_fraction: 0.0,
        ratio: 0.0,
        best_of_n_gaps: Vec::new(),
        ospo_gaps: Vec::new(),
        rows: Vec::new(),
    };
    for (i, b) in bon.iter().enumerate() {
        let label = b.label();
        let gap = b.gap();
        report.best_of_n.add(label);
        report.best_of_n_gaps.push(gap);
        report.rows.push(CaseRow {
            prompt_index: i,
            pipeline: "best_of_n".into(),
            label,
            kind: None,
            delta_local: gap.delta_local,
            delta_global: gap.delta_global,
        });
    }
    for (i, s) in ospo.iter().enumerate() {
        if s.selection.as_ref().is_some_and(|r| r.is_discarded()) {
            report.ospo_discarded += 1;
        }
        let Some(c) = s.representative() else {
            report.ospo_unavailable += 1;
            continue;
        };
        let label = classify_indistinguishable(&binary_answers(&c.card.winning), &binary_answers(&c.card.losing))?;
        let gap = GapPoint {
            delta_local: c.card.delta_local(),
            delta_global: c.card.delta_global(),
        };
        report.ospo.add(label);
        report.ospo_gaps.push(gap);
        report.rows.push(CaseRow {
            prompt_index: i,
            pipeline: "ospo".into(),
            label,
            kind: Some(c.kind),
            delta_local: gap.delta_local,
            delta_global: gap.delta_global,
        });
    }
    report.best_of_n_fraction = report.best_of_n.indistinguishable_fraction();
    report.ospo_fraction = report.ospo.indistinguishable_fraction();
    report.ratio = if report.ospo_fraction > 0.0 {
        report.best_of_n_fraction / report.ospo_fraction
    } else {
        f64::INFINITY
    };
    Ok(report)
}

/// Best-of-N indistinguishable fraction at each sampling temperature.
pub fn temperature_sweep(
    prompts: &[StructuredPrompt],
    temperatures: &[f64],
    params: &CompareParams,
    backend: &dyn Backend,
    seed: u64,
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    temperatures
        .iter()
        .map(|&t| {
            let decode = DecodeParams {
                temperature: t,
                ..params.decode
            };
            let runs = run_best_of_n(prompts, params.n, decode, params.corruption, backend, seed)?;
            let mut counts = CaseCounts::default();
            for r in &runs {
                counts.add(r.label());
            }
            Ok((t, counts.indistinguishable_fraction()))
        })
        .collect()
}

pub const GLOBAL_BIN_WIDTH: f64 = 0.25;
pub const GLOBAL_BINS: usize = 16;
pub const LOCAL_BINS: usize = 20;
const GAP_MIN: f64 = -2.0;
const GAP_MAX: f64 = 2.0;

fn bin_of(x: f64, bins: usize) -> usize {
    let width = (GAP_MAX - GAP_MIN) / bins as f64;
    (((x - GAP_MIN) / width).floor().max(0.0) as usize).min(bins - 1)
}

/// Local-gap histograms within global-gap intervals of width 0.25 over
/// [−2, 2]; the local axis uses 20 bins over the same range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapHistogram {
    pub global_edges: Vec<f64>,
    pub local_edges: Vec<f64>,
    /// `counts[g][l]`.
    pub counts: Vec<Vec<usize>>,
    /// Per global bin, counts normalized to a density over the local axis.
    pub densities: Vec<Vec<f64>>,
    pub total: usize,
}

fn edges(bins: usize) -> Vec<f64> {
    let width = (GAP_MAX - GAP_MIN) / bins as f64;
    (0..=bins).map(|i| GAP_MIN + width * i as f64).collect()
}

pub fn gap_density_report(points: &[GapPoint]) -> Result<GapHistogram, AnalysisError> {
    if points.is_empty() {
        return Err(AnalysisError::EmptyManifest);
    }
    let mut counts = vec![vec![0usize; LOCAL_BINS]; GLOBAL_BINS];
    for p in points {
        counts[bin_of(p.delta_global, GLOBAL_BINS)][bin_of(p.delta_local, LOCAL_BINS)] += 1;
    }
    let local_width = (GAP_MAX - GAP_MIN) / LOCAL_BINS as f64;
    let densities = counts
        .iter()
        .map(|row| {
            let n: usize = row.iter().sum();
            row.iter()
                .map(|c| if n == 0 { 0.0 } else { *c as f64 / (n as f64 * local_width) })
                .collect()
        })
        .collect();
    Ok(GapHistogram {
        global_edges: edges(GLOBAL_BINS),
        local_edges: edges(LOCAL_BINS),
        counts,
        densities,
        total: points.len(),
    })
}

impl GapHistogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("global_lo,global_hi,local_lo,local_hi,count,density\n");
        for (g, row) in self.counts.iter().enumerate() {
            for (l, c) in row.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    self.global_edges[g],
                    self.global_edges[g + 1],
                    self.local_edges[l],
                    self.local_edges[l + 1],
                    c,
                    self.densities[g][l]
                );
            }
        }
        out
    }
}
