use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, Source};
use super::manifest::{Manifest, StageMarker};
use super::records::*;
use super::{PipelineError, Stage};
use crate::analysis::{self, CaseCounts, GapPoint};
use crate::backend::{Backend, DecodeParams, ImageArtifact, ImageRequest};
use crate::pair_selection::{self, GapRecord};
use crate::perturbation::{self, DensePromptPair, DensifyMode, PerturbError, PerturbKind};
use crate::prompt_forge::{self, Category, KeywordPools, PoolSource, PoolTargets, PromptMode, StructuredPrompt};
use crate::rng;
use crate::simpo_trainer::{self, PreferenceRecord};
use crate::vqa_scoring::{self, ScoreCard};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for per-sample work.
    pub workers: usize,
    /// Continue an interrupted stage and repair a torn trailing line.
    pub resume: bool,
    /// Stop with `Halted` after this many records; simulates a crash.
    pub halt_after_records: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            resume: false,
            halt_after_records: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub processed: usize,
    pub skipped: usize,
    pub discarded: usize,
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    backend: &'a dyn Backend,
    manifest: Manifest,
    options: RunOptions,
    pool: rayon::ThreadPool,
    written: usize,
}

/// Runs every stage up to and including `last`.
pub fn run_through(config: &PipelineConfig, last: Stage, options: RunOptions) -> Result<Vec<StageSummary>, PipelineError> {
    let backend = config.build_backend()?;
    let mut runner = Runner::new(config, backend.as_ref(), options)?;
    let mut out = Vec::new();
    for stage in Stage::ALL.into_iter().take_while(|s| *s <= last) {
        out.push(runner.run(stage)?);
    }
    Ok(out)
}

/// Runs one stage; every earlier stage must be complete.
pub fn run_stage(config: &PipelineConfig, stage: Stage, options: RunOptions) -> Result<StageSummary, PipelineError> {
    let backend = config.build_backend()?;
    let mut runner = Runner::new(config, backend.as_ref(), options)?;
    runner.run(stage)
}

/// Run with an explicit backend (tests and embedding).
pub fn run_with_backend(
    config: &PipelineConfig,
    backend: &dyn Backend,
    last: Stage,
    options: RunOptions,
) -> Result<Vec<StageSummary>, PipelineError> {
    let mut runner = Runner::new(config, backend, options)?;
    let mut out = Vec::new();
    for stage in Stage::ALL.into_iter().take_while(|s| *s <= last) {
        out.push(runner.run(stage)?);
    }
    Ok(out)
}

fn kind_seed(seed: u64, stage: &str, id: &str, kind: PerturbKind) -> u64 {
    rng::derive_seed(seed, &[stage, id, kind.as_str()])
}

impl<'a> Runner<'a> {
    fn new(config: &'a PipelineConfig, backend: &'a dyn Backend, options: RunOptions) -> Result<Self, PipelineError> {
        config.validate()?;
        let manifest = Manifest::open(&config.manifest_path(), &config.hash(), options.resume)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers.max(1))
            .build()
            .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
        Ok(Self {
            config,
            backend,
            manifest,
            options,
            pool,
            written: 0,
        })
    }

    fn append<T: Serialize>(&mut self, stage: Stage, id: &str, data: &T) -> Result<(), PipelineError> {
        self.manifest.append(stage, id, data)?;
        self.written += 1;
        if self.options.halt_after_records.is_some_and(|limit| self.written >= limit) {
            return Err(PipelineError::Halted(self.written));
        }
        Ok(())
    }

    fn run(&mut self, stage: Stage) -> Result<StageSummary, PipelineError> {
        if let Some(prev) = stage.previous() {
            if !self.manifest.is_done(prev) {
                return Err(PipelineError::StageIncomplete {
                    stage: prev,
                    reason: format!("required before {stage}"),
                });
            }
        }
        if self.manifest.is_done(stage) {
            let skipped = if stage.is_per_sample() {
                self.manifest.records(stage).count()
            } else {
                1
            };
            return Ok(StageSummary {
                stage,
                processed: 0,
                skipped,
                discarded: 0,
            });
        }
        if self.manifest.touched(stage) && !self.options.resume {
            return Err(PipelineError::Interrupted(stage));
        }
        match stage {
            Stage::Prompts => self.prompts(),
            Stage::Perturb => self.per_sample(stage, |m, c, b, id| perturb_one(m, c, b, id)),
            Stage::Densify => self.per_sample(stage, densify_one),
            Stage::Images => self.per_sample(stage, images_one),
            Stage::Score => self.per_sample(stage, score_one),
            Stage::Select => self.per_sample(stage, select_one),
            Stage::Train => self.train(),
            Stage::Analyze => self.analyze(),
        }
    }

    fn pools(&self) -> Result<KeywordPools, PipelineError> {
        Ok(self.manifest.get::<PoolsRecord>(Stage::Prompts, POOLS_ID)?.pools)
    }

    fn prompts(&mut self) -> Result<StageSummary, PipelineError> {
        let cfg = self.config;
        let mut processed = 0;
        let mut skipped = 0;
        if !self.manifest.has(Stage::Prompts, POOLS_ID) {
            let source = match cfg.generation.pools {
                Source::Rules => PoolSource::Builtin,
                Source::Backend => PoolSource::Backend {
                    backend: self.backend,
                    max_attempts: cfg.generation.max_attempts,
                },
            };
            let pools = prompt_forge::build_keyword_pools(source, rng::derive_seed(cfg.seed, &["pools"]), PoolTargets::default())?;
            self.append(Stage::Prompts, POOLS_ID, &PoolsRecord { pools })?;
        }
        let pools = self.pools()?;
        for category in Category::ALL {
            let count = cfg.categories.of(category);
            if count == 0 {
                continue;
            }
            let mode = match cfg.generation.prompts {
                Source::Rules => PromptMode::Structured,
                Source::Backend => PromptMode::Backend {
                    backend: self.backend,
                    max_attempts_per_prompt: cfg.generation.max_attempts,
                },
            };
            let prompts = prompt_forge::generate_base_prompts(category, count, &pools, rng::derive_seed(cfg.seed, &["prompts"]), mode)?;
            for (i, prompt) in prompts.into_iter().enumerate() {
                let id = format!("{}-{i:05}", category.as_str());
                if self.manifest.has(Stage::Prompts, &id) {
                    skipped += 1;
                    continue;
                }
                self.append(Stage::Prompts, &id, &PromptRecord { category, prompt })?;
                processed += 1;
            }
        }
        self.finish(Stage::Prompts, processed, skipped)
    }

    fn finish(&mut self, stage: Stage, processed: usize, skipped: usize) -> Result<StageSummary, PipelineError> {
        let records = self.manifest.records(stage).count();
        let discarded = if stage == Stage::Select {
            self.manifest
                .records(stage)
                .filter(|e| e.data.get("discarded").is_some_and(|d| !d.is_null()))
                .count()
        } else {
            0
        };
        self.manifest.mark_done(stage, StageMarker { records, discarded })?;
        Ok(StageSummary {
            stage,
            processed,
            skipped,
            discarded,
        })
    }

    fn per_sample<T, F>(&mut self, stage: Stage, work: F) -> Result<StageSummary, PipelineError>
    where
        T: Serialize + Send,
        F: Fn(&Manifest, &PipelineConfig, &dyn Backend, &str) -> Result<T, PipelineError> + Sync,
    {
        let ids = self.manifest.sample_ids();
        let pending: Vec<String> = ids.iter().filter(|id| !self.manifest.has(stage, id)).cloned().collect();
        let skipped = ids.len() - pending.len();
        let chunk = self.options.workers.max(1) * 4;
        let mut processed = 0;
        for batch in pending.chunks(chunk) {
            let results: Vec<Result<T, PipelineError>> = {
                let (m, c, b) = (&self.manifest, self.config, self.backend);
                self.pool
                    .install(|| batch.par_iter().map(|id| work(m, c, b, id)).collect())
            };
            for (id, result) in batch.iter().zip(results) {
                self.append(stage, id, &result?)?;
                processed += 1;
            }
        }
        self.finish(stage, processed, skipped)
    }

    fn train(&mut self) -> Result<StageSummary, PipelineError> {
        let cfg = self.config;
        let policy = cfg.simpo.policy();
        let mut dataset = Vec::new();
        let mut skipped_pairs = Vec::new();
        for id in self.manifest.sample_ids() {
            let select: SelectRecord = self.manifest.get(Stage::Select, &id)?;
            let Some(chosen) = select.chosen else { continue };
            let images: ImagesRecord = self.manifest.get(Stage::Images, &id)?;
            let prompt: PromptRecord = self.manifest.get(Stage::Prompts, &id)?;
            let tokens = |image_id: &str| -> Result<Vec<u32>, String> {
                images
                    .find(image_id)
                    .and_then(ImageArtifact::token_sequence)
                    .map(<[u32]>::to_vec)
                    .ok_or_else(|| format!("image {image_id} has no token sequence"))
            };
            let record = tokens(&chosen.winning_id).and_then(|w| {
                let l = tokens(&chosen.losing_id)?;
                let mut r = PreferenceRecord::new(&policy, id.clone(), prompt.prompt.surface.clone(), w, l);
                r.kind = chosen.kind;
                r.t_score = chosen.t_score;
                r.validate(&policy).map(|_| r)
            });
            match record {
                Ok(r) => dataset.push(r),
                Err(reason) => skipped_pairs.push((id.clone(), reason)),
            }
        }
        let mut summary = TrainRecord {
            records: dataset.len(),
            skipped: skipped_pairs,
            steps: 0,
            initial_loss: None,
            final_loss: None,
            initial_margin: None,
            final_margin: None,
            checkpoint: None,
            trace: None,
        };
        if !dataset.is_empty() {
            let (trained, trace) = simpo_trainer::train(policy, &dataset, &cfg.simpo)?;
            fs::create_dir_all(&cfg.output_dir)?;
            let steps = trace.last().map_or(0, |p| p.step);
            simpo_trainer::save_checkpoint(&trained, steps, &cfg.output_dir.join("policy.bin"))?;
            simpo_trainer::write_trace_csv(&trace, &cfg.output_dir.join("trace.csv"))?;
            summary.steps = steps;
            summary.initial_loss = trace.first().map(|p| p.loss);
            summary.final_loss = trace.last().map(|p| p.loss);
            summary.initial_margin = trace.first().map(|p| p.mean_margin);
            summary.final_margin = trace.last().map(|p| p.mean_margin);
            summary.checkpoint = Some("policy.bin".into());
            summary.trace = Some("trace.csv".into());
        }
        self.append(Stage::Train, TRAIN_ID, &summary)?;
        self.finish(Stage::Train, 1, 0)
    }

    fn analyze(&mut self) -> Result<StageSummary, PipelineError> {
        let cfg = self.config;
        let (points, cases) = selected_pairs(&self.manifest)?;
        let mut counts = CaseCounts::default();
        let mut csv = String::from("sample_id,label,kind,delta_local,delta_global\n");
        for (id, label, kind, gap) in &cases {
            counts.add(*label);
            csv.push_str(&format!(
                "{id},{},{},{},{}\n",
                label.as_str(),
                kind.map_or("", |k| k.as_str()),
                gap.delta_local,
                gap.delta_global
            ));
        }
        fs::create_dir_all(&cfg.output_dir)?;
        fs::write(cfg.output_dir.join("cases.csv"), csv)?;
        if !points.is_empty() {
            let hist = analysis::gap_density_report(&points)?;
            fs::write(cfg.output_dir.join("gap_density.csv"), hist.to_csv())?;
        }
        let record = AnalyzeRecord {
            pairs: cases.len(),
            indistinguishable: counts.indistinguishable(),
            mean_local_gap_below_half: analysis::mean_local_gap_below(&points, 0.5),
            gap_density: "gap_density.csv".into(),
            cases: "cases.csv".into(),
        };
        self.append(Stage::Analyze, ANALYSIS_ID, &record)?;
        self.finish(Stage::Analyze, 1, 0)
    }
}

type CaseEntry = (String, analysis::CaseLabel, Option<PerturbKind>, GapPoint);

/// Gap points and case labels of every selected pair in the manifest.
pub(crate) fn selected_pairs(manifest: &Manifest) -> Result<(Vec<GapPoint>, Vec<CaseEntry>), PipelineError> {
    let mut points = Vec::new();
    let mut cases = Vec::new();
    for id in manifest.sample_ids() {
        let select: SelectRecord = manifest.get(Stage::Select, &id)?;
        let Some(chosen) = select.chosen else { continue };
        let score: ScoreRecord = manifest.get(Stage::Score, &id)?;
        let images: ImagesRecord = manifest.get(Stage::Images, &id)?;
        let (w, l) = match chosen.kind {
            Some(kind) if select.mode != SelectMode::Baseline => {
                let card = &score
                    .cards
                    .iter()
                    .find(|c| c.kind == kind)
                    .ok_or_else(|| PipelineError::StageIncomplete {
                        stage: Stage::Score,
                        reason: format!("{id} has no card for {kind}"),
                    })?
                    .card;
                (card.winning.clone(), card.losing.clone())
            }
            _ => {
                let pos = |image_id: &str| images.baseline.iter().position(|a| a.id == image_id);
                let (Some(wi), Some(li)) = (pos(&chosen.winning_id), pos(&chosen.losing_id)) else {
                    continue;
                };
                (score.baseline[wi].clone(), score.baseline[li].clone())
            }
        };
        let label = analysis::classify_indistinguishable(&analysis::binary_answers(&w), &analysis::binary_answers(&l))?;
        let gap = GapPoint {
            delta_local: chosen.delta_local,
            delta_global: chosen.delta_global,
        };
        points.push(gap);
        cases.push((id, label, chosen.kind, gap));
    }
    Ok((points, cases))
}

fn base_prompt(m: &Manifest, id: &str) -> Result<StructuredPrompt, PipelineError> {
    Ok(m.get::<PromptRecord>(Stage::Prompts, id)?.prompt)
}

fn perturb_one(m: &Manifest, cfg: &PipelineConfig, _: &dyn Backend, id: &str) -> Result<PerturbRecord, PipelineError> {
    if cfg.baseline_images() > 0 {
        return Ok(PerturbRecord { candidates: Vec::new() });
    }
    let base = base_prompt(m, id)?;
    let pools = m.get::<PoolsRecord>(Stage::Prompts, POOLS_ID)?.pools;
    let seed = rng::derive_seed(cfg.seed, &["perturb", id]);
    let candidates = PerturbKind::ALL
        .into_iter()
        .map(|kind| match perturbation::perturb(&base, kind, &pools, seed) {
            Ok(negative) => Ok(NegativeCandidate {
                kind,
                negative: Some(negative),
                skipped: None,
            }),
            Err(e @ PerturbError::NotPerturbable { .. }) => Ok(NegativeCandidate {
                kind,
                negative: None,
                skipped: Some(e.to_string()),
            }),
            Err(e) => Err(PipelineError::from(e)),
        })
        .collect::<Result<_, _>>()?;
    Ok(PerturbRecord { candidates })
}

fn densify_one(m: &Manifest, cfg: &PipelineConfig, backend: &dyn Backend, id: &str) -> Result<DensifyRecord, PipelineError> {
    let base = base_prompt(m, id)?;
    if cfg.baseline_images() > 0 {
        let dense = if cfg.ablations.no_densification {
            base.without_context()
        } else {
            base.with_context(perturbation::rule_context(rng::derive_seed(cfg.seed, &["densify", id])))
        };
        return Ok(DensifyRecord {
            pairs: Vec::new(),
            skipped: Vec::new(),
            baseline: Some(BaselinePrompt {
                text: dense.surface.clone(),
                dense,
            }),
        });
    }
    let perturbed: PerturbRecord = m.get(Stage::Perturb, id)?;
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for c in perturbed.candidates {
        let Some(negative) = c.negative else {
            skipped.push(SkippedCandidate {
                kind: c.kind,
                reason: c.skipped.unwrap_or_default(),
            });
            continue;
        };
        if cfg.ablations.no_densification {
            pairs.push(DensePromptPair::raw(&base, &negative, c.kind));
            continue;
        }
        let mode = match cfg.generation.densify {
            Source::Rules => DensifyMode::Rule,
            Source::Backend => DensifyMode::Backend {
                backend,
                fallback: cfg.generation.densify_fallback,
            },
        };
        match perturbation::densify_pair(&base, &negative, c.kind, mode, kind_seed(cfg.seed, "densify", id, c.kind)) {
            Ok(pair) => pairs.push(pair),
            Err(e @ (PerturbError::BindingViolation(_) | PerturbError::TranscriptParse(_))) => skipped.push(SkippedCandidate {
                kind: c.kind,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(DensifyRecord {
        pairs,
        skipped,
        baseline: None,
    })
}

fn render(
    backend: &dyn Backend,
    cfg: &PipelineConfig,
    id: String,
    source: &str,
    prompt: &StructuredPrompt,
    text: &str,
    decode: DecodeParams,
) -> Result<ImageArtifact, PipelineError> {
    Ok(backend.generate_image(&ImageRequest {
        id: &id,
        source_prompt_id: source,
        prompt,
        text,
        decode,
        corruption: cfg.corruption,
    })?)
}

fn images_one(m: &Manifest, cfg: &PipelineConfig, backend: &dyn Backend, id: &str) -> Result<ImagesRecord, PipelineError> {
    let dense: DensifyRecord = m.get(Stage::Densify, id)?;
    if let Some(b) = &dense.baseline {
        let baseline = (0..cfg.baseline_images())
            .map(|i| {
                let decode = cfg.decode.with_seed(rng::derive_seed(cfg.seed, &["images", id, "baseline", &i.to_string()]));
                render(backend, cfg, format!("{id}-n{i}"), id, &b.dense, &b.text, decode)
            })
            .collect::<Result<_, _>>()?;
        return Ok(ImagesRecord {
            pairs: Vec::new(),
            baseline,
        });
    }
    let pairs = dense
        .pairs
        .iter()
        .map(|pair| {
            // Both sides share a decode seed so only the prompt differs.
            let decode = cfg.decode.with_seed(kind_seed(cfg.seed, "images", id, pair.kind));
            Ok(PairImages {
                kind: pair.kind,
                winning: render(backend, cfg, format!("{id}-{}-w", pair.kind), id, &pair.base_dense, &pair.base_text, decode)?,
                losing: render(backend, cfg, format!("{id}-{}-l", pair.kind), id, &pair.negative_dense, &pair.negative_text, decode)?,
            })
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok(ImagesRecord {
        pairs,
        baseline: Vec::new(),
    })
}

fn score_one(m: &Manifest, cfg: &PipelineConfig, backend: &dyn Backend, id: &str) -> Result<ScoreRecord, PipelineError> {
    let base = base_prompt(m, id)?;
    let images: ImagesRecord = m.get(Stage::Images, id)?;
    let questions = match cfg.generation.questions {
        Source::Rules => vqa_scoring::decompose_questions(&base)?,
        Source::Backend => vqa_scoring::questions_from_backend(&base, backend, rng::derive_seed(cfg.seed, &["questions", id]))?,
    };
    let cards = images
        .pairs
        .iter()
        .map(|p| {
            Ok(KindCard {
                kind: p.kind,
                card: vqa_scoring::score_pair(&p.winning, &p.losing, &questions, backend)?,
            })
        })
        .collect::<Result<_, PipelineError>>()?;
    let baseline = images
        .baseline
        .iter()
        .map(|a| vqa_scoring::score_image(a, &questions, backend))
        .collect::<Result<_, _>>()?;
    Ok(ScoreRecord {
        questions,
        cards,
        baseline,
    })
}

fn select_one(m: &Manifest, cfg: &PipelineConfig, _: &dyn Backend, id: &str) -> Result<SelectRecord, PipelineError> {
    let score: ScoreRecord = m.get(Stage::Score, id)?;
    let images: ImagesRecord = m.get(Stage::Images, id)?;
    if !images.baseline.is_empty() {
        return Ok(select_baseline(&score, &images));
    }
    let gaps: Vec<GapRecord> = score.cards.iter().map(|c| GapRecord::from_card(c.kind, &c.card)).collect();
    let mode = if cfg.ablations.random_selection {
        SelectMode::Random
    } else {
        SelectMode::Ospo
    };
    let result = match mode {
        SelectMode::Random => pair_selection::select_random(&gaps, cfg.epsilon, rng::derive_seed(cfg.seed, &["select", id])),
        _ => pair_selection::select_pair(&gaps, cfg.epsilon),
    };
    let selection = match result {
        Ok(s) => s,
        Err(pair_selection::SelectionError::NoCandidates) => {
            return Ok(SelectRecord {
                mode,
                gaps,
                selection: None,
                chosen: None,
                discarded: Some("no_candidates".into()),
            })
        }
        Err(e) => return Err(PipelineError::Config(e.to_string())),
    };
    let chosen = selection.chosen.map(|kind| {
        let pair = images.pairs.iter().find(|p| p.kind == kind).expect("scored pairs have images");
        let card: &ScoreCard = &score.cards.iter().find(|c| c.kind == kind).expect("selected from cards").card;
        ChosenPair {
            kind: Some(kind),
            winning_id: pair.winning.id.clone(),
            losing_id: pair.losing.id.clone(),
            delta_local: card.delta_local(),
            delta_global: card.delta_global(),
            t_score: selection.t_scores[PerturbKind::ALL.iter().position(|k| *k == kind).expect("kind")],
        }
    });
    Ok(SelectRecord {
        mode,
        gaps,
        discarded: selection.discarded.clone(),
        selection: Some(selection),
        chosen,
    })
}

/// Best and worst baseline images by local score; ties go to the lower
/// index. Pairs without a local-score difference are discarded.
fn select_baseline(score: &ScoreRecord, images: &ImagesRecord) -> SelectRecord {
    let s = &score.baseline;
    let mut best = 0;
    let mut worst = 0;
    for i in 0..s.len() {
        if s[i].s_local > s[best].s_local {
            best = i;
        }
        if s[i].s_local < s[worst].s_local {
            worst = i;
        }
    }
    let delta_local = s[best].s_local - s[worst].s_local;
    let delta_global = s[best].s_global - s[worst].s_global;
    let positive = delta_local > 0.0;
    SelectRecord {
        mode: SelectMode::Baseline,
        gaps: Vec::new(),
        selection: None,
        chosen: positive.then(|| ChosenPair {
            kind: None,
            winning_id: images.baseline[best].id.clone(),
            losing_id: images.baseline[worst].id.clone(),
            delta_local,
            delta_global,
            t_score: None,
        }),
        discarded: (!positive).then(|| pair_selection::NO_POSITIVE_LOCAL_GAP.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Simulator;

    fn config(dir: &std::path::Path) -> PipelineConfig {
        PipelineConfig {
            categories: super::super::CategoryCounts {
                attribute: 6,
                layout: 6,
                non_spatial: 4,
                complex: 4,
            },
            simpo: crate::simpo_trainer::SimpoConfig {
                epochs: 3,
                ..crate::simpo_trainer::SimpoConfig::toy()
            },
            output_dir: dir.to_path_buf(),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn stages_require_predecessors() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path());
        let sim = Simulator::builtin();
        let mut runner = Runner::new(&c, &sim, RunOptions::default()).unwrap();
        assert!(matches!(runner.run(Stage::Perturb), Err(PipelineError::StageIncomplete { .. })));
        let s = runner.run(Stage::Prompts).unwrap();
        assert_eq!(s.processed, 20);
        let again = runner.run(Stage::Prompts).unwrap();
        assert_eq!((again.processed, again.skipped), (0, 20));
    }

    #[test]
    fn full_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path());
        let sim = Simulator::builtin();
        let summaries = run_with_backend(&c, &sim, Stage::Analyze, RunOptions::default()).unwrap();
        assert_eq!(summaries.len(), 8);
        for f in ["manifest.jsonl", "policy.bin", "policy.json", "trace.csv", "cases.csv", "gap_density.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn baseline_modes_pair_same_prompt_images() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path());
        c.ablations.best_of_n_mode = true;
        c.analysis.n = 4;
        let sim = Simulator::builtin();
        run_with_backend(&c, &sim, Stage::Select, RunOptions::default()).unwrap();
        let m = Manifest::open(&c.manifest_path(), &c.hash(), false).unwrap();
        for id in m.sample_ids() {
            let images: ImagesRecord = m.get(Stage::Images, &id).unwrap();
            assert_eq!(images.baseline.len(), 4);
            let sel: SelectRecord = m.get(Stage::Select, &id).unwrap();
            assert_eq!(sel.mode, SelectMode::Baseline);
        }
    }
}
