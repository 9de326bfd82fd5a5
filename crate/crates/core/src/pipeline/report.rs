//! Report bundle and the Best-of-N comparison command.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::manifest::Manifest;
use super::records::*;
use super::stages::selected_pairs;
use super::{PipelineError, Stage};
use crate::analysis::{self, CaseCounts, CompareParams, ComparisonReport};
use crate::perturbation::PerturbKind;
use crate::prompt_forge::{self, Category, KeywordPools, PromptMode};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub swap: usize,
    pub replace: usize,
    pub drop: usize,
    /// Baseline pairs carry no perturbation kind.
    pub baseline: usize,
    pub discarded: usize,
}

impl KindCounts {
    pub fn add(&mut self, record: &SelectRecord) {
        match record.chosen.as_ref().map(|c| c.kind) {
            Some(Some(PerturbKind::Swap)) => self.swap += 1,
            Some(Some(PerturbKind::Replace)) => self.replace += 1,
            Some(Some(PerturbKind::Drop)) => self.drop += 1,
            Some(None) => self.baseline += 1,
            None => self.discarded += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.swap + self.replace + self.drop + self.baseline + self.discarded
    }
}

/// Selected-kind counts per category, in category order.
pub fn kind_table(records: &[(Category, SelectRecord)]) -> Vec<(Category, KindCounts)> {
    Category::ALL
        .into_iter()
        .map(|c| {
            let mut counts = KindCounts::default();
            for (_, r) in records.iter().filter(|(rc, _)| *rc == c) {
                counts.add(r);
            }
            (c, counts)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportBundle {
    pub report: PathBuf,
    pub kinds: PathBuf,
    pub gap_density: Option<PathBuf>,
    pub cases: PathBuf,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

/// Writes report.md, kinds.csv, cases.csv and gap_density.csv next to the
/// manifest.
pub fn emit_report(config: &PipelineConfig) -> Result<ReportBundle, PipelineError> {
    let path = config.manifest_path();
    if !path.exists() {
        return Err(PipelineError::StageIncomplete {
            stage: Stage::Select,
            reason: format!("no manifest at {}", path.display()),
        });
    }
    let manifest = Manifest::open(&path, &config.hash(), false)?;
    let ids = manifest.sample_ids();
    if ids.is_empty() || !manifest.is_done(Stage::Select) {
        return Err(PipelineError::StageIncomplete {
            stage: Stage::Select,
            reason: "the report needs selected pairs".into(),
        });
    }
    let mut selects = Vec::new();
    for id in &ids {
        let prompt: PromptRecord = manifest.get(Stage::Prompts, id)?;
        selects.push((prompt.category, manifest.get::<SelectRecord>(Stage::Select, id)?));
    }
    let table = kind_table(&selects);
    let (points, cases) = selected_pairs(&manifest)?;
    let out = &config.output_dir;

    let mut kinds = String::from("category,swap,replace,drop,baseline,discarded,total\n");
    for (c, k) in &table {
        let _ = writeln!(
            kinds,
            "{},{},{},{},{},{},{}",
            c.as_str(),
            k.swap,
            k.replace,
            k.drop,
            k.baseline,
            k.discarded,
            k.total()
        );
    }
    fs::write(out.join("kinds.csv"), kinds)?;

    let mut cases_csv = String::from("sample_id,label,kind,delta_local,delta_global\n");
    let mut case_counts = CaseCounts::default();
    for (id, label, kind, gap) in &cases {
        case_counts.add(*label);
        let _ = writeln!(
            cases_csv,
            "{id},{},{},{},{}",
            label.as_str(),
            kind.map_or("", |k| k.as_str()),
            gap.delta_local,
            gap.delta_global
        );
    }
    fs::write(out.join("cases.csv"), cases_csv)?;

    let gap_density = if points.is_empty() {
        None
    } else {
        let p = out.join("gap_density.csv");
        fs::write(&p, analysis::gap_density_report(&points)?.to_csv())?;
        Some(p)
    };

    let mut md = String::new();
    let _ = writeln!(md, "# Run report\n");
    let _ = writeln!(md, "- config hash: `{}`", manifest.header().config_hash);
    let _ = writeln!(md, "- code version: {}", manifest.header().code_version);
    let _ = writeln!(md, "- samples: {}\n", ids.len());
    let _ = writeln!(md, "## Selected pairs by kind\n");
    let _ = writeln!(md, "| category | swap | replace | drop | baseline | discarded | discard rate |");
    let _ = writeln!(md, "|---|---|---|---|---|---|---|");
    for (c, k) in &table {
        if k.total() == 0 {
            continue;
        }
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {:.3} |",
            c.as_str(),
            k.swap,
            k.replace,
            k.drop,
            k.baseline,
            k.discarded,
            k.discarded as f64 / k.total() as f64
        );
    }
    let _ = writeln!(md, "\n## Score gaps of selected pairs\n");
    let _ = writeln!(md, "- pairs: {}", points.len());
    let _ = writeln!(md, "- mean local gap: {}", fmt_opt(mean(points.iter().map(|p| p.delta_local))));
    let _ = writeln!(md, "- mean global gap: {}", fmt_opt(mean(points.iter().map(|p| p.delta_global))));
    let _ = writeln!(
        md,
        "- mean local gap where global gap < 0.5: {}",
        fmt_opt(analysis::mean_local_gap_below(&points, 0.5))
    );
    if gap_density.is_some() {
        let _ = writeln!(md, "- local-gap density per global-gap interval: [gap_density.csv](gap_density.csv)");
    }
    let _ = writeln!(md, "\n## Answer-level distinguishability\n");
    let _ = writeln!(md, "| all yes | all no | all same | distinct |");
    let _ = writeln!(md, "|---|---|---|---|");
    let _ = writeln!(
        md,
        "| {} | {} | {} | {} |",
        case_counts.all_yes, case_counts.all_no, case_counts.all_same, case_counts.distinct
    );
    let _ = writeln!(md, "\nPer-pair labels: [cases.csv](cases.csv)");
    if let Ok(train) = manifest.get::<TrainRecord>(Stage::Train, TRAIN_ID) {
        let _ = writeln!(md, "\n## Training\n");
        let _ = writeln!(md, "- records: {} (skipped {})", train.records, train.skipped.len());
        let _ = writeln!(md, "- steps: {}", train.steps);
        let _ = writeln!(md, "- loss: {} → {}", fmt_opt(train.initial_loss), fmt_opt(train.final_loss));
        let _ = writeln!(
            md,
            "- mean margin: {} → {}",
            fmt_opt(train.initial_margin),
            fmt_opt(train.final_margin)
        );
        if let Some(trace) = &train.trace {
            let _ = writeln!(md, "- trace: [{trace}]({trace})");
        }
    }
    let report = out.join("report.md");
    fs::write(&report, md)?;
    Ok(ReportBundle {
        report,
        kinds: out.join("kinds.csv"),
        gap_density,
        cases: out.join("cases.csv"),
    })
}

/// Best-of-N vs OSPO pairs on fresh attribute prompts, plus the
/// temperature sweep. Writes compare.md and compare_cases.csv.
pub fn run_compare(config: &PipelineConfig) -> Result<(ComparisonReport, Vec<(f64, f64)>), PipelineError> {
    config.validate()?;
    let backend = config.build_backend()?;
    let pools = KeywordPools::builtin();
    let prompts = prompt_forge::generate_base_prompts(
        Category::Attribute,
        config.analysis.compare_prompts,
        &pools,
        rng::derive_seed(config.seed, &["compare"]),
        PromptMode::Structured,
    )?;
    let params = CompareParams {
        n: config.analysis.n,
        decode: config.decode,
        corruption: config.corruption,
        epsilon: config.epsilon,
    };
    let report = analysis::compare_pipelines(&prompts, &params, &pools, backend.as_ref(), config.seed)?;
    let sweep = analysis::temperature_sweep(&prompts, &config.analysis.temperatures, &params, backend.as_ref(), config.seed)?;

    fs::create_dir_all(&config.output_dir)?;
    fs::write(config.output_dir.join("compare_cases.csv"), report.cases_csv())?;
    let mut md = String::from("# Best-of-N vs OSPO pairs\n\n");
    let _ = writeln!(md, "- prompts: {} attribute prompts, N = {}", report.prompts, params.n);
    let _ = writeln!(md, "- Best-of-N indistinguishable fraction: {:.4}", report.best_of_n_fraction);
    let _ = writeln!(md, "- OSPO indistinguishable fraction: {:.4}", report.ospo_fraction);
    let _ = writeln!(md, "- ratio: {:.3}", report.ratio);
    let _ = writeln!(
        md,
        "- mean local gap where global gap < 0.5: Best-of-N {}, OSPO {}",
        fmt_opt(analysis::mean_local_gap_below(&report.best_of_n_gaps, 0.5)),
        fmt_opt(analysis::mean_local_gap_below(&report.ospo_gaps, 0.5))
    );
    let _ = writeln!(md, "\n| pipeline | all yes | all no | all same | distinct |\n|---|---|---|---|---|");
    for (name, c) in [("best_of_n", report.best_of_n), ("ospo", report.ospo)] {
        let _ = writeln!(md, "| {name} | {} | {} | {} | {} |", c.all_yes, c.all_no, c.all_same, c.distinct);
    }
    let _ = writeln!(md, "\n| temperature | Best-of-N indistinguishable fraction |\n|---|---|");
    for (t, f) in &sweep {
        let _ = writeln!(md, "| {t} | {f:.4} |");
    }
    fs::write(config.output_dir.join("compare.md"), md)?;
    Ok((report, sweep))
}
