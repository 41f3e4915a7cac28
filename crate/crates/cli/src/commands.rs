//! Command implementations. Each returns a structured summary; printing is
//! left to the binary.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use toolseq::checkpoint::Checkpoint;
use toolseq::corpus;
use toolseq::degrade::dataset::{read_manifest, resolve, MANIFEST_FILE};
use toolseq::degrade::{synth_dataset, ManifestRow, Setting};
use toolseq::oracle::{aggregate, best_sequence, compare_plan, search_cost, AggregateReport, PlanReport, SearchOptions};
use toolseq::po::{infer_plan, Plan, TrainItem, TrainLogRow, Trainer};
use toolseq::raster::{psnr, ssim, Raster};
use toolseq::reward::{ProviderConfig, Proxy, ProxyWeights, RewardProvider};
use toolseq::toolset::Registry;

use crate::config::{provider_for_kind, Config};
use crate::error::CliError;
use crate::report;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const PLAN_FILE: &str = "plan.json";
pub const RESTORED_FILE: &str = "restored.png";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        }
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// A manifest with its images decoded.
pub struct Dataset {
    pub rows: Vec<ManifestRow>,
    pub degraded: Vec<Raster>,
    pub clean: Vec<Option<Raster>>,
}

impl Dataset {
    pub fn load(manifest: &Path, with_clean: bool) -> Result<Self, CliError> {
        let manifest = if manifest.is_dir() {
            manifest.join(MANIFEST_FILE)
        } else {
            manifest.to_path_buf()
        };
        let rows = read_manifest(&manifest)?;
        if rows.is_empty() {
            return Err(CliError::Input(format!("{}: manifest has no rows", manifest.display())));
        }
        let load = |entry: &str| {
            let p = resolve(&manifest, entry);
            Raster::load_png(&p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        };
        let degraded = rows.iter().map(|r| load(&r.degraded)).collect::<Result<Vec<_>, _>>()?;
        let clean = rows
            .iter()
            .map(|r| if with_clean { load(&r.clean).map(Some) } else { Ok(None) })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rows, degraded, clean })
    }

    pub fn items(&self) -> Vec<TrainItem> {
        self.degraded
            .iter()
            .zip(&self.clean)
            .map(|(d, c)| TrainItem {
                degraded: d.clone(),
                clean: c.clone(),
            })
            .collect()
    }
}

fn load_checkpoint(path: &Path, registry: &Registry) -> Result<Checkpoint, CliError> {
    Ok(Checkpoint::load_for(path, registry)?)
}

/// Writes `n` procedural clean scenes as `clean_XXX.png`.
pub fn cmd_corpus(out: &Path, n: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    if n == 0 || size < toolseq::featurize::MIN_SIDE {
        return Err(CliError::Input(format!(
            "need n > 0 and size >= {}",
            toolseq::featurize::MIN_SIDE
        )));
    }
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    corpus::corpus(n, size, seed)
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let p = out.join(format!("clean_{i:03}.png"));
            img.save_png(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
            Ok(p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub manifest: PathBuf,
    pub images: usize,
    pub per_case: BTreeMap<u32, usize>,
}

pub fn cmd_synth(cfg: &Config, clean_dir: &Path, out: &Path) -> Result<SynthSummary, CliError> {
    let recipes = cfg.synth.recipes()?;
    let rows = synth_dataset(clean_dir, &recipes, cfg.synth.per_case, cfg.synth.seed, out)?;
    let mut per_case = BTreeMap::new();
    for r in &rows {
        *per_case.entry(r.case_id).or_insert(0) += 1;
    }
    write_file(&out.join(CONFIG_FILE), cfg.to_json_pretty())?;
    Ok(SynthSummary {
        manifest: out.join(MANIFEST_FILE),
        images: rows.len(),
        per_case,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub updates: usize,
    pub final_greedy_eval: f64,
    pub failed_episodes: usize,
}

pub fn cmd_train(
    cfg: &Config,
    manifest: &Path,
    eval_manifest: Option<&Path>,
    out: &Path,
    mut on_row: impl FnMut(&TrainLogRow),
) -> Result<TrainSummary, CliError> {
    let registry = Arc::new(cfg.registry()?);
    let need_clean = cfg.provider.needs_clean();
    let data = Dataset::load(manifest, need_clean)?;
    let eval_items = match eval_manifest {
        Some(p) => Dataset::load(p, need_clean)?.items(),
        None => data.items(),
    };
    let mut trainer = Trainer::new(cfg.po.clone(), Arc::clone(&registry), data.items(), eval_items, &cfg.provider)?;
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    write_file(&out.join(CONFIG_FILE), cfg.to_json_pretty())?;
    let log_path = out.join(TRAIN_LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| CliError::Runtime(format!("{}: {e}", log_path.display())))?;
    let mut failed = 0;
    let mut io_err = None;
    trainer.run(|_, row| {
        failed += row.failed_episodes;
        if let Err(e) = writeln!(log, "{}", serde_json::to_string(row).expect("log rows serialize")) {
            io_err.get_or_insert(e);
        }
        on_row(row);
    })?;
    if let Some(e) = io_err {
        return Err(CliError::Runtime(format!("{}: {e}", log_path.display())));
    }
    let final_greedy_eval = trainer.greedy_eval()?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    Checkpoint::from_trainer(&trainer, cfg.provider.kind()).save(&checkpoint)?;
    Ok(TrainSummary {
        checkpoint,
        updates: trainer.updates_done(),
        final_greedy_eval,
        failed_episodes: failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub actions: Vec<String>,
    pub forwards: usize,
    pub capped: bool,
    pub t_max: usize,
}

fn plan_names(registry: &Registry, plan: &Plan) -> Vec<String> {
    plan.actions.iter().map(|&a| registry.name(a).to_string()).collect()
}

pub fn cmd_plan(
    cfg: &Config,
    checkpoint: &Path,
    image: &Path,
    t_max: Option<usize>,
    out: &Path,
) -> Result<PlanSummary, CliError> {
    let registry = cfg.registry()?;
    let ck = load_checkpoint(checkpoint, &registry)?;
    let img = Raster::load_png(image).map_err(|e| CliError::Input(format!("{}: {e}", image.display())))?;
    let t_max = t_max.unwrap_or(ck.config.t_max);
    let plan = infer_plan(&ck.actor, &registry, &img, t_max, None)?;
    let summary = PlanSummary {
        actions: plan_names(&registry, &plan),
        forwards: plan.forwards,
        capped: plan.capped,
        t_max,
    };
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    plan.output
        .save_png(out.join(RESTORED_FILE))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut json = serde_json::to_string_pretty(&summary).expect("plan serializes");
    json.push('\n');
    write_file(&out.join(PLAN_FILE), json)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Psnr,
    Ssim,
    Proxy,
}

impl std::str::FromStr for Metric {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim() {
            "psnr" => Ok(Metric::Psnr),
            "ssim" => Ok(Metric::Ssim),
            "proxy" => Ok(Metric::Proxy),
            other => Err(CliError::Input(format!("unknown metric {other:?} (psnr, ssim, proxy)"))),
        }
    }
}

pub fn parse_metrics(list: &str) -> Result<Vec<Metric>, CliError> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// One CSV row. Summary rows carry `image = "mean"` and an empty plan;
/// metrics that were not requested are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub image: String,
    pub case_id: Option<u32>,
    pub setting: Setting,
    pub plan: String,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub proxy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub rows: Vec<EvalRow>,
    pub summary: Vec<EvalRow>,
}

impl EvalResult {
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in self.rows.iter().chain(&self.summary) {
            w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

fn proxy_weights(cfg: &Config) -> ProxyWeights {
    match &cfg.provider {
        ProviderConfig::Proxy { weights } => *weights,
        _ => ProxyWeights::default(),
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn cmd_eval(
    cfg: &Config,
    checkpoint: &Path,
    manifest: &Path,
    metrics: &[Metric],
    t_max: Option<usize>,
    out: Option<&Path>,
) -> Result<EvalResult, CliError> {
    let registry = cfg.registry()?;
    let ck = load_checkpoint(checkpoint, &registry)?;
    let t_max = t_max.unwrap_or(ck.config.t_max);
    let full_ref = metrics.iter().any(|m| matches!(m, Metric::Psnr | Metric::Ssim));
    let data = Dataset::load(manifest, full_ref)?;
    let proxy = Proxy {
        weights: proxy_weights(cfg),
    };
    let mut rows = Vec::with_capacity(data.rows.len());
    for ((row, degraded), clean) in data.rows.iter().zip(&data.degraded).zip(&data.clean) {
        let plan = infer_plan(&ck.actor, &registry, degraded, t_max, None)?;
        let want = |m: Metric| metrics.contains(&m);
        let psnr_v = match (want(Metric::Psnr), clean) {
            (true, Some(c)) => Some(psnr(&plan.output, c)?),
            _ => None,
        };
        let ssim_v = match (want(Metric::Ssim), clean) {
            (true, Some(c)) => Some(ssim(&plan.output, c)?),
            _ => None,
        };
        let proxy_v = if want(Metric::Proxy) {
            Some(proxy.score(&plan.output)?)
        } else {
            None
        };
        rows.push(EvalRow {
            image: row.degraded.clone(),
            case_id: Some(row.case_id),
            setting: row.setting,
            plan: plan_names(&registry, &plan).join("+"),
            psnr: psnr_v,
            ssim: ssim_v,
            proxy: proxy_v,
        });
    }
    let summary: Vec<EvalRow> = Setting::ALL
        .iter()
        .filter(|s| rows.iter().any(|r| r.setting == **s))
        .map(|&s| {
            let of = |f: fn(&EvalRow) -> Option<f64>| mean_of(rows.iter().filter(|r| r.setting == s).map(f));
            EvalRow {
                image: "mean".into(),
                case_id: None,
                setting: s,
                plan: String::new(),
                psnr: of(|r| r.psnr),
                ssim: of(|r| r.ssim),
                proxy: of(|r| r.proxy),
            }
        })
        .collect();
    let result = EvalResult { rows, summary };
    if let Some(path) = out {
        write_file(path, result.to_csv()?)?;
        write_file(&path.with_extension("svg"), report::summary_svg(&result.summary))?;
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub image: String,
    pub case_id: u32,
    pub setting: Setting,
    pub oracle_actions: Vec<String>,
    pub oracle_score: f64,
    pub evaluations: u64,
    /// Present when a checkpoint was given.
    pub comparison: Option<PlanReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub rows: Vec<OracleRow>,
    pub aggregate: Option<AggregateReport>,
}

pub fn cmd_oracle(
    cfg: &Config,
    manifest: &Path,
    checkpoint: Option<&Path>,
    out: Option<&Path>,
) -> Result<OracleSummary, CliError> {
    let registry = cfg.registry()?;
    let opts = SearchOptions {
        budget: cfg.oracle.budget,
        parallel: cfg.po.workers > 1,
    };
    let needed = search_cost(registry.n_tools(), cfg.oracle.l_max);
    if needed > opts.budget {
        return Err(CliError::Budget(format!(
            "L_max {} over {} tools needs {needed} tool applications, budget is {}",
            cfg.oracle.l_max,
            registry.n_tools(),
            opts.budget
        )));
    }
    let ck = checkpoint.map(|p| load_checkpoint(p, &registry)).transpose()?;
    let data = Dataset::load(manifest, cfg.provider.needs_clean())?;
    let mut rows = Vec::with_capacity(data.rows.len());
    for ((row, degraded), clean) in data.rows.iter().zip(&data.degraded).zip(&data.clean) {
        let scorer = cfg.provider.build(clean.as_ref())?;
        let best = best_sequence(degraded, &registry, cfg.oracle.l_max, scorer.as_ref(), &opts)?;
        let comparison = match &ck {
            Some(ck) => {
                let plan = infer_plan(&ck.actor, &registry, degraded, cfg.oracle.l_max, None)?;
                Some(compare_plan(&registry, &plan.actions, &plan.output, &best, scorer.as_ref())?)
            }
            None => None,
        };
        rows.push(OracleRow {
            image: row.degraded.clone(),
            case_id: row.case_id,
            setting: row.setting,
            oracle_actions: best.sequence.iter().map(|&t| registry.name(t).to_string()).collect(),
            oracle_score: best.score,
            evaluations: best.evaluations,
            comparison,
        });
    }
    let reports: Vec<PlanReport> = rows.iter().filter_map(|r| r.comparison.clone()).collect();
    let summary = OracleSummary {
        aggregate: ck.map(|_| aggregate(&reports, cfg.oracle.tolerance)),
        rows,
    };
    if let Some(path) = out {
        let mut text = String::new();
        for r in &summary.rows {
            text.push_str(&serde_json::to_string(r).expect("rows serialize"));
            text.push('\n');
        }
        write_file(path, text)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingBench {
    pub setting: Setting,
    pub images: usize,
    pub mean_wall_ms: f64,
    pub mean_invocations: f64,
    pub mean_forwards: f64,
    pub max_invocations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub t_max: usize,
    pub settings: Vec<SettingBench>,
    /// Every image used exactly plan length + 1 policy forwards.
    pub forwards_equal_len_plus_one: bool,
    /// Every image used at most `t_max` tool invocations.
    pub within_cap: bool,
    /// Largest minus smallest per-setting mean invocation count.
    pub invocation_spread: f64,
}

pub fn cmd_bench(cfg: &Config, checkpoint: &Path, manifest: &Path, t_max: Option<usize>) -> Result<BenchReport, CliError> {
    let registry = cfg.registry()?;
    let ck = load_checkpoint(checkpoint, &registry)?;
    let t_max = t_max.unwrap_or(cfg.bench.t_max);
    let data = Dataset::load(manifest, false)?;
    let mut per: BTreeMap<Setting, Vec<(f64, usize, usize)>> = BTreeMap::new();
    let mut forwards_ok = true;
    let mut within_cap = true;
    for (row, degraded) in data.rows.iter().zip(&data.degraded) {
        let t0 = Instant::now();
        let plan = infer_plan(&ck.actor, &registry, degraded, t_max, None)?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        forwards_ok &= plan.forwards == plan.actions.len() + 1;
        within_cap &= plan.actions.len() <= t_max;
        per.entry(row.setting).or_default().push((ms, plan.actions.len(), plan.forwards));
    }
    let settings: Vec<SettingBench> = per
        .into_iter()
        .map(|(setting, v)| {
            let n = v.len() as f64;
            SettingBench {
                setting,
                images: v.len(),
                mean_wall_ms: v.iter().map(|x| x.0).sum::<f64>() / n,
                mean_invocations: v.iter().map(|x| x.1 as f64).sum::<f64>() / n,
                mean_forwards: v.iter().map(|x| x.2 as f64).sum::<f64>() / n,
                max_invocations: v.iter().map(|x| x.1).max().unwrap_or(0),
            }
        })
        .collect();
    let means = settings.iter().map(|s| s.mean_invocations);
    let spread = means.clone().fold(f64::MIN, f64::max) - means.fold(f64::MAX, f64::min);
    Ok(BenchReport {
        t_max,
        settings,
        forwards_equal_len_plus_one: forwards_ok,
        within_cap,
        invocation_spread: spread,
    })
}

/// Resolves `--provider` against the config.
pub fn with_provider(mut cfg: Config, kind: Option<&str>) -> Result<Config, CliError> {
    if let Some(k) = kind {
        cfg.provider = provider_for_kind(&cfg.provider, k)?;
    }
    Ok(cfg.with_env())
}
