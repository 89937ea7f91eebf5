//! Subcommand implementations. Each command reads its declared inputs,
//! writes data files into the output directory, and emits a run manifest.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use groundkit_core::agent::{
    run_episode, EpisodeOptions, GroundingExecutor, JsonMode, LlmExecutor, MockDevice,
    MockExecutor, MockScenario, DEFAULT_AVAILABLE_APPS,
};
use groundkit_core::eval::{
    accuracy, classify_reasoning, grouped_report, oracle_combined, tag_histogram,
    CorrectnessMatrix, Prediction,
};
use groundkit_core::grpo::{
    batch_loss, finite_difference_grad, gen_scenes as gen_toy_scenes, policy_grad,
    sample_rollouts, train_toy, AmbiguityProfile, GradTensors, GrpoItem, ObjectiveBatch, Regime,
    SceneConfig, SftItem, ToyPolicy, TrainConfig,
};
use groundkit_core::jsonl::{read_jsonl, write_jsonl};
use groundkit_core::pipeline::{run_pipeline, DetectionsRecord, PipelineConfig};
use groundkit_core::prompts::GroundingTemplate;
use groundkit_core::types::{GroundingSample, Instruction, Perspective};

use crate::config::AppConfig;
use crate::endpoints::resolve_client;
use crate::manifest::ManifestBuilder;
use crate::CliError;

fn ensure_out_dir(config: &AppConfig) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&config.out_dir)?;
    Ok(config.out_dir.clone())
}

fn manifest(command: &str, config: &AppConfig, seed: Option<u64>) -> ManifestBuilder {
    let snapshot = serde_json::to_value(config).expect("config serializes");
    ManifestBuilder::new(command, snapshot, seed)
}

fn parse_profile(s: &str) -> Result<AmbiguityProfile, CliError> {
    match s {
        "all_unique" => Ok(AmbiguityProfile::AllUnique),
        "unique_appearance_only" => Ok(AmbiguityProfile::UniqueAppearanceOnly),
        _ => {
            let p = s
                .strip_prefix("mixed_unique:")
                .and_then(|p| p.parse::<f64>().ok())
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "unknown scene profile {s:?}; expected all_unique, unique_appearance_only, or mixed_unique:<p>"
                    ))
                })?;
            Ok(AmbiguityProfile::MixedUnique { p_second_unique: p })
        }
    }
}

pub fn gen_scenes(
    n: usize,
    grid_w: u32,
    grid_h: u32,
    profile: &str,
    seed: u64,
    config: &AppConfig,
) -> Result<(), CliError> {
    let out_dir = ensure_out_dir(config)?;
    let scene_config =
        SceneConfig { n_scenes: n, grid_w, grid_h, profile: parse_profile(profile)? };
    let scenes = gen_toy_scenes(&scene_config, seed)?;
    let path = out_dir.join("scenes.jsonl");
    write_jsonl(&path, &scenes)?;
    let mut m = manifest("gen-scenes", config, Some(seed));
    m.add_output(&path)?;
    m.write(&out_dir)?;
    eprintln!("wrote {} scenes to {}", scenes.len(), path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn toy_train(
    preset: &str,
    regime: &str,
    steps: Option<usize>,
    n_train: usize,
    n_eval: usize,
    profile: &str,
    seed: u64,
    config: &AppConfig,
) -> Result<(), CliError> {
    let out_dir = ensure_out_dir(config)?;
    let mut train_config: TrainConfig = *config
        .presets
        .get(preset)
        .ok_or_else(|| CliError::Usage(format!("unknown preset {preset:?}")))?;
    if let Some(steps) = steps {
        train_config.steps = steps;
    }
    train_config.seed = seed;
    let regime = Regime::parse(regime).map_err(|e| CliError::Usage(e.to_string()))?;

    let profile = parse_profile(profile)?;
    let train_scenes = gen_toy_scenes(
        &SceneConfig { n_scenes: n_train, grid_w: 4, grid_h: 4, profile: profile.clone() },
        seed.wrapping_add(1),
    )?;
    let eval_scenes = gen_toy_scenes(
        &SceneConfig { n_scenes: n_eval, grid_w: 4, grid_h: 4, profile },
        seed.wrapping_add(2),
    )?;

    let (policy, timeline) = train_toy(&train_config, regime, &train_scenes, &eval_scenes)?;

    let metrics_path = out_dir.join("metrics.jsonl");
    write_jsonl(&metrics_path, &timeline.points)?;
    let policy_path = out_dir.join("policy.json");
    policy.save_checkpoint(&policy_path)?;

    let mut m = manifest("toy-train", config, Some(seed));
    m.add_output(&metrics_path)?;
    m.add_output(&policy_path)?;
    m.write(&out_dir)?;

    if let Some(last) = timeline.last() {
        println!(
            "final phase={} step={} eval_accuracy={:.4} entropy={:.4}",
            last.phase, last.step, last.eval_accuracy, last.rollout_entropy
        );
    }
    Ok(())
}

fn max_rel_error(analytic: &GradTensors, fd: &GradTensors) -> f64 {
    let scale = analytic.max_abs().max(fd.max_abs()).max(1e-8);
    let mut worst = 0.0f64;
    for (a, b) in analytic.theta_persp.iter().flatten().zip(fd.theta_persp.iter().flatten()) {
        worst = worst.max((a - b).abs() / scale);
    }
    for (a, b) in
        analytic.theta_cell.iter().flatten().flatten().zip(fd.theta_cell.iter().flatten().flatten())
    {
        worst = worst.max((a - b).abs() / scale);
    }
    worst
}

pub fn grad_check(
    trials: usize,
    tolerance: f64,
    seed: u64,
    config: &AppConfig,
) -> Result<(), CliError> {
    let scenes = gen_toy_scenes(
        &SceneConfig {
            n_scenes: 8,
            grid_w: 4,
            grid_h: 4,
            profile: AmbiguityProfile::MixedUnique { p_second_unique: 0.5 },
        },
        seed.wrapping_add(1),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut policy = ToyPolicy::uniform(16);
        for row in &mut policy.theta_persp {
            for w in row {
                *w = rng.gen_range(-1.0..1.0);
            }
        }
        for matrix in &mut policy.theta_cell {
            for row in matrix {
                for w in row {
                    *w = rng.gen_range(-1.0..1.0);
                }
            }
        }
        let scene = &scenes[trial % scenes.len()];
        let ip = Perspective::AUGMENTED[trial % 4];
        let rp = Perspective::AUGMENTED[(trial + 1) % 4];

        let sft = ObjectiveBatch::Sft(vec![SftItem::from_scene(scene, ip, rp)]);
        let fd = finite_difference_grad(|p| batch_loss(p, &sft), &policy, 1e-5);
        worst = worst.max(max_rel_error(&policy_grad(&policy, &sft), &fd));

        let group = sample_rollouts(&policy, scene, ip, 8, &mut rng)?;
        let grpo = ObjectiveBatch::Grpo(vec![GrpoItem::from_scene(scene, ip, group)]);
        let fd = finite_difference_grad(|p| batch_loss(p, &grpo), &policy, 1e-5);
        worst = worst.max(max_rel_error(&policy_grad(&policy, &grpo), &fd));
    }
    println!("max relative error over {trials} trials: {worst:.3e}");
    let out_dir = ensure_out_dir(config)?;
    manifest("grad-check", config, Some(seed)).write(&out_dir)?;
    if worst > tolerance {
        return Err(CliError::Operational(format!(
            "gradient check failed: {worst:.3e} > tolerance {tolerance:.3e}"
        )));
    }
    Ok(())
}

pub fn pipeline(
    input: &Path,
    detections: &Path,
    profile: &str,
    config: &AppConfig,
) -> Result<(), CliError> {
    let out_dir = ensure_out_dir(config)?;
    let samples: Vec<GroundingSample> = read_jsonl(input)?;
    let detection_records: Vec<DetectionsRecord> = read_jsonl(detections)?;
    let detection_map: HashMap<_, _> =
        detection_records.into_iter().map(|r| (r.screenshot_id, r.elements)).collect();
    let client = resolve_client(profile, config)?;
    let pipeline_config =
        PipelineConfig { iou_threshold: config.iou_refine, ..PipelineConfig::default() };
    let output = run_pipeline(&samples, &detection_map, &client, &pipeline_config)
        .map_err(|e| CliError::Operational(e.to_string()))?;

    let emitted_path = out_dir.join("emitted.jsonl");
    let rejects_path = out_dir.join("rejects.jsonl");
    let verifications_path = out_dir.join("verifications.jsonl");
    let report_path = out_dir.join("report.json");
    write_jsonl(&emitted_path, &output.emitted)?;
    write_jsonl(&rejects_path, &output.rejects)?;
    write_jsonl(&verifications_path, &output.verifications)?;
    std::fs::write(&report_path, serde_json::to_string_pretty(&output.report)?)?;

    let mut m = manifest("pipeline", config, None);
    m.add_input(input)?;
    m.add_input(detections)?;
    for p in [&emitted_path, &rejects_path, &verifications_path, &report_path] {
        m.add_output(p)?;
    }
    m.write(&out_dir)?;

    println!(
        "input={} emitted={} dropped_refine={} augment_failures={} fully_rejected={} conservation={}",
        output.report.input,
        output.report.emitted,
        output.report.dropped_refine,
        output.report.augment_failures,
        output.report.fully_rejected_by_verification,
        if output.report.conservation_holds() { "ok" } else { "VIOLATED" }
    );
    if !output.report.conservation_holds() {
        return Err(CliError::Operational("sample conservation identity violated".into()));
    }
    Ok(())
}

fn ground_truth_maps(
    samples: &[GroundingSample],
) -> (BTreeMap<String, groundkit_core::geometry::BBox>, BTreeMap<String, BTreeMap<String, String>>) {
    let mut gts = BTreeMap::new();
    let mut tags = BTreeMap::new();
    for s in samples {
        gts.insert(s.id.clone(), s.gt_bbox);
        tags.insert(s.id.clone(), s.tag_dimensions());
    }
    (gts, tags)
}

pub fn evaluate(
    predictions: &Path,
    samples: &Path,
    group_by: &[String],
    config: &AppConfig,
) -> Result<(), CliError> {
    let out_dir = ensure_out_dir(config)?;
    let preds: Vec<Prediction> = read_jsonl(predictions)?;
    let sample_records: Vec<GroundingSample> = read_jsonl(samples)?;
    let (gts, tags) = ground_truth_maps(&sample_records);

    let mut m = manifest("evaluate", config, None);
    m.add_input(predictions)?;
    m.add_input(samples)?;

    if group_by.is_empty() {
        let overall = accuracy(&preds, &gts).map_err(|e| CliError::Operational(e.to_string()))?;
        println!("overall accuracy: {:.4} (n={})", overall, preds.len());
    } else {
        let report = grouped_report(&preds, &gts, &tags, group_by)
            .map_err(|e| CliError::Operational(e.to_string()))?;
        println!("{}", report.render_table());
        let csv_path = out_dir.join("report.csv");
        std::fs::write(&csv_path, report.to_csv())?;
        m.add_output(&csv_path)?;
    }
    m.write(&out_dir)?;
    Ok(())
}

pub fn ground(
    samples: &Path,
    template: &str,
    perspective: &str,
    profile: &str,
    config: &AppConfig,
) -> Result<(), CliError> {
    let out_dir = ensure_out_dir(config)?;
    let template = match template {
        "sft" => GroundingTemplate::Sft,
        "rl" => GroundingTemplate::Rl,
        other => return Err(CliError::Usage(format!("unknown template {other:?}"))),
    };
    let wanted: Option<Perspective> = if perspective == "all" {
        None
    } else {
        Some(
            Perspective::parse(perspective)
                .ok_or_else(|| CliError::Usage(format!("unknown perspective {perspective:?}")))?,
        )
    };
    let sample_records: Vec<GroundingSample> = read_jsonl(samples)?;
    let client = resolve_client(profile, config)?;

    let mut preds = Vec::new();
    for sample in &sample_records {
        for (&p, text) in &sample.instructions {
            if wanted.is_some_and(|w| w != p) {
                continue;
            }
            let instruction = Instruction { text: text.clone(), perspective: p };
            let pred = groundkit_core::eval::ground(sample, &instruction, template, &client)
                .map_err(|e| CliError::Operational(e.to_string()))?;
            preds.push(pred);
        }
    }
    let path = out_dir.join("predictions.jsonl");
    write_jsonl(&path, &preds)?;
    let mut m = manifest("ground", config, None);
    m.add_input(samples)?;
    m.add_output(&path)?;
    m.write(&out_dir)?;
    eprintln!("wrote {} predictions to {}", preds.len(), path.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixRow {
    sample_id: String,
    correct: BTreeMap<Perspective, bool>,
}

pub fn oracle(matrix: &Path, config: &AppConfig) -> Result<(), CliError> {
    let rows: Vec<MatrixRow> = read_jsonl(matrix)?;
    let first = rows
        .first()
        .ok_or_else(|| CliError::Operational("matrix file is empty".into()))?;
    let cols: Vec<Perspective> =
        Perspective::ALL.into_iter().filter(|p| first.correct.contains_key(p)).collect();
    let mut ids = Vec::with_capacity(rows.len());
    let mut cells = Vec::with_capacity(rows.len());
    for row in &rows {
        if row.correct.len() != cols.len() || !cols.iter().all(|c| row.correct.contains_key(c)) {
            return Err(CliError::Operational(format!(
                "sample {}: perspective set differs from the first row",
                row.sample_id
            )));
        }
        ids.push(row.sample_id.clone());
        cells.push(cols.iter().map(|c| row.correct[c]).collect());
    }
    let summary = oracle_combined(&CorrectnessMatrix::new(ids, cols, cells))
        .map_err(|e| CliError::Operational(e.to_string()))?;
    for (p, acc) in &summary.per_perspective {
        println!("{p}: {acc:.4}");
    }
    println!("combined: {:.4}", summary.combined);
    println!("relative_gain: {:.4}", summary.relative_gain);
    let out_dir = ensure_out_dir(config)?;
    let mut m = manifest("oracle", config, None);
    m.add_input(matrix)?;
    m.write(&out_dir)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ResponseRecord {
    response_id: String,
    text: String,
}

pub fn classify(responses: &Path, profile: &str, config: &AppConfig) -> Result<(), CliError> {
    let out_dir = ensure_out_dir(config)?;
    let records: Vec<ResponseRecord> = read_jsonl(responses)?;
    let pairs: Vec<(String, String)> =
        records.into_iter().map(|r| (r.response_id, r.text)).collect();
    let client = resolve_client(profile, config)?;
    let sets =
        classify_reasoning(&pairs, &client).map_err(|e| CliError::Operational(e.to_string()))?;
    let path = out_dir.join("tags.jsonl");
    write_jsonl(&path, &sets)?;
    for (tag, count) in tag_histogram(&sets) {
        println!("{tag}: {count}");
    }
    let flagged = sets.iter().filter(|s| s.flagged()).count();
    if flagged > 0 {
        eprintln!("{flagged} responses carried unknown tags (kept, flagged in output)");
    }
    let mut m = manifest("classify", config, None);
    m.add_input(responses)?;
    m.add_output(&path)?;
    m.write(&out_dir)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AgentRunResult {
    status: groundkit_core::agent::EpisodeStatus,
    steps: usize,
    detail: Option<String>,
    succeeded: Option<bool>,
}

#[allow(clippy::too_many_arguments)]
pub fn agent_run(
    goal: &str,
    planner: &str,
    executor: &str,
    device: &str,
    max_steps: usize,
    json_mode: &str,
    config: &AppConfig,
) -> Result<(), CliError> {
    let out_dir = ensure_out_dir(config)?;
    let json_mode = match json_mode {
        "strict" => JsonMode::Strict,
        "lenient" => JsonMode::Lenient,
        other => return Err(CliError::Usage(format!("unknown json mode {other:?}"))),
    };
    let scenario_path = device.strip_prefix("mock:").ok_or_else(|| {
        CliError::Usage(format!(
            "unsupported device {device:?}; only mock:<scenario.json> is available"
        ))
    })?;
    let scenario_text = std::fs::read_to_string(scenario_path)
        .map_err(|e| CliError::Operational(format!("{scenario_path}: {e}")))?;
    let scenario = MockScenario::from_json(&scenario_text)
        .map_err(|e| CliError::Operational(e.to_string()))?;
    let mut mock_device =
        MockDevice::new(scenario.clone()).map_err(|e| CliError::Operational(e.to_string()))?;

    let executor: Box<dyn GroundingExecutor> = if executor == "mock:scenario" {
        Box::new(MockExecutor::for_scenario(scenario.clone()))
    } else {
        Box::new(LlmExecutor::new(resolve_client(executor, config)?))
    };
    let planner_client = resolve_client(planner, config)?;

    let available_apps: Vec<String> = if scenario.apps.is_empty() {
        DEFAULT_AVAILABLE_APPS.iter().map(|s| s.to_string()).collect()
    } else {
        scenario.apps.keys().cloned().collect()
    };
    let options = EpisodeOptions {
        max_steps,
        json_mode,
        wait: Duration::from_millis(100),
        available_apps,
        ..EpisodeOptions::default()
    };
    let result = run_episode(goal, &planner_client, executor.as_ref(), &mut mock_device, &options)
        .map_err(|e| CliError::Operational(e.to_string()))?;

    let transcript_path = out_dir.join("transcript.jsonl");
    write_jsonl(&transcript_path, &result.transcript)?;
    let result_path = out_dir.join("result.json");
    let summary = AgentRunResult {
        status: result.status,
        steps: result.steps,
        detail: result.detail,
        succeeded: mock_device.succeeded(),
    };
    std::fs::write(&result_path, serde_json::to_string_pretty(&summary)?)?;

    let mut m = manifest("agent-run", config, None);
    m.add_input(Path::new(scenario_path))?;
    m.add_output(&transcript_path)?;
    m.add_output(&result_path)?;
    m.write(&out_dir)?;

    println!(
        "status={} steps={} succeeded={}",
        serde_json::to_value(summary.status)?.as_str().unwrap_or("?"),
        summary.steps,
        summary
            .succeeded
            .map(|b| b.to_string())
            .unwrap_or_else(|| "n/a".to_string())
    );
    Ok(())
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Operational(e.to_string())
    }
}
