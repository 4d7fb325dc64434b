//! Command-line surface: validation, planning, dataset generation,
//! splitting, the feedback loop, evaluation, and loss reports.
//!
//! Exit codes: 0 success (plan/trace valid), 1 domain-level failure
//! (invalid plan, unsolvable problem), 2 usage or parse errors.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use veriplan::config::{load_config, BackendKind, GeneratorConfig, RunConfig};
use serde::Deserialize;
use veriplan::datagen::{
    gen_instances as datagen_instances, make_phase1_dataset, read_jsonl, split_dataset,
    write_jsonl, InstanceKind, LabelMix, Phase1Record, PlanningInstance, SplitSpec,
};
use veriplan::losses::compute_report;
use veriplan::orchestrator::{
    run_campaign, CampaignEmit, HttpBackend, HttpBackendConfig, LoopConfig, ModelBackend,
    ScriptedBackend,
};
use veriplan::planner::{solve, SearchLimits, SolveOutcome};
use veriplan::report::{error_breakdown, evaluate, EvalOptions, EvalResult};
use veriplan::text::{parse_domain, parse_plan, parse_problem, print_plan};
use veriplan::trace::parse_trace;
use veriplan::validator::{render_feedback, validate_plan, validate_trace, FeedbackMode};

#[derive(Parser)]
#[command(name = "veriplan", version, about = "STRIPS plan validation, instruction datasets, and verifier-guided feedback loops")]
struct Cli {
    /// TOML config file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override for anything generated.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeedbackArg {
    Binary,
    Detailed,
}

impl From<FeedbackArg> for FeedbackMode {
    fn from(f: FeedbackArg) -> Self {
        match f {
            FeedbackArg::Binary => FeedbackMode::Binary,
            FeedbackArg::Detailed => FeedbackMode::Detailed,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Blocksworld,
    MysteryBlocksworld,
    Logistics,
}

impl KindArg {
    fn label(self) -> &'static str {
        match self {
            KindArg::Blocksworld => "blocksworld",
            KindArg::MysteryBlocksworld => "mystery-blocksworld",
            KindArg::Logistics => "logistics",
        }
    }

    fn instance_kind(self, g: &GeneratorConfig) -> InstanceKind {
        match self {
            KindArg::Blocksworld => InstanceKind::Blocksworld { blocks: g.blocks },
            KindArg::MysteryBlocksworld => InstanceKind::MysteryBlocksworld { blocks: g.blocks },
            KindArg::Logistics => InstanceKind::Logistics {
                cities: g.cities,
                locations_per_city: g.locations_per_city,
                packages: g.packages,
                trucks: g.trucks,
                airplanes: g.airplanes,
            },
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Http,
    Scripted,
}

/// Flags shared by generating subcommands.
#[derive(Args)]
struct GenArgs {
    /// Domain kinds, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [KindArg::Blocksworld])]
    kind: Vec<KindArg>,
    /// How many problems/records to generate (default from config).
    #[arg(long)]
    count: Option<usize>,
    /// Blocksworld size override.
    #[arg(long)]
    blocks: Option<usize>,
    /// Logistics size overrides.
    #[arg(long)]
    cities: Option<usize>,
    #[arg(long)]
    locations_per_city: Option<usize>,
    #[arg(long)]
    packages: Option<usize>,
    #[arg(long)]
    trucks: Option<usize>,
    #[arg(long)]
    airplanes: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a plan file or a reasoning-trace file.
    Validate {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        /// VAL-syntax plan file (one action per line).
        #[arg(long)]
        plan: Option<PathBuf>,
        /// STATE/ACTION/RESULT trace file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FeedbackArg::Detailed)]
        feedback: FeedbackArg,
    },
    /// Solve a problem with the breadth-first planner.
    Plan {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        /// Plan file to write; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        max_states: usize,
        #[arg(long, default_value_t = 1_000)]
        max_length: usize,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
    },
    /// Generate phase-1 records (correct and corrupted plans) plus splits.
    GenData {
        #[command(flatten)]
        gen: GenArgs,
        /// Label mix `correct,precond,effect,frame,goal` (sums to 1).
        #[arg(long)]
        mix: Option<String>,
        /// Split ratios `d1,d2,dtest` (sum to 1).
        #[arg(long)]
        split: Option<String>,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
    },
    /// Split an existing phase-1 JSONL file by problem identity.
    Split {
        #[arg(long)]
        input: PathBuf,
        /// Split ratios `d1,d2,dtest` (sum to 1).
        #[arg(long)]
        ratios: Option<String>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the bounded feedback loop over generated problems.
    RunLoop {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Iteration limit η.
        #[arg(long)]
        eta: Option<u32>,
        #[arg(long, value_enum)]
        mode: Option<FeedbackArg>,
        /// Scripted-backend completions (JSON file).
        #[arg(long)]
        script: Option<PathBuf>,
        /// Output directory for datasets and the campaign report.
        #[arg(long)]
        output: PathBuf,
    },
    /// Single-shot evaluation: one generation per problem, no feedback.
    Evaluate {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        script: Option<PathBuf>,
        /// JSON report file; stdout table always printed.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Loss metrics over reasoning/final dataset files.
    Losses {
        #[arg(long)]
        reasoning: Option<PathBuf>,
        #[arg(long = "final")]
        final_records: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let mut cfg = load_config(cli.config.as_deref()).context("loading config")?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Validate {
            domain,
            problem,
            plan,
            trace,
            feedback,
        } => cmd_validate(&domain, &problem, plan.as_deref(), trace.as_deref(), feedback.into()),
        Command::Plan {
            domain,
            problem,
            output,
            max_states,
            max_length,
            timeout_secs,
        } => {
            let limits = SearchLimits {
                max_expanded_states: max_states,
                max_plan_length: max_length,
                timeout: Duration::from_secs(timeout_secs),
            };
            cmd_plan(&domain, &problem, output.as_deref(), &limits)
        }
        Command::GenData {
            gen,
            mix,
            split,
            output,
        } => cmd_gen_data(&cfg, &gen, mix.as_deref(), split.as_deref(), &output),
        Command::Split {
            input,
            ratios,
            output,
        } => cmd_split(&cfg, &input, ratios.as_deref(), &output),
        Command::RunLoop {
            gen,
            backend,
            eta,
            mode,
            script,
            output,
        } => cmd_run_loop(&cfg, &gen, backend, eta, mode, script.as_deref(), &output),
        Command::Evaluate {
            gen,
            backend,
            script,
            output,
        } => cmd_evaluate(&cfg, &gen, backend, script.as_deref(), output.as_deref()),
        Command::Losses {
            reasoning,
            final_records,
            output,
        } => cmd_losses(&cfg, reasoning.as_deref(), final_records.as_deref(), output.as_deref()),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_validate(
    domain: &Path,
    problem: &Path,
    plan: Option<&Path>,
    trace: Option<&Path>,
    mode: FeedbackMode,
) -> Result<u8> {
    let d = parse_domain(&read(domain)?).context("parsing domain")?;
    let p = parse_problem(&read(problem)?, &d).context("parsing problem")?;
    let verdict = match (plan, trace) {
        (Some(plan_path), None) => {
            let plan = parse_plan(&read(plan_path)?, &d, &p).context("parsing plan")?;
            validate_plan(&d, &p, &plan)
        }
        (None, Some(trace_path)) => {
            let t = parse_trace(&read(trace_path)?, &d)
                .map_err(|e| anyhow::anyhow!("parsing trace: {e}"))?;
            validate_trace(&d, &p, &t)
        }
        _ => bail!("exactly one of --plan or --trace is required"),
    };
    println!("{}", render_feedback(&verdict, mode).text);
    Ok(if verdict.valid { 0 } else { 1 })
}

fn cmd_plan(
    domain: &Path,
    problem: &Path,
    output: Option<&Path>,
    limits: &SearchLimits,
) -> Result<u8> {
    let d = parse_domain(&read(domain)?).context("parsing domain")?;
    let p = parse_problem(&read(problem)?, &d).context("parsing problem")?;
    match solve(&d, &p, limits).context("grounding problem")? {
        SolveOutcome::Solved(plan) => {
            let text = print_plan(&plan);
            match output {
                Some(path) => std::fs::write(path, &text)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            eprintln!("; plan with {} actions", plan.len());
            Ok(0)
        }
        SolveOutcome::Unsolvable => {
            eprintln!("unsolvable: the goal is unreachable");
            Ok(1)
        }
        SolveOutcome::LimitExceeded(stats) => {
            eprintln!(
                "limit exceeded after {} expanded states ({:?})",
                stats.expanded, stats.elapsed
            );
            Ok(1)
        }
    }
}

fn parse_ratios<const N: usize>(text: &str, what: &str) -> Result<[f64; N]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {what} `{text}`"))?;
    let arr: [f64; N] = parts
        .try_into()
        .map_err(|v: Vec<f64>| anyhow::anyhow!("{what} needs {N} values, got {}", v.len()))?;
    Ok(arr)
}

fn effective_kinds(cfg: &RunConfig, gen: &GenArgs) -> Vec<(KindArg, InstanceKind)> {
    let mut g = cfg.generator.clone();
    for (slot, value) in [
        (&mut g.blocks, gen.blocks),
        (&mut g.cities, gen.cities),
        (&mut g.locations_per_city, gen.locations_per_city),
        (&mut g.packages, gen.packages),
        (&mut g.trucks, gen.trucks),
        (&mut g.airplanes, gen.airplanes),
    ] {
        if let Some(v) = value {
            *slot = v;
        }
    }
    gen.kind.iter().map(|k| (*k, k.instance_kind(&g))).collect()
}

fn gen_instances(
    kinds: &[(KindArg, InstanceKind)],
    count: usize,
    seed: u64,
) -> Result<Vec<PlanningInstance>> {
    let plain: Vec<InstanceKind> = kinds.iter().map(|(_, k)| k.clone()).collect();
    Ok(datagen_instances(&plain, count, seed)?)
}

fn cmd_gen_data(
    cfg: &RunConfig,
    gen: &GenArgs,
    mix: Option<&str>,
    split: Option<&str>,
    output: &Path,
) -> Result<u8> {
    let kinds: Vec<InstanceKind> = effective_kinds(cfg, gen).into_iter().map(|(_, k)| k).collect();
    let count = gen.count.unwrap_or(cfg.generator.count);
    let mix = match mix {
        Some(text) => {
            let [correct, pre, eff, frame, goal] = parse_ratios::<5>(text, "--mix")?;
            LabelMix {
                correct,
                precondition_unsatisfied: pre,
                effect_misapplied: eff,
                frame_violation: frame,
                goal_not_reached: goal,
            }
        }
        None => cfg.generator.mix.clone(),
    };
    let ratios = match split {
        Some(text) => parse_ratios::<3>(text, "--split")?,
        None => cfg.generator.split,
    };

    let records = make_phase1_dataset(&kinds, count, &mix, cfg.seed)?;
    std::fs::create_dir_all(output)?;
    write_jsonl(&output.join("phase1.jsonl"), &records)?;
    let spec = SplitSpec::new(ratios[0], ratios[1], ratios[2], cfg.seed)?;
    let (d1, d2, d_test) = split_dataset(&records, &spec)?;
    write_jsonl(&output.join("d1.jsonl"), &d1)?;
    write_jsonl(&output.join("d2.jsonl"), &d2)?;
    write_jsonl(&output.join("d_test.jsonl"), &d_test)?;
    println!(
        "wrote {} records to {} (splits: {}/{}/{})",
        records.len(),
        output.display(),
        d1.len(),
        d2.len(),
        d_test.len()
    );
    Ok(0)
}

fn cmd_split(cfg: &RunConfig, input: &Path, ratios: Option<&str>, output: &Path) -> Result<u8> {
    let records: Vec<Phase1Record> = read_jsonl(input)?;
    let r = match ratios {
        Some(text) => parse_ratios::<3>(text, "--ratios")?,
        None => cfg.generator.split,
    };
    let spec = SplitSpec::new(r[0], r[1], r[2], cfg.seed)?;
    let (d1, d2, d_test) = split_dataset(&records, &spec)?;
    std::fs::create_dir_all(output)?;
    write_jsonl(&output.join("d1.jsonl"), &d1)?;
    write_jsonl(&output.join("d2.jsonl"), &d2)?;
    write_jsonl(&output.join("d_test.jsonl"), &d_test)?;
    println!("split {} records into {}/{}/{}", records.len(), d1.len(), d2.len(), d_test.len());
    Ok(0)
}

#[derive(Deserialize)]
struct ScriptFile {
    #[serde(default)]
    default: String,
    #[serde(default)]
    entries: Vec<ScriptEntry>,
}

#[derive(Deserialize)]
struct ScriptEntry {
    problem_id: String,
    iteration: u32,
    completion: String,
}

fn build_backend(
    cfg: &RunConfig,
    choice: Option<BackendArg>,
    script: Option<&Path>,
) -> Result<Box<dyn ModelBackend>> {
    let kind = match choice {
        Some(BackendArg::Http) => BackendKind::Http,
        Some(BackendArg::Scripted) => BackendKind::Scripted,
        None => {
            if script.is_some() {
                BackendKind::Scripted
            } else {
                cfg.backend.kind
            }
        }
    };
    match kind {
        BackendKind::Http => {
            let http = HttpBackend::new(HttpBackendConfig {
                endpoint: cfg.backend.endpoint.clone(),
                api_key: cfg.backend.api_key.clone(),
                model: cfg.backend.model.clone(),
                timeout_secs: cfg.loop_cfg.timeout_secs,
                max_retries: cfg.loop_cfg.max_retries,
            })
            .map_err(|e| anyhow::anyhow!("building http backend: {e}"))?;
            Ok(Box::new(http))
        }
        BackendKind::Scripted => {
            let path = script
                .map(Path::to_path_buf)
                .or_else(|| cfg.backend.script_path.clone())
                .context("scripted backend needs --script or backend.script_path")?;
            let file: ScriptFile = serde_json::from_str(&read(&path)?)
                .with_context(|| format!("parsing script {}", path.display()))?;
            let mut map = BTreeMap::new();
            for e in file.entries {
                map.insert((e.problem_id, e.iteration), e.completion);
            }
            let default = if file.default.is_empty() {
                cfg.backend.default_completion.clone()
            } else {
                file.default
            };
            Ok(Box::new(ScriptedBackend::new(map, default)))
        }
    }
}

fn cmd_run_loop(
    cfg: &RunConfig,
    gen: &GenArgs,
    backend: Option<BackendArg>,
    eta: Option<u32>,
    mode: Option<FeedbackArg>,
    script: Option<&Path>,
    output: &Path,
) -> Result<u8> {
    let mut loop_cfg: LoopConfig = cfg.loop_cfg.clone();
    if let Some(eta) = eta {
        loop_cfg.eta = eta;
    }
    if let Some(mode) = mode {
        loop_cfg.feedback_mode = mode.into();
    }
    let kinds = effective_kinds(cfg, gen);
    let count = gen.count.unwrap_or(cfg.generator.count);
    let instances = gen_instances(&kinds, count, cfg.seed)?;
    let backend = build_backend(cfg, backend, script)?;
    let emit = CampaignEmit {
        output_dir: output.to_path_buf(),
        trainer_hook_url: cfg.backend.trainer_hook_url.clone(),
    };
    let report = run_campaign(backend.as_ref(), &instances, &loop_cfg, &cfg.weights, Some(&emit))
        .map_err(|e| anyhow::anyhow!("campaign failed: {e}"))?;
    std::fs::write(
        output.join("campaign.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!(
        "campaign: {}/{} solved ({:.1}%) over {} iterations",
        report.solved,
        report.problems,
        report.accuracy_percent,
        report.iterations.len()
    );
    for it in &report.iterations {
        println!(
            "  iteration {}: {}/{} newly valid, L_reasoning={:?}, L_final={:?}",
            it.iteration, it.newly_valid, it.attempted, it.loss_reasoning, it.loss_final
        );
    }
    Ok(0)
}

fn cmd_evaluate(
    cfg: &RunConfig,
    gen: &GenArgs,
    backend: Option<BackendArg>,
    script: Option<&Path>,
    output: Option<&Path>,
) -> Result<u8> {
    let backend = build_backend(cfg, backend, script)?;
    let opts = EvalOptions {
        temperature: cfg.loop_cfg.temperature,
        max_tokens: cfg.loop_cfg.max_tokens,
    };
    let count = gen.count.unwrap_or(cfg.generator.count);
    let mut results: Vec<EvalResult> = Vec::new();
    for (arg, kind) in effective_kinds(cfg, gen) {
        let instances = gen_instances(&[(arg, kind)], count, cfg.seed)?;
        results.push(evaluate(backend.as_ref(), arg.label(), &instances, &opts));
    }
    for r in &results {
        println!(
            "{}: accuracy {:.1}% ({}/{} valid, {} backend failures)",
            r.domain, r.accuracy_percent, r.valid, r.total, r.backend_failures
        );
    }
    let breakdown = error_breakdown(&results);
    print!("{}", breakdown.to_text_table());
    if let Some(path) = output {
        let payload = serde_json::json!({ "results": results, "breakdown": breakdown });
        std::fs::write(path, serde_json::to_string_pretty(&payload)?)?;
    }
    Ok(0)
}

fn cmd_losses(
    cfg: &RunConfig,
    reasoning: Option<&Path>,
    finals: Option<&Path>,
    output: Option<&Path>,
) -> Result<u8> {
    let reasoning_records = match reasoning {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let final_records = match finals {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    if reasoning_records.is_empty() && final_records.is_empty() {
        bail!("nothing to do: give --reasoning and/or --final JSONL files");
    }
    let report = compute_report(&reasoning_records, &final_records, &cfg.weights);
    let json = serde_json::to_string_pretty(&report)?;
    match output {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(0)
}
