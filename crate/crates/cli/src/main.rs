use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sage_core::bench::{generate_scenario, run_benchmark, write_episode, Family, ScenarioConfig};
use sage_core::config::RunConfig;
use sage_core::editing::{synthesize_subgoal, EditRequest};
use sage_core::graph::SceneGraph;
use sage_core::layout::{extract_layout, fit, Predictor};
use sage_core::library::{Library, LibraryError};
use sage_core::parser::parse;
use sage_core::planner::{plan, validate_chain, TaskSpec, TransitionChain};
use sage_core::sim::episode::run_episode;
use sage_core::sim::script::run_scripted;
use sage_core::sim::{render_full, render_static, WorldState};
use serde::Serialize;

const ARTIFACTS: &str = "artifacts";
const LIBRARY_DIR: &str = "library";
const PREDICTOR_FILE: &str = "predictor.json";

#[derive(Parser)]
#[command(name = "sage", version, about = "Scene-graph planning, sub-goal synthesis and simulated execution")]
struct Cli {
    /// Seed for demonstrations and benchmark placements.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Render resolution, e.g. 1280x720 (must be 16:9).
    #[arg(long, global = true)]
    resolution: Option<String>,
    /// Write sub-goal, achieved and intermediate edit images for every phase.
    #[arg(long, global = true)]
    dump_frames: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the demonstration library under <out>/artifacts/library.
    DemoGen {
        /// Demonstrations per family (overrides the config).
        #[arg(long)]
        demos: Option<usize>,
    },
    /// Fit the layout predictor on the library's transitions.
    FitLayout,
    /// Plan a transition chain.
    Plan {
        #[command(flatten)]
        source: TaskSource,
        /// Write the chain here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Synthesize the sub-goal image of one chain step of a scenario.
    RenderGoal {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Chain step (0-based).
        #[arg(long)]
        step: usize,
    },
    /// Run one episode.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Run the full benchmark matrix.
    Bench {
        /// Build the library and predictor first.
        #[arg(long)]
        build_all: bool,
    },
    /// Check a chain file.
    Validate {
        #[arg(long)]
        chain: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    family: Family,
    #[arg(long, default_value_t = 0)]
    placement_seed: u64,
    /// 0 is the demonstrated order.
    #[arg(long, default_value_t = 0)]
    order_seed: u64,
}

#[derive(Args)]
struct TaskSource {
    /// Task file (JSON).
    #[arg(long, requires = "graph", conflicts_with = "family")]
    task: Option<PathBuf>,
    /// Start scene graph file (JSON).
    #[arg(long, requires = "task")]
    graph: Option<PathBuf>,
    /// Plan a generated scenario instead.
    #[arg(long, required_unless_present = "task")]
    family: Option<Family>,
    #[arg(long, default_value_t = 0)]
    placement_seed: u64,
    #[arg(long, default_value_t = 0)]
    order_seed: u64,
}

#[derive(Debug, Clone, Copy)]
enum Category {
    Usage,
    Io,
    Parse,
    Plan,
    MissingArtifacts,
    InvalidChain,
    Other,
}

impl Category {
    fn name(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Io => "io",
            Category::Parse => "parse",
            Category::Plan => "plan",
            Category::MissingArtifacts => "missing_artifacts",
            Category::InvalidChain => "invalid_chain",
            Category::Other => "other",
        }
    }

    fn code(self) -> u8 {
        match self {
            Category::Usage => 2,
            Category::Io => 3,
            Category::Parse => 4,
            Category::Plan => 5,
            Category::MissingArtifacts => 6,
            Category::InvalidChain => 7,
            Category::Other => 8,
        }
    }
}

struct CliError {
    category: Category,
    message: String,
}

fn fail(category: Category, message: impl ToString) -> CliError {
    CliError { category, message: message.to_string() }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| fail(Category::Io, format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| fail(Category::Parse, format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| fail(Category::Io, format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| fail(Category::Io, format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn library_error(e: LibraryError) -> CliError {
    match e {
        LibraryError::Io { .. } => fail(Category::MissingArtifacts, e),
        LibraryError::MissingAsset(_) | LibraryError::CorruptManifest(_) => fail(Category::MissingArtifacts, e),
        LibraryError::ScenarioInvalid(_) => fail(Category::Other, e),
    }
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    cfg: RunConfig,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Ctx> {
        let mut cfg = match &cli.config {
            Some(p) => read_json::<RunConfig>(p)?,
            None => RunConfig::default(),
        };
        if let Some(r) = &cli.resolution {
            cfg.set_resolution(r).map_err(|e| fail(Category::Usage, e))?;
        }
        cfg.dump_frames |= cli.dump_frames;
        cfg.check().map_err(|e| fail(Category::Usage, e))?;
        Ok(Ctx { seed: cli.seed, out: cli.out.clone(), cfg })
    }

    fn artifacts(&self) -> PathBuf {
        self.out.join(ARTIFACTS)
    }

    fn library(&self) -> Result<Library> {
        let lib = Library::load(&self.artifacts().join(LIBRARY_DIR)).map_err(library_error)?;
        if (lib.manifest.width, lib.manifest.height) != (self.cfg.width, self.cfg.height) {
            return Err(fail(Category::MissingArtifacts, "library was built at another resolution"));
        }
        Ok(lib)
    }

    fn predictor(&self) -> Result<Predictor<f64>> {
        let p = self.artifacts().join(PREDICTOR_FILE);
        let text = std::fs::read_to_string(&p)
            .map_err(|e| fail(Category::MissingArtifacts, format!("{}: {e}", p.display())))?;
        let pred: Predictor<f64> =
            serde_json::from_str(&text).map_err(|e| fail(Category::MissingArtifacts, format!("{}: {e}", p.display())))?;
        if pred.frame != (self.cfg.width, self.cfg.height) {
            return Err(fail(Category::MissingArtifacts, "predictor was fitted at another resolution"));
        }
        Ok(pred)
    }

    fn scenario(&self, s: &ScenarioArgs) -> Result<(WorldState, TaskSpec)> {
        let sc = ScenarioConfig {
            family: s.family,
            placement_seed: s.placement_seed,
            order_seed: s.order_seed,
            width: self.cfg.width,
            height: self.cfg.height,
        };
        generate_scenario(&sc).map_err(|e| fail(Category::Other, e))
    }
}

fn demo_gen(ctx: &Ctx, demos: Option<usize>) -> Result<serde_json::Value> {
    let n = demos.unwrap_or(ctx.cfg.n_demos);
    let lib = Library::build(&ctx.cfg.families, n, ctx.seed, &ctx.cfg).map_err(library_error)?;
    let dir = ctx.artifacts().join(LIBRARY_DIR);
    lib.save(&dir).map_err(|e| fail(Category::Io, e))?;
    Ok(serde_json::json!({
        "library": dir,
        "demos": lib.manifest.demos.len(),
        "keyframes": lib.manifest.keyframes.len(),
        "entries": lib.entries().len(),
        "transitions": lib.manifest.transitions.len(),
        "digest": lib.digest(),
    }))
}

fn fit_layout(ctx: &Ctx) -> Result<serde_json::Value> {
    let lib = ctx.library()?;
    let pred = fit(&lib.examples(), (ctx.cfg.width, ctx.cfg.height)).map_err(|e| fail(Category::Other, e))?;
    let p = ctx.artifacts().join(PREDICTOR_FILE);
    write(&p, to_json(&pred))?;
    let models: serde_json::Map<String, serde_json::Value> = pred
        .models
        .iter()
        .map(|(k, m)| (k.to_string(), serde_json::to_value(&m.stats).unwrap()))
        .collect();
    Ok(serde_json::json!({ "predictor": p, "models": models }))
}

fn plan_cmd(ctx: &Ctx, src: &TaskSource) -> Result<TransitionChain> {
    let (g0, task): (SceneGraph, TaskSpec) = match (&src.task, &src.graph, src.family) {
        (Some(t), Some(g), _) => (read_json(g)?, read_json(t)?),
        (_, _, Some(family)) => {
            let args = ScenarioArgs { family, placement_seed: src.placement_seed, order_seed: src.order_seed };
            let (w, task) = ctx.scenario(&args)?;
            (parse(&w, &ctx.cfg.thresholds_scaled()).map_err(|e| fail(Category::Parse, e))?, task)
        }
        _ => return Err(fail(Category::Usage, "give --task and --graph, or --family")),
    };
    plan(&g0, &task).map_err(|e| fail(Category::Plan, e))
}

fn render_goal(ctx: &Ctx, s: &ScenarioArgs, step: usize) -> Result<serde_json::Value> {
    let (lib, pred) = (ctx.library()?, ctx.predictor()?);
    let (w0, task) = ctx.scenario(s)?;
    let g0 = parse(&w0, &ctx.cfg.thresholds_scaled()).map_err(|e| fail(Category::Parse, e))?;
    let chain = plan(&g0, &task).map_err(|e| fail(Category::Plan, e))?;
    if step >= chain.len() {
        return Err(fail(Category::Usage, format!("chain has {} steps", chain.len())));
    }
    // reach the requested state with the scripted expert
    let demo = run_scripted(&w0, &chain.truncated(step), &ctx.cfg.sim_scaled(), &ctx.cfg.controller_scaled())
        .map_err(|e| fail(Category::Other, e))?;
    let w = demo.keyframes.last().unwrap();
    let (g_k, g_next) = (&chain.graphs[step], &chain.graphs[step + 1]);
    let l_k = extract_layout(w);
    let l_next = pred.predict(g_k, &l_k, g_next).map_err(|e| fail(Category::Other, e))?;
    let frame = render_full(w);
    let plate = render_static(&w0).image;
    let req = EditRequest {
        frame: &frame,
        l_k: &l_k,
        g_k,
        g_next,
        l_next: &l_next,
        plate: Some(&plate),
        keep_stages: ctx.cfg.dump_frames,
    };
    let sub = synthesize_subgoal(&req, &lib).map_err(|e| fail(Category::Other, e))?;
    let dir = ctx.out.join("goals").join(s.family.name()).join(format!("{}_{}", s.placement_seed, s.order_seed));
    let p = dir.join(format!("step_{step:03}.png"));
    write(&p, sub.image.to_png())?;
    write(&dir.join(format!("step_{step:03}_current.png")), frame.image.to_png())?;
    if let Some(st) = &sub.stages {
        write(&dir.join(format!("step_{step:03}_erased.png")), st.erased.to_png())?;
        write(&dir.join(format!("step_{step:03}_inpainted.png")), st.inpainted.to_png())?;
    }
    Ok(serde_json::json!({
        "image": p,
        "action": chain.steps[step].action().to_string(),
        "layout": l_next,
        "sources": sub.sources.iter().map(|(k, v)| (k.to_string(), *v)).collect::<std::collections::BTreeMap<_, _>>(),
    }))
}

fn run_cmd(ctx: &Ctx, s: &ScenarioArgs) -> Result<serde_json::Value> {
    let (lib, pred) = (ctx.library()?, ctx.predictor()?);
    let (w0, task) = ctx.scenario(s)?;
    let sc = ScenarioConfig::new(s.family, s.placement_seed, s.order_seed);
    let r = run_episode(&w0, &task, sc.mode(), &pred, &lib, &ctx.cfg).map_err(|e| match e {
        sage_core::sim::episode::EpisodeError::Plan(_) => fail(Category::Plan, e),
        sage_core::sim::episode::EpisodeError::Parse(_) => fail(Category::Parse, e),
        _ => fail(Category::Other, e),
    })?;
    let dir = ctx.out.join(s.family.name()).join(sc.mode().name()).join(s.placement_seed.to_string());
    write_episode(&dir, &r).map_err(|e| fail(Category::Io, e))?;
    Ok(serde_json::json!({
        "episode": dir.join(sage_core::bench::EPISODE_FILE),
        "mode": sc.mode(),
        "phases": r.phases.len(),
        "passed": r.passed_phases(),
        "steps": r.total_steps,
        "success": r.success,
    }))
}

fn bench(ctx: &Ctx, build_all: bool) -> Result<serde_json::Value> {
    if build_all {
        demo_gen(ctx, None)?;
        fit_layout(ctx)?;
    }
    let (lib, pred) = (ctx.library()?, ctx.predictor()?);
    let r = run_benchmark(&ctx.cfg, &pred, &lib, ctx.seed, Some(&ctx.out)).map_err(|e| fail(Category::Io, e))?;
    Ok(serde_json::json!({
        "report": ctx.out.join(sage_core::bench::REPORT_JSON),
        "episodes": r.overall.episodes,
        "task_success": r.overall.task_success,
        "phase_success": r.overall.phase_success,
    }))
}

fn validate_cmd(path: &Path) -> Result<String> {
    let chain: TransitionChain = read_json(path)?;
    let report = validate_chain(&chain);
    let text = to_json(&report);
    if report.is_valid() {
        Ok(text)
    } else {
        print!("{text}");
        Err(fail(Category::InvalidChain, format!("{} issue(s) in {}", report.issues.len(), path.display())))
    }
}

fn execute(cli: &Cli) -> Result<String> {
    let ctx = Ctx::new(cli)?;
    match &cli.command {
        Command::DemoGen { demos } => demo_gen(&ctx, *demos).map(|v| to_json(&v)),
        Command::FitLayout => fit_layout(&ctx).map(|v| to_json(&v)),
        Command::Plan { source, output } => {
            let text = to_json(&plan_cmd(&ctx, source)?);
            match output {
                Some(p) => write(p, &text).map(|_| String::new()),
                None => Ok(text),
            }
        }
        Command::RenderGoal { scenario, step } => render_goal(&ctx, scenario, *step).map(|v| to_json(&v)),
        Command::Run { scenario } => run_cmd(&ctx, scenario).map(|v| to_json(&v)),
        Command::Bench { build_all } => bench(&ctx, *build_all).map(|v| to_json(&v)),
        Command::Validate { chain } => validate_cmd(chain),
    }
}

fn report(e: &CliError) -> ExitCode {
    let doc = serde_json::json!({ "error": e.category.name(), "message": e.message });
    eprintln!("{doc}");
    ExitCode::from(e.category.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return report(&fail(Category::Usage, e.to_string().trim_end())),
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}
