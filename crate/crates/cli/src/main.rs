mod manifest;
mod table;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use accel_dse::construct::{construct, resolve, CppDesign, DesignPoint};
use accel_dse::dse::{explore, Budget, ExploreConfig};
use accel_dse::kernel::{build_hierarchy, parse_kernel_spec, ArchHierarchy};
use accel_dse::legalize::{
    check_task_dependent, check_task_independent, check_tiling, classify_arrays, legalize,
};
use accel_dse::model::{init_model, CostModel, PlatformConfig, SynthReport};
use accel_dse::sim::{compare_with_model, SimConfig};
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "accel-dse", version, about = "Design-space exploration for tiled FPGA accelerators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check which loops can serve as PE loop.
    Check(Opts),
    /// Print the tunable parameters and the exact space size.
    Space(Opts),
    /// Estimate cycles and resources of one design point.
    Estimate(Opts),
    /// Search the design space for the fastest feasible point.
    Explore(Opts),
    /// Simulate one design point and compare with the model.
    Simulate(Opts),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check(_) => "check",
            Command::Space(_) => "space",
            Command::Estimate(_) => "estimate",
            Command::Explore(_) => "explore",
            Command::Simulate(_) => "simulate",
        }
    }

    fn opts(&self) -> &Opts {
        match self {
            Command::Check(o)
            | Command::Space(o)
            | Command::Estimate(o)
            | Command::Explore(o)
            | Command::Simulate(o) => o,
        }
    }
}

#[derive(Args, Clone)]
struct Opts {
    /// Kernel description (JSON).
    #[arg(long)]
    kernel: PathBuf,
    /// Synthesis report fixture (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Platform description (JSON); built-in default when omitted.
    #[arg(long)]
    platform: Option<PathBuf>,
    /// Design point file: {"values": {"PARAM": value, ...}}.
    #[arg(long)]
    point: Option<PathBuf>,
    /// PE loop; the outermost legal loop when omitted.
    #[arg(long)]
    pe_loop: Option<String>,
    /// Wall-clock exploration budget in seconds.
    #[arg(long, default_value_t = 180.0)]
    budget_secs: f64,
    /// Evaluation budget for exploration.
    #[arg(long)]
    budget_evals: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Directory for output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write a per-tile Gantt CSV when simulating.
    #[arg(long)]
    trace: bool,
}

enum Failure {
    /// Bad usage or unreadable input.
    Input(anyhow::Error),
    /// Valid input with a negative answer.
    Domain(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

struct Session {
    manifest: RunManifest,
    opts: Opts,
}

impl Session {
    fn read(path: &Path) -> anyhow::Result<String> {
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
    }

    fn hierarchy(&self) -> anyhow::Result<ArchHierarchy> {
        let text = Self::read(&self.opts.kernel)?;
        let spec = parse_kernel_spec(&text)
            .with_context(|| format!("invalid kernel {}", self.opts.kernel.display()))?;
        Ok(build_hierarchy(&spec))
    }

    fn platform(&self) -> anyhow::Result<PlatformConfig> {
        match &self.opts.platform {
            None => Ok(PlatformConfig::default()),
            Some(p) => PlatformConfig::from_json(&Self::read(p)?)
                .with_context(|| format!("invalid platform {}", p.display())),
        }
    }

    fn report(&self) -> anyhow::Result<SynthReport> {
        let p = self
            .opts
            .report
            .as_ref()
            .ok_or_else(|| anyhow!("--report is required for `{}`", self.manifest.subcommand))?;
        SynthReport::from_json(&Self::read(p)?).with_context(|| format!("invalid report {}", p.display()))
    }

    /// The requested PE loop, or the outermost one that passes every check.
    fn pe_loop(&self, h: &ArchHierarchy, report: &SynthReport, platform: &PlatformConfig) -> Result<String, Failure> {
        if let Some(l) = &self.opts.pe_loop {
            return Ok(l.clone());
        }
        let verdict = legalize(h, report, platform).map_err(|e| Failure::Input(e.into()))?;
        verdict.pe_loop_candidates.first().cloned().ok_or_else(|| {
            Failure::Domain(format!("no legal PE loop\n{}", table::verdict_table(&verdict)))
        })
    }

    fn model(&self) -> Result<(ArchHierarchy, CostModel), Failure> {
        let h = self.hierarchy()?;
        let platform = self.platform()?;
        let report = self.report()?;
        let pe_loop = self.pe_loop(&h, &report, &platform)?;
        let design = construct(&h, &pe_loop).map_err(|e| Failure::Input(e.into()))?;
        let constants = init_model(&report, &h).map_err(|e| Failure::Input(e.into()))?;
        let model = CostModel::new(&design, &constants, &platform).map_err(|e| Failure::Input(e.into()))?;
        for w in model.warnings() {
            eprintln!("warning: {w}");
        }
        Ok((h, model))
    }

    fn point(&self, design: &CppDesign) -> anyhow::Result<DesignPoint> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct PointFile {
            values: BTreeMap<String, u64>,
        }
        let p = self
            .opts
            .point
            .as_ref()
            .ok_or_else(|| anyhow!("--point is required for `{}`", self.manifest.subcommand))?;
        let file: PointFile = serde_json::from_str(&Self::read(p)?)
            .with_context(|| format!("invalid point file {}", p.display()))?;
        Ok(design.space().point_from_named(&file.values)?)
    }

    /// Prints `result` with the manifest and writes it to `name` when an
    /// output directory is set.
    fn emit(&mut self, name: &str, result: impl serde::Serialize) -> anyhow::Result<()> {
        self.manifest.elapsed_ms = RunManifest::now() - self.manifest.started_unix_ms;
        let doc = serde_json::to_string_pretty(&self.manifest.wrap(result))?;
        println!("{doc}");
        self.write(name, &(doc + "\n"))
    }

    fn write(&self, name: &str, text: &str) -> anyhow::Result<()> {
        if let Some(path) = self.manifest.out_path(name) {
            fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }
}

fn run(cmd: &Command) -> Outcome {
    let opts = cmd.opts().clone();
    if let Some(d) = &opts.out_dir {
        fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    let manifest = RunManifest {
        tool: env!("CARGO_BIN_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cmd.name().to_string(),
        kernel: opts.kernel.clone(),
        report: opts.report.clone(),
        platform: opts.platform.clone(),
        point: opts.point.clone(),
        pe_loop: opts.pe_loop.clone(),
        seed: opts.seed,
        budget_secs: opts.budget_secs,
        budget_evals: opts.budget_evals,
        jobs: opts.jobs,
        out_dir: opts.out_dir.clone(),
        started_unix_ms: RunManifest::now(),
        elapsed_ms: 0,
    };
    let mut s = Session { manifest, opts };
    match cmd {
        Command::Check(_) => cmd_check(&mut s),
        Command::Space(_) => cmd_space(&mut s),
        Command::Estimate(_) => cmd_estimate(&mut s),
        Command::Explore(_) => cmd_explore(&mut s),
        Command::Simulate(_) => cmd_simulate(&mut s),
    }
}

fn cmd_check(s: &mut Session) -> Outcome {
    let h = s.hierarchy()?;
    let platform = s.platform()?;
    let report = s.report()?;
    let verdict = legalize(&h, &report, &platform).map_err(|e| Failure::Input(e.into()))?;
    s.emit("check.json", &verdict)?;
    let text = table::verdict_table(&verdict);
    eprint!("{text}");
    s.write("check.txt", &(s.manifest.comment_header() + &text))?;
    if verdict.legal {
        Ok(())
    } else {
        Err(Failure::Domain("kernel has no legal PE loop".into()))
    }
}

fn cmd_space(s: &mut Session) -> Outcome {
    let h = s.hierarchy()?;
    let pe_loop = match (&s.opts.pe_loop, &s.opts.report) {
        (Some(l), _) => l.clone(),
        (None, Some(_)) => {
            let platform = s.platform()?;
            let report = s.report()?;
            s.pe_loop(&h, &report, &platform)?
        }
        // without a report only the structural checks can run
        (None, None) => {
            let platform = s.platform()?;
            h.loops()
                .into_iter()
                .find(|l| {
                    let classes = classify_arrays(&h, &l.id);
                    let max_pe = h
                        .loop_path(&l.id)
                        .map(|p| p.iter().filter_map(|l| l.trip_count).product())
                        .unwrap_or(1);
                    check_tiling(&h, &l.id).is_ok()
                        && check_task_dependent(&classes).is_ok()
                        && check_task_independent(&classes, &platform, max_pe).is_ok()
                })
                .map(|l| l.id.clone())
                .ok_or_else(|| Failure::Domain("no loop can serve as PE loop".into()))?
        }
    };
    let design = construct(&h, &pe_loop).map_err(|e| Failure::Input(e.into()))?;
    let space = design.space();
    let mut doc = space.to_json();
    doc["pe_loop"] = serde_json::json!(pe_loop);
    s.emit("space.json", doc)?;
    s.write("template.cpp", &format!("// {}{}", s.manifest.comment_header().trim_start_matches("# "), design.template_source()))?;
    Ok(())
}

fn cmd_estimate(s: &mut Session) -> Outcome {
    let (_, model) = s.model()?;
    let point = s.point(model.design())?;
    let e = model.estimate(&point).map_err(|e| Failure::Input(e.into()))?;
    let text = table::estimate_table(&[(&model.design().kernel, &e)], &model.platform().budgets);
    eprint!("{text}");
    s.emit(
        "estimate.json",
        serde_json::json!({
            "pe_loop": model.design().pe_loop,
            "point": model.design().space().named(&point),
            "estimate": e,
        }),
    )?;
    s.write("table.txt", &(s.manifest.comment_header() + &text))?;
    Ok(())
}

fn cmd_explore(s: &mut Session) -> Outcome {
    let (_, model) = s.model()?;
    let cfg = ExploreConfig {
        budget: Budget {
            evals: s.opts.budget_evals,
            seconds: Some(s.opts.budget_secs),
        },
        seed: s.opts.seed,
        jobs: s.opts.jobs,
    };
    let r = explore(&model, &cfg).map_err(|e| Failure::Input(e.into()))?;
    let resolved = resolve(model.design(), &r.best_point).map_err(|e| Failure::Input(e.into()))?;
    let text = table::estimate_table(&[(&model.design().kernel, &r.best_estimate)], &model.platform().budgets);
    eprint!("{text}");
    s.emit(
        "explore.json",
        serde_json::json!({
            "pe_loop": model.design().pe_loop,
            "exploration": r,
            "resolved": resolved,
        }),
    )?;
    let header = s.manifest.comment_header();
    s.write("trace.csv", &(header.clone() + &r.trace_csv()))?;
    s.write("arms.json", &(serde_json::to_string_pretty(&s.manifest.wrap(&r.arm_stats)).map_err(anyhow::Error::from)? + "\n"))?;
    s.write("design.cpp", &format!("// {}{}", header.trim_start_matches("# "), resolved.source))?;
    s.write("table.txt", &(header + &text))?;
    if r.feasible {
        Ok(())
    } else {
        Err(Failure::Domain("no evaluated point fits 80% of the device".into()))
    }
}

fn cmd_simulate(s: &mut Session) -> Outcome {
    if s.opts.trace && s.opts.out_dir.is_none() {
        return Err(Failure::Input(anyhow!("--trace needs --out-dir")));
    }
    let (_, model) = s.model()?;
    let point = s.point(model.design())?;
    let cfg = SimConfig {
        trace: s.opts.trace,
        ..SimConfig::default()
    };
    let (sim, divergence) = compare_with_model(&model, &point.0, &cfg);
    eprintln!(
        "model {} cycles, simulated {} cycles, divergence {:.3}%",
        divergence.total.model, divergence.total.simulated, divergence.total.percent
    );
    if s.opts.trace {
        s.write("gantt.csv", &(s.manifest.comment_header() + &sim.gantt_csv()))?;
    }
    s.emit(
        "simulate.json",
        serde_json::json!({
            "pe_loop": model.design().pe_loop,
            "point": model.design().space().named(&point),
            "simulation": sim,
            "divergence": divergence,
        }),
    )?;
    Ok(())
}
