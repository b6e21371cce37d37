use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scene_atlas::editor::{apply_edit, EditRequest, Outcome};
use scene_atlas::image::Image;
use scene_atlas::router::{
    format_turn, run_turn, ArtifactKind, ChatSession, Planner, RemotePlanner, SceneExecutor, SceneRegistry, ScriptedPlanner,
};
use scene_atlas::scene::{SceneDir, SynthSpec};
use scene_atlas::service::{self, RenderSource, ServiceConfig};
use scene_atlas::train::TrainConfig;

#[derive(Parser)]
#[command(name = "scene-atlas", version, about = "Layered atlas decomposition and editing of multi-view scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerChoice {
    Scripted,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Build a scene directory from a folder of view images.
    Init {
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic scene with known layers.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 96)]
        width: usize,
        #[arg(long, default_value_t = 96)]
        height: usize,
        #[arg(long, default_value_t = 16)]
        views: usize,
        #[arg(long, default_value_t = 16.0)]
        radius: f64,
    },
    /// Fit the fields; writes the checkpoint and loss log.
    Train {
        scene: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render every view from the fields, the stored atlases or an edit.
    Render {
        scene: PathBuf,
        #[arg(long)]
        edit: Option<String>,
        #[arg(long, conflicts_with = "edit")]
        from_atlas: bool,
    },
    /// Rasterize the foreground and background atlases.
    Atlas {
        scene: PathBuf,
        #[arg(long)]
        res: Option<usize>,
    },
    /// Apply one tool to the scene.
    Edit {
        scene: PathBuf,
        #[arg(long)]
        tool: String,
        #[arg(long, default_value = "")]
        args: String,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        new_object: Option<PathBuf>,
        #[arg(long)]
        parent: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Talk to the scene; one request per input line.
    Chat {
        scene: PathBuf,
        #[arg(long, value_enum, default_value = "scripted")]
        planner: PlannerChoice,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Start the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn open(scene: &Path) -> Result<SceneDir> {
    SceneDir::open(scene).with_context(|| format!("opening scene {}", scene.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init { images, out } => {
            let s = service::init_scene(&images, &out)?;
            let m = s.manifest();
            println!("scene {}: {} views of {}x{}", out.display(), m.views, m.width, m.height);
        }
        Command::Synth {
            out,
            width,
            height,
            views,
            radius,
        } => {
            let spec = SynthSpec::drifting(width, height, views, radius, (1.0, 0.0));
            service::synth_scene_dir(&spec, &out)?;
            println!("synthetic scene written to {}", out.display());
        }
        Command::Train {
            scene,
            config,
            steps,
            seed,
        } => {
            let s = open(&scene)?;
            let mut cfg = match config {
                Some(p) => TrainConfig::load(&p)?,
                None => TrainConfig::scaled(),
            };
            if let Some(n) = steps {
                cfg.total_steps = n;
            }
            if let Some(n) = seed {
                cfg.seed = n;
            }
            cfg.validate()?;
            let every = (cfg.total_steps / 100).max(1);
            let total = cfg.total_steps;
            let start = std::time::Instant::now();
            service::train_scene(&s, &cfg, |r| {
                if (r.step + 1) % every == 0 || r.step + 1 == total {
                    eprintln!(
                        "step {}/{} loss {:.5} ({:.0}s)",
                        r.step + 1,
                        total,
                        r.total,
                        start.elapsed().as_secs_f64()
                    );
                }
            })?;
            println!("checkpoint written to {}", s.checkpoint_path().display());
        }
        Command::Render { scene, edit, from_atlas } => {
            let s = open(&scene)?;
            let source = match (edit, from_atlas) {
                (Some(id), _) => RenderSource::Edit(id),
                (None, true) => RenderSource::Atlas,
                (None, false) => RenderSource::Fields,
            };
            let paths = service::render_scene(&s, &source)?;
            if let Some(dir) = paths.first().and_then(|p| p.parent()) {
                println!("{} views rendered to {}", paths.len(), dir.display());
            }
        }
        Command::Atlas { scene, res } => {
            let s = open(&scene)?;
            let (fg, _) = service::write_scene_atlases(&s, res)?;
            println!("atlases ({}x{0}) written to {}", fg.resolution(), s.atlas_dir().display());
        }
        Command::Edit {
            scene,
            tool,
            args,
            mask,
            new_object,
            parent,
            seed,
        } => {
            let s = open(&scene)?;
            let mut req = EditRequest::new(&tool, &[]);
            req.args = scene_atlas::router::split_args(&args);
            req.mask = mask.map(|p| Image::load_png(&p).map(|i| i.with_channels(1))).transpose()?;
            req.new_object = new_object
                .map(|p| Image::load_png(&p).map(|i| i.with_channels(1)))
                .transpose()?;
            req.parent = parent;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match apply_edit(&s, &req, &mut rng)? {
                Outcome::Edit { id, region } => println!("edit {id} ({} region)", region.name()),
                Outcome::Artifact { path, .. } => println!("artifact {}", path.display()),
                Outcome::Text(t) => println!("{t}"),
            }
        }
        Command::Chat {
            scene,
            planner,
            rules,
            seed,
        } => chat(&scene, planner, rules, seed)?,
        Command::Serve { config } => {
            let cfg = match config {
                Some(p) => ServiceConfig::load(&p)?,
                None => ServiceConfig::default(),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(cfg))?;
        }
    }
    Ok(())
}

fn chat(scene: &Path, choice: PlannerChoice, rules: Option<PathBuf>, seed: u64) -> Result<()> {
    let s = open(scene)?;
    let mut planner: Box<dyn Planner> = match (choice, rules) {
        (PlannerChoice::Scripted, Some(r)) => Box::new(ScriptedPlanner::load(&r)?),
        (PlannerChoice::Scripted, None) => Box::new(ScriptedPlanner::builtin()),
        (PlannerChoice::Remote, Some(_)) => bail!("--rules only applies to the scripted planner"),
        (PlannerChoice::Remote, None) => Box::new(RemotePlanner::from_env()?),
    };
    let registry = Arc::new(SceneRegistry::in_memory(seed));
    let handle = registry.register(s.root())?;
    let exec = SceneExecutor::new(registry, seed);
    let mut session = ChatSession::new("cli", Some(handle.clone()));
    let interactive = std::io::stdin().is_terminal();
    let mut out = std::io::stdout().lock();
    writeln!(out, "Scene: {handle}")?;
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        if interactive {
            write!(out, "> ")?;
            out.flush()?;
        }
        let Some(line) = lines.next() else { break };
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let reply = run_turn(&mut session, line, planner.as_mut(), &exec);
        write!(out, "{}", format_turn(line, &reply))?;
        for a in reply.artifacts.iter().filter(|a| a.kind == ArtifactKind::Edit) {
            writeln!(out, "  views: edits/{}/views/", a.id)?;
        }
        out.flush()?;
    }
    Ok(())
}
