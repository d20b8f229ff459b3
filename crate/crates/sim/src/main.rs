use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use occsphere_core::bank::{ActorAsset, ActorBank};
use occsphere_core::codec::{self, grid_hash};
use occsphere_core::dynamics::LaneGraph;
use occsphere_core::harness::{
    self, load_scenario, parse_trajectory, run_closed_loop, run_open_loop, world_at_tick, Endpoint,
    EpisodeLog, HarnessError, SubprocessEndpoint, TcpEndpoint,
};
use occsphere_core::metrics::{
    aggregate, parse_results, render_report, MetricsConfig, Route, Scores, StepRecord,
};
use occsphere_core::project::{render_grid, write_depth, write_pgm, CameraRig, RigConfig};
use occsphere_core::scene::{
    build_city, expand_across, merge_regions, LayoutConfig, ProceduralGenerator, RegionGenerator,
    RoadGrid, SceneConfig, SceneStyle, Seam, StyleTag,
};
use occsphere_core::{Pose, SemanticGrid, VoxelLabel};

/// Occupancy world simulator: scene building, rendering and agent evaluation.
#[derive(Parser)]
#[command(name = "sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an episode against an external agent.
    ClosedLoop(ClosedLoopArgs),
    /// Score a fixed ego trajectory against the scenario's replayed traffic.
    OpenLoop(OpenLoopArgs),
    /// Re-score an episode log against a route.
    Eval(EvalArgs),
    /// Print a results file as a table.
    Report { results: PathBuf },
    /// Rasterize a Manhattan road network into a .bev file.
    GenBev(GenBevArgs),
    /// Generate a region from a road map.
    GenScene(GenSceneArgs),
    /// Grow a new region across one face of an existing one.
    Expand(ExpandArgs),
    /// Assemble a city from a layout file.
    BuildCity(BuildCityArgs),
    /// Extract the lane graph of a road map.
    Lanes {
        #[arg(long)]
        bev: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a grid through a camera rig.
    Render(RenderArgs),
    /// Compose a scenario's world at one tick.
    Compose(ComposeArgs),
    /// Manage actor-bank directories.
    #[command(subcommand)]
    ActorBank(BankCommand),
}

#[derive(Args)]
struct ClosedLoopArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Shell command that starts the agent (spoken to over stdio).
    #[arg(long, conflicts_with = "connect", required_unless_present = "connect")]
    agent: Option<String>,
    /// Address of an agent listening on TCP.
    #[arg(long)]
    connect: Option<String>,
    /// Episode log (newline-delimited JSON).
    #[arg(long)]
    log: Option<PathBuf>,
    /// key=value results file.
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args)]
struct OpenLoopArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// `x y yaw [speed]` lines, or an episode log whose ego trace is replayed.
    #[arg(long)]
    traj: PathBuf,
    /// Per-step signals (newline-delimited JSON).
    #[arg(long)]
    steps: Option<PathBuf>,
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    log: PathBuf,
    /// Route file with one `x y` waypoint per line.
    #[arg(long)]
    route: PathBuf,
    #[arg(long, default_value_t = Route::DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Metric settings (TOML); defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args)]
struct GenBevArgs {
    /// Cells along x and y.
    #[arg(long, num_args = 2, default_values_t = [200, 200])]
    size: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    cell: f64,
    /// World xy of the min corner.
    #[arg(long, num_args = 2, default_values_t = [0.0, 0.0], allow_negative_numbers = true)]
    origin: Vec<f64>,
    #[arg(long, default_value_t = RoadGrid::default().spacing)]
    spacing: i64,
    #[arg(long, num_args = 2, default_values_t = RoadGrid::default().offset, allow_negative_numbers = true)]
    offset: Vec<i64>,
    #[arg(long, default_value_t = RoadGrid::default().lane_cells)]
    lane_cells: i64,
    #[arg(long, default_value_t = RoadGrid::default().sidewalk_cells)]
    sidewalk_cells: i64,
    /// Omit roads running along x.
    #[arg(long)]
    no_x_roads: bool,
    /// Omit roads running along y.
    #[arg(long)]
    no_y_roads: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    SuburbanVegetation,
    CommercialBuildings,
    OpenRoad,
}

impl From<Style> for StyleTag {
    fn from(s: Style) -> Self {
        match s {
            Style::SuburbanVegetation => StyleTag::SuburbanVegetation,
            Style::CommercialBuildings => StyleTag::CommercialBuildings,
            Style::OpenRoad => StyleTag::OpenRoad,
        }
    }
}

#[derive(Args)]
struct FrameArgs {
    #[arg(long, default_value_t = SceneConfig::default().depth)]
    depth: usize,
    #[arg(long, default_value_t = SceneConfig::default().z_origin, allow_negative_numbers = true)]
    z_origin: f64,
    #[arg(long, default_value_t = SceneConfig::default().ground_layer)]
    ground_layer: usize,
}

impl FrameArgs {
    fn config(&self, footprint: [usize; 2], voxel_size: f64) -> SceneConfig {
        SceneConfig {
            footprint,
            depth: self.depth,
            voxel_size,
            z_origin: self.z_origin,
            ground_layer: self.ground_layer,
        }
    }
}

#[derive(Args)]
struct GenSceneArgs {
    #[arg(long)]
    bev: PathBuf,
    #[arg(long, value_enum, default_value = "suburban-vegetation")]
    style: Style,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    frame: FrameArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExpandArgs {
    /// Existing region.
    #[arg(long)]
    scene: PathBuf,
    /// Road map of the new region, in world coordinates.
    #[arg(long)]
    bev: PathBuf,
    /// Face to grow from: +x, -x, +y or -y.
    #[arg(long, allow_hyphen_values = true)]
    side: String,
    /// Shared band width in voxels.
    #[arg(long, default_value_t = 16)]
    band: usize,
    #[arg(long, value_enum, default_value = "suburban-vegetation")]
    style: Style,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SceneConfig::default().ground_layer)]
    ground_layer: usize,
    /// The new region.
    #[arg(long)]
    out: PathBuf,
    /// Also write both regions merged into one grid.
    #[arg(long)]
    merged: Option<PathBuf>,
}

#[derive(Args)]
struct BuildCityArgs {
    #[arg(long)]
    layout: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the assembled road map.
    #[arg(long)]
    bev_out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    world: PathBuf,
    /// Rig TOML; the six-view surround rig when absent.
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    width: usize,
    #[arg(long, default_value_t = 224)]
    height: usize,
    /// Ego pose `x y z yaw` the rig is mounted on.
    #[arg(long, num_args = 4, default_values_t = [0.0, 0.0, 0.0, 0.0], allow_negative_numbers = true)]
    ego: Vec<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ComposeArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Static scene; overrides the scenario's scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    tick: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum BankCommand {
    /// Write the built-in assets to a directory.
    Init {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        voxel_size: f64,
    },
    /// List the assets of a bank.
    List {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Add an asset grid to a bank, creating the bank if needed.
    Import {
        #[arg(long)]
        dir: PathBuf,
        /// Voxel grid of the asset; all occupied voxels must carry `class`.
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        class: String,
        #[arg(long, default_value = "")]
        caption: String,
        /// Shift the grid so its footprint is centered on the origin and rests on z = 0.
        #[arg(long)]
        recenter: bool,
    },
}

/// A failed command: message and process exit code.
struct Failure(i32, String);

impl Failure {
    fn config(e: impl Display) -> Self {
        Failure(4, e.to_string())
    }

    fn io(e: impl Display) -> Self {
        Failure(1, e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure(e.exit_code(), e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

fn seed_override() -> Result<Option<u64>, Failure> {
    match std::env::var("OCCSPHERE_SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            Failure::config(format!("OCCSPHERE_SEED={v:?} is not an unsigned integer"))
        }),
        Err(_) => Ok(None),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn print_scores(scores: &Scores, results: Option<&Path>) -> Result<(), Failure> {
    let text = scores.to_results();
    print!(
        "{}",
        render_report(&parse_results(&text).expect("own results parse"))
    );
    if let Some(p) = results {
        write(p, &text)?;
    }
    Ok(())
}

fn closed_loop(a: ClosedLoopArgs) -> CmdResult {
    let sc = load_scenario(&a.scenario, seed_override()?)?;
    let mut endpoint: Box<dyn Endpoint> = match (&a.agent, &a.connect) {
        (Some(cmd), _) => {
            Box::new(SubprocessEndpoint::spawn_shell(cmd).map_err(|e| Failure(2, e.to_string()))?)
        }
        (None, Some(addr)) => {
            Box::new(TcpEndpoint::connect(addr).map_err(|e| Failure(2, e.to_string()))?)
        }
        (None, None) => unreachable!("clap requires one agent option"),
    };
    let log = run_closed_loop(&sc, endpoint.as_mut())?;
    if let Some(p) = &a.log {
        write(p, &log.to_ndjson())?;
    }
    match &log.outcome {
        harness::Outcome::Completed { reason } => {
            eprintln!(
                "episode ended after {} ticks: {}",
                log.entries.len(),
                reason.as_str()
            )
        }
        harness::Outcome::AgentFailure { detail } => eprintln!("agent failure: {detail}"),
        harness::Outcome::ProtocolError { detail } => eprintln!("protocol error: {detail}"),
    }
    if let Some(s) = &log.scores {
        print_scores(s, a.results.as_deref())?;
    }
    Ok(log.outcome.exit_code())
}

fn open_loop(a: OpenLoopArgs) -> CmdResult {
    let sc = load_scenario(&a.scenario, seed_override()?)?;
    let text = read(&a.traj)?;
    let traj = if text.trim_start().starts_with('{') {
        EpisodeLog::parse_ndjson(&text)?.trajectory()
    } else {
        parse_trajectory(&text)?
    };
    let (records, scores) = run_open_loop(&sc, &traj)?;
    if let Some(p) = &a.steps {
        write(p, &step_log(&records))?;
    }
    print_scores(&scores, a.results.as_deref())?;
    Ok(0)
}

fn step_log(records: &[StepRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

fn eval(a: EvalArgs) -> CmdResult {
    let log = EpisodeLog::parse_ndjson(&read(&a.log)?)?;
    let route = Route::parse(&read(&a.route)?, a.tolerance).map_err(Failure::config)?;
    let cfg: MetricsConfig = match &a.config {
        Some(p) => toml::from_str(&read(p)?).map_err(Failure::config)?,
        None => MetricsConfig::default(),
    };
    let records: Vec<StepRecord> = log
        .records()
        .into_iter()
        .map(|r| StepRecord {
            progress: route.progress(r.position),
            ..r
        })
        .collect();
    let scores = aggregate(&records, &route, &cfg).map_err(Failure::config)?;
    print_scores(&scores, a.results.as_deref())?;
    Ok(0)
}

fn pair<T: Copy>(v: &[T]) -> [T; 2] {
    [v[0], v[1]]
}

fn gen_bev(a: GenBevArgs) -> CmdResult {
    let roads = RoadGrid {
        spacing: a.spacing,
        offset: pair(&a.offset),
        lane_cells: a.lane_cells,
        sidewalk_cells: a.sidewalk_cells,
        x_roads: !a.no_x_roads,
        y_roads: !a.no_y_roads,
    };
    let bev = roads
        .rasterize(pair(&a.size), a.cell, pair(&a.origin))
        .map_err(Failure::config)?;
    codec::write_bev(&a.out, &bev).map_err(Failure::io)?;
    Ok(0)
}

fn gen_scene(a: GenSceneArgs) -> CmdResult {
    let bev = codec::read_bev(&a.bev).map_err(Failure::config)?;
    let generator = ProceduralGenerator::new(a.frame.config(bev.dims(), bev.cell_size()));
    let grid = generator
        .generate(&bev, &SceneStyle::preset(a.style.into()), a.seed)
        .map_err(Failure::config)?;
    codec::write_grid(&a.out, &grid).map_err(Failure::io)?;
    println!("{:016x}", grid_hash(&grid));
    Ok(0)
}

fn expand(a: ExpandArgs) -> CmdResult {
    let prev = codec::read_grid(&a.scene).map_err(Failure::config)?;
    let bev = codec::read_bev(&a.bev).map_err(Failure::config)?;
    let side = a.side.parse().map_err(Failure::config)?;
    let seam = Seam::new(prev.dims(), side, a.band).map_err(Failure::config)?;
    let [_, _, nz] = prev.dims();
    let config = SceneConfig {
        footprint: bev.dims(),
        depth: nz,
        voxel_size: prev.voxel_size(),
        z_origin: prev.origin()[2],
        ground_layer: a.ground_layer,
    };
    let next = expand_across(
        &ProceduralGenerator::new(config),
        &prev,
        &seam,
        &bev,
        &SceneStyle::preset(a.style.into()),
        a.seed,
    )
    .map_err(Failure::config)?;
    codec::write_grid(&a.out, &next).map_err(Failure::io)?;
    if let Some(p) = &a.merged {
        let merged =
            merge_regions(&prev, &next, &seam.mask_prev, seam.offset).map_err(Failure::config)?;
        codec::write_grid(p, &merged).map_err(Failure::io)?;
    }
    Ok(0)
}

fn city(a: BuildCityArgs) -> CmdResult {
    let (layout, style) = LayoutConfig::load(&a.layout).map_err(Failure::config)?;
    let grid = build_city(&layout, &style, a.seed).map_err(Failure::config)?;
    codec::write_grid(&a.out, &grid).map_err(Failure::io)?;
    if let Some(p) = &a.bev_out {
        codec::write_bev(p, &layout.city_bev().map_err(Failure::config)?).map_err(Failure::io)?;
    }
    let [x, y, z] = grid.dims();
    println!("{x}x{y}x{z} {:016x}", grid_hash(&grid));
    Ok(0)
}

fn lanes(bev: &Path, out: &Path) -> CmdResult {
    let bev = codec::read_bev(bev).map_err(Failure::config)?;
    let graph = LaneGraph::from_bev(&bev).map_err(Failure::config)?;
    write(out, &graph.to_text())?;
    println!("{} lanes", graph.len());
    Ok(0)
}

fn render(a: RenderArgs) -> CmdResult {
    let grid = codec::read_grid(&a.world).map_err(Failure::config)?;
    let rig = match &a.rig {
        Some(p) => RigConfig::load(p)
            .and_then(|r| r.build())
            .map_err(Failure::config)?,
        None => CameraRig::surround(a.width, a.height),
    };
    let ego = Pose::new(a.ego[0], a.ego[1], a.ego[2], a.ego[3]);
    fs::create_dir_all(&a.out_dir).map_err(Failure::io)?;
    for (name, cam) in rig.place(&ego, None).map_err(Failure::config)? {
        let img = render_grid(&grid, &cam);
        write_pgm(&a.out_dir.join(format!("{name}.pgm")), &img).map_err(Failure::io)?;
        write_depth(&a.out_dir.join(format!("{name}.dep")), &img).map_err(Failure::io)?;
        println!(
            "{name}: {} of {} pixels hit",
            img.hit_count(),
            img.width * img.height
        );
    }
    Ok(0)
}

fn compose(a: ComposeArgs) -> CmdResult {
    let mut sc = load_scenario(&a.scenario, seed_override()?)?;
    if let Some(p) = &a.scene {
        sc.static_scene = codec::read_grid(p).map_err(Failure::config)?;
        sc.static_ref = format!("{:016x}", grid_hash(&sc.static_scene));
    }
    let world = world_at_tick(&sc, a.tick)?;
    codec::write_grid(&a.out, &world.grid).map_err(Failure::io)?;
    println!(
        "tick {} actors {} off-grid {} static conflicts {} actor conflicts {} hash {:016x}",
        world.tick,
        world.actors.len(),
        world.off_grid.len(),
        world.static_conflicts.len(),
        world.actor_conflicts.len(),
        grid_hash(&world.grid)
    );
    Ok(0)
}

/// Shift `grid` so the occupied box is centered on the xy origin with its bottom at z = 0.
fn recenter(grid: &SemanticGrid) -> Result<SemanticGrid, Failure> {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for (l, _) in grid.occupied() {
        let c = grid.coords(l);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    if lo[0] == usize::MAX {
        return Err(Failure::config("asset grid has no occupied voxels"));
    }
    let vs = grid.voxel_size();
    let origin = [
        -((lo[0] + hi[0] + 1) as f64) * vs / 2.0,
        -((lo[1] + hi[1] + 1) as f64) * vs / 2.0,
        -(lo[2] as f64) * vs,
    ];
    SemanticGrid::from_labels(grid.dims(), vs, origin, grid.labels().to_vec())
        .map_err(Failure::config)
}

fn actor_bank(cmd: BankCommand) -> CmdResult {
    match cmd {
        BankCommand::Init { dir, voxel_size } => {
            ActorBank::builtin(voxel_size)
                .save(&dir)
                .map_err(Failure::io)?;
        }
        BankCommand::List { dir } => {
            let bank = ActorBank::load(&dir).map_err(Failure::config)?;
            for a in bank.assets() {
                let [l, w, h] = a.footprint;
                println!(
                    "{}\t{}\t{l}x{w}x{h}\t{}\t{}",
                    a.asset_id,
                    a.class,
                    a.voxel_count(),
                    a.caption
                );
            }
        }
        BankCommand::Import {
            dir,
            file,
            id,
            class,
            caption,
            recenter: shift,
        } => {
            let class = VoxelLabel::from_name(&class)
                .ok_or_else(|| Failure::config(format!("unknown class {class:?}")))?;
            let mut grid = codec::read_grid(&file).map_err(Failure::config)?;
            if shift {
                grid = recenter(&grid)?;
            }
            let asset = ActorAsset::new(id, class, caption, grid).map_err(Failure::config)?;
            let mut bank = if dir.join(occsphere_core::bank::MANIFEST_FILE).exists() {
                ActorBank::load(&dir).map_err(Failure::config)?
            } else {
                ActorBank::new()
            };
            bank.insert(asset).map_err(Failure::config)?;
            bank.save(&dir).map_err(Failure::io)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ClosedLoop(a) => closed_loop(a),
        Command::OpenLoop(a) => open_loop(a),
        Command::Eval(a) => eval(a),
        Command::Report { results } => read(&results)
            .and_then(|t| parse_results(&t).map_err(Failure::config))
            .map(|entries| {
                print!("{}", render_report(&entries));
                0
            }),
        Command::GenBev(a) => gen_bev(a),
        Command::GenScene(a) => gen_scene(a),
        Command::Expand(a) => expand(a),
        Command::BuildCity(a) => city(a),
        Command::Lanes { bev, out } => lanes(&bev, &out),
        Command::Render(a) => render(a),
        Command::Compose(a) => compose(a),
        Command::ActorBank(c) => actor_bank(c),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
