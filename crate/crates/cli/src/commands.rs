use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use log::info;

use hdsg_core::agent::{
    default_skills, execute_plan, parse_plan, render_prompt, HttpLlm, LlmClient, MockLlm, Robot, DEFAULT_SYSTEM_CONTEXT,
};
use hdsg_core::demo::{run_demo, DemoConfig, DemoEvent};
use hdsg_core::dynamic::CameraStream;
use hdsg_core::eval::run_eval;
use hdsg_core::fusion;
use hdsg_core::sim::{simulate, Scenario};
use hdsg_core::static_graph::{build_static_graph, parse_json, parse_regions, read_jsonl, Doorway, StaticBuildConfig};
use hdsg_core::store::{fetch_latest, serve, GraphStore};
use hdsg_core::{DynamicSubgraph, Error, FrameObservation, GlobalGraph, Result, UnifiedSnapshot};

use crate::config::{parse_mode, RunConfig};
use crate::{Cli, Command};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read(path)?, &path.display().to_string())
}

/// Pretty JSON with a trailing newline.
fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Applies subcommand flags, the last configuration layer.
fn apply_flags(cli: &Cli, cfg: &mut RunConfig) -> Result<()> {
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    match &cli.command {
        Command::BuildStatic(a) => {
            if let Some(v) = a.vthr {
                cfg.static_build.v_thr = v;
            }
            if let Some(p) = &a.classes {
                cfg.static_build.static_classes = StaticBuildConfig::parse_class_list(&read(p)?);
            }
        }
        Command::RunDynamic(a) => {
            if let Some(w) = a.window {
                cfg.dynamic.window_s = w;
            }
            if let Some(h) = a.hz {
                cfg.dynamic.frame_hz = h;
            }
            if let Some(k) = a.top_k {
                cfg.dynamic.top_k = k;
            }
        }
        Command::Fuse(a) => {
            if let Some(m) = &a.mode {
                cfg.fusion.mode = parse_mode(m)?;
            }
            if let Some(b) = a.bthr {
                cfg.fusion.b_thr = b;
            }
            if let Some(p) = &a.camera_region {
                cfg.fusion.camera_region = load_json::<BTreeMap<String, String>>(p)?;
            }
        }
        Command::ServeStore(a) => {
            if let Some(h) = a.history {
                cfg.history = h;
            }
        }
        Command::Agent(a) => {
            if let Some(u) = &a.llm_endpoint {
                cfg.llm.url = u.clone();
                cfg.llm.mock_script = None;
            }
            if let Some(m) = &a.mock {
                cfg.llm.mock_script = Some(m.clone());
            }
            if let Some(r) = &a.robot_start {
                cfg.robot_start = Some(r.clone());
            }
        }
        Command::Simulate(a) => {
            if let Some(w) = a.window {
                cfg.dynamic.window_s = w;
            }
        }
        Command::Eval(_) | Command::Demo(_) => {}
    }
    Ok(())
}

pub fn run(cli: &Cli, mut cfg: RunConfig) -> Result<()> {
    apply_flags(cli, &mut cfg)?;
    if cli.print_config {
        let text = serde_json::to_string_pretty(&cfg)?;
        return writeln!(std::io::stdout(), "{text}").map_err(|e| Error::io("<stdout>", e));
    }
    cfg.validate()?;
    match &cli.command {
        Command::BuildStatic(a) => {
            let frames: Vec<FrameObservation> = read_jsonl(
                BufReader::new(File::open(&a.frames).map_err(|e| Error::io(&a.frames, e))?),
                &a.frames.display().to_string(),
            )?;
            let regions = parse_regions(&read(&a.regions)?, &a.regions.display().to_string())?;
            let doorways: Vec<Doorway> = match &a.doorways {
                Some(p) => load_json(p)?,
                None => Vec::new(),
            };
            let g = build_static_graph(&frames, &regions, &doorways, &cfg.static_build)?;
            write_json(&a.out, &g)?;
            println!(
                "{}: {} regions, {} static objects, {} edges",
                a.out.display(),
                g.regions.len(),
                g.static_objects.len(),
                g.static_edges.len()
            );
        }
        Command::RunDynamic(a) => {
            let file = File::open(&a.stream).map_err(|e| Error::io(&a.stream, e))?;
            let mut stream = CameraStream::read(BufReader::new(file), &a.stream.display().to_string())?;
            if let Some(c) = &a.camera {
                stream.camera_id = c.clone();
            }
            let d = &cfg.dynamic;
            let ticks =
                a.ticks.unwrap_or_else(|| ((stream.last_time() + 1.0 / d.frame_hz) / d.window_s + 1e-9).floor() as u64);
            std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            for k in 1..=ticks {
                let sub = stream.subgraph_at_tick(k, d)?;
                write_json(&a.out.join(format!("dyn.{}.{k}.json", file_safe(&stream.camera_id))), &sub)?;
            }
            println!("{}: {ticks} subgraph(s) for camera {}", a.out.display(), stream.camera_id);
        }
        Command::Fuse(a) => {
            let base: Arc<GlobalGraph> = Arc::new(load_json(&a.static_graph)?);
            base.validate()?;
            let by_tick = load_subgraphs(&a.dynamic)?;
            if by_tick.is_empty() {
                return Err(Error::invalid(format!("no dyn.<camera>.<tick>.json files in {}", a.dynamic.display())));
            }
            for (tick, subs) in &by_tick {
                let wall = subs[0].window_end;
                let snap = fusion::tick(base.clone(), subs, &cfg.fusion, *tick, wall)?;
                let out = tick_path(&a.out, *tick);
                write_json(&out, &snap)?;
                println!("{}: tick {tick}, {} merge(s)", out.display(), snap.merges().len());
            }
        }
        Command::ServeStore(a) => {
            let base: Arc<GlobalGraph> = Arc::new(load_json(&a.static_graph)?);
            base.validate()?;
            let store = Arc::new(GraphStore::new(base, cfg.history));
            if let Some(dir) = &a.snapshots {
                for s in load_snapshots(dir)? {
                    store.commit(s)?;
                }
            }
            let handle = serve(store.clone(), &a.addr)?;
            println!("serving tick {} at {}", store.latest().tick(), handle.url());
            std::io::stdout().flush().ok();
            match a.for_seconds {
                Some(s) => {
                    std::thread::sleep(Duration::from_secs_f64(s.max(0.0)));
                    handle.shutdown();
                }
                None => handle.join(),
            }
        }
        Command::Agent(a) => run_agent(a, &cfg)?,
        Command::Simulate(a) => {
            let scenario = Scenario::load(&a.scenario)?;
            let out = simulate(&scenario, cfg.seed)?;
            out.write_to(&a.out, cfg.dynamic.window_s)?;
            println!(
                "{}: {} camera stream(s), {} frames each, seed {}",
                a.out.display(),
                out.streams.len(),
                scenario.frame_count(),
                out.seed
            );
        }
        Command::Eval(a) => {
            let scenario = Scenario::load(&a.scenario)?;
            let report = run_eval(&scenario, &cfg.eval_config()?, cfg.seed)?;
            write_json(&a.report, &report)?;
            if let Some(p) = &a.csv {
                std::fs::write(p, report.to_csv()).map_err(|e| Error::io(p, e))?;
            }
            if a.counts {
                print!("{}", report.counts_table());
            }
            println!(
                "{}: {} interval(s), mean V.Acc {:.3}, mean E.Acc {:.3}",
                a.report.display(),
                report.intervals.len(),
                report.mean_v_acc,
                report.mean_e_acc
            );
        }
        Command::Demo(a) => {
            let scenario = Scenario::load(&a.scenario)?;
            let mock_path = a.mock.clone().unwrap_or_else(|| sibling_mock(&a.scenario));
            let llm = MockLlm::load(&mock_path)?;
            let dcfg = DemoConfig { pipeline: cfg.eval_config()?, history: cfg.history, ..DemoConfig::default() };
            let log = run_demo(&scenario, cfg.seed, &llm, &dcfg)?;
            if let Some(p) = &a.log {
                let mut w = create(p)?;
                log.write_jsonl(&mut w).map_err(|e| Error::io(p, e))?;
                w.flush().map_err(|e| Error::io(p, e))?;
            }
            print_demo(&log.events);
        }
    }
    Ok(())
}

fn print_demo(events: &[DemoEvent]) {
    for e in events {
        match e {
            DemoEvent::Tick { .. } | DemoEvent::Prompt { .. } | DemoEvent::Reply { .. } => {}
            DemoEvent::NoReply { tick, reason } => println!("tick {tick}: no plan ({reason})"),
            DemoEvent::PlanRejected { tick, reasons } => println!("tick {tick}: plan rejected: {}", reasons.join("; ")),
            DemoEvent::Plan { tick, steps } => {
                println!("tick {tick}: plan accepted");
                for (i, s) in steps.iter().enumerate() {
                    println!("  {}. {s}", i + 1);
                }
            }
            DemoEvent::Step(s) => println!(
                "tick {}: step {} {} [{}] {}",
                s.tick,
                s.step,
                s.instruction,
                match s.status {
                    hdsg_core::agent::StepStatus::Ok => "ok",
                    hdsg_core::agent::StepStatus::Failed => "FAILED",
                },
                s.detail
            ),
            DemoEvent::Finished { completed, robot, failure } => {
                let held = robot.holding.as_deref().unwrap_or("nothing");
                match failure {
                    Some(f) if !completed => {
                        println!("halted: {f}; robot in {}, holding {held}", robot.region)
                    }
                    _ => println!("completed: robot in {}, holding {held}", robot.region),
                }
            }
        }
    }
}

fn sibling_mock(scenario: &Path) -> PathBuf {
    let stem = scenario.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
    scenario.with_file_name(format!("{stem}.mock.json"))
}

fn file_safe(camera: &str) -> String {
    camera.replace(['/', '\\'], "_")
}

fn tick_path(out: &str, tick: u64) -> PathBuf {
    if out.contains("<tick>") || out.contains("{tick}") {
        PathBuf::from(out.replace("<tick>", &tick.to_string()).replace("{tick}", &tick.to_string()))
    } else {
        Path::new(out).join(format!("snap.{tick}.json"))
    }
}

/// `<prefix>.<...>.<tick>.json` files in `dir`, sorted.
fn tick_files(dir: &Path, prefix: &str) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(rest) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(".json")) else { continue };
        let Some(tick) = rest.rsplit('.').next().and_then(|t| t.parse().ok()) else { continue };
        out.push((tick, path));
    }
    out.sort();
    Ok(out)
}

fn load_subgraphs(dir: &Path) -> Result<BTreeMap<u64, Vec<DynamicSubgraph>>> {
    let mut by_tick: BTreeMap<u64, Vec<DynamicSubgraph>> = BTreeMap::new();
    for (tick, path) in tick_files(dir, "dyn.")? {
        let sub: DynamicSubgraph = load_json(&path)?;
        sub.validate()?;
        by_tick.entry(tick).or_default().push(sub);
    }
    Ok(by_tick)
}

fn load_snapshots(dir: &Path) -> Result<Vec<UnifiedSnapshot>> {
    tick_files(dir, "snap.")?.into_iter().map(|(_, p)| load_json(&p)).collect()
}

fn run_agent(a: &crate::AgentArgs, cfg: &RunConfig) -> Result<()> {
    let store = if a.store.starts_with("http://") || a.store.starts_with("https://") {
        let snap = fetch_latest(&a.store, Duration::from_secs_f64(cfg.llm.timeout_s))?;
        GraphStore::seeded(snap, cfg.history)
    } else {
        let mut snaps = load_snapshots(Path::new(&a.store))?.into_iter();
        let first = snaps.next().ok_or_else(|| Error::invalid(format!("no snap.<tick>.json files in {}", a.store)))?;
        let store = GraphStore::seeded(first, cfg.history);
        for s in snaps {
            store.commit(s)?;
        }
        store
    };
    let snap = store.latest();
    let skills = match &a.skills {
        Some(p) => read(p)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect(),
        None => default_skills(),
    };
    let bundle = render_prompt(&snap, &skills, DEFAULT_SYSTEM_CONTEXT);
    if let Some(p) = &a.prompt_out {
        std::fs::write(p, &bundle.rendered).map_err(|e| Error::io(p, e))?;
    }
    let client: Box<dyn LlmClient> = match &cfg.llm.mock_script {
        Some(p) => Box::new(MockLlm::load(p)?),
        None => Box::new(HttpLlm::new(cfg.llm.clone())),
    };
    let reply = client.complete(&bundle)?;
    let plan = parse_plan(&reply, &snap)?;
    info!("plan for tick {}:\n{}", plan.snapshot_tick, plan.render());
    let start = match &cfg.robot_start {
        Some(r) => snap.base().resolve_region(r).ok_or_else(|| Error::UnknownRegion(r.clone()))?.id.clone(),
        None => snap.base().regions.iter().map(|r| r.id.clone()).min().ok_or(Error::NoRegions)?,
    };
    let log = execute_plan(&plan, &store, Robot::at(start))?;
    match &a.log {
        Some(p) => {
            let mut w = create(p)?;
            log.write_jsonl(&mut w).map_err(|e| Error::io(p, e))?;
            w.flush().map_err(|e| Error::io(p, e))?;
        }
        None => log.write_jsonl(std::io::stdout().lock()).map_err(|e| Error::io("<stdout>", e))?,
    }
    match log.failure() {
        Some(f) => Err(Error::invalid(format!("plan halted at step {}: {}", f.step, f.detail))),
        None => Ok(()),
    }
}
