use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use quadbiped_core::calibration::{
    error_profile, parse_grid, probe_sequence, profile_csv, sweep, synthesize_dataset, CalibrationDataset,
    CalibrationReport, Param, ProbeConfig, SweepConfig,
};
use quadbiped_core::instruct::{ChatBackend, MockBackend, Pipeline, RuleSet, DEFAULT_RULES};
use quadbiped_core::motor_plant::{PlantConfig, SimParams};
use quadbiped_core::planar::{train_standup, PlanarEnv, PlanarEnvConfig, TrainConfig};
use quadbiped_core::randomization::{sample_batch, table_from_report, RandomizationTable};
use quadbiped_core::retarget::{build_track, parse_jsonl, RetargetConfig};
use quadbiped_core::reward::{RewardConfig, RewardEngine, BREAKDOWN_COLUMNS};
use quadbiped_core::states::{read_states_csv, write_states_csv};
use quadbiped_core::target_gen::{generate_track, CurriculumConfig, CurriculumEventKind, TargetTrack};
use quadbiped_core::{seed, Parallelism, RobotModel};
use serde::Serialize;

use crate::http::HttpBackend;
use crate::manifest::{default_location, digest_all, RunManifest, MANIFEST_FORMAT};
use crate::{Cli, Command, ConfigKind, Style};

/// Files a command touched, for the manifest.
#[derive(Default)]
struct Touched {
    inputs: Vec<PathBuf>,
    configs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Touched {
    fn read(&mut self, path: &Path) -> Result<String> {
        self.inputs.push(path.to_path_buf());
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
    }

    fn config(&mut self, path: &Path) -> Result<String> {
        self.configs.push(path.to_path_buf());
        self.read(path)
    }

    fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::SynthDataset { .. } => "synth-dataset",
        Command::Calibrate { .. } => "calibrate",
        Command::Profile { .. } => "profile",
        Command::Randomize { .. } => "randomize",
        Command::GenCurriculum { .. } => "gen-curriculum",
        Command::Retarget { .. } => "retarget",
        Command::Instruct { .. } => "instruct",
        Command::PlanarTrain { .. } => "planar-train",
        Command::RewardAudit { .. } => "reward-audit",
        Command::DefaultConfig { .. } => "default-config",
    }
}

pub fn run(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let mut t = Touched::default();
    let robot = match &cli.robot {
        Some(p) => {
            let text = t.config(p)?;
            RobotModel::from_description(&text).with_context(|| format!("invalid robot description {}", p.display()))?
        }
        None => RobotModel::standin(),
    };
    let par = Parallelism::from_workers(cli.workers);
    let primary = execute(cli, &robot, par, &mut t)?;

    let inputs = digest_all(&t.inputs)?;
    let outputs = digest_all(&t.outputs)?;
    let manifest = RunManifest {
        format: MANIFEST_FORMAT,
        toolkit_version: env!("CARGO_PKG_VERSION"),
        subcommand: subcommand_name(&cli.command).to_string(),
        argv,
        seed: cli.seed,
        workers: cli.workers,
        config_paths: t.configs.iter().map(|p| p.display().to_string()).collect(),
        inputs,
        outputs,
    };
    let path = cli.manifest.clone().unwrap_or_else(|| default_location(&primary));
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, json).with_context(|| format!("cannot write manifest {}", path.display()))?;
    Ok(())
}

/// Runs the command and returns its primary output path.
fn execute(cli: &Cli, robot: &RobotModel, par: Parallelism, t: &mut Touched) -> Result<PathBuf> {
    match &cli.command {
        Command::SynthDataset {
            out,
            friction,
            damping,
            delay,
            mass_scale,
            duration,
            noise,
        } => {
            let truth = SimParams {
                joint_friction: *friction,
                joint_damping: *damping,
                delay: *delay,
                mass_scales: [*mass_scale; 4],
                ..SimParams::default()
            };
            let probe = ProbeConfig {
                duration: *duration,
                ..ProbeConfig::default()
            };
            let actions = probe_sequence(robot, &probe, seed::derive(cli.seed, "synth/probe"));
            let ds = synthesize_dataset(robot, &truth, actions, &PlantConfig::default(), *noise, seed::derive(cli.seed, "synth/noise"))?;
            ds.save(out).with_context(|| format!("cannot save dataset to {}", out.display()))?;
            t.outputs.push(out.clone());
            println!("wrote {} samples to {}", ds.q_real.samples.len(), out.display());
            Ok(out.clone())
        }

        Command::Calibrate {
            dataset,
            out,
            candidates,
            top_k,
            polish,
        } => {
            let ds = load_dataset(dataset, t)?;
            let cfg = SweepConfig {
                candidates: *candidates,
                seed: cli.seed,
                top_k: *top_k,
                polish: *polish,
                parallelism: par,
                ..SweepConfig::default()
            };
            let report = sweep(robot, &ds, &cfg)?;
            t.write(out, report.to_json())?;
            let b = &report.best;
            println!(
                "best error {:.6e}: friction {:.4}, damping {:.4}, delay {:.4} s, mass scale {:.3}, pd scale {:.3}",
                report.best_error, b.joint_friction, b.joint_damping, b.delay, b.mass_scales[0], b.pd_scale
            );
            Ok(out.clone())
        }

        Command::Profile {
            dataset,
            param,
            grid,
            report,
            out,
        } => {
            let param: Param = param.parse()?;
            let grid = parse_grid(grid)?;
            let ds = load_dataset(dataset, t)?;
            let base = match report {
                Some(p) => read_report(p, t)?.best,
                None => SimParams::default(),
            };
            let rows = error_profile(robot, &ds, param, &grid, &base, &PlantConfig::default(), par)?;
            t.write(out, profile_csv(param, &rows))?;
            if let Some((v, e)) = rows.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
                println!("{param}: minimum {e:.6e} at {v}");
            }
            Ok(out.clone())
        }

        Command::Randomize {
            table,
            report,
            count,
            out,
            table_out,
        } => {
            let base = match table {
                Some(p) => RandomizationTable::from_text(&t.config(p)?).with_context(|| format!("invalid table {}", p.display()))?,
                None => RandomizationTable::default(),
            };
            let report = report.as_ref().map(|p| read_report(p, t)).transpose()?;
            let effective = table_from_report(report.as_ref(), &base, &robot.masses)?;
            let lines: String = sample_batch(&effective, cli.seed, *count, par)
                .iter()
                .map(|p| serde_json::to_string(p).map(|s| s + "\n"))
                .collect::<Result<_, _>>()?;
            t.write(out, lines)?;
            if let Some(p) = table_out {
                t.write(p, effective.to_text())?;
            }
            Ok(out.clone())
        }

        Command::GenCurriculum {
            duration,
            dt,
            out,
            events,
        } => {
            if !(*dt > 0.0 && *duration >= 0.0) {
                bail!("need dt > 0 and duration >= 0, got dt {dt}, duration {duration}");
            }
            let steps = (duration / dt).round() as usize;
            let (track, evs) = generate_track(robot, &CurriculumConfig::default(), cli.seed, *dt, steps)?;
            write_track(out, &track, t)?;
            if let Some(p) = events {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["t", "kind", "v_x", "heading_offset", "heading_des", "fl_x", "fl_y", "fl_z", "fr_x", "fr_y", "fr_z"])?;
                for e in &evs {
                    let mut rec = vec![e.t.to_string()];
                    let blank = || String::new();
                    match e.kind {
                        CurriculumEventKind::Velocity { v_x } => {
                            rec.extend(["velocity".into(), v_x.to_string()]);
                            rec.extend(std::iter::repeat_with(blank).take(8));
                        }
                        CurriculumEventKind::Heading { offset, heading_des } => {
                            rec.extend(["heading".into(), blank(), offset.to_string(), heading_des.to_string()]);
                            rec.extend(std::iter::repeat_with(blank).take(6));
                        }
                        CurriculumEventKind::ToeGoal { next, .. } => {
                            rec.extend(["toe_goal".into(), blank(), blank(), blank()]);
                            rec.extend(next.iter().flat_map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>()));
                        }
                    }
                    w.write_record(&rec)?;
                }
                t.write(p, w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
            }
            println!("{} rows, {} events", track.rows.len(), evs.len());
            Ok(out.clone())
        }

        Command::Retarget {
            input,
            style,
            scale,
            period,
            out,
        } => {
            let frames = parse_jsonl(&t.read(input)?).with_context(|| format!("invalid clip {}", input.display()))?;
            let mut cfg = match style {
                Style::Boxing => RetargetConfig::boxing(),
                Style::Ballet => RetargetConfig::ballet(),
            };
            cfg.scale = *scale;
            if let Some(p) = period {
                cfg.sample_period = *p;
            }
            let r = build_track(&frames, &cfg, robot, par)?;
            write_track(out, &r.track, t)?;
            println!("{} rows at scale {:.4}, {} projected onto the workspace", r.track.rows.len(), r.scale, r.clamped_rows);
            Ok(out.clone())
        }

        Command::Instruct {
            instruction,
            mock,
            rules,
            out,
            transcript,
            timeout,
        } => {
            let rules = match rules {
                Some(p) => RuleSet::from_text(&t.config(p)?, robot).with_context(|| format!("invalid rules {}", p.display()))?,
                None => RuleSet::standard(robot),
            };
            match mock {
                Some(dir) => {
                    let text = match instruction {
                        Some(s) => s.clone(),
                        None => t.read(&dir.join("instruction.txt"))?,
                    };
                    let mut backend = MockBackend::from_dir(dir).with_context(|| format!("cannot load mock transcript {}", dir.display()))?;
                    t.inputs.push(dir.clone());
                    instruct_with(&mut backend, robot, &rules, &text, out, transcript.as_deref(), t)?;
                }
                None => {
                    let Some(text) = instruction else {
                        bail!("an instruction is required without --mock");
                    };
                    if !(*timeout > 0.0 && timeout.is_finite()) {
                        bail!("timeout must be positive, got {timeout}");
                    }
                    let mut backend = HttpBackend::from_env(Duration::from_secs_f64(*timeout)).map_err(anyhow::Error::msg)?;
                    instruct_with(&mut backend, robot, &rules, text, out, transcript.as_deref(), t)?;
                }
            }
            Ok(out.clone())
        }

        Command::PlanarTrain {
            reward,
            runs,
            iterations,
            population,
            elites,
            out,
            states,
            summary,
        } => {
            if *runs == 0 || *population == 0 || *elites == 0 || elites > population {
                bail!("need runs >= 1 and 1 <= elites <= population");
            }
            let reward = read_reward(reward.as_deref(), t)?;
            let env = PlanarEnv::new(robot.clone(), reward, PlanarEnvConfig::default())?;
            let mut cfg = TrainConfig::default();
            cfg.cem.iterations = *iterations;
            cfg.cem.population = *population;
            cfg.cem.elites = *elites;
            let results: Vec<_> = (0..*runs)
                .map(|r| {
                    let s = seed::derive_indexed(cli.seed, "planar-train", r);
                    (s, train_standup(&env, &cfg, s, par))
                })
                .collect();
            #[derive(Serialize)]
            struct RunSummary {
                run: u64,
                seed: u64,
                episode_return: f64,
                steps: u64,
                termination: String,
                final_height: f64,
                final_pitch_error: f64,
            }
            let rows: Vec<RunSummary> = results
                .iter()
                .enumerate()
                .map(|(i, (s, r))| RunSummary {
                    run: i as u64,
                    seed: *s,
                    episode_return: r.rollout.undiscounted,
                    steps: r.rollout.steps,
                    termination: r.rollout.termination.to_string(),
                    final_height: r.rollout.final_height,
                    final_pitch_error: r.rollout.final_pitch_error,
                })
                .collect();
            for r in &rows {
                println!(
                    "run {}: return {:.3}, height {:.3} m, pitch error {:.3} rad, {} after {} steps",
                    r.run, r.episode_return, r.final_height, r.final_pitch_error, r.termination, r.steps
                );
            }
            let best = results
                .iter()
                .map(|(_, r)| r)
                .reduce(|a, b| if b.rollout.undiscounted > a.rollout.undiscounted { b } else { a })
                .expect("at least one run");
            let mut buf = Vec::new();
            best.rollout.write_trajectory_csv(&mut buf)?;
            t.write(out, buf)?;
            if let Some(p) = states {
                let mut buf = Vec::new();
                write_states_csv(&best.rollout.states, &mut buf)?;
                t.write(p, buf)?;
            }
            if let Some(p) = summary {
                t.write(p, serde_json::to_string_pretty(&rows)? + "\n")?;
            }
            Ok(out.clone())
        }

        Command::RewardAudit { states, config, out } => {
            let cfg = read_reward(config.as_deref(), t)?;
            t.inputs.push(states.clone());
            let file = fs::File::open(states).with_context(|| format!("cannot read {}", states.display()))?;
            let list = read_states_csv(file).with_context(|| format!("invalid states file {}", states.display()))?;
            let engine = RewardEngine::new(robot.clone(), cfg);
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["step"];
            header.extend(BREAKDOWN_COLUMNS);
            header.push("termination");
            w.write_record(&header)?;
            let mut total = 0.0;
            for s in &list {
                let b = engine.total_reward(s);
                total += b.total;
                let mut rec = vec![s.step.to_string()];
                rec.extend(b.row().iter().map(|x| x.to_string()));
                rec.push(engine.check_termination(s).reason.to_string());
                w.write_record(&rec)?;
            }
            t.write(out, w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
            println!("{} states, summed reward {total:.6}", list.len());
            Ok(out.clone())
        }

        Command::DefaultConfig { kind, out } => {
            let text = match kind {
                ConfigKind::Reward => RewardConfig::default().to_text(),
                ConfigKind::Randomization => RandomizationTable::default().to_text(),
                ConfigKind::Rules => DEFAULT_RULES.to_string(),
                ConfigKind::Robot => RobotModel::standin_description().to_string(),
            };
            t.write(out, text)?;
            Ok(out.clone())
        }
    }
}

fn load_dataset(dir: &Path, t: &mut Touched) -> Result<CalibrationDataset> {
    t.inputs.push(dir.to_path_buf());
    CalibrationDataset::load(dir).with_context(|| format!("cannot load dataset {}", dir.display()))
}

fn read_report(path: &Path, t: &mut Touched) -> Result<CalibrationReport> {
    let text = t.read(path)?;
    CalibrationReport::from_json(&text).with_context(|| format!("invalid calibration report {}", path.display()))
}

fn read_reward(path: Option<&Path>, t: &mut Touched) -> Result<RewardConfig> {
    match path {
        Some(p) => RewardConfig::from_text(&t.config(p)?).with_context(|| format!("invalid reward config {}", p.display())),
        None => Ok(RewardConfig::default()),
    }
}

fn write_track(path: &Path, track: &TargetTrack, t: &mut Touched) -> Result<()> {
    t.write(path, track.to_csv_string())
}

fn instruct_with<B: ChatBackend>(
    backend: &mut B,
    robot: &RobotModel,
    rules: &RuleSet,
    instruction: &str,
    out: &Path,
    transcript: Option<&Path>,
    t: &mut Touched,
) -> Result<()> {
    let result = Pipeline::new(backend, robot, rules).run(instruction)?;
    write_track(out, &result.track, t)?;
    if let Some(p) = transcript {
        t.write(p, serde_json::to_string_pretty(&result.exchanges)? + "\n")?;
    }
    println!("{} key frames, {} track rows", result.frames.len(), result.track.rows.len());
    Ok(())
}
