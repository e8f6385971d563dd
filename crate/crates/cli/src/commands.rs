use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use bfftrack::channel::{DatasetHeader, FingerprintDataset};
use bfftrack::harness::{
    channel_model, checkpoint_of, checkpoint_train_groups, evaluate, generate_profile, mean, metrics_row, push_cell,
    Experiment, ExperimentConfig, MetricsReport, ModelKind, RawErrors, TrainReport,
};
use bfftrack::kv::KvBlock;
use bfftrack::tensor::Checkpoint;
use bfftrack::trajectory::{self, InputMode, MotionKind};
use bfftrack::{io, Error, Result};

use crate::manifest::Manifest;
use crate::svg::{Chart, Series};
use crate::{Cli, Command, Overrides};

const DATASET: &str = "fingerprints.bff";
const TRAJECTORIES: &str = "trajectories.csv";
const REPORT: &str = "report.csv";
const RAW: &str = "raw_errors.csv";

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::EnvBuild(o) => env_build(cli, &load_config(cli, o)?),
        Command::TrajGen(o) => traj_gen(cli, &load_config(cli, o)?),
        Command::Train(o) => train(cli, &load_config(cli, o)?),
        Command::Eval(a) => eval(cli, &load_config(cli, &a.overrides)?, a.checkpoint.as_deref()),
        Command::Report(a) => report(cli, &load_config(cli, &a.overrides)?, a.report.as_deref()),
    }
}

/// Config file (if any) with command-line overrides applied on top.
pub fn load_config(cli: &Cli, o: &Overrides) -> Result<ExperimentConfig> {
    let mut kv = match &cli.config {
        Some(path) => KvBlock::parse(&io::read_string(path)?)?,
        None => KvBlock::new(),
    };
    if let Some(seed) = cli.seed {
        kv.set("seed", seed);
    }
    let flags: [(&str, Option<String>); 7] = [
        ("grid", o.grid.map(|v| v.to_string())),
        ("profiles", o.profile.clone()),
        ("traj_count", o.count.map(|v| v.to_string())),
        ("models", o.model.clone()),
        ("t_obs_list", o.t_obs.clone()),
        ("input_mode", o.mode.clone()),
        ("epochs_max", o.epochs.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            if key == "grid" {
                kv.set("grid_nx", &v);
                kv.set("grid_ny", &v);
            }
            kv.set(key, v);
        }
    }
    for item in &o.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
        kv.set(k.trim(), v.trim());
    }
    ExperimentConfig::from_kv(&kv)
}

fn write_config(out: &Path, m: &mut Manifest, config: &ExperimentConfig) -> Result<()> {
    m.write_artifact(out, &format!("{}.config", m.command), config.to_text().as_bytes())
}

fn env_build(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let mut m = Manifest::start("env-build", config);
    let model = channel_model(config)?;
    let ds = FingerprintDataset::build(&model)?;
    m.write_artifact(&cli.out, DATASET, &ds.to_bytes())?;
    write_config(&cli.out, &mut m, config)?;
    println!(
        "{} records, {}x{} grid, M = {}, N_s = {}",
        ds.records.len(),
        config.env.grid_nx,
        config.env.grid_ny,
        model.n_beams(),
        model.n_samples()
    );
    m.finish(&cli.out)
}

fn traj_gen(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let mut m = Manifest::start("traj-gen", config);
    let mut all = Vec::new();
    for &kind in &config.profiles {
        let set = generate_profile(config, kind)?;
        let speeds: Vec<f64> = set.iter().flat_map(|t| t.speeds()).collect();
        println!(
            "{kind}: {} trajectories, mean speed {:.3} m/s ({:.2} km/h)",
            set.len(),
            mean(&speeds),
            mean(&speeds) * 3.6
        );
        all.extend(set);
    }
    m.write_artifact(&cli.out, TRAJECTORIES, trajectory::csv::to_csv(&all).as_bytes())?;
    write_config(&cli.out, &mut m, config)?;
    m.finish(&cli.out)
}

fn require(path: &Path) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "required artifact is missing; run the upstream command first"),
        ))
    }
}

/// Experiment over the trajectory artifact, checking the fingerprint
/// dataset against the configuration in fingerprint mode.
fn load_experiment(out: &Path, config: &ExperimentConfig) -> Result<Experiment> {
    if config.input_mode == InputMode::Fingerprint {
        let ds = FingerprintDataset::read(&require(&out.join(DATASET))?)?;
        if ds.header != DatasetHeader::for_model(&channel_model(config)?) {
            return Err(Error::Version(format!(
                "{} was built for a different environment or sounder",
                out.join(DATASET).display()
            )));
        }
    }
    let trajs = trajectory::csv::read(&require(&out.join(TRAJECTORIES))?)?;
    Experiment::from_trajectories(config.clone(), trajs)
}

fn cell_name(model: ModelKind, profile: MotionKind, t_obs: usize) -> String {
    format!("{model}_{profile}_t{t_obs}")
}

fn checkpoint_rel(model: ModelKind, profile: MotionKind, t_obs: usize) -> String {
    format!("checkpoints/{}.tnp", cell_name(model, profile, t_obs))
}

fn history_csv(r: &TrainReport) -> String {
    let mut s = String::from("epoch,train_loss,val_avg_error_m\n");
    for h in &r.history {
        let v = h.val_avg_error.map(|v| format!("{v:?}")).unwrap_or_default();
        s.push_str(&format!("{},{:?},{v}\n", h.epoch, h.train_loss));
    }
    s
}

fn trainable(config: &ExperimentConfig) -> Vec<ModelKind> {
    config.models.iter().copied().filter(|&m| m != ModelKind::Persistence).collect()
}

fn train(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let exp = load_experiment(&cli.out, config)?;
    let mut m = Manifest::start("train", config);
    for &profile in &config.profiles {
        for &t_obs in &config.t_obs_list {
            let w = exp.windows(profile, t_obs)?;
            let groups: BTreeSet<usize> = w.train.iter().map(|s| s.group_id).collect();
            for model in trainable(config) {
                let Some((est, r)) = exp.train_cell(profile, model, t_obs, &w)? else {
                    continue;
                };
                let mut meta = KvBlock::new();
                meta.push("model", model);
                meta.push("profile", profile);
                meta.push("t_obs", t_obs);
                meta.push("best_epoch", r.best_epoch);
                let ck = checkpoint_of(est.as_ref(), &groups, &meta);
                let name = cell_name(model, profile, t_obs);
                m.write_artifact(&cli.out, &checkpoint_rel(model, profile, t_obs), &ck.to_bytes())?;
                m.write_artifact(&cli.out, &format!("checkpoints/{name}.history.csv"), history_csv(&r).as_bytes())?;
                m.timings.push((name.clone(), r.seconds));
                println!(
                    "{name}: {} params, {} epochs (best {}), train loss {:.4} -> {:.4}, {:.1}s",
                    est.count_params(),
                    r.history.len(),
                    r.best_epoch,
                    r.initial_loss,
                    r.final_loss,
                    r.seconds
                );
            }
        }
    }
    write_config(&cli.out, &mut m, config)?;
    m.finish(&cli.out)
}

fn meta_value(ck: &Checkpoint, key: &str) -> Result<String> {
    KvBlock::parse(&ck.meta)?
        .get(key)
        .map(str::to_string)
        .ok_or_else(|| Error::Format(format!("checkpoint meta lacks {key}")))
}

fn eval(cli: &Cli, config: &ExperimentConfig, single: Option<&Path>) -> Result<()> {
    let exp = load_experiment(&cli.out, config)?;
    let mut m = Manifest::start("eval", config);
    let mut report = MetricsReport::default();
    let mut raw = RawErrors::default();
    let train_times = cli.out.join("train.manifest");

    let mut cells = Vec::new();
    if let Some(path) = single {
        // The model kind comes from the configuration, not the file: a
        // mismatch is exactly what the digest check must catch.
        let ck = Checkpoint::read(&require(path)?)?;
        let model = config
            .models
            .first()
            .copied()
            .ok_or_else(|| Error::Config("no model configured".into()))?;
        let profile: MotionKind = meta_value(&ck, "profile")?.parse()?;
        let t = meta_value(&ck, "t_obs")?;
        let t_obs: usize = t.parse().map_err(|_| Error::Format(format!("bad t_obs {t:?} in checkpoint meta")))?;
        cells.push((profile, model, t_obs, Some(ck)));
    } else {
        for &profile in &config.profiles {
            for &t_obs in &config.t_obs_list {
                for &model in &config.models {
                    let ck = if model == ModelKind::Persistence {
                        None
                    } else {
                        Some(Checkpoint::read(&require(&cli.out.join(checkpoint_rel(model, profile, t_obs)))?)?)
                    };
                    cells.push((profile, model, t_obs, ck));
                }
            }
        }
    }

    for (profile, model, t_obs, ck) in cells {
        let w = exp.windows(profile, t_obs)?;
        let (est, groups) = match &ck {
            Some(ck) => (
                Some(exp.load_model(ck, profile, model, t_obs)?),
                checkpoint_train_groups(ck)?,
            ),
            None => (None, w.train.iter().map(|s| s.group_id).collect()),
        };
        let (errors, predict_s) = evaluate(est.as_deref(), &w.test, &groups)?;
        let mut row = metrics_row(model, profile, t_obs, &errors, est.as_deref(), None, predict_s)?;
        if est.is_some() {
            row.train_s = Manifest::read_timing(&train_times, &cell_name(model, profile, t_obs)).unwrap_or(0.0);
        }
        println!(
            "{}: avg {:.4} m, p95 {:.4} m over {} samples",
            cell_name(model, profile, t_obs),
            row.avg_error_m,
            row.p95_error_m,
            row.n_eval
        );
        push_cell(&mut report, &mut raw, row, &errors);
    }
    let mut untimed = report.clone();
    for r in &mut untimed.rows {
        r.train_s = 0.0;
        r.predict_s = 0.0;
    }
    m.write_artifact_digesting(&cli.out, REPORT, report.to_csv().as_bytes(), untimed.to_csv().as_bytes())?;
    m.write_artifact(&cli.out, RAW, raw.to_csv().as_bytes())?;
    write_config(&cli.out, &mut m, config)?;
    m.finish(&cli.out)
}

fn report(cli: &Cli, config: &ExperimentConfig, path: Option<&Path>) -> Result<()> {
    let path = match path {
        Some(p) => require(p)?,
        None => require(&cli.out.join(REPORT))?,
    };
    let report = MetricsReport::read(&path)?;
    let mut m = Manifest::start("report", config);
    let mut profiles: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !profiles.contains(&r.profile.as_str()) {
            profiles.push(&r.profile);
        }
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    for (metric, label) in [("avg", "average error (m)"), ("p95", "95th percentile error (m)")] {
        for &profile in &profiles {
            let series: Vec<Series> = models
                .iter()
                .map(|&model| {
                    let mut points: Vec<(f64, f64)> = report
                        .rows
                        .iter()
                        .filter(|r| r.model == model && r.profile == profile)
                        .map(|r| {
                            let y = if metric == "avg" { r.avg_error_m } else { r.p95_error_m };
                            (r.t_obs as f64, y)
                        })
                        .collect();
                    points.sort_by(|a, b| a.0.total_cmp(&b.0));
                    Series {
                        name: model.to_string(),
                        points,
                    }
                })
                .collect();
            let mut data = format!("model,profile,t_obs,{metric}_error_m\n");
            for s in &series {
                for (x, y) in &s.points {
                    data.push_str(&format!("{},{profile},{x},{y:?}\n", s.name));
                }
            }
            let title = format!("{label} vs sequence length, {profile}");
            let svg = Chart {
                title: &title,
                x_label: "sequence length T_obs (steps)",
                y_label: label,
                series: &series,
                data: &data,
            }
            .render();
            m.write_artifact(&cli.out, &format!("plots/{metric}_error_{profile}.svg"), svg.as_bytes())?;
        }
    }
    m.finish(&cli.out)
}
