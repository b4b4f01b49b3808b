use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use skdlab_core::dataset::{load_dataset, save_dataset, Dataset};
use skdlab_core::experiment::{run_experiment, write_experiment, ExperimentConfig};
use skdlab_core::info_bits::{
    bac_capacity, bac_is_singular, bac_optimal_input, blahut_arimoto, count_matrix_csv, label_bits_report,
    load_channel_matrix, load_count_matrix, qsc_capacity_flagged, theorem2_bound, z_channel_capacity,
    ChannelSpec, DetectionParams, TaskConfusions, BA_MAX_ITERS, BA_TOL,
};
use skdlab_core::losses::StudentMode;
use skdlab_core::tinynet::Checkpoint;
use skdlab_core::train_eval::{evaluate, train_student, train_teacher, TrainedModel};
use skdlab_core::{Error, LabelHierarchy, LabelLevel};

#[derive(Parser)]
#[command(name = "skdlab", version, about = "Subclass distillation and label-bit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/test CSVs and the hierarchy from a config.
    Generate(GenerateArgs),
    /// Train a teacher or a student on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Evaluate(EvaluateArgs),
    /// Run all six regimes over `n_seeds` seeds.
    Experiment(ExperimentArgs),
    /// Label-bit bounds from explicit accuracies or confusion matrices.
    Bits(BitsArgs),
    /// Capacities of single channels.
    Capacity(CapacityArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Teacher,
    Student,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Directory written by `generate`.
    #[arg(short, long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    role: Role,
    /// Teacher label level.
    #[arg(long, default_value = "class")]
    labels: LabelLevel,
    /// Student mode: baseline, subclass, kd or skd.
    #[arg(long, default_value = "baseline")]
    mode: StudentMode,
    /// Teacher checkpoint, required for kd and skd.
    #[arg(long)]
    teacher: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(short, long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    /// Writes the metrics JSON here.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Seeds run concurrently on up to this many threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct BitsArgs {
    #[arg(long, requires_all = ["p_h1", "n_s", "p_s", "n_h0", "n_h1"], conflicts_with = "from_confusion")]
    p_h0: Option<f64>,
    #[arg(long)]
    p_h1: Option<f64>,
    #[arg(long)]
    n_s: Option<usize>,
    #[arg(long)]
    p_s: Option<f64>,
    #[arg(long)]
    n_h0: Option<u64>,
    #[arg(long)]
    n_h1: Option<u64>,
    /// Training-set class confusion counts (true × predicted).
    #[arg(long, required_unless_present = "p_h0")]
    from_confusion: Option<PathBuf>,
    /// Global subclass confusion counts; omit for class-level models.
    #[arg(long, requires = "hierarchy")]
    subclass_confusion: Option<PathBuf>,
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    #[arg(long, default_value = "task")]
    task: String,
    /// Writes bits.csv and bits.json into this directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct CapacityArgs {
    /// Q-ary symmetric channel: N P.
    #[arg(long, num_args = 2, value_names = ["N", "P"])]
    qsc: Option<Vec<f64>>,
    /// Binary asymmetric channel: P_H0 P_H1.
    #[arg(long, num_args = 2, value_names = ["P0", "P1"])]
    bac: Option<Vec<f64>>,
    /// Z channel with flip probability P.
    #[arg(long, value_name = "P")]
    z: Option<f64>,
    /// Channel or count matrix CSV; rows are normalized.
    #[arg(long, value_name = "FILE")]
    matrix: Option<PathBuf>,
}

type Res<T> = Result<T, Error>;

fn write(path: &Path, text: &str) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_data(dir: &Path) -> Res<(Dataset, Dataset)> {
    let hierarchy = LabelHierarchy::from_json(&read(&dir.join("hierarchy.json"))?)?;
    Ok((
        load_dataset(dir.join("train.csv"), &hierarchy)?,
        load_dataset(dir.join("test.csv"), &hierarchy)?,
    ))
}

fn load_checkpoint(path: &Path) -> Res<TrainedModel> {
    let ckpt = Checkpoint::from_json(&read(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let level = ckpt
        .label_level
        .ok_or_else(|| Error::Format(format!("{}: checkpoint has no label level", path.display())))?;
    Ok(TrainedModel {
        network: ckpt.network()?,
        level,
        trace: skdlab_core::train_eval::TrainTrace {
            initial_loss: f64::NAN,
            epoch_losses: Vec::new(),
        },
    })
}

fn cmd_generate(a: &GenerateArgs) -> Res<()> {
    let (cfg, _) = ExperimentConfig::load(&a.config)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let (train, test) = cfg.make_data(seed)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    save_dataset(&train, a.out.join("train.csv"))?;
    save_dataset(&test, a.out.join("test.csv"))?;
    write(&a.out.join("hierarchy.json"), &train.hierarchy().to_json())?;
    println!(
        "wrote {} train and {} test samples to {}",
        train.len(),
        test.len(),
        a.out.display()
    );
    Ok(())
}

fn metrics_summary(level: LabelLevel, m: &skdlab_core::train_eval::Metrics) -> String {
    format!(
        "{level}-level model: accuracy {:.6}, binary F1 {:.6}, macro F1 {:.6}",
        m.accuracy, m.binary_f1, m.macro_f1
    )
}

fn cmd_train(a: &TrainArgs) -> Res<()> {
    let (cfg, _) = ExperimentConfig::load(&a.config)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let (train, test) = load_data(&a.data)?;
    let model = match a.role {
        Role::Teacher => train_teacher(&train, &cfg.train_config(a.labels, None, seed), a.labels)?,
        Role::Student => {
            let mode = a.mode;
            let teacher = match (&a.teacher, mode.needs_teacher()) {
                (None, true) => {
                    return Err(Error::InvalidArgument(format!("--mode {mode} requires --teacher")));
                }
                (Some(p), true) => Some(load_checkpoint(p)?),
                (_, false) => None,
            };
            train_student(&train, &cfg.train_config(mode.level(), Some(mode), seed), teacher.as_ref())?
        }
    };
    let train_m = evaluate(&model.network, &train, model.level)?;
    let test_m = evaluate(&model.network, &test, model.level)?;
    write(&a.out.join("checkpoint.json"), &model.network.to_checkpoint(Some(model.level)).to_json())?;
    let metrics = json!({
        "level": model.level,
        "seed": seed,
        "trace": model.trace,
        "train": train_m,
        "test": test_m,
    });
    write(&a.out.join("metrics.json"), &serde_json::to_string_pretty(&metrics)?)?;
    write(&a.out.join("confusion_class.csv"), &count_matrix_csv(&train_m.class_confusion))?;
    if let Some(sub) = &train_m.subclass_confusion {
        write(&a.out.join("confusion_subclass.csv"), &count_matrix_csv(sub))?;
    }
    println!("{}", metrics_summary(model.level, &test_m));
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Res<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let (train, test) = load_data(&a.data)?;
    let data = match a.split {
        Split::Train => &train,
        Split::Test => &test,
    };
    let m = evaluate(&model.network, data, model.level)?;
    if let Some(out) = &a.out {
        write(out, &serde_json::to_string_pretty(&m)?)?;
    }
    println!("{}", metrics_summary(model.level, &m));
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> Res<()> {
    let (cfg, text) = ExperimentConfig::load(&a.config)?;
    if a.jobs == 0 {
        return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
    }
    let (report, timing) = run_experiment(&cfg, &text, a.jobs)?;
    write_experiment(&a.out, &report, &timing)?;
    print!("{}", report.summary_table());
    let failures = report.failures();
    if failures > 0 {
        eprintln!("{failures} failure(s) recorded; see {}", a.out.join("report.json").display());
    }
    Ok(())
}

fn cmd_bits(a: &BitsArgs) -> Res<()> {
    if let Some(p_h0) = a.p_h0 {
        let params = DetectionParams {
            p_h0,
            p_h1: a.p_h1.expect("required by clap"),
            n_h0: a.n_h0.expect("required by clap"),
            n_h1: a.n_h1.expect("required by clap"),
            n_s: a.n_s.expect("required by clap"),
            p_s: a.p_s.expect("required by clap"),
        };
        let b = theorem2_bound(&params)?;
        let sub = b.subclass_bits().unwrap_or(0.0);
        println!("class_bits {:.6}", b.class_bits());
        println!("subclass_bits {sub:.6}");
        println!("total_bits {:.6}", b.total_bits());
        if let Some(out) = &a.out {
            write(
                &out.join("bits.csv"),
                &format!(
                    "task,class_bits,subclass_bits,total_bits\n{},{:.6},{sub:.6},{:.6}\n",
                    a.task,
                    b.class_bits(),
                    b.total_bits()
                ),
            )?;
            let j = json!({ "task": a.task, "params": params, "bits": b });
            write(&out.join("bits.json"), &serde_json::to_string_pretty(&j)?)?;
        }
        return Ok(());
    }

    let class_path = a.from_confusion.as_ref().expect("required by clap");
    let class = load_count_matrix(class_path)?;
    let task = match &a.subclass_confusion {
        Some(sub_path) => {
            let h = LabelHierarchy::from_json(&read(a.hierarchy.as_ref().expect("required by clap"))?)?;
            let sub = load_count_matrix(sub_path)?;
            TaskConfusions::from_subclass_confusion(&a.task, h, class, &sub)?
        }
        None => {
            let k = class.len();
            let h = match &a.hierarchy {
                Some(p) => LabelHierarchy::from_json(&read(p)?)?,
                None => LabelHierarchy::flat(k)?,
            };
            if h.num_classes() != k {
                return Err(Error::ShapeMismatch(format!(
                    "class confusion is {k}x{k}, hierarchy has {} classes",
                    h.num_classes()
                )));
            }
            let counts = class.iter().map(|r| r.iter().sum()).collect();
            TaskConfusions {
                task: a.task.clone(),
                hierarchy: LabelHierarchy::flat(k)?,
                class_confusion: class,
                subclass_confusions: vec![None; k],
                subclass_counts: counts,
            }
        }
    };
    let report = label_bits_report(std::slice::from_ref(&task))?;
    print!("{}", report.to_table());
    for row in &report.rows {
        let f = &row.fitted;
        let subs: Vec<String> = f
            .subclass_accuracy
            .iter()
            .map(|p| p.map(|p| format!("{p:.6}")).unwrap_or_else(|| "-".into()))
            .collect();
        println!(
            "fitted: class accuracy {:.6}, subclass accuracy per class [{}]",
            f.class_accuracy,
            subs.join(", ")
        );
        for note in &f.below_chance {
            println!("note: {note}");
        }
    }
    if let Some(out) = &a.out {
        write(&out.join("bits.csv"), &report.to_csv())?;
        write(&out.join("bits.json"), &report.to_json())?;
    }
    Ok(())
}

fn cmd_capacity(a: &CapacityArgs) -> Res<()> {
    if let Some(v) = &a.qsc {
        let n = v[0];
        if n.fract() != 0.0 || n < 2.0 {
            return Err(Error::InvalidArgument(format!("--qsc N must be an integer ≥ 2, got {n}")));
        }
        let (c, below) = qsc_capacity_flagged(n as usize, v[1])?;
        println!("capacity {c:.6}");
        if below {
            println!("note: p < 1/n, the closed form is not the capacity of this channel");
        }
    } else if let Some(v) = &a.bac {
        let c = bac_capacity(v[0], v[1])?;
        println!("capacity {c:.6}");
        if bac_is_singular(v[0], v[1]) {
            println!("note: P_H0 + P_H1 = 1, output independent of input");
        } else {
            println!("alpha_star {:.6}", bac_optimal_input(v[0], v[1])?);
        }
    } else if let Some(p) = a.z {
        println!("capacity {:.6}", z_channel_capacity(p)?);
    } else if let Some(path) = &a.matrix {
        let ch = ChannelSpec::new(load_channel_matrix(path)?)?;
        let r = blahut_arimoto(&ch, BA_TOL, BA_MAX_ITERS)?;
        println!("capacity {:.6}", r.capacity);
        let input: Vec<String> = r.input.iter().map(|p| format!("{p:.6}")).collect();
        println!("input {}", input.join(","));
        println!("iterations {}", r.iterations);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Bits(a) => cmd_bits(a),
        Command::Capacity(a) => cmd_capacity(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
