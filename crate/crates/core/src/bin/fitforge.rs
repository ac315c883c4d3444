//! `fitforge` command line: data preparation, staged or one-shot training,
//! evaluation, recommendations and the HTTP service.

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fitforge::cluster::ClusterModel;
use fitforge::data::{
    clean, generate_synthetic, read_records_file, select, write_records_file, CleaningRules, Gender, Sport,
    SyntheticConfig, WorkoutRecord,
};
use fitforge::models::{
    assemble_bundle, distance_examples, evaluate, fit_clusters, fit_embeddings, load_artifact, load_bundle, prepare,
    save_artifact, save_bundle, sequence_examples, train_distance, train_pipeline, train_sequence, DistanceModel,
    EmbeddingStage, LossCurve, PipelineConfig, SequenceModel, TrainingConfig,
};
use fitforge::service::{recommend, render_sequences, render_table, serve, RecommendationRequest, ServiceConfig};
use fitforge::{FitError, Result};

const CLUSTER_KIND: &str = "cluster-model";
const STAGE_KIND: &str = "embedding-stage";
const DISTANCE_KIND: &str = "distance-model";
const SEQUENCE_KIND: &str = "sequence-model";

#[derive(Parser)]
#[command(name = "fitforge", version, about = "Workout distance, speed and heart-rate recommendations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a workout file and rewrite it in canonical form.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop records that break the cleaning rules.
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Running speed cap, km/h.
        #[arg(long, default_value_t = 50.0)]
        max_speed: f64,
        #[arg(long, default_value_t = 100.0)]
        max_speed_bike: f64,
        #[arg(long, default_value_t = 80.0)]
        max_speed_mtb: f64,
        /// Cap on mean altitude, m.
        #[arg(long, default_value_t = 8000.0)]
        max_alt: f64,
        /// Keep only records with exactly this many steps.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Generate a synthetic workout file.
    Synth {
        #[arg(long, default_value_t = 100)]
        users: usize,
        #[arg(long, default_value_t = 45)]
        routes: usize,
        #[arg(long, default_value_t = 20)]
        workouts_per_user: usize,
        #[arg(long, default_value_t = 50)]
        length: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster route signatures with k-means.
    ClusterRoutes {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        k: usize,
        #[arg(long, default_value_t = 16)]
        points: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Split, build the context tensor on the training part, sweep CP ranks
    /// and derive embeddings at the best rank.
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        rank_min: usize,
        #[arg(long, default_value_t = 10)]
        rank_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV with columns rank, cc, relative_fit.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Tab-separated embedding table.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Train the distance model on a decomposition stage.
    TrainDistance {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        stage: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        no_augment: bool,
    },
    /// Train the speed and heart-rate model on a decomposition stage.
    TrainSequence {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        stage: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Combine a stage and both trained models into a bundle.
    Assemble {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        stage: PathBuf,
        #[arg(long)]
        distance: PathBuf,
        #[arg(long)]
        sequence: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage and write a bundle.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        rank_min: usize,
        #[arg(long, default_value_t = 10)]
        rank_max: usize,
        #[arg(long)]
        distance_epochs: Option<usize>,
        #[arg(long)]
        sequence_epochs: Option<usize>,
        #[arg(long)]
        no_gender: bool,
        #[arg(long)]
        no_augment: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a bundle on a workout file.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Recommend a workout for one or more calorie targets.
    Recommend {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        route: String,
        #[arg(long, default_value = "run")]
        sport: Sport,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        calories: Vec<f64>,
        #[arg(long)]
        gender: Option<Gender>,
        /// Write the full speed and heart-rate sequences as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_gender: bool,
}

impl TrainArgs {
    fn apply(&self, mut cfg: TrainingConfig) -> TrainingConfig {
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        cfg.seed = self.seed;
        cfg
    }
}

fn print_curve(name: &str, curve: &LossCurve) {
    let best = curve.validation.get(curve.best_epoch).copied().unwrap_or(f64::NAN);
    eprintln!(
        "{name}: {} epochs, best epoch {} (validation {best:.6})",
        curve.train.len(),
        curve.best_epoch + 1
    );
}

fn stage_records<'a>(records: &'a [WorkoutRecord], stage: &EmbeddingStage) -> (Vec<&'a WorkoutRecord>, Vec<&'a WorkoutRecord>) {
    let known = |r: &&WorkoutRecord| stage.embeddings.index.user_row(&r.user_id).is_some();
    let train = select(records, &stage.split.train);
    let validation = select(records, &stage.split.validation).into_iter().filter(known).collect();
    (train, validation)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { input, out } => {
            let records = read_records_file(&input)?;
            for r in &records {
                r.validate()?;
            }
            write_records_file(&out, &records)?;
            eprintln!("ingested {} records", records.len());
        }
        Command::Clean { input, out, max_speed, max_speed_bike, max_speed_mtb, max_alt, length } => {
            let rules = CleaningRules {
                max_speed: [max_speed, max_speed_bike, max_speed_mtb],
                max_mean_altitude: max_alt,
                sequence_length: length,
                ..CleaningRules::default()
            };
            let (kept, report) = clean(read_records_file(&input)?, &rules);
            write_records_file(&out, &kept)?;
            eprintln!("kept {} of {} records", report.retained_count, report.input_count);
            for (id, rule) in &report.removals {
                eprintln!("removed {id}: {rule}");
            }
        }
        Command::Synth { users, routes, workouts_per_user, length, noise, seed, out } => {
            let cfg = SyntheticConfig {
                n_users: users,
                n_routes: routes,
                workouts_per_user,
                sequence_length: length,
                noise_scale: noise,
                seed,
                ..SyntheticConfig::default()
            };
            let records = generate_synthetic(&cfg)?;
            write_records_file(&out, &records)?;
            eprintln!("wrote {} records", records.len());
        }
        Command::ClusterRoutes { input, out, k, points, iters, seed } => {
            let records = read_records_file(&input)?;
            let cfg = PipelineConfig { clusters: k, signature_points: points, kmeans_iters: iters, seed, ..PipelineConfig::default() };
            let refs: Vec<&WorkoutRecord> = records.iter().collect();
            let model = fit_clusters(&refs, &cfg)?;
            save_artifact(CLUSTER_KIND, &model, &out)?;
            eprintln!("{} clusters, inertia {:.4}", model.k(), model.inertia_history.last().copied().unwrap_or(0.0));
        }
        Command::Decompose { input, clusters, out, rank_min, rank_max, seed, report, embeddings } => {
            if rank_min == 0 || rank_min > rank_max {
                return Err(FitError::InvalidArgument(format!("rank range {rank_min}..={rank_max} is empty")));
            }
            let records = read_records_file(&input)?;
            let clusters: ClusterModel = load_artifact(CLUSTER_KIND, &clusters)?;
            let cfg = PipelineConfig { ranks: (rank_min..=rank_max).collect(), seed, ..PipelineConfig::default() };
            let (split, stats) = prepare(&records, &cfg)?;
            let stage = fit_embeddings(&records, split, stats, clusters, &cfg)?;
            print!("{}", stage.rank_report.to_csv());
            eprintln!("selected rank {}", stage.rank_report.selected_rank);
            if let Some(path) = report {
                std::fs::write(path, stage.rank_report.to_csv())?;
            }
            if let Some(path) = embeddings {
                std::fs::write(path, stage.embeddings.to_table())?;
            }
            save_artifact(STAGE_KIND, &stage, &out)?;
        }
        Command::TrainDistance { input, stage, out, train, no_augment } => {
            let records = read_records_file(&input)?;
            let stage: EmbeddingStage = load_artifact(STAGE_KIND, &stage)?;
            let layout = stage.layout(!train.no_gender);
            let cfg = train.apply(TrainingConfig::distance_default());
            let defaults = PipelineConfig::default();
            let augment = (!no_augment).then_some((defaults.augment_range, cfg.seed));
            let (tr, va) = stage_records(&records, &stage);
            let d_train = distance_examples(&tr, &stage, &layout, augment)?;
            let d_val = distance_examples(&va, &stage, &layout, None)?;
            let (model, curve) = train_distance(&d_train, &d_val, stage.stats.distance, layout, &cfg)?;
            print_curve("distance", &curve);
            save_artifact(DISTANCE_KIND, &model, &out)?;
        }
        Command::TrainSequence { input, stage, out, train } => {
            let records = read_records_file(&input)?;
            let stage: EmbeddingStage = load_artifact(STAGE_KIND, &stage)?;
            let layout = stage.layout(!train.no_gender);
            let cfg = train.apply(TrainingConfig::sequence_default());
            let (tr, va) = stage_records(&records, &stage);
            let s_train = sequence_examples(&tr, &stage, &layout)?;
            let s_val = sequence_examples(&va, &stage, &layout)?;
            let (model, curve) = train_sequence(&s_train, &s_val, &stage.stats, layout, &cfg)?;
            print_curve("sequence", &curve);
            save_artifact(SEQUENCE_KIND, &model, &out)?;
        }
        Command::Assemble { input, stage, distance, sequence, out } => {
            let records = read_records_file(&input)?;
            let stage: EmbeddingStage = load_artifact(STAGE_KIND, &stage)?;
            let distance: DistanceModel = load_artifact(DISTANCE_KIND, &distance)?;
            let sequence: SequenceModel = load_artifact(SEQUENCE_KIND, &sequence)?;
            let cfg = PipelineConfig {
                include_gender: distance.layout.include_gender,
                distance: distance.config.clone(),
                sequence: sequence.config.clone(),
                ..PipelineConfig::default()
            };
            let bundle = assemble_bundle(&records, stage, distance, sequence, &cfg)?;
            save_bundle(&bundle, &out)?;
            eprintln!("bundle with {} routes, rank {}", bundle.routes.len(), bundle.rank());
        }
        Command::Train { input, out, k, rank_min, rank_max, distance_epochs, sequence_epochs, no_gender, no_augment, seed } => {
            if rank_min == 0 || rank_min > rank_max {
                return Err(FitError::InvalidArgument(format!("rank range {rank_min}..={rank_max} is empty")));
            }
            let records = read_records_file(&input)?;
            let mut cfg = PipelineConfig {
                clusters: k,
                ranks: (rank_min..=rank_max).collect(),
                include_gender: !no_gender,
                augment: !no_augment,
                seed,
                ..PipelineConfig::default()
            };
            cfg.distance.seed = seed;
            cfg.sequence.seed = seed;
            if let Some(e) = distance_epochs {
                cfg.distance.epochs = e;
            }
            if let Some(e) = sequence_epochs {
                cfg.sequence.epochs = e;
            }
            let result = train_pipeline(&records, &cfg)?;
            print_curve("distance", &result.distance_curve);
            print_curve("sequence", &result.sequence_curve);
            println!("rank {}", result.bundle.rank());
            println!("{:<10} {:>16} {:>14} {:>14}", "", "distance RMSE", "speed MAE", "HR MAE");
            for (name, r) in [("model", &result.evaluation), ("baseline", &result.baseline)] {
                println!(
                    "{name:<10} {:>16.4} {:>14.4} {:>14.4}",
                    r.distance_rmse_km, r.speed_mae_kmh, r.heartrate_mae_bpm
                );
            }
            if result.cold_start_skipped > 0 {
                eprintln!("skipped {} test workouts of users without training data", result.cold_start_skipped);
            }
            save_bundle(&result.bundle, &out)?;
        }
        Command::Evaluate { bundle, test } => {
            let bundle = load_bundle(&bundle)?;
            let records = read_records_file(&test)?;
            let known: Vec<&WorkoutRecord> = records
                .iter()
                .filter(|r| bundle.embeddings.index.user_row(&r.user_id).is_some())
                .collect();
            if known.len() < records.len() {
                eprintln!("skipped {} workouts of unknown users", records.len() - known.len());
            }
            let report = evaluate(&bundle, &known)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Recommend { bundle, user, route, sport, calories, gender, out } => {
            let bundle = load_bundle(&bundle)?;
            let responses = calories
                .iter()
                .map(|&c| {
                    let req = RecommendationRequest {
                        user_id: user.clone(),
                        route_id: route.clone(),
                        sport: sport.clone(),
                        target_calories: c,
                        gender,
                    };
                    recommend(&bundle, &req)
                })
                .collect::<Result<Vec<_>>>()?;
            print!("{}", render_table(&responses));
            if let Some(path) = out {
                std::fs::write(path, render_sequences(&responses))?;
            }
        }
        Command::Serve { bundle, port, host } => {
            let bundle = load_bundle(&bundle)?;
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            rt.block_on(serve(bundle, ServiceConfig { addr }))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
