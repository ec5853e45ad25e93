//! `pirm` — drift-environment generation, invariant training, bound
//! reports, spectral graph distances, and experiment recipes.
//!
//! Exit codes: 0 success, 2 validation failure (bad flags, bad config,
//! malformed inputs), 1 runtime error.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pirm_core::envgen::{
    load_spec, sample_dataset, sample_env_weights, write_datasets_csv, Dataset, EnvId,
};
use pirm_core::error::Error;
use pirm_core::graphdist::{
    laplacian, overlap_matrix, rank_environments, read_edge_tsv, read_membership_csv,
    spectral_embedding, write_distance_matrix_csv, write_embedding_csv, write_ranking_csv,
    Aggregation, CommunityGraph,
};
use pirm_core::harness::{
    model_env_split, run_recipe, write_predictor_json, write_single_result_csv, ExperimentConfig,
};
use pirm_core::invariant::{evaluate, train, ModelKind, PenaltyForm, TrainConfig};
use pirm_core::oracle::bound_report;
use pirm_core::rng::substream;

#[derive(Parser)]
#[command(
    name = "pirm",
    version,
    about = "Invariant and partially invariant risk minimization for linear predictors"
)]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for generated files and reports.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Erm,
    Irm,
    PirmPart,
    PirmCond,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> ModelKind {
        match m {
            ModelArg::Erm => ModelKind::Erm,
            ModelArg::Irm => ModelKind::Irm,
            ModelArg::PirmPart => ModelKind::PirmPart,
            ModelArg::PirmCond => ModelKind::PirmCond,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyFormArg {
    SquaredNorm,
    Norm,
}

impl From<PenaltyFormArg> for PenaltyForm {
    fn from(f: PenaltyFormArg) -> PenaltyForm {
        match f {
            PenaltyFormArg::SquaredNorm => PenaltyForm::SquaredNorm,
            PenaltyFormArg::Norm => PenaltyForm::Norm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Membership,
    Edges,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Mean,
    Min,
}

#[derive(Subcommand)]
enum Command {
    /// Sample environment weight vectors and a combined dataset CSV from
    /// a feature-spec JSON.
    Gen {
        /// Feature spec: {"sets": [[...], ...], "sigma_y": ...}.
        #[arg(long)]
        spec: PathBuf,
        /// Number of environments to sample.
        #[arg(long, default_value_t = 4)]
        envs: usize,
        /// Samples per environment.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Also emit an environment with all drifting weights at zero
        /// (the sufficiency environment).
        #[arg(long, default_value_t = false)]
        with_sufficiency_env: bool,
    },
    /// Train a model on a dataset CSV (header x0..x{d-1},y,env_id).
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Comma-separated env ids forming the partition (required for
        /// pirm models).
        #[arg(long)]
        penalty_envs: Option<String>,
        /// Optional held-out dataset CSV to evaluate on.
        #[arg(long)]
        test_data: Option<PathBuf>,
        #[arg(long, default_value_t = 1e2)]
        lambda: f64,
        #[arg(long, default_value_t = 4000)]
        iterations: usize,
        #[arg(long, default_value_t = 2000)]
        anneal_iters: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, value_enum, default_value_t = PenaltyFormArg::SquaredNorm)]
        penalty_form: PenaltyFormArg,
    },
    /// Exact probability-bound report for a feature spec.
    Bounds {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        delta: usize,
        /// Zero-based index of the feature of interest (>= 1; 0 is the
        /// invariant feature).
        #[arg(long)]
        feature_index: usize,
        /// Observed feature dimension in the cardinality bound.
        #[arg(long, default_value_t = 10)]
        d: usize,
        /// Representation rank in the cardinality bound.
        #[arg(long, default_value_t = 5)]
        r: usize,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Partition cardinality for the success exponent (defaults to
        /// ceil(d - r + d/r)).
        #[arg(long)]
        members: Option<usize>,
    },
    /// Spectral embedding distances over a community graph.
    Graphdist {
        /// Graph file: membership CSV (element,community) or edge TSV
        /// (node_a,node_b,weight).
        #[arg(long)]
        graph: PathBuf,
        /// Defaults to edges for .tsv files, membership otherwise.
        #[arg(long, value_enum)]
        format: Option<GraphFormat>,
        /// Embedding dimension.
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Comma-separated test community names.
        #[arg(long)]
        test_nodes: Option<String>,
        /// Rank candidate environments against the test nodes.
        #[arg(long, default_value_t = false)]
        rank: bool,
        /// JSON file {"env-name": ["node", ...], ...} with candidate
        /// environments (required with --rank).
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AggregationArg::Mean)]
        aggregation: AggregationArg,
    },
    /// Run an experiment recipe from a JSON config.
    Recipe {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of seeds in the config.
        #[arg(long)]
        seeds: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let seed = cli.seed.unwrap_or(0);
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Gen {
            spec,
            envs,
            samples,
            with_sufficiency_env,
        } => cmd_gen(&spec, envs, samples, with_sufficiency_env, seed, &out_dir),
        Command::Train {
            data,
            model,
            penalty_envs,
            test_data,
            lambda,
            iterations,
            anneal_iters,
            learning_rate,
            penalty_form,
        } => {
            let config = TrainConfig {
                lambda,
                iterations,
                anneal_iters,
                learning_rate,
                seed,
                penalty_form: penalty_form.into(),
                ..TrainConfig::default()
            };
            cmd_train(
                &data,
                model.into(),
                penalty_envs.as_deref(),
                test_data.as_deref(),
                config,
                &out_dir,
            )
        }
        Command::Bounds {
            spec,
            delta,
            feature_index,
            d,
            r,
            epsilon,
            members,
        } => cmd_bounds(&spec, delta, feature_index, d, r, epsilon, members, &out_dir),
        Command::Graphdist {
            graph,
            format,
            k,
            test_nodes,
            rank,
            candidates,
            aggregation,
        } => cmd_graphdist(
            &graph,
            format,
            k,
            test_nodes.as_deref(),
            rank,
            candidates.as_deref(),
            aggregation,
            &out_dir,
        ),
        Command::Recipe { config, seeds } => {
            let mut experiment = ExperimentConfig::from_path(&config)?;
            if let Some(s) = cli.seed {
                experiment.seed = s;
            }
            if let Some(dir) = cli.out_dir {
                experiment.out_dir = dir;
            }
            if let Some(n) = seeds {
                experiment.seeds = n;
            }
            let data = run_recipe(&experiment)?;
            match data.passed() {
                Some(pass) => println!(
                    "recipe {} finished: {}",
                    experiment.recipe.name(),
                    if pass { "PASS" } else { "FAIL" }
                ),
                None => println!("recipe {} finished", experiment.recipe.name()),
            }
            println!("report: {}", experiment.out_dir.join("report.json").display());
            Ok(())
        }
    }
}

fn cmd_gen(
    spec_path: &PathBuf,
    envs: usize,
    samples: usize,
    with_sufficiency_env: bool,
    seed: u64,
    out_dir: &PathBuf,
) -> Result<(), Error> {
    if envs == 0 {
        return Err(Error::InvalidParameter("need at least one environment".into()));
    }
    let spec = load_spec(spec_path)?;
    std::fs::create_dir_all(out_dir)?;
    let mut weights = Vec::new();
    if with_sufficiency_env {
        let mut w = vec![0.0; spec.num_features()];
        w[0] = spec.invariant_weight();
        weights.push(pirm_core::EnvWeights::new(w, EnvId::from("sufficiency")));
    }
    for i in 0..envs {
        let mut rng = substream(seed, &[0x9e, i as u64]);
        weights.push(sample_env_weights(&spec, EnvId(format!("e{i}")), &mut rng));
    }
    let mut datasets = Vec::new();
    for (i, w) in weights.iter().enumerate() {
        let mut rng = substream(seed, &[0x9f, i as u64]);
        datasets.push(sample_dataset(w, samples, spec.sigma_y(), &mut rng)?);
    }
    let weights_path = out_dir.join("weights.json");
    std::fs::write(&weights_path, serde_json::to_string_pretty(&weights)?)?;
    let data_path = out_dir.join("dataset.csv");
    write_datasets_csv(&data_path, &datasets)?;
    println!("wrote {} and {}", weights_path.display(), data_path.display());
    Ok(())
}

fn cmd_train(
    data: &PathBuf,
    model: ModelKind,
    penalty_envs: Option<&str>,
    test_data: Option<&std::path::Path>,
    config: TrainConfig,
    out_dir: &PathBuf,
) -> Result<(), Error> {
    let envs = pirm_core::envgen::read_datasets_csv(data)?;
    let partition: Option<BTreeSet<EnvId>> = penalty_envs.map(|list| {
        list.split(',')
            .filter(|s| !s.is_empty())
            .map(EnvId::from)
            .collect()
    });
    let (risk, pen) = model_env_split(model, &envs, partition.as_ref())?;
    let training_range = partition
        .as_ref()
        .filter(|_| model.needs_partition())
        .map(|p| {
            p.iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("+")
        })
        .unwrap_or_else(|| "all".to_string());
    let result = train(&config, &risk, &pen)?;
    std::fs::create_dir_all(out_dir)?;

    let meta = serde_json::json!({
        "model": model.to_string(),
        "training_range": training_range,
        "lambda": config.lambda,
        "iterations": config.iterations,
        "anneal_iters": config.anneal_iters,
        "learning_rate": config.learning_rate,
        "seed": config.seed,
        "data": data.display().to_string(),
    });
    write_predictor_json(out_dir.join("predictor.json"), &result.predictor, meta)?;

    let train_report = evaluate(&result.predictor, &risk)?;
    std::fs::write(
        out_dir.join("risk_train.json"),
        serde_json::to_string_pretty(&train_report)?,
    )?;
    let report_for_csv = if let Some(test_path) = test_data {
        let test_envs = pirm_core::envgen::read_datasets_csv(test_path)?;
        let refs: Vec<&Dataset> = test_envs.iter().collect();
        let test_report = evaluate(&result.predictor, &refs)?;
        std::fs::write(
            out_dir.join("risk_test.json"),
            serde_json::to_string_pretty(&test_report)?,
        )?;
        test_report
    } else {
        train_report
    };
    write_single_result_csv(
        out_dir.join("report.csv"),
        &model.to_string(),
        &training_range,
        &report_for_csv,
    )?;
    println!(
        "trained {model}: avg mse {:.6}, worst group {:.6}",
        report_for_csv.avg, report_for_csv.worst_group
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bounds(
    spec_path: &PathBuf,
    delta: usize,
    feature_index: usize,
    d: usize,
    r: usize,
    epsilon: f64,
    members: Option<usize>,
    out_dir: &PathBuf,
) -> Result<(), Error> {
    let spec = load_spec(spec_path)?;
    let report = bound_report(&spec, delta, feature_index, d, r, epsilon, members)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("bounds.json"), text)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_graphdist(
    graph_path: &std::path::Path,
    format: Option<GraphFormat>,
    k: usize,
    test_nodes: Option<&str>,
    rank: bool,
    candidates: Option<&std::path::Path>,
    aggregation: AggregationArg,
    out_dir: &PathBuf,
) -> Result<(), Error> {
    let format = format.unwrap_or_else(|| {
        if graph_path.extension().is_some_and(|e| e == "tsv") {
            GraphFormat::Edges
        } else {
            GraphFormat::Membership
        }
    });
    let graph = match format {
        GraphFormat::Membership => overlap_matrix(&read_membership_csv(graph_path)?)?,
        GraphFormat::Edges => CommunityGraph::from_edges(&read_edge_tsv(graph_path)?)?,
    };
    let emb = spectral_embedding(&laplacian(&graph), k)?;
    std::fs::create_dir_all(out_dir)?;
    write_embedding_csv(out_dir.join("embedding.csv"), &graph, &emb)?;
    write_distance_matrix_csv(out_dir.join("distances.csv"), &graph, &emb)?;
    if emb.is_degenerate() {
        log::warn!("eigenvalue gap below 1e-9: the embedding basis is not unique");
    }
    if !emb.zero_rows().is_empty() {
        log::warn!("zero embedding rows at indices {:?}", emb.zero_rows());
    }
    if rank {
        let test: Vec<String> = test_nodes
            .ok_or_else(|| Error::InvalidParameter("--rank requires --test-nodes".into()))?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let path = candidates
            .ok_or_else(|| Error::InvalidParameter("--rank requires --candidates".into()))?;
        let doc: std::collections::BTreeMap<String, Vec<String>> =
            serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let candidate_envs: Vec<(String, Vec<String>)> = doc.into_iter().collect();
        let agg = match aggregation {
            AggregationArg::Mean => Aggregation::Mean,
            AggregationArg::Min => Aggregation::Min,
        };
        let ranking = rank_environments(&graph, &emb, &test, &candidate_envs, agg)?;
        write_ranking_csv(out_dir.join("ranking.csv"), &ranking)?;
    }
    let summary = serde_json::json!({
        "nodes": graph.len(),
        "k": emb.k(),
        "eigenvalues": emb.eigenvalues(),
        "degenerate": emb.is_degenerate(),
        "zero_rows": emb.zero_rows(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
