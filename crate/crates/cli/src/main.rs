use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use force_core::dataset::Schema;
use force_core::kmeans::KernelSpec;
use force_core::pipeline::{
    emit_report, final_cluster_model, load_manifest, load_table, prepare, run_cv_grid, run_seed, select_best,
    ExperimentConfig, RunRecord, Variant,
};
use force_core::ForceError;

#[derive(Parser)]
#[command(name = "force", version, about = "SHAP-gated network experiments on tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline over every seed, then write the report.
    Run(RunArgs),
    /// Cross-validated clustering grid for one seed.
    Cv(Common),
    /// Dump the SHAP matrix and the fitted boosted trees for one seed.
    Explain(Common),
    /// Dump cluster assignments of training and test rows for one seed.
    Cluster(ClusterArgs),
    /// Re-render reports from one or more manifests.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// diabetes, heart or credit
    #[arg(long)]
    dataset: Option<Schema>,
    #[arg(long)]
    data_path: Option<PathBuf>,
    /// Master seed; repetition i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Number of seeds to repeat over.
    #[arg(long)]
    seeds: Option<usize>,
    /// Comma-separated subset of force,simple_nn,random_attention,no_cluster_labels
    #[arg(long, value_delimiter = ',')]
    variant: Option<Vec<Variant>>,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    common: Common,
    /// Kernel, e.g. linear, poly(d=3,c=1), rbf(gamma=0.01). Defaults to the CV choice.
    #[arg(long)]
    kernel: Option<KernelSpec>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// manifest.json files written by `run`
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Core(ForceError),
    Numerical(String),
}

impl From<ForceError> for Failure {
    fn from(e: ForceError) -> Self {
        Failure::Core(e)
    }
}

fn config_from(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = common.dataset {
        config.dataset = d;
    }
    if let Some(p) = &common.data_path {
        config.data_path = Some(p.clone());
    }
    if let Some(s) = common.seed {
        config.master_seed = s;
    }
    Ok(config)
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn check_failures(records: &[RunRecord]) -> Result<(), Failure> {
    let mut problems = Vec::new();
    for r in records {
        if r.chosen.is_none() {
            problems.push(format!("{} seed {}: every grid cell failed", r.dataset, r.seed));
        }
        for v in &r.variants {
            if let Some(e) = &v.error {
                problems.push(format!("{} seed {} {}: {e}", r.dataset, r.seed, v.variant));
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(problems.join("\n")))
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut config = config_from(&args.common)?;
    if let Some(n) = args.seeds {
        config.n_seeds = n;
    }
    if let Some(v) = args.variant {
        config.variants = v;
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let (table, missing) = load_table(&config)?;
    let mut records = Vec::new();
    for s in config.seeds() {
        let record = run_seed(&table, &missing, &config, s)?;
        let chosen = record
            .chosen
            .map_or_else(|| "none".to_string(), |c| format!("{} k={}", c.kernel, c.k));
        let f1: Vec<String> = record
            .variants
            .iter()
            .map(|v| match &v.report {
                Some(r) => format!("{}={:.4}", v.variant, r.f1),
                None => format!("{}=failed", v.variant),
            })
            .collect();
        println!("seed {s}: chosen {chosen}; F1 {}", f1.join(" "));
        records.push(record);
    }
    for path in emit_report(&records, &args.common.out)? {
        println!("wrote {}", path.display());
    }
    check_failures(&records)
}

fn cv(common: Common) -> Result<(), Failure> {
    let config = config_from(&common)?;
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let (table, _) = load_table(&config)?;
    let prepared = prepare(&table, &config, config.master_seed)?;
    let cells = run_cv_grid(&prepared, &config, config.master_seed);
    let chosen = select_best(&cells);
    let mut csv = String::from("kernel,k,mean_f1,fold_f1,error\n");
    for c in &cells {
        let folds: Vec<String> = c.fold_f1.iter().map(|f| format!("{f:.6}")).collect();
        csv.push_str(&format!(
            "\"{}\",{},{},{},{}\n",
            c.kernel,
            c.k,
            c.mean_f1.map_or_else(|| "NA".into(), |m| format!("{m:.6}")),
            folds.join(";"),
            c.error.as_deref().unwrap_or("")
        ));
    }
    write_file(&common.out.join(format!("cv_{}.csv", config.dataset)), &csv)?;
    match chosen {
        Some(c) => {
            println!("chosen {} k={} mean F1 {:.6}", c.kernel, c.k, c.mean_f1);
            Ok(())
        }
        None => Err(Failure::Numerical("every grid cell failed".into())),
    }
}

fn explain(common: Common) -> Result<(), Failure> {
    let config = config_from(&common)?;
    let (table, _) = load_table(&config)?;
    let prepared = prepare(&table, &config, config.master_seed)?;
    let names = prepared.matrix.column_names();
    let mut csv = prepared.shap_train.to_csv(&names);
    let test_csv = prepared.shap_test.to_csv(&names);
    csv.extend(test_csv.lines().skip(1).map(|l| format!("{l}\n")));
    write_file(&common.out.join(format!("shap_{}.csv", config.dataset)), &csv)?;
    write_file(
        &common.out.join(format!("gbm_{}.txt", config.dataset)),
        &prepared.ensemble.to_text(),
    )
}

fn cluster(args: ClusterArgs) -> Result<(), Failure> {
    let config = config_from(&args.common)?;
    let (table, _) = load_table(&config)?;
    let prepared = prepare(&table, &config, config.master_seed)?;
    let (kernel, k) = match (args.kernel, args.k) {
        (Some(kernel), Some(k)) => (kernel, k),
        (None, None) => {
            let cells = run_cv_grid(&prepared, &config, config.master_seed);
            let c = select_best(&cells)
                .ok_or_else(|| Failure::Numerical("every grid cell failed".into()))?;
            (c.kernel, c.k)
        }
        _ => return Err(Failure::Usage("--kernel and --k must be given together".into())),
    };
    let model = final_cluster_model(&prepared, kernel, k, &config, config.master_seed)?;
    let mut csv = String::from("row_id,split,cluster\n");
    for (&id, &c) in prepared.shap_train.row_ids.iter().zip(&model.assignment) {
        csv.push_str(&format!("{id},train,{c}\n"));
    }
    for (&id, row) in prepared.shap_test.row_ids.iter().zip(&prepared.shap_test.rows) {
        csv.push_str(&format!("{id},test,{}\n", model.assign(row)?));
    }
    println!("{kernel} k={k} objective {:.6}", model.objective());
    write_file(&args.common.out.join(format!("clusters_{}.csv", config.dataset)), &csv)
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let mut records = Vec::new();
    for path in &args.manifests {
        records.extend(load_manifest(path)?.records);
    }
    for path in emit_report(&records, &args.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn exit_code(e: &ForceError) -> u8 {
    match e {
        e if e.is_numerical() => 3,
        ForceError::Config(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Cv(a) => cv(a),
        Command::Explain(a) => explain(a),
        Command::Cluster(a) => cluster(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure:\n{msg}");
            ExitCode::from(3)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
