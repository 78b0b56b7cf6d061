//! `netr` command line: generate corpora, build indexes, run queries, and
//! benchmark engine modes.
//!
//! Exit codes: 0 success, 1 bad usage or bad query arguments, 2 broken or
//! missing data, 3 violated internal invariant.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use chrono::NaiveDateTime;
use clap::{Args, Parser, Subcommand};

use netr::bench::{read_query_batch, run_bench, BenchMode, Sweep};
use netr::engine::{Query, RankedResult};
use netr::error::Error;
use netr::geo::GeoPoint;
use netr::index::{build_index, BuildParams};
use netr::model::{ingest, IntervalScheme, UserId, TIMESTAMP_FORMAT};
use netr::persist::{load_index, save_index, sha256_file, InputDigests};
use netr::scoring::ScoreWeights;
use netr::social::{EmbeddingParams, StDbscanParams};
use netr::synth::{generate, SynthParams};

#[derive(Parser)]
#[command(name = "netr", version, about = "Social and time aware spatial keyword search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index directory from object, check-in, and friendship CSVs.
    Build(BuildArgs),
    /// Run one top-k query against a built index.
    Query(QueryArgs),
    /// Generate a synthetic corpus.
    Gen(GenArgs),
    /// Run a query batch in one or more modes and report a CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    objects: PathBuf,
    #[arg(long)]
    checkins: PathBuf,
    #[arg(long)]
    friends: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = netr::index::DEFAULT_INTERVAL_COUNT)]
    intervals: usize,
    #[arg(long, default_value_t = netr::social::DEFAULT_DIMENSION)]
    dim: usize,
    #[arg(long, default_value_t = netr::tree::DEFAULT_MAX_FANOUT)]
    fanout: usize,
    #[arg(long, default_value_t = netr::social::DEFAULT_EPS_KM)]
    eps_km: f64,
    #[arg(long, default_value_t = netr::social::DEFAULT_EPS_HOURS)]
    eps_hours: f64,
    #[arg(long, default_value_t = netr::social::DEFAULT_MIN_PTS)]
    min_pts: usize,
    #[arg(long, default_value_t = netr::social::DEFAULT_MIN_CHECKINS)]
    min_checkins: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    user: String,
    #[arg(long)]
    lat: f64,
    #[arg(long)]
    lon: f64,
    /// `|`-separated keywords, e.g. "beer|jazz".
    #[arg(long, default_value = "")]
    keywords: String,
    /// Local time, e.g. 2010-05-01T20:00:00.
    #[arg(long)]
    time: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Search radius in km.
    #[arg(long, default_value_t = netr::scoring::DEFAULT_MAX_DISTANCE_KM)]
    radius: f64,
    #[arg(long, default_value_t = netr::scoring::DEFAULT_GEO_WEIGHT)]
    alpha: f64,
    #[arg(long, default_value_t = netr::scoring::DEFAULT_KEYWORD_WEIGHT)]
    beta: f64,
    #[arg(long, default_value_t = netr::scoring::DEFAULT_SOCIAL_WEIGHT)]
    gamma: f64,
    #[arg(long, default_value_t = netr::scoring::DEFAULT_DIVERSITY_MIX)]
    theta: f64,
    #[arg(long, default_value = "netr")]
    mode: String,
    /// Re-rank by exhaustive scan and compare.
    #[arg(long)]
    oracle: bool,
    /// Print search statistics.
    #[arg(long)]
    explain: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    objects: usize,
    #[arg(long)]
    users: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Total check-ins; default is 100 per user.
    #[arg(long)]
    checkins: Option<usize>,
    #[arg(long, default_value_t = netr::synth::DEFAULT_QUERY_COUNT)]
    queries: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    index: PathBuf,
    /// Query batch CSV: user_id,lat,lon,keywords,timestamp,k.
    #[arg(long)]
    queries: PathBuf,
    /// Comma-separated: netr,baseline-ir.
    #[arg(long, default_value = "netr")]
    mode: String,
    /// One of k, qw, radius, gamma.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    report: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let outcome = match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Query(args) => cmd_query(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) | Error::UnknownUser { .. } => 1,
        Error::Parse { .. }
        | Error::UnknownObject { .. }
        | Error::EmptyCorpus
        | Error::Corrupt { .. }
        | Error::Io(_) => 2,
        Error::Invariant(_) => 3,
    }
}

fn cmd_build(args: BuildArgs) -> Result<(), Error> {
    let existed_before = args.out.exists();
    let result = build_and_save(&args);
    if result.is_err() && !existed_before && args.out.exists() {
        let _ = std::fs::remove_dir_all(&args.out);
    }
    result
}

fn build_and_save(args: &BuildArgs) -> Result<(), Error> {
    let started = Instant::now();
    let scheme = IntervalScheme::new(args.intervals)?;
    let (corpus, checkins, friendships) =
        ingest(&args.objects, &args.checkins, &args.friends, scheme)?;
    log::info!(
        "ingested {} objects, {} check-ins, {} friendships in {:.2?}",
        corpus.len(),
        checkins.len(),
        friendships.len(),
        started.elapsed()
    );
    let params = BuildParams {
        interval_count: args.intervals,
        max_fanout: args.fanout,
        min_checkins: args.min_checkins,
        dbscan: StDbscanParams {
            eps_km: args.eps_km,
            eps_hours: args.eps_hours,
            min_pts: args.min_pts,
        },
        embedding: EmbeddingParams {
            dimension: args.dim,
            seed: args.seed,
            ..EmbeddingParams::default()
        },
    };
    let index = build_index(corpus, &checkins, &friendships, params)?;
    let inputs = InputDigests {
        objects_csv: sha256_file(&args.objects)?,
        checkins_csv: sha256_file(&args.checkins)?,
        friends_csv: sha256_file(&args.friends)?,
    };
    save_index(&index, &args.out, inputs)?;
    let s = index.stats();
    println!(
        "indexed {} objects, {} users, {} check-ins into {} tree nodes (height {}), {} clusters",
        s.objects, s.users, s.checkins, s.tree_nodes, s.tree_height, s.clusters
    );
    println!("saved index to {}", args.out.display());
    Ok(())
}

fn cmd_query(args: QueryArgs) -> Result<(), Error> {
    let index = load_index(&args.index)?;
    let query = Query {
        user: UserId(args.user.clone()),
        location: GeoPoint {
            lat: args.lat,
            lon: args.lon,
        },
        keywords: args
            .keywords
            .split('|')
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect(),
        time: parse_time(&args.time)?,
        k: args.k,
        max_distance_km: args.radius,
        weights: ScoreWeights {
            geo: args.alpha,
            keyword: args.beta,
            social: args.gamma,
            theta: args.theta,
        },
    };
    let result = match args.mode.as_str() {
        "netr" => index.top_k(&query)?,
        "baseline-ir" => index.top_k_baseline_ir(&query)?,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown mode `{other}`; expected netr or baseline-ir"
            )))
        }
    };
    print_result(&result);
    if args.explain {
        let s = &result.stats;
        println!(
            "stats: node_accesses={} temporal_skips={} candidates_scored={} elapsed={:.3}ms",
            s.node_accesses,
            s.temporal_skips,
            s.candidates_scored,
            s.elapsed.as_secs_f64() * 1e3
        );
    }
    if args.oracle {
        let oracle = index.brute_force_top_k(&query)?;
        let lhs: Vec<_> = result.entries.iter().map(|e| &e.object).collect();
        let rhs: Vec<_> = oracle.entries.iter().map(|e| &e.object).collect();
        if lhs == rhs {
            println!("oracle MATCH");
        } else {
            println!("oracle MISMATCH");
            println!("  index: {lhs:?}");
            println!("  scan:  {rhs:?}");
            return Err(Error::Invariant(
                "index results diverge from exhaustive scan".into(),
            ));
        }
    }
    Ok(())
}

fn parse_time(s: &str) -> Result<NaiveDateTime, Error> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).map_err(|_| {
        Error::InvalidParameter(format!(
            "`{s}` is not a local time of the form 2010-05-01T20:00:00"
        ))
    })
}

fn print_result(result: &RankedResult) {
    if result.entries.is_empty() {
        println!("no results");
        return;
    }
    for (rank, entry) in result.entries.iter().enumerate() {
        let b = &entry.breakdown;
        println!(
            "{:>2}. {} total={:.6} geo={:.6} keyword={:.6} time={:.6} social={:.6}",
            rank + 1,
            entry.object,
            b.total,
            b.geo,
            b.keyword,
            b.time,
            b.social
        );
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), Error> {
    let mut params = SynthParams::new(args.objects, args.users, args.seed);
    if let Some(checkins) = args.checkins {
        params.checkins = checkins;
    }
    params.queries = args.queries;
    let corpus = generate(&params)?;
    corpus.write_to(&args.out)?;
    println!(
        "wrote objects.csv, checkins.csv, friends.csv, queries.csv to {}",
        args.out.display()
    );
    println!(
        "{} objects, {} users, {} check-ins, {} queries (seed {})",
        params.objects, params.users, params.checkins, params.queries, params.seed
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Error> {
    let index = load_index(&args.index)?;
    let queries = read_query_batch(
        &args.queries,
        ScoreWeights::default(),
        netr::scoring::DEFAULT_MAX_DISTANCE_KM,
    )?;
    let modes = BenchMode::parse_list(&args.mode)?;
    let sweep = args.sweep.as_deref().map(Sweep::parse).transpose()?;
    let report = run_bench(&index, &queries, &modes, sweep)?;
    report.write_csv(&args.report)?;
    for row in report.rows.iter().filter(|r| r.query_id == "mean") {
        println!(
            "mean {} {}={} accesses={:.1} elapsed={:.1}us",
            row.mode, row.sweep_param, row.sweep_value, row.node_accesses, row.elapsed_us
        );
    }
    println!(
        "wrote {} rows to {}",
        report.rows.len(),
        args.report.display()
    );
    Ok(())
}
