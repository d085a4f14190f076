use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cqa_core::config::PipelineConfig;
use cqa_core::enumerate::{self, NegationMode};
use cqa_core::eval::{self, Metric, RankContext};
use cqa_core::ground::{self, GroundedSample};
use cqa_core::io;
use cqa_core::kg::{self, EntityId, KgPair};
use cqa_core::query::{GroundedQueryGraph, TypeRecord};
use cqa_core::reasoner::{self, CrispOps, RankingRecord};
use cqa_core::solver;
use cqa_core::verify::{self, OracleConfig};
use cqa_core::Error;

#[derive(Parser)]
#[command(name = "cqa", version, about = "Query-type enumeration, grounding, answering and evaluation")]
struct Cli {
    /// JSON pipeline config; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for grounding, solving and inference.
    #[arg(long, global = true, env = "CQA_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate abstract query types.
    Enumerate(EnumerateArgs),
    /// Ground query types on a knowledge graph.
    Ground(GroundArgs),
    /// Answer grounded queries exactly.
    Solve(SolveArgs),
    /// Rank candidate entities with a reasoner.
    Infer(InferArgs),
    /// Score rankings against the dataset.
    Evaluate(EvaluateArgs),
    /// Differential check of the solver on random graphs.
    Verify(VerifyArgs),
    /// Count tables of a types file.
    Stats(StatsArgs),
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long)]
    max_free: Option<usize>,
    #[arg(long)]
    max_exist: Option<usize>,
    #[arg(long)]
    max_const: Option<usize>,
    #[arg(long)]
    max_nodes: Option<usize>,
    #[arg(long)]
    max_edges: Option<usize>,
    #[arg(long)]
    max_extra_edges: Option<usize>,
    #[arg(long)]
    max_neg_edges: Option<usize>,
    #[arg(long)]
    max_dist_to_free: Option<usize>,
    /// Negated variants per positive shape: `one` or `all`.
    #[arg(long)]
    negation: Option<NegationMode>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct GroundArgs {
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long)]
    types: PathBuf,
    #[arg(long)]
    num_pos: Option<usize>,
    #[arg(long)]
    num_neg: Option<usize>,
    /// Answer bound per free variable.
    #[arg(long)]
    bound: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_retries: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
    /// Per-type sampling report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Full,
    Observed,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value = "full")]
    which: Which,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reasoner {
    Crisp,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value = "crisp")]
    reasoner: Reasoner,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    rankings: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated: marginal, multiply, joint.
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<Metric>>,
    #[arg(long, value_delimiter = ',')]
    hits: Option<Vec<usize>>,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the per-cell table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Compare against the brute-force oracle (the only mode).
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    #[arg(long, default_value_t = 40)]
    entities: usize,
    #[arg(long, default_value_t = 5)]
    relations: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Types to cycle through; defaults to the enumeration under the config budget.
    #[arg(long)]
    types: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    types: PathBuf,
}

/// A query line: either a bare grounded query or a full sample.
#[derive(Deserialize)]
struct QueryLine {
    #[serde(default)]
    formula_id: Option<String>,
    #[serde(flatten)]
    query: GroundedQueryGraph,
}

#[derive(Serialize)]
struct AnswerLine {
    index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    formula_id: Option<String>,
    answers: Vec<Vec<EntityId>>,
}

fn load_kg(flag: Option<PathBuf>, cfg: &PipelineConfig) -> cqa_core::Result<KgPair> {
    let dir = flag
        .or_else(|| cfg.kg_dir.clone())
        .ok_or_else(|| Error::Contract("no knowledge graph given (--kg or kg_dir in the config)".into()))?;
    let kgs = kg::load_kg_dir(&dir)?;
    info!(
        "loaded {}: {} entities, {} relations, {} observed / {} full triples",
        dir.display(),
        kgs.num_entities(),
        kgs.full.num_base_relations(),
        kgs.observed.base_triples().count(),
        kgs.full.base_triples().count()
    );
    Ok(kgs)
}

fn print_tables(types: &[TypeRecord]) -> cqa_core::Result<()> {
    let graphs: Vec<_> = types.iter().map(|t| t.graph.clone()).collect();
    let table = enumerate::count_table(&graphs)?;
    let arities: std::collections::BTreeSet<usize> = table.keys().map(|g| g.free).collect();
    for k in arities {
        println!("{}", enumerate::render_count_table(&table, k));
    }
    println!("types\t{}", types.len());
    Ok(())
}

fn run(cli: Cli) -> cqa_core::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = cli.workers.or(cfg.workers) {
        cfg.workers = Some(w);
        // Fails only if a global pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }

    match cli.command {
        Command::Enumerate(a) => {
            let b = &mut cfg.budget;
            macro_rules! set {
                ($($f:ident),*) => { $(if let Some(v) = a.$f { b.$f = v; })* };
            }
            set!(max_free, max_exist, max_const, max_nodes, max_edges, max_extra_edges, max_neg_edges, max_dist_to_free);
            let mode = a.negation.unwrap_or(cfg.negation);
            let graphs = enumerate::enumerate_abstract(&cfg.budget, mode)?;
            let records: Vec<TypeRecord> = graphs
                .into_iter()
                .enumerate()
                .map(|(i, graph)| TypeRecord { formula_id: enumerate::formula_id(i), graph })
                .collect();
            io::write_jsonl_file(&a.output, &records)?;
            print_tables(&records)?;
        }
        Command::Ground(a) => {
            let kgs = load_kg(a.kg, &cfg)?;
            let types = io::read_types(&a.types)?;
            let s = &mut cfg.sampling;
            if let Some(v) = a.num_pos {
                s.num_positive_type = v;
            }
            if let Some(v) = a.num_neg {
                s.num_negative_type = v;
            }
            if let Some(v) = a.bound {
                s.answer_bound_per_free = v;
            }
            if let Some(v) = a.seed {
                s.seed = v;
            }
            if let Some(v) = a.max_retries {
                s.max_retries = v;
            }
            cfg.validate()?;
            let (samples, reports) = ground::sample_dataset(&types, &kgs, &cfg.sampling)?;
            io::write_jsonl_file(&a.output, &samples)?;
            if let Some(p) = a.report {
                io::write_json_file(&p, &reports)?;
            }
            let short = reports.iter().filter(|r| r.emitted < r.requested).count();
            eprintln!("{} samples over {} types ({} types short)", samples.len(), types.len(), short);
        }
        Command::Solve(a) => {
            let kgs = load_kg(a.kg, &cfg)?;
            let graph = match a.which {
                Which::Full => &kgs.full,
                Which::Observed => &kgs.observed,
            };
            let queries: Vec<QueryLine> = io::read_jsonl_file(&a.queries)?;
            let lines = queries
                .par_iter()
                .enumerate()
                .map(|(index, q)| {
                    let answers = solver::solve_efo(&q.query, graph)?;
                    Ok(AnswerLine {
                        index,
                        formula_id: q.formula_id.clone(),
                        answers: answers.tuples().to_vec(),
                    })
                })
                .collect::<cqa_core::Result<Vec<_>>>()?;
            io::write_jsonl_file(&a.output, &lines)?;
        }
        Command::Infer(a) => {
            let kgs = load_kg(a.kg, &cfg)?;
            let samples: Vec<GroundedSample> = io::read_jsonl_file(&a.queries)?;
            let records = match a.reasoner {
                Reasoner::Crisp => {
                    let ops = CrispOps::new(&kgs.observed);
                    samples
                        .par_iter()
                        .enumerate()
                        .map(|(i, s)| reasoner::infer_sample(i, s, &ops))
                        .collect::<cqa_core::Result<Vec<_>>>()?
                }
            };
            io::write_jsonl_file(&a.output, &records)?;
        }
        Command::Evaluate(a) => {
            let samples: Vec<GroundedSample> = io::read_jsonl_file(&a.data)?;
            let records: Vec<RankingRecord> = io::read_jsonl_file(&a.rankings)?;
            if samples.len() != records.len() {
                return Err(Error::Contract(format!(
                    "{} samples but {} rankings",
                    samples.len(),
                    records.len()
                )));
            }
            let metrics = a.metrics.unwrap_or(cfg.metrics);
            let hits = a.hits.unwrap_or(cfg.hits);
            if hits.is_empty() || hits.contains(&0) {
                return Err(Error::Contract("hits must be positive".into()));
            }
            let mut per_query = Vec::with_capacity(samples.len());
            for (i, (s, r)) in samples.iter().zip(&records).enumerate() {
                if r.sample != i || r.formula_id != s.formula_id {
                    return Err(Error::Contract(format!("ranking {i} does not belong to sample {i}")));
                }
                let ctx = RankContext::new(s, r)?;
                per_query.push(eval::evaluate_query(&ctx, &metrics, &hits)?);
            }
            let report = eval::aggregate(&per_query, &hits);
            io::write_json_file(&a.output, &report)?;
            if let Some(p) = a.csv {
                std::fs::write(p, eval::report_csv(&report))?;
            }
            let skipped = per_query.iter().filter(|q| q.marginal_skipped).count();
            eprintln!("{} queries, {} cells, {} skipped for marginal", per_query.len(), report.cells.len(), skipped);
        }
        Command::Verify(a) => {
            let types = match a.types {
                Some(p) => io::read_types(&p)?.into_iter().map(|t| t.graph).collect(),
                None => enumerate::enumerate_abstract(&cfg.budget, cfg.negation)?,
            };
            let oc = OracleConfig {
                instances: a.instances,
                max_entities: a.entities,
                max_relations: a.relations,
                seed: a.seed.unwrap_or(cfg.sampling.seed),
                ..Default::default()
            };
            let r = verify::run_oracle_suite(&types, &oc)?;
            println!(
                "oracle agreement: {}/{} ({:.1}%), csp agreement: {}/{}, types covered: {}/{}, non-empty answers: {}",
                r.oracle_agreements,
                r.instances,
                100.0 * r.oracle_agreements as f64 / r.instances.max(1) as f64,
                r.csp_agreements,
                r.csp_checked,
                r.types_covered,
                types.len(),
                r.nonempty_answers
            );
            if !r.all_agree() {
                for m in &r.mismatches {
                    eprintln!("mismatch ({}) instance {}: {}", m.against, m.instance, serde_json::to_string(&m.query)?);
                }
                return Err(Error::Invariant(format!("{} mismatches", r.mismatches.len())));
            }
        }
        Command::Stats(a) => {
            let types = io::read_types(&a.types)?;
            print_tables(&types)?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invariant(_) => 3,
        Error::Execution(_) | Error::ResourceLimit(_) | Error::SamplingExhausted(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
