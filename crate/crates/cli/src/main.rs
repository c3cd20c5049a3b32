//! `colorindex`: build a color index over a fact list and answer free-connex
//! acyclic queries against it.
//!
//! Exit codes: 0 success, 1 I/O, parse or usage error, 2 query rejected as
//! not free-connex acyclic, 3 Boolean task on a query with free variables.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use colorindex::gen::{checked_cycle_database, random_database, random_fc_query, rng, QueryShape};
use colorindex::{
    count, enumerate, eval_boolean, load_database, naive_eval, parse_query, ColorIndex,
    ConjunctiveQuery, Database, EvalError, PlanError, QueryPlan, Schema,
};

#[derive(Parser)]
#[command(name = "colorindex", version, about = "Color-refinement index for free-connex acyclic queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a fact list and save it.
    Build {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        schema: SchemaArg,
    },
    /// Answer a query with the index.
    Query {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        task: TaskArgs,
        /// Print the query plan to stderr before answering.
        #[arg(long)]
        explain: bool,
        /// Query text, e.g. `Ans(x,y) <- R(x,y).`
        query: String,
    },
    /// Generate a database.
    Gen {
        #[command(subcommand)]
        family: Family,
        #[arg(long, short, global = true)]
        out: Option<PathBuf>,
    },
    /// Time index build, per-query preprocessing, delay and counting.
    Bench {
        #[command(flatten)]
        source: Source,
        /// File with one query per line.
        #[arg(long, conflicts_with = "random")]
        queries: Option<PathBuf>,
        /// Number of random queries to generate instead.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Outputs timed per query for the delay columns.
        #[arg(long, default_value_t = 100_000)]
        limit: usize,
    },
    /// Evaluate any query by exhaustive search, without an index.
    Oracle {
        #[arg(long)]
        db: PathBuf,
        #[command(flatten)]
        schema: SchemaArg,
        #[command(flatten)]
        task: TaskArgs,
        query: String,
    },
    /// Print index sizes and build timings.
    Stats {
        #[command(flatten)]
        source: Source,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Fact list; the index is built in memory.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Index written by `build`.
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Args)]
struct SchemaArg {
    /// Declared schema as `R/2,U/1`; inferred from the facts if absent.
    #[arg(long)]
    schema: Option<String>,
}

#[derive(Args)]
struct TaskArgs {
    #[arg(long, value_enum, default_value_t = Task::Enum)]
    task: Task,
    /// Stop an enumeration after this many answers.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Bool,
    Count,
    Enum,
}

#[derive(Subcommand)]
enum Family {
    /// Directed cycle R(1,2), ..., R(n,1).
    Cycle { n: usize },
    /// `m` distinct random facts over R/2, S/2, U/1 and `n` constants.
    Random {
        n: usize,
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Rejected(PlanError),
    NotBoolean(usize),
    Other(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Other(e.into())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::NotBoolean(k)) => {
            eprintln!("error: task bool needs a Boolean query, this one has {k} free variable(s)");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match command {
        Command::Build { db, out: path, schema } => {
            let db = read_db(&db, &schema)?;
            let idx = ColorIndex::build(&db);
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            idx.save(file).with_context(|| format!("writing {}", path.display()))?;
            write_stats(&mut out, &idx)?;
        }
        Command::Query { source, task, explain, query } => {
            let idx = open(&source)?;
            let q = parse_query(&query)?;
            let plan = QueryPlan::new(&q, idx.sigma1()).map_err(|e| match e {
                PlanError::NotFreeConnex(_) => Failure::Rejected(e),
                other => Failure::Other(other.into()),
            })?;
            if explain {
                eprint!("{}", explain_with_tables(&idx, &plan));
            }
            answer(&mut out, &idx, &plan, task)?;
        }
        Command::Gen { family, out: path } => {
            let db = match family {
                Family::Cycle { n } => checked_cycle_database(n)?,
                Family::Random { n, m, seed } => random_database(n, m, seed)?,
            };
            match path {
                Some(p) => std::fs::write(&p, db.to_fact_list())
                    .with_context(|| format!("writing {}", p.display()))?,
                None => out.write_all(db.to_fact_list().as_bytes())?,
            }
        }
        Command::Bench { source, queries, random, seed, repeats, limit } => {
            let start = Instant::now();
            let idx = open(&source)?;
            let load_time = start.elapsed();
            let queries = match (queries, random) {
                (Some(path), _) => read_queries(&path)?,
                (None, Some(n)) => {
                    let mut r = rng(seed);
                    let schema = idx.database().schema();
                    if schema.is_empty() {
                        return Err(anyhow!("cannot generate queries over an empty schema").into());
                    }
                    (0..n).map(|_| random_fc_query(&mut r, schema, QueryShape::default())).collect()
                }
                (None, None) => return Err(anyhow!("give --queries FILE or --random N").into()),
            };
            bench(&mut out, &idx, &queries, load_time, source.db.is_some(), repeats.max(1), limit)?;
        }
        Command::Oracle { db, schema, task, query } => {
            let db = read_db(&db, &schema)?;
            let q = parse_query(&query)?;
            q.check_schema(db.schema())?;
            oracle(&mut out, &db, &q, task)?;
        }
        Command::Stats { source } => {
            let idx = open(&source)?;
            write_stats(&mut out, &idx)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn parse_schema(text: &str) -> anyhow::Result<Schema> {
    let mut symbols = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, arity) = part
            .split_once('/')
            .with_context(|| format!("schema entry `{part}` is not NAME/ARITY"))?;
        let arity: usize = arity.parse().with_context(|| format!("arity in `{part}`"))?;
        symbols.push((name.to_owned(), arity));
    }
    Ok(Schema::new(symbols)?)
}

fn read_db(path: &Path, schema: &SchemaArg) -> anyhow::Result<Database> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let schema = schema.schema.as_deref().map(parse_schema).transpose()?;
    load_database(&text, schema.as_ref()).with_context(|| format!("parsing {}", path.display()))
}

fn open(source: &Source) -> anyhow::Result<ColorIndex> {
    match (&source.db, &source.index) {
        (Some(db), _) => Ok(ColorIndex::build(&read_db(db, &SchemaArg { schema: None })?)),
        (None, Some(path)) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            ColorIndex::load(io::BufReader::new(file))
                .with_context(|| format!("loading {}", path.display()))
        }
        (None, None) => bail!("give --db PATH or --index PATH"),
    }
}

fn read_queries(path: &Path) -> anyhow::Result<Vec<ConjunctiveQuery>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| parse_query(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn answer(out: &mut impl Write, idx: &ColorIndex, plan: &QueryPlan, task: TaskArgs) -> Result<()> {
    match task.task {
        Task::Bool => match eval_boolean(idx, plan) {
            Ok(b) => writeln!(out, "{}", if b { "yes" } else { "no" })?,
            Err(EvalError::NotBoolean(k)) => return Err(Failure::NotBoolean(k)),
        },
        Task::Count => writeln!(out, "{}", count(idx, plan))?,
        Task::Enum => {
            let db = idx.database();
            let mut e = enumerate(idx, plan);
            let mut emitted = 0;
            while task.limit.is_none_or(|l| emitted < l) {
                let Some(t) = e.next_tuple() else { break };
                writeln!(out, "{}", db.format_tuple(t))?;
                emitted += 1;
            }
            writeln!(out, "EOE")?;
        }
    }
    Ok(())
}

fn oracle(out: &mut impl Write, db: &Database, q: &ConjunctiveQuery, task: TaskArgs) -> Result<()> {
    let result = naive_eval(db, q);
    match task.task {
        Task::Bool if !q.is_boolean() => return Err(Failure::NotBoolean(q.arity())),
        Task::Bool => writeln!(out, "{}", if result.is_empty() { "no" } else { "yes" })?,
        Task::Count => writeln!(out, "{}", result.len())?,
        Task::Enum => {
            for t in result.iter().take(task.limit.unwrap_or(usize::MAX)) {
                writeln!(out, "{}", db.format_tuple(t))?;
            }
            writeln!(out, "EOE")?;
        }
    }
    Ok(())
}

fn explain_with_tables(idx: &ColorIndex, plan: &QueryPlan) -> String {
    let schema = idx.sigma1().schema();
    let mut s = plan.explain(idx.sigma1());
    for (ci, c) in plan.components().iter().enumerate() {
        for i in 1..c.len() {
            let Some(label) = c.edge_label(i) else { continue };
            let hat = idx.hat_label(label);
            s.push_str(&format!(
                "component {ci}: E_{} holds {} color pair(s)\n",
                label.display(schema),
                hat.len()
            ));
        }
    }
    s
}

fn write_stats(out: &mut impl Write, idx: &ColorIndex) -> io::Result<()> {
    let s = idx.stats();
    writeln!(out, "|D|            = {}", s.db_size)?;
    writeln!(out, "|D1|           = {}", s.d1_size)?;
    writeln!(out, "|adom|         = {}", s.adom)?;
    writeln!(out, "|C|            = {}", s.colors)?;
    writeln!(out, "|D_col|        = {}", s.color_db_size)?;
    writeln!(out, "|D_col|/|D|    = {:.4}", s.k_sigma())?;
    writeln!(out, "edge labels    = {}", s.edge_labels)?;
    writeln!(out, "vertex labels  = {}", s.vertex_labels)?;
    writeln!(out, "E relations    = {}", s.color_relations)?;
    writeln!(out, "graph time     = {}", fmt_duration(s.graph_time))?;
    writeln!(out, "refine time    = {}", fmt_duration(s.refine_time))?;
    writeln!(out, "tables time    = {}", fmt_duration(s.tables_time))?;
    Ok(())
}

fn fmt_duration(d: Duration) -> String {
    let us = d.as_secs_f64() * 1e6;
    if us < 1e3 {
        format!("{us:.1}us")
    } else if us < 1e6 {
        format!("{:.2}ms", us / 1e3)
    } else {
        format!("{:.2}s", us / 1e6)
    }
}

fn min_time<T>(repeats: usize, mut f: impl FnMut() -> T) -> Duration {
    (0..repeats)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed()
        })
        .min()
        .unwrap_or_default()
}

fn percentile(sorted: &[Duration], p: f64) -> Duration {
    if sorted.is_empty() {
        return Duration::ZERO;
    }
    let i = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[i]
}

fn bench(
    out: &mut impl Write,
    idx: &ColorIndex,
    queries: &[ConjunctiveQuery],
    load_time: Duration,
    built: bool,
    repeats: usize,
    limit: usize,
) -> Result<()> {
    let s = idx.stats();
    writeln!(
        out,
        "{} {}   |D| = {}   |D_col| = {}   |C| = {}",
        if built { "build" } else { "load" },
        fmt_duration(load_time),
        s.db_size,
        s.color_db_size,
        s.colors
    )?;
    writeln!(
        out,
        "{:>4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>12}  query",
        "#", "prep", "count", "delay50", "delay99", "delaymax", "answers"
    )?;
    for (i, q) in queries.iter().enumerate() {
        let plan = match QueryPlan::new(q, idx.sigma1()) {
            Ok(p) => p,
            Err(e) => {
                writeln!(out, "{i:>4} skipped: {e}  {q}")?;
                continue;
            }
        };
        let prep = min_time(repeats, || {
            let p = QueryPlan::new(q, idx.sigma1()).unwrap();
            enumerate(idx, &p).arity()
        });
        let count_time = min_time(repeats, || count(idx, &plan));
        let answers = count(idx, &plan);
        let mut gaps = Vec::new();
        let mut e = enumerate(idx, &plan);
        let mut last = Instant::now();
        while gaps.len() < limit {
            let more = e.next_tuple().is_some();
            let now = Instant::now();
            gaps.push(now - last);
            last = now;
            if !more {
                break;
            }
        }
        gaps.sort_unstable();
        writeln!(
            out,
            "{i:>4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>12}  {q}",
            fmt_duration(prep),
            fmt_duration(count_time),
            fmt_duration(percentile(&gaps, 0.5)),
            fmt_duration(percentile(&gaps, 0.99)),
            fmt_duration(gaps.last().copied().unwrap_or_default()),
            answers
        )?;
    }
    Ok(())
}
