use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use expressforge_core::bundle::{parse_with_path, BundleError};
use expressforge_core::coding::proposal_counts;
use expressforge_core::metrics::{kruskal_wallis, mann_whitney_u_with};
use expressforge_core::motion::ClipsFile;
use expressforge_core::report::{os_table, qra_table, study_report};
use expressforge_core::verification::ResponsesFile;
use expressforge_core::{balanced_latin_square, reference_study, CodeBook, Format, MwuMethod, StudyBundle};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(
    name = "expressforge",
    version,
    about = "Analyze, validate and serve expression study bundles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score tables from coded clips or coded survey responses.
    #[command(subcommand)]
    Analyze(Analyze),
    /// Print the rows of a balanced Latin square.
    Square {
        #[arg(short = 'n')]
        n: usize,
        /// Relabel conditions with a seeded permutation.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank-based significance tests on CSV samples.
    #[command(subcommand)]
    Stats(Stats),
    /// Full study report for a bundle directory.
    Report {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Md)]
        format: ReportFormat,
    },
    /// Check schemas, hashes and cross-file references of a bundle.
    Validate {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Bundle directory; falls back to $EXPRESSFORGE_DATA, then ./expressforge-data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write the reference study bundle.
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Analyze {
    /// Occurrence scores per referent and expression category.
    Os {
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        clips: PathBuf,
        #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
        format: TableFormat,
    },
    /// Response accuracy per referent and expression category.
    Qra {
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
        format: TableFormat,
    },
}

#[derive(Subcommand)]
enum Stats {
    /// Mann-Whitney U on two single-column CSV samples.
    Mwu {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
    },
    /// Kruskal-Wallis H on a `group,value` CSV.
    Kw {
        #[arg(long)]
        groups: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Md,
    Json,
}

impl From<TableFormat> for Format {
    fn from(f: TableFormat) -> Self {
        match f {
            TableFormat::Csv => Format::Csv,
            TableFormat::Md => Format::Markdown,
            TableFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Md,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Auto,
    Exact,
    Normal,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 when any cause is an I/O failure, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err
        .chain()
        .any(|e| e.is::<std::io::Error>() || matches!(e.downcast_ref::<BundleError>(), Some(BundleError::Io { .. })));
    if io {
        2
    } else {
        1
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Analyze(Analyze::Os { codes, clips, format }) => {
            let codes: CodeBook = read_json(&codes)?;
            let clips = read_json::<ClipsFile>(&clips)?.into_clips()?;
            let counts = proposal_counts(&codes, &clips)?;
            let columns: Vec<String> = codes.categories.iter().map(|c| c.id.clone()).collect();
            print!("{}", os_table(&counts, &columns)?.render(format.into()));
        }
        Command::Analyze(Analyze::Qra {
            codes,
            responses,
            format,
        }) => {
            let codes: CodeBook = read_json(&codes)?;
            let responses: ResponsesFile = read_json(&responses)?;
            print!("{}", qra_table(&codes, &responses)?.render(format.into()));
        }
        Command::Square { n, seed } => {
            for row in balanced_latin_square(n, seed)? {
                let cells: Vec<String> = row.iter().map(usize::to_string).collect();
                println!("{}", cells.join(","));
            }
        }
        Command::Stats(Stats::Mwu { a, b, method }) => {
            let method = match method {
                Method::Auto => MwuMethod::Auto,
                Method::Exact => MwuMethod::Exact,
                Method::Normal => MwuMethod::Normal,
            };
            let result = mann_whitney_u_with(&read_column(&a)?, &read_column(&b)?, method)?;
            println!("U={} p={:.6} method={:?}", result.u, result.p_two_sided, result.method);
        }
        Command::Stats(Stats::Kw { groups }) => {
            let groups = read_groups(&groups)?;
            let names: Vec<&str> = groups.iter().map(|(n, _)| n.as_str()).collect();
            let samples: Vec<Vec<f64>> = groups.iter().map(|(_, v)| v.clone()).collect();
            let result = kruskal_wallis(&samples)?;
            println!(
                "groups={} H={:.6} df={} p={:.6}",
                names.join(","),
                result.h,
                result.df,
                result.p
            );
        }
        Command::Report { bundle, format } => {
            let report = study_report(&StudyBundle::load(&bundle)?)?;
            match format {
                ReportFormat::Md => print!("{}", report.to_markdown()),
                ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Validate { bundle } => {
            let loaded = StudyBundle::load(&bundle)?;
            println!(
                "ok: {} sessions, {} clips, {} responses",
                loaded.sessions.sessions.len(),
                loaded.clips.clips.len(),
                loaded.responses.responses.len()
            );
        }
        Command::Serve { addr, data } => serve(addr, data)?,
        Command::Fixture { out } => {
            reference_study::build().save(&out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn serve(addr: SocketAddr, data: Option<PathBuf>) -> Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let data = data
        .or_else(|| std::env::var_os(expressforge_server::DATA_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("expressforge-data"));
    let store = expressforge_server::Store::open(&data).map_err(|e| anyhow!("{}: {}", data.display(), e.message))?;
    let app = expressforge_server::router(expressforge_server::AppState::new(store));
    tokio::runtime::Runtime::new()?.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, data = %data.display(), "serving");
        expressforge_server::serve(listener, app).await?;
        Ok(())
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_with_path(&name, &read_text(path)?).map_err(|issue| anyhow!("{issue}"))
}

fn parse_value(text: &str, path: &Path, line: u64) -> Result<f64> {
    text.trim()
        .parse()
        .map_err(|_| anyhow!("{}:{line}: `{text}` is not a number", path.display()))
}

fn csv_records(path: &Path) -> Result<Vec<(u64, csv::StringRecord)>> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("parsing {}", path.display()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push((line, record));
    }
    Ok(rows)
}

/// First column of a CSV; a non-numeric first row is taken as a header.
fn read_column(path: &Path) -> Result<Vec<f64>> {
    let mut rows = csv_records(path)?;
    if rows.first().is_some_and(|(_, r)| r[0].parse::<f64>().is_err()) {
        rows.remove(0);
    }
    rows.iter().map(|(line, r)| parse_value(&r[0], path, *line)).collect()
}

/// `group,value` rows; groups keep first-seen order.
fn read_groups(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rows = csv_records(path)?;
    if rows
        .first()
        .is_some_and(|(_, r)| r.get(1).is_some_and(|v| v.parse::<f64>().is_err()))
    {
        rows.remove(0);
    }
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (line, record) in rows {
        let (Some(group), Some(value)) = (record.get(0), record.get(1)) else {
            bail!("{}:{line}: expected `group,value`", path.display());
        };
        let value = parse_value(value, path, line)?;
        match groups.iter_mut().find(|(g, _)| g == group) {
            Some((_, values)) => values.push(value),
            None => groups.push((group.to_owned(), vec![value])),
        }
    }
    Ok(groups)
}
