//! Command-line driver: argument and config handling, result files and the
//! subcommands built on the `kidesign` library.

pub mod args;
mod commands;
pub mod output;
pub mod plot;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;

use clap::Parser;
use serde_json::json;

use args::{Cli, Format};
use output::{artifact_version, record_path, unix_ms, write_atomic, ResultRecord, Table, SCHEMA_VERSION};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(kidesign::Error),
    Io(String),
    Schema(String),
}

impl From<kidesign::Error> for CliError {
    fn from(e: kidesign::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use kidesign::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::InvalidArgument(_) | E::DimensionMismatch(_)) => 3,
            CliError::Core(E::Infeasible { .. }) => 4,
            CliError::Core(E::IllConditioned { .. } | E::Numerical(_)) => 5,
            CliError::Io(_) => 6,
            CliError::Schema(_) => 7,
        }
    }

    /// One-line machine-readable error.
    pub fn record(&self) -> serde_json::Value {
        use kidesign::Error as E;
        let (kind, message) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Core(e) => (
                match e {
                    E::InvalidArgument(_) => "invalid_argument",
                    E::DimensionMismatch(_) => "dimension_mismatch",
                    E::Infeasible { .. } => "infeasible",
                    E::IllConditioned { .. } => "ill_conditioned",
                    E::Numerical(_) => "numerical",
                },
                e.to_string(),
            ),
            CliError::Io(m) => ("io", m.clone()),
            CliError::Schema(m) => ("schema", m.clone()),
        };
        let mut v = json!({ "error": { "kind": kind, "message": message, "exit_code": self.exit_code() } });
        if let CliError::Core(E::Infeasible { bytes, limit, .. }) = self {
            v["error"]["estimated_bytes"] = json!(bytes.to_string());
            v["error"]["limit_bytes"] = json!(limit.to_string());
        }
        v
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Schema(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

/// What a subcommand produced.
pub(crate) enum Output {
    /// `summary` lines go to stdout; the table is written only with `--out`.
    Table { table: Table, flags: Vec<String>, summary: Option<Vec<String>> },
    /// Raw bytes for `--out` (binary dumps, SVG).
    File(Vec<u8>),
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim().replace('_', "-");
        if k.is_empty() || k == "config" {
            return Err(CliError::Usage(format!("config line {}: invalid key", i + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

/// Value of a global `--config` given before the subcommand, if any.
fn config_path(argv: &[OsString], sub: usize) -> Option<std::path::PathBuf> {
    let mut it = argv[1..sub].iter();
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--config" {
            return it.next().map(Into::into);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Splice config entries in right after the subcommand name so that flags
/// given explicitly come later and win.
fn merge_config(argv: &[OsString]) -> Result<Vec<OsString>, CliError> {
    let cmd = <Cli as clap::CommandFactory>::command();
    let names: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
    let Some(pos) = argv.iter().skip(1).position(|a| names.iter().any(|n| a == *n)).map(|p| p + 1) else {
        return Ok(argv.to_vec());
    };
    let Some(path) = config_path(argv, pos) else {
        return Ok(argv.to_vec());
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut merged: Vec<OsString> = argv[..=pos].to_vec();
    for (k, v) in parse_config(&text)? {
        match v.as_str() {
            "true" => merged.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                merged.push(format!("--{k}").into());
                merged.push(v.into());
            }
        }
    }
    merged.extend_from_slice(&argv[pos + 1..]);
    Ok(merged)
}

fn parse(argv: &[OsString]) -> Result<Cli, clap::Error> {
    Cli::try_parse_from(argv)
}

fn resolved_config(cli: &Cli) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    if let Ok(serde_json::Value::Object(outer)) = serde_json::to_value(&cli.command) {
        for (_, inner) in outer {
            if let serde_json::Value::Object(fields) = inner {
                for (k, v) in fields {
                    let s = match v {
                        serde_json::Value::String(s) => s,
                        serde_json::Value::Array(xs) => xs
                            .iter()
                            .map(|x| x.as_str().map(str::to_string).unwrap_or_else(|| x.to_string()))
                            .collect::<Vec<_>>()
                            .join(","),
                        serde_json::Value::Null => continue,
                        other => other.to_string(),
                    };
                    map.insert(k.replace('_', "-"), s);
                }
            }
        }
    }
    map.insert("threads".into(), cli.threads.map_or("auto".into(), |t| t.to_string()));
    map.insert("format".into(), format!("{:?}", cli.format).to_lowercase());
    if let Some(out) = &cli.out {
        map.insert("out".into(), out.display().to_string());
    }
    map
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let started = unix_ms();
    let output = commands::dispatch(cli)?;
    match output {
        Output::File(bytes) => {
            let out = cli
                .out
                .as_ref()
                .ok_or_else(|| CliError::Usage(format!("`{}` needs --out", cli.command.name())))?;
            write_atomic(out, &bytes)
        }
        Output::Table { table, flags, summary } => {
            let record = ResultRecord {
                schema_version: SCHEMA_VERSION,
                artifact: artifact_version(),
                command: cli.command.name().to_string(),
                config: resolved_config(cli),
                columns: table.columns.clone(),
                rows: table.rows.clone(),
                flags,
                started_unix_ms: started,
                finished_unix_ms: unix_ms(),
            };
            let json = serde_json::to_vec_pretty(&record).map_err(|e| CliError::Io(e.to_string()))?;
            if let Some(lines) = summary {
                let mut so = std::io::stdout().lock();
                for l in lines {
                    writeln!(so, "{l}").map_err(|e| CliError::Io(e.to_string()))?;
                }
                if cli.out.is_none() {
                    return Ok(());
                }
            }
            match (cli.format, &cli.out) {
                (Format::Csv, Some(out)) => {
                    write_atomic(out, &table.to_csv()?)?;
                    write_atomic(&record_path(out), &json)
                }
                (Format::Json, Some(out)) => write_atomic(out, &json),
                (Format::Csv, None) => std::io::stdout().write_all(&table.to_csv()?).map_err(|e| CliError::Io(e.to_string())),
                (Format::Json, None) => std::io::stdout().write_all(&json).map_err(|e| CliError::Io(e.to_string())),
            }
        }
    }
}

fn report(err: &CliError) -> i32 {
    eprintln!("error: {err}");
    eprintln!("{}", err.record());
    err.exit_code()
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let merged = match merge_config(&argv) {
        Ok(m) => m,
        Err(e) => return report(&e),
    };
    let cli = match parse(&merged) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                return 0;
            }
            return report(&CliError::Usage(e.kind().to_string()));
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => return report(&CliError::Usage(format!("thread pool: {e}"))),
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

