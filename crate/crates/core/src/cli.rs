//! The `vtelos` command.
//!
//! Exit codes: 0 success, 1 usage, 2 validation or content errors, 3 I/O,
//! 4 internal.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::agreement::{self, AgreementReport, MatchPolicy};
use crate::dsl::{self, SourceSpan};
use crate::persist::{self, ExportFormat, ImageIndex, PersistError, RecordStore};
use crate::schema::{PropertyAssertionSet, Schema, SchemaError, Severity, Value};
use crate::service::{self, Api};
use crate::simulation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Parser)]
#[command(
    name = "vtelos",
    version,
    about = "Genus-differentia schemas and principled image annotation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check or freeze schema source files.
    Schema {
        #[command(subcommand)]
        command: SchemaCommand,
    },
    /// Resolve property assertions against a schema.
    Classify {
        schema: PathBuf,
        /// `property=value`; repeatable.
        #[arg(long = "assert", value_name = "PROPERTY=VALUE")]
        assertions: Vec<String>,
    },
    /// Agreement statistics over record files.
    Agree {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Metric::All)]
        metric: Metric,
        /// Add partial credit by depth of the common ancestor; needs --schema.
        #[arg(long)]
        hierarchical: bool,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Write the full report as JSON.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Run a simulated ad-hoc versus vTelos experiment.
    Simulate {
        config: PathBuf,
        /// Write the report as JSON.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Write a dataset manifest for stored records.
    Export {
        records: PathBuf,
        schema: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ExportFormat,
    },
    /// Serve the annotation API.
    Serve {
        schema: PathBuf,
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        audit: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SchemaCommand {
    /// Parse and validate; exits 0 only when there are no errors.
    Check { file: PathBuf },
    /// Validate, assign concept ids and write a `.vtsf` file.
    Freeze {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Kappa,
    Percent,
    Fleiss,
    All,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<PersistError> for Failure {
    fn from(e: PersistError) -> Self {
        let code = if e.is_io() { EXIT_IO } else { EXIT_VALIDATION };
        let mut message = e.to_string();
        match &e {
            PersistError::Parse(diags) => {
                for d in diags {
                    message.push_str(&format!("\n  {d}"));
                }
            }
            PersistError::Lower(errs) => {
                for l in errs {
                    message.push_str(&format!("\n  {l}"));
                }
            }
            PersistError::Schema(SchemaError::ValidationFailed(report)) => {
                for f in report.errors() {
                    message.push_str(&format!("\n  {} [{}]: {}", f.severity, f.canon, f.message));
                }
            }
            _ => {}
        }
        Failure::new(code, message)
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut io::stdout().lock(), &mut io::stderr().lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Schema {
            command: SchemaCommand::Check { file },
        } => schema_check(&file, out),
        Command::Schema {
            command: SchemaCommand::Freeze { file, output },
        } => {
            let schema = persist::load_schema_source(&file)?;
            persist::save_schema(&schema, &output)?;
            let stamp = schema.version_stamp().expect("frozen");
            let _ = writeln!(
                out,
                "froze {} ({} nodes) -> {}",
                schema.id(),
                schema.node_count(),
                output.display()
            );
            let _ = writeln!(out, "{stamp}");
            Ok(EXIT_OK)
        }
        Command::Classify { schema, assertions } => classify(&schema, &assertions, out),
        Command::Agree {
            records,
            metric,
            hierarchical,
            schema,
            json,
        } => agree(&records, metric, hierarchical, schema.as_deref(), json.as_deref(), out),
        Command::Simulate { config, json } => {
            let (config, schema_path) = persist::load_experiment_config(&config)?;
            let schema = Arc::new(persist::load_schema_source(&schema_path)?);
            let report = simulation::run_experiment(&schema, &config)
                .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
            let _ = write!(out, "{}", report.render_text());
            if let Some(path) = json {
                fs::write(&path, report.to_json()).map_err(|e| io_failure(&path, e))?;
            }
            Ok(EXIT_OK)
        }
        Command::Export {
            records,
            schema,
            output,
            format,
        } => {
            let schema = persist::load_schema_source(&schema)?;
            let records = persist::read_records(&records)?;
            let n = persist::write_manifest(&output, &records, &schema, format)?;
            let _ = writeln!(out, "exported {n} records -> {}", output.display());
            Ok(EXIT_OK)
        }
        Command::Serve {
            schema,
            store,
            port,
            host,
            images,
            audit,
        } => {
            let schema = Arc::new(persist::load_schema_source(&schema)?);
            let mut api = Api::new(Some(Arc::clone(&schema))).with_store(RecordStore::open(store, [schema]));
            if let Some(dir) = images {
                api = api.with_images(ImageIndex::scan(&dir)?);
            }
            if let Some(path) = audit {
                api = api.with_audit_log(persist::AuditLogWriter::open(path)?);
            }
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_INTERNAL, e.to_string()))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .map_err(|e| Failure::new(EXIT_IO, format!("cannot bind {host}:{port}: {e}")))?;
                let addr = listener
                    .local_addr()
                    .map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
                let _ = writeln!(out, "listening on http://{addr}");
                let _ = out.flush();
                service::serve(Arc::new(api), listener)
                    .await
                    .map_err(|e| Failure::new(EXIT_INTERNAL, e.to_string()))
            })?;
            Ok(EXIT_OK)
        }
    }
}

fn at(file: &Path, span: SourceSpan) -> String {
    format!("{}:{}", file.display(), span)
}

fn schema_check(file: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let text = fs::read_to_string(file).map_err(|e| io_failure(file, e))?;
    let doc = match dsl::parse(&text) {
        Ok(d) => d,
        Err(diags) => {
            for d in &diags {
                let _ = writeln!(out, "{}: {d}", file.display());
            }
            let _ = writeln!(out, "{} errors, 0 warnings", diags.len());
            return Ok(EXIT_VALIDATION);
        }
    };
    let lowered = match dsl::lower(&doc) {
        Ok(l) => l,
        Err(errs) => {
            for e in &errs {
                let _ = writeln!(out, "{}: error: {}", at(file, e.span), e.error);
            }
            let _ = writeln!(out, "{} errors, 0 warnings", errs.len());
            return Ok(EXIT_VALIDATION);
        }
    };
    let report = lowered.schema.validate();
    for f in &report.findings {
        let span = lowered.spans.locate(&f.locus);
        let _ = writeln!(out, "{}: {} [{}]: {}", at(file, span), f.severity, f.canon, f.message);
    }
    let _ = writeln!(out, "{}", report.summary());
    Ok(if report.findings.iter().any(|f| f.severity == Severity::Error) {
        EXIT_VALIDATION
    } else {
        EXIT_OK
    })
}

fn classify(path: &Path, assertions: &[String], out: &mut dyn Write) -> Result<i32, Failure> {
    let schema = persist::load_schema_source(path)?;
    let mut set = PropertyAssertionSet::new();
    for a in assertions {
        let (p, v) = a
            .split_once('=')
            .ok_or_else(|| Failure::new(EXIT_USAGE, format!("`{a}` is not property=value")))?;
        let (p, v) = (p.trim(), v.trim());
        let def = schema
            .property(p)
            .ok_or_else(|| Failure::new(EXIT_VALIDATION, SchemaError::UnknownProperty(p.into()).to_string()))?;
        let value = Value::parse_for(&def.domain, v)
            .ok_or_else(|| Failure::new(EXIT_VALIDATION, format!("value `{v}` is outside the domain of `{p}`")))?;
        set.assert(p, value);
    }
    let res = schema
        .resolve(&set)
        .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let _ = writeln!(out, "status: {}", res.status);
    for f in &res.unsatisfied_frontier {
        let cs: Vec<String> = f.unsatisfied.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "  {} needs {}", f.child, cs.join(", "));
    }
    let _ = writeln!(out, "{}", render_path(&schema, &res.path));
    Ok(EXIT_OK)
}

fn render_path(schema: &Schema, path: &[String]) -> String {
    path.iter()
        .map(|id| {
            let label = schema.canonical_label(id).unwrap_or_else(|_| id.clone());
            match schema.node(id).and_then(|n| n.concept_id) {
                Some(c) => format!("{label} [{c}]"),
                None => label,
            }
        })
        .collect::<Vec<_>>()
        .join(" > ")
}

fn agree(
    files: &[PathBuf],
    metric: Metric,
    hierarchical: bool,
    schema: Option<&Path>,
    json: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    if hierarchical && schema.is_none() {
        return Err(Failure::new(EXIT_USAGE, "--hierarchical needs --schema"));
    }
    let schema = schema.map(persist::load_schema_source).transpose()?;
    let mut records = vec![];
    for f in files {
        if !f.exists() {
            return Err(Failure::new(EXIT_IO, format!("{}: no such file", f.display())));
        }
        records.extend(persist::read_records(f)?);
    }
    let fail = |e: agreement::AgreementError| Failure::new(EXIT_VALIDATION, e.to_string());
    let m = agreement::build_matrix(&records, MatchPolicy::default()).map_err(fail)?;
    let report = AgreementReport::compute(&m, schema.as_ref().filter(|_| hierarchical)).map_err(fail)?;
    let show = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    match metric {
        Metric::All => {
            let _ = write!(out, "{}", report.render_text());
        }
        Metric::Percent => {
            let _ = writeln!(out, "percent_agreement {}", show(Some(report.percent_agreement)));
        }
        Metric::Fleiss => {
            let _ = writeln!(out, "fleiss_kappa {}", show(report.fleiss.kappa.value));
        }
        Metric::Kappa => {
            for p in &report.cohen {
                let _ = writeln!(out, "cohen_kappa {} {} {}", p.a, p.b, show(p.kappa.value));
            }
        }
    }
    if metric != Metric::All {
        if let Some(h) = report.hierarchical_agreement {
            let _ = writeln!(out, "hierarchical_agreement {}", show(Some(h)));
        }
    }
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
        fs::write(path, text).map_err(|e| io_failure(path, e))?;
    }
    Ok(EXIT_OK)
}
